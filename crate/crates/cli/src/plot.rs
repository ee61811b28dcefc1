use std::fmt::Write;

pub struct Series<'a> {
    pub label: &'a str,
    pub colour: &'a str,
    /// `(x, y)` points; non-finite values break the line.
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static SVG line chart with a legend and min/max axis labels.
pub fn line_chart(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black" stroke-width="1"/>"#,
        H - PAD,
        W - PAD
    );
    for (y, v) in [(sy(y0), y0), (sy(y1), y1)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.1}</text>"#, PAD - 4.0);
    }
    for (x, v) in [(sx(x0), x0), (sx(x1), x1)] {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{v:.0}</text>"#, H - PAD + 14.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, W / 2.0, H - 8.0, escape(x_label));
    for (i, ser) in series.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &ser.points {
            if !(x.is_finite() && y.is_finite()) {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2} {:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
            pen_down = true;
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, d.trim_end(), ser.colour);
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/>"#, W - PAD - 110.0, W - PAD - 90.0, ser.colour);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, W - PAD - 85.0, ly + 4.0, escape(ser.label));
    }
    s.push_str("</svg>\n");
    s
}
