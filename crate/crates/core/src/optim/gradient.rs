use super::Objective;

fn step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference gradient. Components whose probes are non-finite come
/// back as NaN.
pub fn central_gradient(obj: &dyn Objective, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(x[i], rel_step);
            probe[i] = x[i] + h;
            let hi_x = probe[i];
            let f_hi = obj.evaluate(&probe);
            probe[i] = x[i] - h;
            let lo_x = probe[i];
            let f_lo = obj.evaluate(&probe);
            probe[i] = x[i];
            let g = (f_hi - f_lo) / (hi_x - lo_x);
            if g.is_finite() {
                g
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// Like [`central_gradient`] but switches to a one-sided difference when a
/// probe would leave `[lo, hi]`.
pub fn gradient_in_box(obj: &dyn Objective, x: &[f64], f_x: f64, lo: &[f64], hi: &[f64], rel_step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(x[i], rel_step);
            let up_ok = x[i] + h <= hi[i];
            let down_ok = x[i] - h >= lo[i];
            let (a, fa, b, fb) = match (up_ok, down_ok) {
                (true, true) | (false, false) => {
                    probe[i] = x[i] + h;
                    let (a, fa) = (probe[i], obj.evaluate(&probe));
                    probe[i] = x[i] - h;
                    (a, fa, probe[i], obj.evaluate(&probe))
                }
                (true, false) => {
                    probe[i] = x[i] + h;
                    (probe[i], obj.evaluate(&probe), x[i], f_x)
                }
                (false, true) => {
                    probe[i] = x[i] - h;
                    (x[i], f_x, probe[i], obj.evaluate(&probe))
                }
            };
            probe[i] = x[i];
            let g = (fa - fb) / (a - b);
            if g.is_finite() {
                g
            } else {
                f64::NAN
            }
        })
        .collect()
}
