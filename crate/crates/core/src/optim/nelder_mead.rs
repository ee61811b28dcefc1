use super::{check_start, Method, Objective, OptimError, OptimOptions, OptimOutcome};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn eval(obj: &dyn Objective, x: &[f64]) -> f64 {
    let f = obj.evaluate(x);
    if f.is_finite() {
        f
    } else {
        f64::INFINITY
    }
}

fn affine(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .flat_map(|(v, _)| v.iter().zip(best).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)))
        .fold(0.0, f64::max)
}

fn initial_simplex(obj: &dyn Objective, x0: &[f64], f0: f64) -> Vec<(Vec<f64>, f64)> {
    let mut simplex = Vec::with_capacity(x0.len() + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] = if v[i] != 0.0 { v[i] * 1.05 } else { 0.00025 };
        let f = eval(obj, &v);
        simplex.push((v, f));
    }
    simplex
}

/// Nelder-Mead simplex. Converges when the spread of function values across
/// the simplex drops below `tol` and the simplex itself has collapsed to a
/// relative diameter below `sqrt(tol)`, and a fresh simplex built around the
/// best vertex fails to improve on it by more than `tol`. Non-finite values
/// count as `+inf`.
pub fn nelder_mead(obj: &dyn Objective, x0: &[f64], opts: &OptimOptions) -> Result<OptimOutcome, OptimError> {
    let f0 = check_start(obj, x0, opts)?;
    let n = x0.len();

    let mut simplex = initial_simplex(obj, x0, f0);

    let mut iterations = 0;
    let mut converged = false;
    // best value when the simplex was last rebuilt
    let mut restart_from = f64::INFINITY;
    loop {
        // stable sort keeps earlier vertices first on ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread < opts.tol && diameter(&simplex) < opts.tol.sqrt() {
            // A collapsed simplex can stall away from the minimum in higher
            // dimensions. Rebuild it around the best vertex and stop only once
            // a rebuild no longer improves the best value.
            if restart_from - simplex[0].1 <= opts.tol {
                converged = true;
                break;
            }
            restart_from = simplex[0].1;
            let (best, f_best) = simplex.swap_remove(0);
            simplex = initial_simplex(obj, &best, f_best);
            continue;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let f_worst = simplex[n].1;
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        let xr = affine(&centroid, &worst, -REFLECT);
        let fr = eval(obj, &xr);
        if fr < f_best {
            let xe = affine(&centroid, &worst, -EXPAND);
            let fe = eval(obj, &xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let accepted = if fr < f_worst {
            let xc = affine(&centroid, &xr, CONTRACT);
            let fc = eval(obj, &xc);
            (fc <= fr).then_some((xc, fc))
        } else {
            let xc = affine(&centroid, &worst, CONTRACT);
            let fc = eval(obj, &xc);
            (fc < f_worst).then_some((xc, fc))
        };
        match accepted {
            Some(v) => simplex[n] = v,
            None => {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x = affine(&best, &vertex.0, SHRINK);
                    let f = eval(obj, &x);
                    *vertex = (x, f);
                }
            }
        }
    }

    let (x_star, f_star) = simplex.swap_remove(0);
    Ok(OptimOutcome {
        x_star,
        f_star,
        converged: converged && f_star.is_finite(),
        iterations,
        method: Method::NelderMead,
    })
}
