use super::{central_gradient, check_start, dot, inf_norm, Method, Objective, OptimError, OptimOptions, OptimOutcome};

pub(crate) const ARMIJO_C: f64 = 1e-4;
pub(crate) const MAX_HALVINGS: usize = 60;

/// Dense BFGS with finite-difference gradients and a halving Armijo line
/// search. Converges when the gradient's infinity norm drops below `tol`.
pub fn bfgs(obj: &dyn Objective, x0: &[f64], opts: &OptimOptions) -> Result<OptimOutcome, OptimError> {
    let mut f = check_start(obj, x0, opts)?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = central_gradient(obj, &x, opts.gradient_step);
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut scaled = false;
    let mut iterations = 0;

    let outcome = |x: Vec<f64>, f: f64, converged: bool, iterations: usize| OptimOutcome {
        x_star: x,
        f_star: f,
        converged,
        iterations,
        method: Method::Bfgs,
    };

    loop {
        if g.iter().any(|v| !v.is_finite()) {
            return Ok(outcome(x, f, false, iterations));
        }
        if inf_norm(&g) < opts.tol {
            return Ok(outcome(x, f, true, iterations));
        }
        if iterations >= opts.max_iter {
            return Ok(outcome(x, f, false, iterations));
        }

        let mut d = mat_vec(&h, &g, n);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let ft = obj.evaluate(&trial);
            if ft.is_finite() && ft <= f + ARMIJO_C * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Ok(outcome(x, f, false, iterations));
        };
        iterations += 1;

        let g_new = central_gradient(obj, &x_new, opts.gradient_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * yy.sqrt() && sy.is_finite() {
            if !scaled {
                let gamma = sy / yy;
                h.iter_mut().for_each(|v| *v *= gamma);
                scaled = true;
            }
            update_inverse_hessian(&mut h, &s, &y, sy, n);
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// H <- (I - rho s y') H (I - rho y s') + rho s s'
fn update_inverse_hessian(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
