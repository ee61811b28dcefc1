use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::bfgs::{ARMIJO_C, MAX_HALVINGS};
use super::{check_start, gradient_in_box, inf_norm, Method, Objective, OptimError, OptimOptions, OptimOutcome};

const MEMORY: usize = 10;

/// Per-coordinate box `[lower, upper]`; infinite entries leave a side open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; n],
            upper: vec![hi; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(*lo).min(*hi);
        }
    }
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, f)| **f)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Two-loop recursion restricted to the free coordinates.
fn two_loop(q: &[f64], memory: &VecDeque<Pair>, free: &[bool]) -> Vec<f64> {
    let mut r: Vec<f64> = q.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    let mut rhos = Vec::with_capacity(memory.len());
    for pair in memory.iter().rev() {
        let sy = masked_dot(&pair.s, &pair.y, free);
        if sy <= 0.0 {
            alphas.push(0.0);
            rhos.push(0.0);
            continue;
        }
        let rho = 1.0 / sy;
        let a = rho * masked_dot(&pair.s, &r, free);
        for i in 0..r.len() {
            if free[i] {
                r[i] -= a * pair.y[i];
            }
        }
        alphas.push(a);
        rhos.push(rho);
    }
    if let Some(last) = memory.back() {
        let sy = masked_dot(&last.s, &last.y, free);
        let yy = masked_dot(&last.y, &last.y, free);
        if sy > 0.0 && yy > 0.0 {
            let gamma = sy / yy;
            r.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for (k, pair) in memory.iter().enumerate() {
        let idx = memory.len() - 1 - k;
        let rho = rhos[idx];
        if rho == 0.0 {
            continue;
        }
        let b = rho * masked_dot(&pair.y, &r, free);
        for i in 0..r.len() {
            if free[i] {
                r[i] += pair.s[i] * (alphas[idx] - b);
            }
        }
    }
    r
}

/// Limited-memory (m = 10) quasi-Newton minimiser on a box. Each step freezes
/// the coordinates held at a bound by the gradient, takes an L-BFGS direction
/// on the rest, and backtracks along the projected path. Iterates never leave
/// the box. Converges when the projected gradient's infinity norm drops below
/// `tol`.
pub fn lbfgsb(obj: &dyn Objective, x0: &[f64], bounds: &Bounds, opts: &OptimOptions) -> Result<OptimOutcome, OptimError> {
    if bounds.len() != x0.len() {
        return Err(OptimError::DimensionMismatch {
            bounds: bounds.len(),
            dim: x0.len(),
        });
    }
    if let Some(i) = (0..x0.len()).find(|&i| !(x0[i] >= bounds.lower[i] && x0[i] <= bounds.upper[i])) {
        return Err(OptimError::InfeasibleStart(i));
    }
    let mut f = check_start(obj, x0, opts)?;
    let n = x0.len();
    let (lo, hi) = (&bounds.lower, &bounds.upper);
    let mut x = x0.to_vec();
    let mut g = gradient_in_box(obj, &x, f, lo, hi, opts.gradient_step);
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;

    let outcome = |x: Vec<f64>, f: f64, converged: bool, iterations: usize| OptimOutcome {
        x_star: x,
        f_star: f,
        converged,
        iterations,
        method: Method::Lbfgsb,
    };

    loop {
        if g.iter().any(|v| !v.is_finite()) {
            return Ok(outcome(x, f, false, iterations));
        }
        let pg: Vec<f64> = (0..n).map(|i| (x[i] - g[i]).max(lo[i]).min(hi[i]) - x[i]).collect();
        if inf_norm(&pg) < opts.tol {
            return Ok(outcome(x, f, true, iterations));
        }
        if iterations >= opts.max_iter {
            return Ok(outcome(x, f, false, iterations));
        }

        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut d: Vec<f64> = two_loop(&q, &memory, &free).into_iter().map(|v| -v).collect();
        if !(masked_dot(&g, &d, &free) < 0.0) {
            memory.clear();
            d = q.iter().map(|v| -v).collect();
        }
        let mut alpha = if memory.is_empty() {
            (1.0 / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            bounds.project(&mut trial);
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            if trial == x {
                break;
            }
            let ft = obj.evaluate(&trial);
            if ft.is_finite() && ft <= f + ARMIJO_C * decrease {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Ok(outcome(x, f, false, iterations));
        };
        iterations += 1;

        let g_new = gradient_in_box(obj, &x_new, f_new, lo, hi, opts.gradient_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = super::dot(&s, &y);
        let yy = super::dot(&y, &y);
        if sy.is_finite() && sy > f64::EPSILON * yy {
            if memory.len() == MEMORY {
                memory.pop_front();
            }
            memory.push_back(Pair { s, y });
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::bfgs;

    #[test]
    fn active_upper_bound() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2);
        let out = lbfgsb(&f, &[1.0], &Bounds::uniform(1, 0.0, 3.0), &OptimOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.x_star, vec![3.0]);
    }

    #[test]
    fn unbounded_matches_bfgs() {
        let f = |x: &[f64]| 3.0 * (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2) + x[0] * x[1];
        let opts = OptimOptions::default().with_tol(1e-9);
        let a = lbfgsb(&f, &[0.0, 0.0], &Bounds::unbounded(2), &opts).unwrap();
        let b = bfgs(&f, &[0.0, 0.0], &opts).unwrap();
        for (u, v) in a.x_star.iter().zip(&b.x_star) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_infeasible_start() {
        let f = |x: &[f64]| x[0];
        assert_eq!(
            lbfgsb(&f, &[4.0], &Bounds::uniform(1, 0.0, 3.0), &OptimOptions::default()),
            Err(OptimError::InfeasibleStart(0))
        );
    }

    #[test]
    fn iterates_stay_feasible() {
        use std::cell::RefCell;
        let seen = RefCell::new(Vec::new());
        let f = |x: &[f64]| {
            seen.borrow_mut().push(x.to_vec());
            (x[0] + 4.0).powi(2) + (x[1] - 9.0).powi(2)
        };
        let b = Bounds::uniform(2, -1.0, 1.0);
        let out = lbfgsb(&f, &[0.5, 0.5], &b, &OptimOptions::default()).unwrap();
        assert_eq!(out.x_star, vec![-1.0, 1.0]);
        // probes may step one-sided but never outside
        assert!(seen.borrow().iter().all(|x| b.contains(x)));
    }
}
