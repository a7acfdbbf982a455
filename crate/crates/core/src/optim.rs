//! Deterministic first-order minimizer shared by both projections and the GE
//! trainer.
//!
//! Minimizes `f(x) + Σ c_i |x_i|` subject to per-coordinate sign bounds with
//! limited-memory quasi-Newton directions and Armijo backtracking (halving).
//! The non-smooth and bounded coordinates are handled orthant-wise: the search
//! direction follows the minimum-norm pseudo-gradient and trial points that
//! cross zero or leave the feasible set are clipped to zero. Every accepted
//! step strictly decreases the objective. With `memory = 0` the method is
//! plain projected gradient descent.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Free,
    NonPositive,
    NonNegative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    /// Stop once the pseudo-gradient infinity norm is at or below this.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Number of curvature pairs kept; 0 gives steepest descent.
    pub memory: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            tolerance: 1e-6,
            max_iters: 500,
            memory: 10,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    Converged,
    MaxIters,
    /// No step satisfied the sufficient-decrease test; the iterate is at the
    /// limit of floating-point resolution for this objective.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stop: Stop,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Problem<'a> {
    l1: &'a [f64],
    bounds: &'a [Bound],
}

impl Problem<'_> {
    fn c(&self, i: usize) -> f64 {
        self.l1.get(i).copied().unwrap_or(0.0)
    }

    fn bound(&self, i: usize) -> Bound {
        self.bounds.get(i).copied().unwrap_or(Bound::Free)
    }

    fn l1_value(&self, x: &[f64]) -> f64 {
        if self.l1.is_empty() {
            return 0.0;
        }
        x.iter().zip(self.l1).map(|(v, c)| c * v.abs()).sum()
    }

    fn project_point(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            match self.bound(i) {
                Bound::NonPositive if *v > 0.0 => *v = 0.0,
                Bound::NonNegative if *v < 0.0 => *v = 0.0,
                _ => {}
            }
        }
    }

    /// Minimum-norm element of the subdifferential, restricted to feasible
    /// descent directions.
    fn pseudo_gradient(&self, x: &[f64], g: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let c = self.c(i);
            let mut pg = if c > 0.0 {
                if x[i] > 0.0 {
                    g[i] + c
                } else if x[i] < 0.0 {
                    g[i] - c
                } else if g[i] + c < 0.0 {
                    g[i] + c
                } else if g[i] - c > 0.0 {
                    g[i] - c
                } else {
                    0.0
                }
            } else {
                g[i]
            };
            match self.bound(i) {
                Bound::NonPositive if x[i] >= 0.0 && pg < 0.0 => pg = 0.0,
                Bound::NonNegative if x[i] <= 0.0 && pg > 0.0 => pg = 0.0,
                _ => {}
            }
            out[i] = pg;
        }
    }
}

/// Minimizes `f(x) + Σ l1[i]·|x_i|` with `x_i` restricted by `bounds[i]`.
///
/// `f` writes the gradient of its smooth part into the buffer and returns the
/// value. `l1` and `bounds` may be empty (no L1 terms, all free).
pub fn minimize(
    mut f: impl FnMut(&[f64], &mut [f64]) -> Result<f64>,
    x0: Vec<f64>,
    l1: &[f64],
    bounds: &[Bound],
    cfg: &OptimConfig,
) -> Result<OptimResult> {
    let n = x0.len();
    let prob = Problem { l1, bounds };
    let mut x = x0;
    prob.project_point(&mut x);

    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g)? + prob.l1_value(&x);
    if !fx.is_finite() {
        return Err(Error::Optimization("objective is not finite at the start point".into()));
    }
    let mut pg = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut last_step: f64 = 1.0;

    let mut iterations = 0;
    loop {
        prob.pseudo_gradient(&x, &g, &mut pg);
        let gnorm = inf_norm(&pg);
        if gnorm <= cfg.tolerance {
            return Ok(OptimResult {
                x,
                value: fx,
                iterations,
                grad_norm: gnorm,
                stop: Stop::Converged,
            });
        }
        if iterations >= cfg.max_iters {
            return Ok(OptimResult {
                x,
                value: fx,
                iterations,
                grad_norm: gnorm,
                stop: Stop::MaxIters,
            });
        }

        let mut steepest = s_hist.is_empty();
        let accepted = loop {
            // Direction: L-BFGS two-loop recursion on the pseudo-gradient.
            for i in 0..n {
                dir[i] = -pg[i];
            }
            if !steepest {
                let m = s_hist.len();
                let mut alphas = vec![0.0; m];
                for j in (0..m).rev() {
                    let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
                    alphas[j] = rho * dot(&s_hist[j], &dir);
                    for i in 0..n {
                        dir[i] -= alphas[j] * y_hist[j][i];
                    }
                }
                let (s, y) = (&s_hist[m - 1], &y_hist[m - 1]);
                let gamma = dot(s, y) / dot(y, y);
                for d in dir.iter_mut() {
                    *d *= gamma;
                }
                for j in 0..m {
                    let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
                    let beta = rho * dot(&y_hist[j], &dir);
                    for i in 0..n {
                        dir[i] += s_hist[j][i] * (alphas[j] - beta);
                    }
                }
                // On L1-weighted or bounded coordinates keep only components
                // that agree with steepest descent.
                for i in 0..n {
                    let constrained = prob.c(i) > 0.0 || prob.bound(i) != Bound::Free;
                    if constrained && dir[i] * pg[i] >= 0.0 {
                        dir[i] = 0.0;
                    }
                }
                if dot(&dir, &pg) >= 0.0 {
                    for i in 0..n {
                        dir[i] = -pg[i];
                    }
                    steepest = true;
                }
            }

            // Orthant each coordinate must stay in during this step.
            let orthant: Vec<f64> = (0..n)
                .map(|i| {
                    if x[i] != 0.0 {
                        x[i].signum()
                    } else {
                        -pg[i].signum()
                    }
                })
                .collect();

            let mut step = if steepest {
                if cfg.memory == 0 {
                    (last_step * 2.0).min(1e6)
                } else {
                    (1.0 / dot(&pg, &pg).sqrt()).min(1.0)
                }
            } else {
                1.0
            };
            let mut found = None;
            for _ in 0..cfg.max_backtracks {
                for i in 0..n {
                    let mut v = x[i] + step * dir[i];
                    let clip = prob.c(i) > 0.0 || prob.bound(i) != Bound::Free;
                    if clip && v * orthant[i] < 0.0 {
                        v = 0.0;
                    }
                    x_new[i] = v;
                }
                prob.project_point(&mut x_new);
                let f_try = f(&x_new, &mut g_new)?;
                let f_new = f_try + prob.l1_value(&x_new);
                let decrease: f64 = (0..n).map(|i| pg[i] * (x_new[i] - x[i])).sum();
                if f_new.is_finite() && f_new <= fx + cfg.armijo * decrease && f_new < fx {
                    found = Some(f_new);
                    break;
                }
                step *= 0.5;
            }
            match found {
                Some(v) => {
                    last_step = step;
                    break Some(v);
                }
                None if !steepest => {
                    s_hist.clear();
                    y_hist.clear();
                    steepest = true;
                }
                None => break None,
            }
        };

        let Some(f_new) = accepted else {
            return Ok(OptimResult {
                x,
                value: fx,
                iterations,
                grad_norm: gnorm,
                stop: Stop::Stalled,
            });
        };

        if cfg.memory > 0 {
            let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
            let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
            if dot(&s, &y) > 1e-12 * dot(&y, &y).max(1e-300) {
                if s_hist.len() == cfg.memory {
                    s_hist.remove(0);
                    y_hist.remove(0);
                }
                s_hist.push(s);
                y_hist.push(y);
            }
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        iterations += 1;
    }
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    diff / na.max(nb).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64], g: &mut [f64]) -> Result<f64> {
        // (x0 − 3)² + 10 (x1 + 1)²
        g[0] = 2.0 * (x[0] - 3.0);
        g[1] = 20.0 * (x[1] + 1.0);
        Ok((x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2))
    }

    #[test]
    fn lbfgs_finds_quadratic_minimum() {
        let r = minimize(quadratic, vec![0.0, 0.0], &[], &[], &OptimConfig::default()).unwrap();
        assert_eq!(r.stop, Stop::Converged);
        assert!((r.x[0] - 3.0).abs() < 1e-6);
        assert!((r.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_descent_mode_also_converges() {
        let cfg = OptimConfig {
            memory: 0,
            max_iters: 5000,
            ..Default::default()
        };
        let r = minimize(quadratic, vec![0.0, 0.0], &[], &[], &cfg).unwrap();
        assert_eq!(r.stop, Stop::Converged);
        assert!((r.x[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn bounds_hold_at_active_constraint() {
        let bounds = [Bound::NonPositive, Bound::NonNegative];
        let r = minimize(quadratic, vec![-1.0, 1.0], &[], &bounds, &OptimConfig::default()).unwrap();
        assert_eq!(r.stop, Stop::Converged);
        assert_eq!(r.x, vec![0.0, 0.0]);
    }

    #[test]
    fn l1_soft_thresholds() {
        // (x − 3)² + 10(y + 1)² + 4|x| + 30|y|: x* = 1, y* = 0.
        let r = minimize(quadratic, vec![0.5, 0.5], &[4.0, 30.0], &[], &OptimConfig::default())
            .unwrap();
        assert_eq!(r.stop, Stop::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert_eq!(r.x[1], 0.0);
    }

    #[test]
    fn finite_differences_of_quadratic() {
        let g = finite_difference_gradient(
            |x| Ok((x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2)),
            &[1.0, 2.0],
            1e-5,
        )
        .unwrap();
        assert!(relative_error(&g, &[-4.0, 60.0], 1e-12) < 1e-8);
    }
}
