//! Projected BFGS ascent on a box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping rules and line-search constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QnConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub value_tolerance: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Largest move of any coordinate in one step, as a fraction of its box width.
    pub max_step_fraction: f64,
}

impl Default for QnConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            value_tolerance: 1e-9,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 30,
            max_step_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Value,
    MaxIterations,
    LineSearch,
}

/// Record of one ascent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QnTrace {
    pub iterations: usize,
    pub evaluations: usize,
    pub projected_gradient_norm: f64,
    pub termination: Termination,
    /// Objective value after each accepted step, starting with the initial one.
    pub values: Vec<f64>,
}

impl QnTrace {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Gradient | Termination::Value)
    }
}

/// Gradient with the components that push against an active bound zeroed.
pub fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((xi, gi), (l, u))| {
            if (*xi <= *l && *gi < 0.0) || (*xi >= *u && *gi > 0.0) {
                0.0
            } else {
                *gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// `f` returns the value and gradient; an error during the line search is
/// treated as a rejected trial point.
pub fn bounded_quasi_newton<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    cfg: &QnConfig,
) -> Result<(Vec<f64>, f64, QnTrace)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: lower.len().min(upper.len()),
        });
    }
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) || g.len() != n {
        return Err(Error::NonFiniteStart);
    }
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut values = vec![fx];
    let mut iterations = 0;
    let termination = loop {
        let pg = projected_gradient(&x, &g, lower, upper);
        if inf_norm(&pg) <= cfg.gradient_tolerance {
            break Termination::Gradient;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();
        let mut dir = vec![0.0; n];
        for i in 0..n {
            if free[i] {
                dir[i] = (0..n).filter(|&j| free[j]).map(|j| h[(i, j)] * g[j]).sum();
            }
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !(slope > 0.0) {
            h = DMatrix::identity(n, n);
            fresh = true;
            dir = pg.clone();
        }
        let biggest = dir
            .iter()
            .zip(&width)
            .map(|(d, w)| d.abs() / w)
            .fold(0.0, f64::max);
        let mut t = if biggest > cfg.max_step_fraction {
            cfg.max_step_fraction / biggest
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, d)| xi + t * d).collect();
            project(&mut trial);
            let gain: f64 = trial.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if gain > 0.0 {
                evaluations += 1;
                if let Ok((ft, gt)) = f(&trial) {
                    if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft >= fx + cfg.armijo * gain {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            }
            t *= cfg.shrink;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if !fresh {
                h = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            break Termination::LineSearch;
        };
        iterations += 1;
        // Curvature pair for the minimization of -f.
        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| b - a));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if fresh {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (rho * rho * yhy + rho) * (&s * s.transpose()) - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh = false;
        }
        let change = (fnew - fx).abs();
        x = xn;
        g = gn;
        let old = fx;
        fx = fnew;
        values.push(fx);
        if change <= cfg.value_tolerance * old.abs().max(1.0) {
            break Termination::Value;
        }
    };
    let pg = projected_gradient(&x, &g, lower, upper);
    let trace = QnTrace {
        iterations,
        evaluations,
        projected_gradient_norm: inf_norm(&pg),
        termination,
        values,
    };
    Ok((x, fx, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    // f(x) = -½ (x - c)ᵀ A (x - c)
    fn quadratic(a: DMatrix<f64>, c: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |x: &[f64]| {
            let r = DVector::from_iterator(x.len(), x.iter().zip(&c).map(|(a, b)| a - b));
            let ar = &a * &r;
            Ok((-0.5 * r.dot(&ar), ar.iter().map(|v| -v).collect()))
        }
    }

    fn spd() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[3.0, 0.5, 0.2, 0.5, 2.0, -0.3, 0.2, -0.3, 1.0])
    }

    #[test]
    fn interior_optimum() {
        let c = vec![0.3, -0.2, 0.5];
        let cfg = QnConfig {
            gradient_tolerance: 1e-10,
            value_tolerance: 0.0,
            ..QnConfig::default()
        };
        let (x, v, trace) =
            bounded_quasi_newton(quadratic(spd(), c.clone()), &[0.9, 0.9, -0.9], &[-1.0; 3], &[1.0; 3], &cfg).unwrap();
        for (a, b) in x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(v.abs() < 1e-15);
        assert!(trace.converged());
        assert!(trace.values.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn optimum_outside_box_projects_to_face() {
        // Diagonal curvature, centre beyond the upper face in coordinate 0:
        // the KKT point has x_0 = 1 and the other coordinates at the centre.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 4.0]));
        let c = vec![1.7, 0.2, -0.4];
        let cfg = QnConfig {
            gradient_tolerance: 1e-10,
            value_tolerance: 0.0,
            ..QnConfig::default()
        };
        let (x, _, trace) = bounded_quasi_newton(quadratic(a, c), &[0.0; 3], &[-1.0; 3], &[1.0; 3], &cfg).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 0.2).abs() < 1e-8 && (x[2] + 0.4).abs() < 1e-8);
        assert!(trace.projected_gradient_norm <= 1e-10);

        // Coupled case: with x_0 fixed at the bound, the rest solves A_ff r_f = -A_f0 r_0.
        let a = spd();
        let c = vec![2.0, 0.1, 0.2];
        let (x, _, _) = bounded_quasi_newton(quadratic(a.clone(), c.clone()), &[0.0; 3], &[-1.0; 3], &[1.0; 3], &cfg).unwrap();
        let r0 = 1.0 - c[0];
        let aff = DMatrix::from_row_slice(2, 2, &[a[(1, 1)], a[(1, 2)], a[(2, 1)], a[(2, 2)]]);
        let rhs = DVector::from_vec(vec![-a[(1, 0)] * r0, -a[(2, 0)] * r0]);
        let rf = aff.lu().solve(&rhs).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - (c[1] + rf[0])).abs() < 1e-8);
        assert!((x[2] - (c[2] + rf[1])).abs() < 1e-8);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let c = vec![0.1, 0.2, 0.3];
        let (x, _, trace) =
            bounded_quasi_newton(quadratic(spd(), c.clone()), &c, &[-1.0; 3], &[1.0; 3], &QnConfig::default()).unwrap();
        assert_eq!(trace.iterations, 0);
        assert_eq!(trace.termination, Termination::Gradient);
        assert_eq!(x, c);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert_eq!(
            bounded_quasi_newton(f, &[0.0], &[-1.0], &[1.0], &QnConfig::default()).unwrap_err(),
            Error::NonFiniteStart
        );
    }

    #[test]
    fn failed_evaluations_are_rejected_steps() {
        // Errors to the right of 0.5 force the line search to back off.
        let f = |x: &[f64]| {
            if x[0] > 0.5 {
                Err(Error::InvalidInput("outside".into()))
            } else {
                Ok((x[0], vec![1.0]))
            }
        };
        let (x, v, trace) = bounded_quasi_newton(f, &[0.0], &[-1.0], &[1.0], &QnConfig::default()).unwrap();
        assert!(x[0] <= 0.5 && v == x[0] && v > 0.0);
        assert!(trace.values.windows(2).all(|w| w[1] >= w[0]));
    }
}
