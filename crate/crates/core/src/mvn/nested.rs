//! Deterministic orthant probabilities for low dimensions.
//!
//! `Φ_p(a; Γ) = ∫ φ(u) Φ_{p-1}(a_{-1} - r u; Γ_{|1}) du` over the standardized
//! first coordinate, with the bivariate base case evaluated by `bvn`. The
//! outer integral uses composite Gauss-Legendre panels whose breakpoints track
//! the locations where the conditional arguments change sign, so node
//! positions move continuously with the inputs and the result is a smooth
//! function of `(a, Γ)`.

use super::bvn::bvn_cdf;
use super::gauss_legendre;
use super::{norm_cdf, norm_pdf};

/// Quadrature resolution for the nested integrator.
#[derive(Debug, Clone, Copy)]
pub struct NestedRule {
    pub order: usize,
    pub uniform_panels: usize,
}

impl NestedRule {
    pub fn for_tolerance(tol: f64) -> Self {
        let order = if tol >= 1e-7 { 8 } else { 12 };
        Self {
            order,
            uniform_panels: 6,
        }
    }
}

// Coordinates whose variance falls below this are treated as point masses.
const DEGENERATE_VARIANCE: f64 = 1e-300;
const UPPER_CUTOFF: f64 = 9.0;

/// `P(U <= a)` for `U ~ N(0, cov)`, `cov` given row-major.
pub fn cdf(a: &[f64], cov: &[f64], rule: &NestedRule) -> f64 {
    let p = a.len();
    debug_assert_eq!(cov.len(), p * p);

    // Drop coordinates with infinite upper limits and point masses.
    let mut keep = Vec::with_capacity(p);
    for j in 0..p {
        if a[j].is_nan() {
            return f64::NAN;
        }
        if a[j] == f64::NEG_INFINITY {
            return 0.0;
        }
        if a[j] == f64::INFINITY {
            continue;
        }
        if cov[j * p + j] <= DEGENERATE_VARIANCE {
            if a[j] < 0.0 {
                return 0.0;
            }
            continue;
        }
        keep.push(j);
    }
    if keep.len() < p {
        let q = keep.len();
        let sub_a: Vec<f64> = keep.iter().map(|&j| a[j]).collect();
        let mut sub_cov = vec![0.0; q * q];
        for (r, &i) in keep.iter().enumerate() {
            for (c, &j) in keep.iter().enumerate() {
                sub_cov[r * q + c] = cov[i * p + j];
            }
        }
        return cdf_finite(&sub_a, &sub_cov, rule);
    }
    cdf_finite(a, cov, rule)
}

fn cdf_finite(a: &[f64], cov: &[f64], rule: &NestedRule) -> f64 {
    let p = a.len();
    match p {
        0 => 1.0,
        1 => norm_cdf(a[0] / cov[0].sqrt()),
        2 => {
            let s0 = cov[0].sqrt();
            let s1 = cov[3].sqrt();
            let rho = (cov[1] / (s0 * s1)).clamp(-1.0, 1.0);
            bvn_cdf(a[0] / s0, a[1] / s1, rho)
        }
        _ => integrate_first(a, cov, rule),
    }
}

fn integrate_first(a: &[f64], cov: &[f64], rule: &NestedRule) -> f64 {
    let p = a.len();
    let m = p - 1;
    let s0 = cov[0].sqrt();
    let b0 = a[0] / s0;
    if b0 < -38.0 {
        return 0.0;
    }

    // Regression of the remaining coordinates on the standardized first one.
    let slope: Vec<f64> = (1..p).map(|j| cov[j] / s0).collect();
    let mut cond = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m {
            cond[r * m + c] = cov[(r + 1) * p + (c + 1)] - slope[r] * slope[c];
        }
        cond[r * m + r] = cond[r * m + r].max(0.0);
    }
    let rest: Vec<f64> = a[1..].to_vec();
    let sd: Vec<f64> = (0..m).map(|r| cond[r * m + r].sqrt()).collect();

    let hi = b0.min(UPPER_CUTOFF);
    let lo = -(hi * hi + 80.0).sqrt();

    let mut knots = Vec::with_capacity(rule.uniform_panels + 1 + 5 * m + 3 * m * m);
    for k in 0..=rule.uniform_panels {
        knots.push(lo + (hi - lo) * k as f64 / rule.uniform_panels as f64);
    }
    for j in 0..m {
        if slope[j] != 0.0 {
            let centre = rest[j] / slope[j];
            let width = sd[j] / slope[j].abs();
            for off in [-4.0, -1.0, 0.0, 1.0, 4.0] {
                knots.push(centre + off * width);
            }
        }
    }
    // Kinks of the conditional bivariate margins when they are strongly
    // (anti-)correlated.
    for j in 0..m {
        for l in (j + 1)..m {
            if sd[j] == 0.0 || sd[l] == 0.0 {
                continue;
            }
            let rho = (cond[j * m + l] / (sd[j] * sd[l])).clamp(-1.0, 1.0);
            let (gj, gl) = (slope[j] / sd[j], slope[l] / sd[l]);
            let (hj, hl) = (rest[j] / sd[j], rest[l] / sd[l]);
            let (num, den, width) = if rho > 0.5 {
                (hj - hl, gj - gl, (2.0 * (1.0 - rho)).sqrt())
            } else if rho < -0.5 {
                (hj + hl, gj + gl, (2.0 * (1.0 + rho)).sqrt())
            } else {
                continue;
            };
            if den != 0.0 {
                let centre = num / den;
                let w = width / den.abs();
                for off in [-1.0, 0.0, 1.0] {
                    knots.push(centre + off * w);
                }
            }
        }
    }
    for k in knots.iter_mut() {
        *k = if k.is_nan() { hi } else { k.clamp(lo, hi) };
    }
    knots.sort_by(f64::total_cmp);

    let (nodes, weights) = gauss_legendre::cached(rule.order);
    let mut shifted = vec![0.0; m];
    let mut total = 0.0;
    for pair in knots.windows(2) {
        let (x0, x1) = (pair[0], pair[1]);
        let half = 0.5 * (x1 - x0);
        if half <= 0.0 {
            continue;
        }
        let mid = 0.5 * (x0 + x1);
        let mut panel = 0.0;
        for (t, w) in nodes.iter().zip(weights) {
            let u = mid + half * t;
            for j in 0..m {
                shifted[j] = rest[j] - slope[j] * u;
            }
            panel += w * norm_pdf(u) * cdf(&shifted, &cond, rule);
        }
        total += half * panel;
    }
    total.clamp(0.0, 1.0)
}
