//! Multivariate normal density, orthant probabilities and their derivatives.
//!
//! `cdf` evaluates `Φ_{p,Γ}(a) = P(U <= a)` for `U ~ N(0, Γ)`:
//! closed form for `p <= 1`, Genz's bivariate algorithm for `p = 2`, nested
//! deterministic quadrature for `p = 3, 4` and randomized lattice rules above.
//! Derivatives with respect to `a` and `Γ` reduce to lower-dimensional
//! probabilities through Gaussian conditioning and Plackett's identity
//! `∂Φ/∂Γ_ij = ∂²Φ/∂a_i∂a_j` (`i != j`).

mod bvn;
mod gauss_legendre;
mod nested;
mod qmc;

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

pub use bvn::{bvn_cdf, bvn_upper};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile.
pub fn norm_inv(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Density of `N(0, variance)` at `x`.
pub fn norm_pdf_var(x: f64, variance: f64) -> f64 {
    (-0.5 * x * x / variance).exp() / (2.0 * PI * variance).sqrt()
}

/// Symmetric positive definite matrix with its lower Cholesky factor.
///
/// Construction applies the jitter policy: when the factorization fails,
/// `1e-10 * mean(diag)` is added to the diagonal once.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
    jittered: bool,
}

pub const JITTER_SCALE: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let p = matrix.nrows();
        if matrix.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: matrix.ncols(),
            });
        }
        if p == 0 {
            return Ok(Self {
                factor: matrix.clone(),
                matrix,
                jittered: false,
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..p {
            for j in 0..i {
                asym = asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
            }
        }
        if scale > 0.0 && asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric {
                asymmetry: asym / scale,
            });
        }
        let matrix = 0.5 * (&matrix + matrix.transpose());
        if let Some(chol) = matrix.clone().cholesky() {
            if chol.l_dirty().diagonal().iter().all(|d| *d > 0.0) {
                return Ok(Self {
                    factor: chol.l(),
                    matrix,
                    jittered: false,
                });
            }
        }
        let mean_diag = matrix.diagonal().mean();
        let mut jittered = matrix;
        for i in 0..p {
            jittered[(i, i)] += JITTER_SCALE * mean_diag.abs();
        }
        match jittered.clone().cholesky() {
            Some(chol) if chol.l_dirty().diagonal().iter().all(|d| *d > 0.0) => Ok(Self {
                factor: chol.l(),
                matrix: jittered,
                jittered: true,
            }),
            _ => Err(Error::NotPositiveDefinite { dim: p }),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The (possibly jittered) matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn was_jittered(&self) -> bool {
        self.jittered
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// `L⁻¹ b` for the lower Cholesky factor `L`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.factor.solve_lower_triangular_mut(&mut x);
        x
    }

    /// `Γ⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.solve_lower(b);
        self.factor.tr_solve_lower_triangular_mut(&mut x);
        x
    }
}

/// Accuracy controls for orthant probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfAccuracy {
    pub tolerance: f64,
    pub max_evaluations: usize,
    pub seed: u64,
}

impl Default for CdfAccuracy {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_evaluations: 20_000_000,
            seed: 0,
        }
    }
}

impl CdfAccuracy {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.tolerance > 0.0 && self.tolerance.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "CDF tolerance must be positive, got {}",
                self.tolerance
            )))
        }
    }
}

/// Number of CDF evaluations per dimension.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdfCallCounter {
    counts: BTreeMap<usize, u64>,
}

impl CdfCallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, dim: usize) {
        *self.counts.entry(dim).or_insert(0) += 1;
    }

    pub fn get(&self, dim: usize) -> u64 {
        self.counts.get(&dim).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn reset(&mut self) {
        self.counts.clear();
    }

    pub fn merge(&mut self, other: &CdfCallCounter) {
        for (&dim, &n) in &other.counts {
            *self.counts.entry(dim).or_insert(0) += n;
        }
    }

    /// `(dimension, calls)` pairs in increasing dimension.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&d, &n)| (d, n))
    }
}

fn check_len(a: &[f64], p: usize) -> Result<()> {
    if a.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: a.len(),
        });
    }
    Ok(())
}

/// Density of `N(0, Γ)` at `x`.
pub fn pdf(x: &[f64], cov: &SpdMatrix) -> Result<f64> {
    let p = cov.dim();
    check_len(x, p)?;
    if p == 0 {
        return Ok(1.0);
    }
    let z = cov
        .factor()
        .solve_lower_triangular(&DVector::from_column_slice(x))
        .ok_or(Error::NotPositiveDefinite { dim: p })?;
    let quad = z.norm_squared();
    Ok((-0.5 * quad - 0.5 * p as f64 * (2.0 * PI).ln() - 0.5 * cov.log_det()).exp())
}

/// `P(U <= a)` for `U ~ N(0, Γ)`; counts one call at dimension `p`.
pub fn cdf(a: &[f64], cov: &SpdMatrix, acc: &CdfAccuracy, counter: &mut CdfCallCounter) -> Result<f64> {
    check_len(a, cov.dim())?;
    acc.validate()?;
    counter.record(a.len());
    cdf_uncounted(a, cov.matrix(), acc)
}

pub(crate) fn cdf_uncounted(a: &[f64], cov: &DMatrix<f64>, acc: &CdfAccuracy) -> Result<f64> {
    let p = a.len();
    if a.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN integration limit".into()));
    }
    match p {
        0 => Ok(1.0),
        1..=4 => {
            let flat: Vec<f64> = (0..p * p).map(|k| cov[(k / p, k % p)]).collect();
            Ok(nested::cdf(a, &flat, &nested::NestedRule::for_tolerance(acc.tolerance)))
        }
        _ => {
            if a.iter().any(|v| *v == f64::NEG_INFINITY) {
                return Ok(0.0);
            }
            let keep: Vec<usize> = (0..p).filter(|&j| a[j] != f64::INFINITY).collect();
            if keep.len() == p {
                return qmc::cdf(a, cov, acc);
            }
            let sub_a: Vec<f64> = keep.iter().map(|&j| a[j]).collect();
            let sub = DMatrix::from_fn(keep.len(), keep.len(), |r, c| cov[(keep[r], keep[c])]);
            cdf_uncounted(&sub_a, &sub, acc)
        }
    }
}

/// Parameters of `(U_{-i} | U_i = a_i)` shifted so that the reduced problem is
/// again an orthant probability: `a_{|i} = a_{-i} - (a_i/Γ_ii) Γ_{-i,i}` and
/// `Γ_{|i} = Γ_{-i,-i} - Γ_{-i,i} Γ_{-i,i}ᵀ / Γ_ii`.
pub fn conditional_reduce(a: &[f64], cov: &SpdMatrix, i: usize) -> Result<(Vec<f64>, SpdMatrix)> {
    check_len(a, cov.dim())?;
    let (ar, cr) = reduce_raw(a, cov.matrix(), i)?;
    Ok((ar, SpdMatrix::new(cr)?))
}

pub(crate) fn reduce_raw(a: &[f64], cov: &DMatrix<f64>, i: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let p = a.len();
    if i >= p {
        return Err(Error::InvalidInput(format!("index {i} out of range for dimension {p}")));
    }
    let gii = cov[(i, i)];
    let max_diag = cov.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
    if !(gii > 1e-15 * max_diag) || gii <= 0.0 {
        return Err(Error::BelowJitterFloor { index: i, value: gii });
    }
    let others: Vec<usize> = (0..p).filter(|&j| j != i).collect();
    let ratio = a[i] / gii;
    let reduced_a: Vec<f64> = others.iter().map(|&j| a[j] - ratio * cov[(j, i)]).collect();
    let reduced = DMatrix::from_fn(p - 1, p - 1, |r, c| {
        let (j, l) = (others[r], others[c]);
        cov[(j, l)] - cov[(j, i)] * cov[(l, i)] / gii
    });
    Ok((reduced_a, reduced))
}

/// `∂Φ_{p,Γ}(a)/∂a_i = φ_{Γ_ii}(a_i) Φ_{p-1,Γ_{|i}}(a_{|i})`; one CDF call at
/// dimension `p - 1`.
pub fn cdf_dpoint(
    a: &[f64],
    cov: &SpdMatrix,
    i: usize,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<f64> {
    check_len(a, cov.dim())?;
    acc.validate()?;
    dpoint_raw(a, cov.matrix(), i, acc, counter)
}

pub(crate) fn dpoint_raw(
    a: &[f64],
    cov: &DMatrix<f64>,
    i: usize,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<f64> {
    let (ar, cr) = reduce_raw(a, cov, i)?;
    let cr = SpdMatrix::new(cr)?;
    counter.record(ar.len());
    let tail = cdf_uncounted(&ar, cr.matrix(), acc)?;
    Ok(norm_pdf_var(a[i], cov[(i, i)]) * tail)
}

/// Gradient of the CDF with respect to its upper limits.
pub fn cdf_point_gradient(
    a: &[f64],
    cov: &SpdMatrix,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<Vec<f64>> {
    check_len(a, cov.dim())?;
    acc.validate()?;
    (0..a.len()).map(|i| dpoint_raw(a, cov.matrix(), i, acc, counter)).collect()
}

/// Matrix of second derivatives `∂²Φ/∂a_i∂a_j`.
///
/// Off-diagonal entries use the bivariate density times the doubly reduced
/// CDF; diagonal entries follow from
/// `∂²Φ/∂a_i² = -(a_i/Γ_ii) ∂Φ/∂a_i - Σ_{j≠i} (Γ_ij/Γ_ii) ∂²Φ/∂a_i∂a_j`.
/// For symmetric perturbations `H` of `Γ`, `dΦ = ½ tr(H · hessian)`.
pub fn cdf_hessian(
    a: &[f64],
    cov: &SpdMatrix,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<DMatrix<f64>> {
    let grad = cdf_point_gradient(a, cov, acc, counter)?;
    hessian_raw(a, cov.matrix(), &grad, acc, counter)
}

/// Partial derivatives `∂Φ/∂Γ_ij`, where an off-diagonal entry moves `Γ_ij`
/// and `Γ_ji` together. Equals the hessian with its diagonal halved.
pub fn cdf_dcov(
    a: &[f64],
    cov: &SpdMatrix,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<DMatrix<f64>> {
    let mut h = cdf_hessian(a, cov, acc, counter)?;
    for i in 0..h.nrows() {
        h[(i, i)] *= 0.5;
    }
    Ok(h)
}

pub(crate) fn hessian_raw(
    a: &[f64],
    cov: &DMatrix<f64>,
    grad: &[f64],
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<DMatrix<f64>> {
    let p = a.len();
    let mut h = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let block = SpdMatrix::new(DMatrix::from_row_slice(
                2,
                2,
                &[cov[(i, i)], cov[(i, j)], cov[(j, i)], cov[(j, j)]],
            ))?;
            let density = pdf(&[a[i], a[j]], &block)?;
            let (a1, c1) = reduce_raw(a, cov, i)?;
            let (a2, c2) = reduce_raw(&a1, &c1, j - 1)?;
            let c2 = SpdMatrix::new(c2)?;
            counter.record(a2.len());
            let tail = cdf_uncounted(&a2, c2.matrix(), acc)?;
            h[(i, j)] = density * tail;
            h[(j, i)] = h[(i, j)];
        }
    }
    for i in 0..p {
        let gii = cov[(i, i)];
        let mut d = -(a[i] / gii) * grad[i];
        for j in 0..p {
            if j != i {
                d -= cov[(i, j)] / gii * h[(i, j)];
            }
        }
        h[(i, i)] = d;
    }
    Ok(h)
}

#[cfg(test)]
mod tests;
