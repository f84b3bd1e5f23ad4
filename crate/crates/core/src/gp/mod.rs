//! Gaussian-process prior and posterior with known hyperparameters.

mod kernel;

pub use kernel::{Kernel, KernelFamily};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvn::SpdMatrix;

/// Minimum Euclidean separation between design points.
pub const DESIGN_SEPARATION: f64 = 1e-9;
/// Distance below which matern32 gradients are refused.
pub const NON_SMOOTH_RADIUS: f64 = 1e-12;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lower.len(),
                found: self.upper.len(),
            });
        }
        if self.lower.is_empty() {
            return Err(Error::InvalidInput("domain must have at least one dimension".into()));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "domain bounds must satisfy lower < upper (coordinate {i}: {l} vs {u})"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn diagonal(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Maps a point of `[0, 1]^d` into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, h))| l + t * (h - l))
            .collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| rng.random_range(*l..=*u))
            .collect()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Posterior mean, covariance and their spatial gradients at a batch.
#[derive(Debug, Clone)]
pub struct BatchMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `mean_grad[j]` is `∇μ_n(x_j)`.
    pub mean_grad: Vec<Vec<f64>>,
    /// `cov_grad[j][l]` is `∇_1 C_n(x_j, x_l)`, the gradient in the first argument.
    pub cov_grad: Vec<Vec<Vec<f64>>>,
}

/// GP with constant prior mean conditioned on noiseless observations.
#[derive(Debug, Clone)]
pub struct PosteriorGP {
    kernel: Kernel,
    prior_mean: f64,
    design: Vec<Vec<f64>>,
    responses: Vec<f64>,
    gram: Option<SpdMatrix>,
    weights: DVector<f64>,
}

impl PosteriorGP {
    /// Conditions the prior on `(design, responses)`. An empty design gives the prior.
    pub fn new(kernel: Kernel, prior_mean: f64, design: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        kernel.validate()?;
        let d = kernel.dim();
        if design.len() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: design.len(),
                found: responses.len(),
            });
        }
        if let Some(row) = design.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        if !prior_mean.is_finite() || design.iter().flatten().chain(&responses).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("model contains non-finite values".into()));
        }
        for i in 0..design.len() {
            for j in 0..i {
                let r = dist(&design[i], &design[j]);
                if r <= DESIGN_SEPARATION {
                    return Err(Error::DuplicatePoint { index: i, distance: r });
                }
            }
        }
        let n = design.len();
        if n == 0 {
            return Ok(Self {
                kernel,
                prior_mean,
                design,
                responses,
                gram: None,
                weights: DVector::zeros(0),
            });
        }
        let gram = DMatrix::from_fn(n, n, |i, j| kernel.cov(&design[i], &design[j]));
        let gram = SpdMatrix::new(gram)?;
        let centred = DVector::from_iterator(n, responses.iter().map(|y| y - prior_mean));
        let weights = gram.solve(&centred);
        Ok(Self {
            kernel,
            prior_mean,
            design,
            responses,
            gram: Some(gram),
            weights,
        })
    }

    pub fn prior(kernel: Kernel, prior_mean: f64) -> Result<Self> {
        Self::new(kernel, prior_mean, Vec::new(), Vec::new())
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// True when the Gram matrix needed the diagonal jitter to factor.
    pub fn was_jittered(&self) -> bool {
        self.gram.as_ref().is_some_and(|g| g.was_jittered())
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn design(&self) -> &[Vec<f64>] {
        &self.design
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn n(&self) -> usize {
        self.design.len()
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Largest observed response, if any.
    pub fn best_response(&self) -> Option<f64> {
        self.responses.iter().copied().reduce(f64::max)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn cross_cov(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.design.iter().map(|xi| self.kernel.cov(x, xi)))
    }

    /// `L⁻¹ c_n(x)`; posterior covariances are `C(x, x') - v(x)·v(x')`.
    fn whitened(&self, x: &[f64]) -> DVector<f64> {
        match &self.gram {
            Some(g) => g.solve_lower(&self.cross_cov(x)),
            None => DVector::zeros(0),
        }
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        self.prior_mean + self.cross_cov(x).dot(&self.weights)
    }

    pub fn cov(&self, x: &[f64], y: &[f64]) -> f64 {
        self.kernel.cov(x, y) - self.whitened(x).dot(&self.whitened(y))
    }

    /// Posterior variance, clipped at zero.
    pub fn variance(&self, x: &[f64]) -> f64 {
        let v = self.whitened(x);
        (self.kernel.variance - v.norm_squared()).max(0.0)
    }

    /// Posterior covariance matrix `Σ_jl = C_n(x_j, x_l)` of a set of points.
    /// Symmetric and positive semidefinite up to rounding; callers needing a
    /// factorization go through [`SpdMatrix::new`] and its jitter policy.
    pub fn posterior_cov(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        for x in points {
            self.check_point(x)?;
        }
        Ok(self.cov_matrix(points))
    }

    fn cov_matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let q = points.len();
        let v: Vec<DVector<f64>> = points.iter().map(|x| self.whitened(x)).collect();
        let mut s = DMatrix::zeros(q, q);
        for j in 0..q {
            for l in 0..=j {
                let c = self.kernel.cov(&points[j], &points[l]) - v[j].dot(&v[l]);
                s[(j, l)] = c;
                s[(l, j)] = c;
            }
        }
        s
    }

    pub(crate) fn check_smooth(&self, x: &[f64]) -> Result<()> {
        if self.kernel.family.smooth_at_origin() {
            return Ok(());
        }
        match self.design.iter().position(|xi| dist(x, xi) <= NON_SMOOTH_RADIUS) {
            Some(index) => Err(Error::NonSmoothPoint { index }),
            None => Ok(()),
        }
    }

    /// `∇μ_n(x)`.
    pub fn mean_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_smooth(x)?;
        Ok(self.mean_grad_raw(x))
    }

    /// `∇μ_n(x)` without the smoothness check.
    pub fn mean_grad_raw(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut k = vec![0.0; d];
        for (xi, w) in self.design.iter().zip(self.weights.iter()) {
            self.kernel.grad_x_into(x, xi, &mut k);
            for (gi, ki) in g.iter_mut().zip(&k) {
                *gi += w * ki;
            }
        }
        g
    }

    /// `∂c_n(x)/∂x` as a `d × n` matrix.
    fn cross_cov_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut jac = DMatrix::zeros(d, self.n());
        let mut k = vec![0.0; d];
        for (i, xi) in self.design.iter().enumerate() {
            self.kernel.grad_x_into(x, xi, &mut k);
            for r in 0..d {
                jac[(r, i)] = k[r];
            }
        }
        jac
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.gram {
            Some(g) => g.solve(b),
            None => DVector::zeros(0),
        }
    }

    /// `∇_x C_n(x, y)`, with `∇_x C(x, x) = 0` at coincident arguments.
    pub fn cov_grad(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_point(y)?;
        self.check_smooth(x)?;
        Ok(self.cov_grad_raw(x, y))
    }

    pub fn cov_grad_raw(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let alpha = self.solve(&self.cross_cov(y));
        let correction = self.cross_cov_jacobian(x) * alpha;
        let mut g = self.kernel.grad_x(x, y);
        for (gi, c) in g.iter_mut().zip(correction.iter()) {
            *gi -= c;
        }
        g
    }

    /// Gradient of the posterior standard deviation and its value.
    pub fn sd_grad_raw(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let s = self.variance(x).sqrt();
        let mut g = self.cov_grad_raw(x, x);
        if s > 0.0 {
            for v in g.iter_mut() {
                *v /= s;
            }
        } else {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        (s, g)
    }

    /// Moments and spatial derivatives needed by the qEI gradient.
    pub fn batch_moments(&self, points: &[Vec<f64>]) -> Result<BatchMoments> {
        for x in points {
            self.check_point(x)?;
        }
        let q = points.len();
        let d = self.dim();
        let mean = DVector::from_iterator(q, points.iter().map(|x| self.mean(x)));
        let cov = self.cov_matrix(points);
        let mean_grad = points.iter().map(|x| self.mean_grad_raw(x)).collect();
        let alphas: Vec<DVector<f64>> = points.iter().map(|x| self.solve(&self.cross_cov(x))).collect();
        let jacs: Vec<DMatrix<f64>> = points.iter().map(|x| self.cross_cov_jacobian(x)).collect();
        let mut cov_grad = vec![vec![vec![0.0; d]; q]; q];
        for j in 0..q {
            for l in 0..q {
                let correction = &jacs[j] * &alphas[l];
                let mut g = if j == l {
                    vec![0.0; d]
                } else {
                    self.kernel.grad_x(&points[j], &points[l])
                };
                for (gi, c) in g.iter_mut().zip(correction.iter()) {
                    *gi -= c;
                }
                cov_grad[j][l] = g;
            }
        }
        Ok(BatchMoments {
            mean,
            cov,
            mean_grad,
            cov_grad,
        })
    }

    /// Appends `(x, μ_n(x))` as a pseudo-observation.
    pub fn believer_augment(&self, x: &[f64]) -> Result<PosteriorGP> {
        self.check_point(x)?;
        if let Some((i, r)) = self
            .design
            .iter()
            .map(|xi| dist(x, xi))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            if r <= DESIGN_SEPARATION {
                return Err(Error::DuplicatePoint { index: i, distance: r });
            }
        }
        let mut design = self.design.clone();
        let mut responses = self.responses.clone();
        responses.push(self.mean(x));
        design.push(x.to_vec());
        PosteriorGP::new(self.kernel.clone(), self.prior_mean, design, responses)
    }

    /// Appends real observations.
    pub fn with_observations(&self, points: &[Vec<f64>], values: &[f64]) -> Result<PosteriorGP> {
        let mut design = self.design.clone();
        let mut responses = self.responses.clone();
        design.extend_from_slice(points);
        responses.extend_from_slice(values);
        PosteriorGP::new(self.kernel.clone(), self.prior_mean, design, responses)
    }
}

/// One joint draw of the prior process at `points`.
pub fn sample_path(kernel: &Kernel, prior_mean: f64, points: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
    let m = points.len();
    let gram = DMatrix::from_fn(m, m, |i, j| kernel.cov(&points[i], &points[j]));
    let gram = SpdMatrix::new(gram)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let u = gram.factor() * z;
    Ok(u.iter().map(|v| prior_mean + v).collect())
}

#[cfg(test)]
mod tests;
