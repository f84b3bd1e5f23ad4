//! Closed-form multipoint Expected Improvement and its gradient.
//!
//! For a batch `X` with posterior moments `(m, Σ)` and threshold `T`,
//! `qEI(X) = E[(max_j Y_j - T)_+] = Σ_k E[(Y_k - T) 1{Y_k is the maximum, Y_k > T}]`.
//! Term `k` uses `Z^(k) = L^(k) Y + b^(k)` with `Z_j = Y_j - Y_k` (`j != k`)
//! and `Z_k = T - Y_k`, so the event is the orthant `{Z^(k) <= 0}` and Tallis'
//! formula gives
//! `EI_k = -m^(k)_k Φ_q(-m^(k); Σ^(k)) + Σ_i Σ^(k)_ik ∂_iΦ_q(-m^(k); Σ^(k))`.

mod views;


pub use views::{AffineView, ConditionalView};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp::{DomainBox, PosteriorGP};
use crate::mvn::{self, norm_cdf, norm_pdf, norm_pdf_var, CdfAccuracy, CdfCallCounter, SpdMatrix};

/// Rows closer than this fraction of the domain diagonal are duplicates.
pub const DEDUP_FRACTION: f64 = 1e-7;
/// Posterior variances below this fraction of the largest are lifted by the jitter.
const VARIANCE_FLOOR: f64 = 1e-10;

/// Ordered set of `q` points in a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    points: Vec<Vec<f64>>,
    domain: DomainBox,
}

impl Batch {
    pub fn new(points: Vec<Vec<f64>>, domain: DomainBox) -> Result<Self> {
        domain.validate()?;
        if points.is_empty() {
            return Err(Error::InvalidInput("batch must contain at least one point".into()));
        }
        for (j, x) in points.iter().enumerate() {
            if x.len() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    found: x.len(),
                });
            }
            if !domain.contains(x) {
                return Err(Error::InvalidInput(format!("batch row {j} lies outside the domain")));
            }
        }
        Ok(Self { points, domain })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn q(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn dedup_tolerance(&self) -> f64 {
        DEDUP_FRACTION * self.domain.diagonal()
    }

    /// First pair of rows closer than the dedup tolerance.
    pub fn duplicate_pair(&self) -> Option<(usize, usize)> {
        let tol = self.dedup_tolerance();
        for j in 0..self.q() {
            for i in 0..j {
                if distance(&self.points[i], &self.points[j]) <= tol {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Rows with later near-duplicates removed.
    pub fn collapsed(&self) -> Batch {
        let tol = self.dedup_tolerance();
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(self.q());
        for x in &self.points {
            if kept.iter().all(|y| distance(x, y) > tol) {
                kept.push(x.clone());
            }
        }
        Batch {
            points: kept,
            domain: self.domain.clone(),
        }
    }

    /// Row-major flattening to a vector of length `q·d`.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn from_flat(flat: &[f64], dim: usize, domain: DomainBox) -> Result<Self> {
        if dim == 0 || flat.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: flat.len(),
            });
        }
        Self::new(flat.chunks(dim).map(|c| c.to_vec()).collect(), domain)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Posterior mean vector, covariance and threshold of a batch.
#[derive(Debug, Clone)]
pub struct MomentPair {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
    pub threshold: f64,
}

impl MomentPair {
    /// Applies the jitter policy to `cov`. Variances that are negligible
    /// next to `scale` (the prior variance when known) are lifted by
    /// `1e-10 · scale`, as is a matrix that fails to factorize.
    pub fn with_scale(mean: DVector<f64>, cov: DMatrix<f64>, threshold: f64, scale: f64) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) || !threshold.is_finite() {
            return Err(Error::InvalidInput("non-finite mean or threshold".into()));
        }
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        let lifted = |mut m: DMatrix<f64>| {
            for i in 0..m.nrows() {
                m[(i, i)] += mvn::JITTER_SCALE * scale;
            }
            SpdMatrix::new(m)
        };
        let cov = if cov.diagonal().min() <= VARIANCE_FLOOR * scale {
            lifted(cov)?
        } else {
            match SpdMatrix::new(cov.clone()) {
                Ok(s) => s,
                Err(Error::NotPositiveDefinite { .. }) => lifted(cov)?,
                Err(e) => return Err(e),
            }
        };
        Ok(Self {
            mean,
            cov,
            threshold,
        })
    }

    /// As [`MomentPair::with_scale`] with the largest variance as scale.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, threshold: f64) -> Result<Self> {
        let scale = if cov.nrows() > 0 { cov.diagonal().max() } else { 1.0 };
        Self::with_scale(mean, cov, threshold, scale)
    }

    pub fn q(&self) -> usize {
        self.mean.len()
    }
}

/// `(m, Σ)` of `Y(X)` given the observations.
pub fn moments(model: &PosteriorGP, batch: &Batch, threshold: f64) -> Result<MomentPair> {
    let pts = batch.points();
    let mean = DVector::from_iterator(pts.len(), pts.iter().map(|x| model.mean(x)));
    MomentPair::with_scale(mean, model.posterior_cov(pts)?, threshold, model.kernel().variance)
}

/// Largest observed response, the usual threshold.
pub fn default_threshold(model: &PosteriorGP) -> Result<f64> {
    model
        .best_response()
        .ok_or_else(|| Error::InvalidInput("the model has no observations to take a threshold from".into()))
}

/// Classical one-point EI `E[(Y - T)_+]` for `Y ~ N(m, v)`.
pub fn ei_single(mean: f64, variance: f64, threshold: f64) -> f64 {
    let gap = mean - threshold;
    if variance <= 0.0 {
        return gap.max(0.0);
    }
    let s = variance.sqrt();
    let z = gap / s;
    (gap * norm_cdf(z) + s * norm_pdf(z)).max(0.0)
}

/// qEI of a batch; near-duplicate rows are collapsed first.
pub fn qei_value(model: &PosteriorGP, batch: &Batch, threshold: f64, acc: &CdfAccuracy) -> Result<f64> {
    qei_value_counted(model, batch, threshold, acc, &mut CdfCallCounter::new())
}

pub fn qei_value_counted(
    model: &PosteriorGP,
    batch: &Batch,
    threshold: f64,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<f64> {
    let batch = batch.collapsed();
    let pair = moments(model, &batch, threshold)?;
    qei_from_moments(&pair, acc, counter)
}

/// qEI from moments: `q` CDF calls at dimension `q`, `q²` at `q - 1`.
pub fn qei_from_moments(pair: &MomentPair, acc: &CdfAccuracy, counter: &mut CdfCallCounter) -> Result<f64> {
    let q = pair.q();
    let mut total = 0.0;
    for k in 0..q {
        let view = AffineView::new(pair, k)?;
        let a: Vec<f64> = view.mean.iter().map(|v| -v).collect();
        let s = view.cov.matrix();
        counter.record(q);
        let p = mvn::cdf_uncounted(&a, s, acc)?;
        let mut term = -view.mean[k] * p;
        for i in 0..q {
            let cond = ConditionalView::new(&view, i)?;
            let r = cond.orthant(acc, counter)?;
            term += s[(i, k)] * norm_pdf_var(view.mean[i], s[(i, i)]) * r;
        }
        total += term;
    }
    Ok(total.max(0.0))
}

/// qEI value with its gradient in the batch coordinates.
#[derive(Debug, Clone)]
pub struct QeiGradient {
    pub value: f64,
    /// `q × d`, row `j` is `∂qEI/∂x_j`.
    pub gradient: Vec<Vec<f64>>,
    pub calls: CdfCallCounter,
}

impl QeiGradient {
    pub fn flat_gradient(&self) -> Vec<f64> {
        self.gradient.iter().flatten().copied().collect()
    }
}

/// Gradient of qEI with respect to the moments: `dEI = g·dm + ½ tr(dΣ B)` for
/// symmetric `dΣ`.
#[derive(Debug, Clone)]
pub struct MomentGradient {
    pub value: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub fn qei_grad(model: &PosteriorGP, batch: &Batch, threshold: f64, acc: &CdfAccuracy) -> Result<QeiGradient> {
    let mut counter = CdfCallCounter::new();
    let mut g = qei_grad_counted(model, batch, threshold, acc, &mut counter)?;
    g.calls = counter;
    Ok(g)
}

pub fn qei_grad_counted(
    model: &PosteriorGP,
    batch: &Batch,
    threshold: f64,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<QeiGradient> {
    if let Some((first, second)) = batch.duplicate_pair() {
        return Err(Error::DuplicateBatchRows { first, second });
    }
    for x in batch.points() {
        model.check_smooth(x)?;
    }
    qei_grad_unchecked(model, batch, threshold, acc, counter)
}

/// Gradient without the duplicate and smoothness checks, for optimizers that
/// handle those cases themselves.
pub(crate) fn qei_grad_unchecked(
    model: &PosteriorGP,
    batch: &Batch,
    threshold: f64,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<QeiGradient> {
    let pts = batch.points();
    let bm = model.batch_moments(pts)?;
    let pair = MomentPair::with_scale(bm.mean.clone(), bm.cov.clone(), threshold, model.kernel().variance)?;
    let mg = qei_moment_gradient(&pair, acc, counter)?;
    let q = pts.len();
    let d = batch.dim();
    let mut gradient = vec![vec![0.0; d]; q];
    for j in 0..q {
        let row = &mut gradient[j];
        for (r, g) in row.iter_mut().zip(&bm.mean_grad[j]) {
            *r += mg.mean[j] * g;
        }
        for l in 0..q {
            let b = mg.cov[(j, l)];
            for (r, g) in row.iter_mut().zip(&bm.cov_grad[j][l]) {
                *r += b * g;
            }
        }
    }
    Ok(QeiGradient {
        value: mg.value,
        gradient,
        calls: counter.clone(),
    })
}

/// Reverse-mode differentiation of the closed form with respect to `(m, Σ)`.
pub fn qei_moment_gradient(
    pair: &MomentPair,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<MomentGradient> {
    let q = pair.q();
    let mut value = 0.0;
    let mut grad_m = DVector::zeros(q);
    let mut grad_s = DMatrix::zeros(q, q);
    for k in 0..q {
        let view = AffineView::new(pair, k)?;
        let m = &view.mean;
        let s = view.cov.matrix();
        let a: Vec<f64> = m.iter().map(|v| -v).collect();

        counter.record(q);
        let p = mvn::cdf_uncounted(&a, s, acc)?;

        // Reduced orthants R_i and the point gradient G_i = φ_i R_i.
        let conds: Vec<ConditionalView> = (0..q).map(|i| ConditionalView::new(&view, i)).collect::<Result<_>>()?;
        let mut r = vec![0.0; q];
        let mut phi = vec![0.0; q];
        for i in 0..q {
            r[i] = conds[i].orthant(acc, counter)?;
            phi[i] = norm_pdf_var(m[i], s[(i, i)]);
        }
        let g: Vec<f64> = (0..q).map(|i| phi[i] * r[i]).collect();
        let hess = mvn::hessian_raw(&a, s, &g, acc, counter)?;

        let mut gm = DVector::<f64>::zeros(q);
        let mut b = DMatrix::<f64>::zeros(q, q);

        // -m_k Φ_q(-m; S)
        let mut term = -m[k] * p;
        gm[k] -= p;
        for j in 0..q {
            gm[j] += m[k] * g[j];
        }
        b -= m[k] * &hess;

        // Σ_i S_ik φ_{S_ii}(m_i) R_i
        for i in 0..q {
            let sii = s[(i, i)];
            let sik = s[(i, k)];
            term += sik * phi[i] * r[i];

            let e = phi[i] * r[i];
            if i == k {
                b[(k, k)] += 2.0 * e;
            } else {
                b[(i, k)] += e;
                b[(k, i)] += e;
            }

            let dphi_dx = -(m[i] / sii) * phi[i];
            let dphi_dv = 0.5 * (m[i] * m[i] / (sii * sii) - 1.0 / sii) * phi[i];
            gm[i] += sik * r[i] * dphi_dx;
            b[(i, i)] += 2.0 * sik * r[i] * dphi_dv;

            let c = sik * phi[i];
            if q == 1 {
                continue;
            }
            let cond = &conds[i];
            let others = cond.others();
            let sub_a: Vec<f64> = cond.mean.iter().map(|v| -v).collect();
            let sub_s = cond.cov.matrix();
            let grad_r = (0..q - 1)
                .map(|j| mvn::dpoint_raw(&sub_a, sub_s, j, acc, counter))
                .collect::<Result<Vec<f64>>>()?;
            let hess_r = mvn::hessian_raw(&sub_a, sub_s, &grad_r, acc, counter)?;

            // R depends on (m, S) through b = -m_|i and S_|i.
            let svec = DVector::from_iterator(q - 1, others.iter().map(|&j| s[(j, i)]));
            let u = DVector::from_iterator(q - 1, grad_r.iter().map(|v| -v));
            let us = u.dot(&svec);
            let ds = &hess_r * &svec;
            for (pos, &j) in others.iter().enumerate() {
                gm[j] += c * u[pos];
            }
            gm[i] -= c * us / sii;
            let gamma = m[i] * us / (sii * sii) + 0.5 * svec.dot(&ds) / (sii * sii);
            b[(i, i)] += 2.0 * c * gamma;
            for (pos, &j) in others.iter().enumerate() {
                let w = -(m[i] / sii) * u[pos] - ds[pos] / sii;
                b[(j, i)] += c * w;
                b[(i, j)] += c * w;
                for (pos2, &l) in others.iter().enumerate() {
                    b[(j, l)] += c * hess_r[(pos, pos2)];
                }
            }
        }
        value += term;

        // Pull back through m^(k) = L m + b, S^(k) = L Σ Lᵀ.
        let l = view.map();
        grad_m += l.transpose() * gm;
        grad_s += l.transpose() * b * &l;
    }
    Ok(MomentGradient {
        value: value.max(0.0),
        mean: grad_m,
        cov: grad_s,
    })
}

/// Monte-Carlo estimate of qEI from joint posterior draws; returns the
/// estimate and its standard error.
pub fn mc_qei(model: &PosteriorGP, batch: &Batch, threshold: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let pair = moments(model, batch, threshold)?;
    Ok(mc_qei_moments(&pair, samples, seed))
}

pub fn mc_qei_moments(pair: &MomentPair, samples: usize, seed: u64) -> (f64, f64) {
    let q = pair.q();
    let l = pair.cov.factor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::zeros(q);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        for v in z.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let y = &pair.mean + l * &z;
        let gain = (y.max() - pair.threshold).max(0.0);
        sum += gain;
        sum_sq += gain * gain;
    }
    let n = samples.max(1) as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Draws a uniform random point of the domain.
pub fn random_batch(domain: &DomainBox, q: usize, rng: &mut impl Rng) -> Batch {
    let pts = (0..q).map(|_| domain.sample(rng)).collect();
    Batch {
        points: pts,
        domain: domain.clone(),
    }
}
