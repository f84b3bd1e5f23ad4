//! Batch upper-confidence-bound selection with kriging-believer updates.

use serde::{Deserialize, Serialize};

use crate::batchopt::qn::{bounded_quasi_newton, QnConfig};
use crate::bench::design::lhs_design;
use crate::error::{Error, Result};
use crate::gp::{DomainBox, PosteriorGP};
use crate::qei::Batch;
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucbVariant {
    Bucb1,
    Bucb2,
}

/// Whether the objective is minimized (lower quantile `μ - βs`) or
/// maximized (upper quantile `μ + βs`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Exploration coefficients
/// `β1(k) = 2 β_mult log(π² d (k+1)² / (6δ))` and
/// `β2(k) = 2 β_mult log(π² d (1+qk)² / (6δ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub variant: BucbVariant,
    pub beta_mult: f64,
    pub delta: f64,
    pub d: usize,
    pub q: usize,
}

impl BetaSchedule {
    pub fn new(variant: BucbVariant, d: usize, q: usize) -> Self {
        Self {
            variant,
            beta_mult: 0.1,
            delta: 0.1,
            d,
            q,
        }
    }

    pub fn with_beta_mult(mut self, beta_mult: f64) -> Self {
        self.beta_mult = beta_mult;
        self
    }

    pub fn beta(&self, k: usize) -> Result<f64> {
        let growth = match self.variant {
            BucbVariant::Bucb1 => (k as f64 + 1.0).powi(2),
            BucbVariant::Bucb2 => (1.0 + (self.q * k) as f64).powi(2),
        };
        let arg = std::f64::consts::PI.powi(2) * self.d as f64 / (6.0 * self.delta) * growth;
        let beta = 2.0 * self.beta_mult * arg.ln();
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::DegenerateSchedule { beta });
        }
        Ok(beta)
    }
}

/// Multistart settings for optimizing the quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub lhs_starts: usize,
    pub random_probes: usize,
    pub qn: QnConfig,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            lhs_starts: 20,
            random_probes: 200,
            qn: QnConfig {
                max_iterations: 100,
                gradient_tolerance: 1e-8,
                value_tolerance: 1e-12,
                ..QnConfig::default()
            },
        }
    }
}

/// Below this posterior standard deviation the quantile gradient uses the mean only.
const SD_GUARD: f64 = 1e-8;

/// Quantile `μ_n(x) ∓ β s_n(x)` expressed as a score to maximize, with gradient.
pub fn quantile_score(model: &PosteriorGP, beta: f64, sense: Sense, x: &[f64]) -> (f64, Vec<f64>) {
    let mu = model.mean(x);
    let gmu = model.mean_grad_raw(x);
    let (s, gs) = model.sd_grad_raw(x);
    let sign = match sense {
        Sense::Minimize => -1.0,
        Sense::Maximize => 1.0,
    };
    // Minimizing μ - βs is maximizing -μ + βs.
    let value = sign * mu + beta * s;
    let grad = gmu
        .iter()
        .zip(&gs)
        .map(|(a, b)| sign * a + if s < SD_GUARD { 0.0 } else { beta * b })
        .collect();
    (value, grad)
}

/// Best point for the quantile over the domain.
pub fn optimize_quantile(
    model: &PosteriorGP,
    beta: f64,
    sense: Sense,
    domain: &DomainBox,
    inner: &InnerConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = domain.dim();
    let mut starts: Vec<Vec<f64>> = lhs_design(inner.lhs_starts.max(2), d, derive_seed(seed, &[1]))
        .into_iter()
        .take(inner.lhs_starts)
        .map(|u| domain.from_unit(&u))
        .collect();
    let mut rng = rng_for(seed, &[2]);
    let probe = (0..inner.random_probes)
        .map(|_| domain.sample(&mut rng))
        .max_by(|a, b| {
            let fa = quantile_score(model, beta, sense, a).0;
            let fb = quantile_score(model, beta, sense, b).0;
            fa.total_cmp(&fb)
        });
    starts.extend(probe);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_error = None;
    for x0 in &starts {
        let f = |x: &[f64]| Ok(quantile_score(model, beta, sense, x));
        match bounded_quasi_newton(f, x0, &domain.lower, &domain.upper, &inner.qn) {
            Ok((x, v, _)) => {
                if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                    best = Some((x, v));
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    best.map(|(x, _)| x).ok_or_else(|| Error::AllStartsFailed {
        starts: starts.len(),
        reason: last_error.map(|e| e.to_string()).unwrap_or_default(),
    })
}

/// Selects `q` points by repeatedly optimizing the quantile of the
/// believer-augmented model.
#[allow(clippy::too_many_arguments)]
pub fn bucb_batch(
    model: &PosteriorGP,
    q: usize,
    schedule: &BetaSchedule,
    k: usize,
    sense: Sense,
    domain: &DomainBox,
    inner: &InnerConfig,
    seed: u64,
) -> Result<Batch> {
    let beta = schedule.beta(k)?;
    let mut current = model.clone();
    let mut points = Vec::with_capacity(q);
    for j in 0..q {
        let x = optimize_quantile(&current, beta, sense, domain, inner, derive_seed(seed, &[j as u64]))?;
        match current.believer_augment(&x) {
            Ok(next) => current = next,
            // Already conditioned on (a point indistinguishable from) x.
            Err(Error::DuplicatePoint { .. }) => {}
            Err(e) => return Err(e),
        }
        points.push(x);
    }
    Batch::new(points, domain.clone())
}
