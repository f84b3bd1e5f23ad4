//! Multistart maximization of qEI over the `q·d` batch coordinates.

pub mod qn;

pub use qn::{bounded_quasi_newton, projected_gradient, QnConfig, QnTrace, Termination};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bucb::{bucb_batch, BetaSchedule, BucbVariant, InnerConfig, Sense};
use crate::error::{Error, Result};
use crate::gp::{DomainBox, PosteriorGP};
use crate::mvn::{CdfAccuracy, CdfCallCounter};
use crate::qei::{qei_grad_counted, qei_value, Batch};
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub value_tolerance: f64,
    /// One start per entry, each a BUCB batch with that `β_mult`.
    pub beta_mults: Vec<f64>,
    pub seed: u64,
    /// Index of the batch in the sequential run; sets the BUCB β of the starts.
    pub batch_index: usize,
    pub optimization_tolerance: f64,
    pub final_tolerance: f64,
    pub inner: InnerConfig,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            value_tolerance: 1e-9,
            beta_mults: vec![0.05, 0.1, 0.2],
            seed: 0,
            batch_index: 0,
            optimization_tolerance: 1e-6,
            final_tolerance: 1e-8,
            inner: InnerConfig::default(),
        }
    }
}

impl AscentConfig {
    pub fn starts(&self) -> usize {
        self.beta_mults.len()
    }

    fn validate(&self) -> Result<()> {
        if self.beta_mults.is_empty() {
            return Err(Error::InvalidInput("at least one start is required".into()));
        }
        if !(self.gradient_tolerance > 0.0 && self.value_tolerance > 0.0) {
            return Err(Error::InvalidInput("ascent tolerances must be positive".into()));
        }
        Ok(())
    }

    fn qn(&self) -> QnConfig {
        QnConfig {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            value_tolerance: self.value_tolerance,
            ..QnConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub beta_mult: f64,
    pub start_value: f64,
    pub final_value: f64,
    pub trace: Option<QnTrace>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub batch: Batch,
    pub value: f64,
    pub starts: Vec<StartReport>,
}

/// Moves rows that duplicate an earlier row, or sit on a design point where
/// the kernel is not smooth, by a uniform draw in a ball of radius
/// `1e-3 · diagonal`.
pub fn separate_rows(batch: &Batch, model: &PosteriorGP, seed: u64) -> Result<Batch> {
    let domain = batch.domain().clone();
    let radius = 1e-3 * domain.diagonal();
    let tol = batch.dedup_tolerance();
    let mut rng = rng_for(seed, &[0x5e9]);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(batch.q());
    for x in batch.points() {
        let mut x = x.clone();
        for _ in 0..100 {
            let clash = rows.iter().any(|r| dist(r, &x) <= tol) || model.check_smooth(&x).is_err();
            if !clash {
                break;
            }
            x = perturb(&x, radius, &domain, &mut rng);
        }
        rows.push(x);
    }
    Batch::new(rows, domain)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn perturb(x: &[f64], radius: f64, domain: &DomainBox, rng: &mut impl Rng) -> Vec<f64> {
    let d = x.len();
    let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    let mut y: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + r * di / norm).collect();
    domain.project(&mut y);
    y
}

/// Maximizes qEI from BUCB-seeded starts and returns the best batch found.
pub fn maximize_qei(
    model: &PosteriorGP,
    threshold: f64,
    q: usize,
    domain: &DomainBox,
    cfg: &AscentConfig,
) -> Result<AscentResult> {
    cfg.validate()?;
    let d = domain.dim();
    let opt_acc = CdfAccuracy {
        seed: cfg.seed,
        ..CdfAccuracy::with_tolerance(cfg.optimization_tolerance)
    };
    let final_acc = CdfAccuracy {
        seed: cfg.seed,
        ..CdfAccuracy::with_tolerance(cfg.final_tolerance)
    };
    let qn = cfg.qn();
    let mut best: Option<(Batch, f64)> = None;
    let mut reports = Vec::with_capacity(cfg.starts());
    for (s, &beta_mult) in cfg.beta_mults.iter().enumerate() {
        let schedule = BetaSchedule::new(BucbVariant::Bucb1, d, q).with_beta_mult(beta_mult);
        let mut report = StartReport {
            beta_mult,
            start_value: f64::NAN,
            final_value: f64::NAN,
            trace: None,
            error: None,
        };
        let start = bucb_batch(
            model,
            q,
            &schedule,
            cfg.batch_index,
            Sense::Maximize,
            domain,
            &cfg.inner,
            cfg.seed,
        );
        let start = match start {
            Ok(b) => b,
            Err(e) => {
                report.error = Some(e.to_string());
                reports.push(report);
                continue;
            }
        };
        // The raw start competes as is; ascent runs from a separated copy.
        if let Ok(v) = qei_value(model, &start, threshold, &final_acc) {
            report.start_value = v;
            consider(&mut best, &start, v);
        }
        let start = separate_rows(&start, model, derive_seed(cfg.seed, &[s as u64]))?;
        let objective = |x: &[f64]| {
            let b = Batch::from_flat(x, d, domain.clone())?;
            let g = qei_grad_counted(model, &b, threshold, &opt_acc, &mut CdfCallCounter::new())?;
            Ok((g.value, g.flat_gradient()))
        };
        let lower: Vec<f64> = (0..q).flat_map(|_| domain.lower.iter().copied()).collect();
        let upper: Vec<f64> = (0..q).flat_map(|_| domain.upper.iter().copied()).collect();
        match bounded_quasi_newton(objective, &start.flatten(), &lower, &upper, &qn) {
            Ok((x, _, trace)) => {
                let b = Batch::from_flat(&x, d, domain.clone())?;
                match qei_value(model, &b, threshold, &final_acc) {
                    Ok(v) => {
                        report.final_value = v;
                        consider(&mut best, &b, v);
                    }
                    Err(e) => report.error = Some(e.to_string()),
                }
                report.trace = Some(trace);
            }
            Err(e) => report.error = Some(e.to_string()),
        }
        reports.push(report);
    }
    match best {
        Some((batch, value)) => Ok(AscentResult {
            batch,
            value,
            starts: reports,
        }),
        None => Err(Error::AllStartsFailed {
            starts: reports.len(),
            reason: reports
                .iter()
                .filter_map(|r| r.error.clone())
                .last()
                .unwrap_or_default(),
        }),
    }
}

fn consider(best: &mut Option<(Batch, f64)>, batch: &Batch, value: f64) {
    if best.as_ref().is_none_or(|(_, v)| value > *v) {
        *best = Some((batch.clone(), value));
    }
}
