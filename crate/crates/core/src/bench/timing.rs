//! Wall time of the analytic qEI gradient against central differences.

use std::fmt::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bench::design::lhs_design;
use crate::error::{Error, Result};
use crate::gp::{sample_path, DomainBox, Kernel, KernelFamily, PosteriorGP};
use crate::mvn::{CdfAccuracy, CdfCallCounter};
use crate::qei::{qei_grad_counted, qei_value_counted, random_batch, Batch};
use crate::rng::{derive_seed, rng_for};

/// Observations of the sample-path model each sweep cell is timed on.
pub const TIMING_DESIGN_SIZE: usize = 20;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub d: usize,
    pub q: usize,
    pub t_analytic_ms: f64,
    pub t_fd_ms: f64,
    pub ratio: f64,
    /// CDF calls of one analytic gradient, by dimension (descending).
    pub cdf_calls_analytic: Vec<(usize, u64)>,
    /// CDF calls of one finite-difference gradient, by dimension.
    pub cdf_calls_fd: Vec<(usize, u64)>,
    /// Largest |analytic − FD| over coordinates and repeats.
    pub max_gradient_gap: f64,
}

fn sorted_counts(c: &CdfCallCounter) -> Vec<(usize, u64)> {
    let mut v: Vec<_> = c.iter().filter(|&(_, n)| n > 0).collect();
    v.sort_by(|a, b| b.0.cmp(&a.0));
    v
}

/// Central-difference gradient from `2·q·d` qEI evaluations.
pub fn fd_gradient(
    model: &PosteriorGP,
    batch: &Batch,
    threshold: f64,
    step: f64,
    acc: &CdfAccuracy,
    counter: &mut CdfCallCounter,
) -> Result<Vec<f64>> {
    let d = batch.dim();
    let domain = batch.domain();
    // Perturbed rows may leave the box by one step.
    let wide = DomainBox::new(
        domain.lower.iter().map(|v| v - 2.0 * step).collect(),
        domain.upper.iter().map(|v| v + 2.0 * step).collect(),
    )?;
    let x = batch.flatten();
    let mut grad = Vec::with_capacity(x.len());
    for c in 0..x.len() {
        let mut up = x.clone();
        up[c] += step;
        let mut down = x.clone();
        down[c] -= step;
        let fu = qei_value_counted(model, &Batch::from_flat(&up, d, wide.clone())?, threshold, acc, counter)?;
        let fd = qei_value_counted(model, &Batch::from_flat(&down, d, wide.clone())?, threshold, acc, counter)?;
        grad.push((fu - fd) / (2.0 * step));
    }
    Ok(grad)
}

pub fn timing_sweep(ds: &[usize], qs: &[usize], repeats: usize, seed: u64, acc: &CdfAccuracy) -> Result<Vec<TimingRow>> {
    if ds.is_empty() || qs.is_empty() || repeats == 0 {
        return Err(Error::InvalidInput("timing sweep needs non-empty lists and repeats ≥ 1".into()));
    }
    let mut rows = Vec::new();
    for &d in ds {
        let kernel = Kernel::isotropic(KernelFamily::Matern52, 1.0, 1.0, d)?;
        let design = lhs_design(TIMING_DESIGN_SIZE, d, derive_seed(seed, &[d as u64, 0]));
        let y = sample_path(&kernel, 0.0, &design, derive_seed(seed, &[d as u64, 1]))?;
        let model = PosteriorGP::new(kernel, 0.0, design, y)?;
        let threshold = model.best_response().unwrap_or(0.0);
        let domain = DomainBox::unit(d);
        for &q in qs {
            let mut rng = rng_for(seed, &[d as u64, q as u64, 2]);
            let (mut t_an, mut t_fd, mut gap) = (0.0, 0.0, 0.0f64);
            let mut calls_an = None;
            let mut calls_fd = None;
            for _ in 0..repeats {
                let batch = random_batch(&domain, q, &mut rng);
                let mut c_an = CdfCallCounter::new();
                let start = Instant::now();
                let g = qei_grad_counted(&model, &batch, threshold, acc, &mut c_an)?;
                t_an += start.elapsed().as_secs_f64() * 1e3;
                let mut c_fd = CdfCallCounter::new();
                let start = Instant::now();
                let fd = fd_gradient(&model, &batch, threshold, FD_STEP, acc, &mut c_fd)?;
                t_fd += start.elapsed().as_secs_f64() * 1e3;
                for (a, b) in g.flat_gradient().iter().zip(&fd) {
                    gap = gap.max((a - b).abs());
                }
                calls_an.get_or_insert_with(|| sorted_counts(&c_an));
                calls_fd.get_or_insert_with(|| sorted_counts(&c_fd));
            }
            let t_analytic_ms = t_an / repeats as f64;
            let t_fd_ms = t_fd / repeats as f64;
            rows.push(TimingRow {
                d,
                q,
                t_analytic_ms,
                t_fd_ms,
                ratio: t_fd_ms / t_analytic_ms,
                cdf_calls_analytic: calls_an.unwrap_or_default(),
                cdf_calls_fd: calls_fd.unwrap_or_default(),
                max_gradient_gap: gap,
            });
        }
    }
    Ok(rows)
}

/// Call counts rendered as `dim:count` pairs joined by `;`.
pub fn format_counts(counts: &[(usize, u64)]) -> String {
    counts.iter().map(|(k, n)| format!("{k}:{n}")).collect::<Vec<_>>().join(";")
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("d,q,t_analytic_ms,t_fd_ms,ratio,cdf_calls_analytic,cdf_calls_fd\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.d,
            r.q,
            r.t_analytic_ms,
            r.t_fd_ms,
            r.ratio,
            format_counts(&r.cdf_calls_analytic),
            format_counts(&r.cdf_calls_fd)
        )
        .unwrap();
    }
    out
}
