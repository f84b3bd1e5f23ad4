//! Batch-sequential regret experiments on sample-path objectives.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batchopt::{maximize_qei, AscentConfig};
use crate::bench::design::lhs_design;
use crate::bench::objective::{make_objective, Objective};
use crate::bucb::{bucb_batch, BetaSchedule, BucbVariant, InnerConfig, Sense};
use crate::error::{Error, Result};
use crate::gp::{DomainBox, Kernel, KernelFamily, PosteriorGP};
use crate::mvn::CdfAccuracy;
use crate::qei::{qei_value, Batch};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Qei,
    Bucb1,
    Bucb2,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Qei => "qei",
            Strategy::Bucb1 => "bucb1",
            Strategy::Bucb2 => "bucb2",
        }
    }

    pub fn all() -> Vec<Strategy> {
        vec![Strategy::Qei, Strategy::Bucb1, Strategy::Bucb2]
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub variance: f64,
    /// One range per dimension, or a single value used for all of them.
    pub ranges: Vec<f64>,
}

impl KernelSpec {
    pub fn build(&self, d: usize) -> Result<Kernel> {
        let ranges = match self.ranges.len() {
            1 => vec![self.ranges[0]; d],
            n if n == d => self.ranges.clone(),
            n => return Err(Error::DimensionMismatch { expected: d, found: n }),
        };
        Kernel::new(self.family, self.variance, ranges)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n_init: usize,
    pub q: usize,
    pub n_batches: usize,
    pub n_replicates: usize,
    pub kernel: KernelSpec,
    /// Number of space-filling points the objective is drawn at.
    pub grid_size: usize,
    pub strategies: Vec<Strategy>,
    pub seed: u64,
    /// CDF tolerance used while optimizing qEI; reported values use `final_cdf_tolerance`.
    pub cdf_tolerance: f64,
    pub final_cdf_tolerance: f64,
    /// Scale of the BUCB exploration coefficient.
    pub bucb_beta_mult: f64,
    pub ascent_iterations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        Self {
            d: 3,
            n_init: 20,
            q: 4,
            n_batches: 5,
            n_replicates: 10,
            kernel: KernelSpec {
                family: KernelFamily::Matern32,
                variance: 1.0,
                ranges: vec![1.0],
            },
            grid_size: 500,
            strategies: Strategy::all(),
            seed: 0,
            cdf_tolerance: 1e-6,
            final_cdf_tolerance: 1e-8,
            bucb_beta_mult: 0.1,
            ascent_iterations: 200,
        }
    }

    pub fn paper_scale() -> Self {
        Self {
            d: 5,
            n_init: 50,
            q: 6,
            n_batches: 10,
            n_replicates: 50,
            grid_size: 2000,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper-scale" => Some(Self::paper_scale()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("n_init", self.n_init),
            ("q", self.q),
            ("n_replicates", self.n_replicates),
            ("ascent_iterations", self.ascent_iterations),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.n_init < 2 {
            return Err(Error::InvalidInput("n_init must be at least 2".into()));
        }
        if self.grid_size < 10 {
            return Err(Error::InvalidInput("grid_size must be at least 10".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidInput("strategy list is empty".into()));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return Err(Error::InvalidInput(format!("strategy {s} listed twice")));
            }
        }
        for (name, v) in [
            ("cdf_tolerance", self.cdf_tolerance),
            ("final_cdf_tolerance", self.final_cdf_tolerance),
            ("bucb_beta_mult", self.bucb_beta_mult),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        self.kernel.build(self.d).map(|_| ())
    }
}

/// Best observed value after the initial design (index 0) and after each batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub replicate: usize,
    pub strategy: Strategy,
    pub best_values: Vec<f64>,
    pub regrets: Vec<f64>,
    /// Selection time of each batch; 0 for the initial design.
    pub wall_ms: Vec<f64>,
    pub optimum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstBatchRecord {
    pub replicate: usize,
    pub strategy: Strategy,
    /// qEI of the selected batch under the initial model.
    pub qei: f64,
    /// `max(0, max f(batch) - best initial value)`.
    pub realized_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: usize,
    pub strategy: Option<Strategy>,
    pub batch_index: Option<usize>,
    pub message: String,
}

/// Observed value above the reference optimum: the polished grid optimum
/// missed a better local maximum of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub replicate: usize,
    pub strategy: Strategy,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub grid_optimum: f64,
    pub optimum: f64,
    pub traces: Vec<RegretTrace>,
    pub first_batch: Vec<FirstBatchRecord>,
    pub failures: Vec<Failure>,
    pub exceedances: Vec<Exceedance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateResult>,
}

impl ExperimentResult {
    pub fn traces(&self) -> impl Iterator<Item = &RegretTrace> {
        self.replicates.iter().flat_map(|r| r.traces.iter())
    }

    pub fn first_batch(&self) -> impl Iterator<Item = &FirstBatchRecord> {
        self.replicates.iter().flat_map(|r| r.first_batch.iter())
    }

    pub fn failures(&self) -> impl Iterator<Item = &Failure> {
        self.replicates.iter().flat_map(|r| r.failures.iter())
    }
}

// Stream tags below the replicate index.
const OBJECTIVE: u64 = 0;
const DESIGN: u64 = 1;
const SELECT: u64 = 2;

/// Runs every replicate, in parallel on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let replicates = (0..cfg.n_replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        replicates,
    })
}

pub fn run_replicate(cfg: &ExperimentConfig, r: usize) -> ReplicateResult {
    let mut out = ReplicateResult {
        replicate: r,
        grid_optimum: f64::NAN,
        optimum: f64::NAN,
        traces: Vec::new(),
        first_batch: Vec::new(),
        failures: Vec::new(),
        exceedances: Vec::new(),
    };
    let setup = cfg.kernel.build(cfg.d).and_then(|kernel| {
        let objective = make_objective(&kernel, cfg.grid_size, derive_seed(cfg.seed, &[r as u64, OBJECTIVE]))?;
        let design = lhs_design(cfg.n_init, cfg.d, derive_seed(cfg.seed, &[r as u64, DESIGN]));
        let values: Vec<f64> = design.iter().map(|x| objective.eval(x)).collect();
        let model = PosteriorGP::new(kernel, 0.0, design, values)?;
        Ok((objective, model))
    });
    let (objective, model) = match setup {
        Ok(v) => v,
        Err(e) => {
            out.failures.push(Failure {
                replicate: r,
                strategy: None,
                batch_index: None,
                message: e.to_string(),
            });
            return out;
        }
    };
    out.grid_optimum = objective.grid_best().1;
    out.optimum = objective.optimum().1;

    for &strategy in &cfg.strategies {
        let run = run_strategy(cfg, r, strategy, &objective, &model);
        let mut trace = run.trace;
        for (k, best) in trace.best_values.iter().enumerate() {
            let gap = out.optimum - best;
            if gap < 0.0 && k + 1 == trace.best_values.len() {
                out.exceedances.push(Exceedance {
                    replicate: r,
                    strategy,
                    excess: -gap,
                });
            }
            trace.regrets.push(gap.max(0.0));
        }
        trace.optimum = out.optimum;
        out.traces.push(trace);
        out.first_batch.extend(run.first_batch);
        out.failures.extend(run.failure);
    }
    out
}

struct StrategyRun {
    trace: RegretTrace,
    first_batch: Option<FirstBatchRecord>,
    failure: Option<Failure>,
}

fn run_strategy(
    cfg: &ExperimentConfig,
    r: usize,
    strategy: Strategy,
    objective: &Objective,
    initial: &PosteriorGP,
) -> StrategyRun {
    let domain = DomainBox::unit(cfg.d);
    let mut model = initial.clone();
    let mut best = initial.best_response().unwrap_or(f64::NEG_INFINITY);
    let mut run = StrategyRun {
        trace: RegretTrace {
            replicate: r,
            strategy,
            best_values: vec![best],
            regrets: Vec::new(),
            wall_ms: vec![0.0],
            optimum: f64::NAN,
        },
        first_batch: None,
        failure: None,
    };
    for k in 0..cfg.n_batches {
        if run.failure.is_none() {
            let seed = derive_seed(cfg.seed, &[r as u64, SELECT, k as u64]);
            let started = Instant::now();
            let step = select(cfg, strategy, &model, &domain, k, seed);
            let elapsed = started.elapsed().as_secs_f64() * 1e3;
            let outcome = step.and_then(|(batch, criterion)| {
                let values: Vec<f64> = batch.points().iter().map(|x| objective.eval(x)).collect();
                let batch_best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if k == 0 {
                    let qei = match criterion {
                        Some(v) => v,
                        None => qei_value(&model, &batch, best, &final_accuracy(cfg, seed))?,
                    };
                    run.first_batch = Some(FirstBatchRecord {
                        replicate: r,
                        strategy,
                        qei,
                        realized_improvement: (batch_best - best).max(0.0),
                    });
                }
                let next = absorb(&model, &batch, &values)?;
                Ok((next, batch_best))
            });
            match outcome {
                Ok((next, batch_best)) => {
                    model = next;
                    best = best.max(batch_best);
                    run.trace.wall_ms.push(elapsed);
                }
                Err(e) => {
                    run.failure = Some(Failure {
                        replicate: r,
                        strategy: Some(strategy),
                        batch_index: Some(k),
                        message: e.to_string(),
                    });
                    run.trace.wall_ms.push(elapsed);
                }
            }
        } else {
            run.trace.wall_ms.push(0.0);
        }
        // After a failure the trace carries the last best value forward.
        run.trace.best_values.push(best);
    }
    run
}

fn final_accuracy(cfg: &ExperimentConfig, seed: u64) -> CdfAccuracy {
    CdfAccuracy {
        seed,
        ..CdfAccuracy::with_tolerance(cfg.final_cdf_tolerance)
    }
}

/// The selected batch and, for qEI, its criterion value.
fn select(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    model: &PosteriorGP,
    domain: &DomainBox,
    k: usize,
    seed: u64,
) -> Result<(Batch, Option<f64>)> {
    match strategy {
        Strategy::Qei => {
            let threshold = model
                .best_response()
                .ok_or_else(|| Error::InvalidInput("model has no observations".into()))?;
            let ascent = AscentConfig {
                max_iterations: cfg.ascent_iterations,
                seed,
                batch_index: k,
                optimization_tolerance: cfg.cdf_tolerance,
                final_tolerance: cfg.final_cdf_tolerance,
                ..AscentConfig::default()
            };
            let res = maximize_qei(model, threshold, cfg.q, domain, &ascent)?;
            Ok((res.batch, Some(res.value)))
        }
        Strategy::Bucb1 | Strategy::Bucb2 => {
            let variant = if strategy == Strategy::Bucb1 {
                BucbVariant::Bucb1
            } else {
                BucbVariant::Bucb2
            };
            let schedule = BetaSchedule::new(variant, cfg.d, cfg.q).with_beta_mult(cfg.bucb_beta_mult);
            let batch = bucb_batch(
                model,
                cfg.q,
                &schedule,
                k,
                Sense::Maximize,
                domain,
                &InnerConfig::default(),
                seed,
            )?;
            Ok((batch, None))
        }
    }
}

/// Conditions on the evaluated batch, skipping rows that coincide with the
/// design or with earlier rows; their values still count towards the best.
fn absorb(model: &PosteriorGP, batch: &Batch, values: &[f64]) -> Result<PosteriorGP> {
    let tol = batch.dedup_tolerance();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    for (x, &y) in batch.points().iter().zip(values) {
        let near = model
            .design()
            .iter()
            .chain(points.iter())
            .any(|z| dist(x, z) <= tol);
        if !near {
            points.push(x.clone());
            ys.push(y);
        }
    }
    if points.is_empty() {
        return Ok(model.clone());
    }
    model.with_observations(&points, &ys)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
