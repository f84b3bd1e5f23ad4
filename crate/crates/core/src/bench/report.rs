//! Tabular outputs of an experiment.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::bench::experiment::{Exceedance, ExperimentResult, Failure, Strategy};

/// Regrets below this are logged as this value so summaries stay finite.
pub const LOG_FLOOR: f64 = 1e-12;

/// One row per (replicate, strategy, batch index), index 0 being the
/// initial design. `omit_timing` writes 0 for wall times so reruns compare
/// byte for byte.
pub fn results_csv(result: &ExperimentResult, omit_timing: bool) -> String {
    let mut out = String::from("replicate,strategy,batch_index,best_value,regret,wall_ms\n");
    for t in result.traces() {
        for (k, (best, regret)) in t.best_values.iter().zip(&t.regrets).enumerate() {
            let wall = if omit_timing { 0.0 } else { t.wall_ms[k] };
            writeln!(out, "{},{},{},{},{},{}", t.replicate, t.strategy, k, best, regret, wall).unwrap();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub replicates: usize,
    pub mean_regret: Vec<f64>,
    pub q95_regret: Vec<f64>,
    /// Logarithm of the mean regret.
    pub log_mean_regret: Vec<f64>,
    pub log_q95_regret: Vec<f64>,
    /// Mean of the logarithm of the regret.
    pub mean_log_regret: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstBatchSummary {
    pub strategy: Strategy,
    pub replicates: usize,
    pub mean_qei: f64,
    pub mean_realized_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategies: Vec<StrategySummary>,
    pub first_batch: Vec<FirstBatchSummary>,
    pub failures: Vec<Failure>,
    pub exceedances: Vec<Exceedance>,
}

/// Linearly interpolated empirical quantile of a non-empty sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn floored_ln(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

pub fn summarize(result: &ExperimentResult) -> Summary {
    let mut strategies = Vec::new();
    let mut first_batch = Vec::new();
    for &s in &result.config.strategies {
        let traces: Vec<_> = result.traces().filter(|t| t.strategy == s).collect();
        if !traces.is_empty() {
            let len = traces.iter().map(|t| t.regrets.len()).min().unwrap_or(0);
            let mut sum = StrategySummary {
                strategy: s,
                replicates: traces.len(),
                mean_regret: Vec::with_capacity(len),
                q95_regret: Vec::with_capacity(len),
                log_mean_regret: Vec::with_capacity(len),
                log_q95_regret: Vec::with_capacity(len),
                mean_log_regret: Vec::with_capacity(len),
            };
            for k in 0..len {
                let col: Vec<f64> = traces.iter().map(|t| t.regrets[k]).collect();
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let q95 = quantile(&col, 0.95);
                sum.mean_regret.push(mean);
                sum.q95_regret.push(q95);
                sum.log_mean_regret.push(floored_ln(mean));
                sum.log_q95_regret.push(floored_ln(q95));
                sum.mean_log_regret.push(col.iter().map(|&v| floored_ln(v)).sum::<f64>() / n);
            }
            strategies.push(sum);
        }
        let fb: Vec<_> = result.first_batch().filter(|f| f.strategy == s).collect();
        if !fb.is_empty() {
            let n = fb.len() as f64;
            first_batch.push(FirstBatchSummary {
                strategy: s,
                replicates: fb.len(),
                mean_qei: fb.iter().map(|f| f.qei).sum::<f64>() / n,
                mean_realized_improvement: fb.iter().map(|f| f.realized_improvement).sum::<f64>() / n,
            });
        }
    }
    Summary {
        strategies,
        first_batch,
        failures: result.failures().cloned().collect(),
        exceedances: result.replicates.iter().flat_map(|r| r.exceedances.iter().cloned()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::experiment::{ExperimentConfig, FirstBatchRecord, RegretTrace, ReplicateResult};

    fn fake() -> ExperimentResult {
        let trace = |r, s, regrets: Vec<f64>| RegretTrace {
            replicate: r,
            strategy: s,
            best_values: regrets.iter().map(|v| 1.0 - v).collect(),
            wall_ms: vec![1.5; regrets.len()],
            regrets,
            optimum: 1.0,
        };
        let rep = |r, a: Vec<f64>, b: Vec<f64>, qa, qb| ReplicateResult {
            replicate: r,
            grid_optimum: 1.0,
            optimum: 1.0,
            traces: vec![trace(r, Strategy::Qei, a), trace(r, Strategy::Bucb1, b)],
            first_batch: vec![
                FirstBatchRecord {
                    replicate: r,
                    strategy: Strategy::Qei,
                    qei: qa,
                    realized_improvement: 0.1,
                },
                FirstBatchRecord {
                    replicate: r,
                    strategy: Strategy::Bucb1,
                    qei: qb,
                    realized_improvement: 0.0,
                },
            ],
            failures: vec![],
            exceedances: vec![],
        };
        ExperimentResult {
            config: ExperimentConfig {
                strategies: vec![Strategy::Qei, Strategy::Bucb1],
                ..ExperimentConfig::desk()
            },
            replicates: vec![
                rep(0, vec![0.5, 0.25], vec![0.5, 0.5], 0.3, 0.2),
                rep(1, vec![0.3, 0.0], vec![0.3, 0.1], 0.5, 0.4),
            ],
        }
    }

    #[test]
    fn csv_layout() {
        let csv = results_csv(&fake(), false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 2 * 2);
        assert_eq!(lines[0], "replicate,strategy,batch_index,best_value,regret,wall_ms");
        assert_eq!(lines[1], "0,qei,0,0.5,0.5,1.5");
        assert_eq!(lines[2], "0,qei,1,0.75,0.25,1.5");
        assert!(results_csv(&fake(), true).lines().skip(1).all(|l| l.ends_with(",0")));
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&fake());
        let q = &s.strategies[0];
        assert_eq!(q.strategy, Strategy::Qei);
        assert!((q.mean_regret[0] - 0.4).abs() < 1e-15);
        assert!((q.mean_regret[1] - 0.125).abs() < 1e-15);
        assert!((q.q95_regret[0] - (0.3 + 0.95 * 0.2)).abs() < 1e-15);
        assert!((q.log_mean_regret[1] - 0.125f64.ln()).abs() < 1e-15);
        assert!((q.mean_log_regret[1] - 0.5 * (0.25f64.ln() + LOG_FLOOR.ln())).abs() < 1e-12);
        assert!((s.first_batch[0].mean_qei - 0.4).abs() < 1e-15);
        assert!((s.first_batch[1].mean_realized_improvement - 0.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0], 0.95), 1.0);
        assert!((quantile(&[0.0, 1.0], 0.95) - 0.95).abs() < 1e-15);
    }
}
