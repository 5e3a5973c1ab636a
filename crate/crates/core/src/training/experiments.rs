use serde::Serialize;

use super::config::TrainConfig;
use super::train::{run, RunOutcome};
use crate::dataio::FRACTIONS;
use crate::dataio::Container;
use crate::error::{Error, Result};
use crate::metrics::Summary;
use crate::models::ModelSpec;

/// Sample standard deviation over the mean, in percent. `None` for a zero
/// mean or fewer than two values.
pub fn error_rate(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return None;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some(var.sqrt() / mean.abs() * 100.0)
}

/// Mean and error rate of one metric, rendered like `0.2739 ± 3.14%`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanError {
    pub mean: f64,
    pub error_rate: Option<f64>,
}

impl MeanError {
    pub fn of(values: &[f64]) -> Self {
        MeanError { mean: values.iter().sum::<f64>() / values.len().max(1) as f64, error_rate: error_rate(values) }
    }

    pub fn cell(&self) -> String {
        match self.error_rate {
            Some(e) => format!("{:.4} ± {:.2}%", self.mean, e),
            None => format!("{:.4} ± n/a", self.mean),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub summary: Option<Summary>,
    /// Set when the run failed or diverged.
    pub failure: Option<String>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub model: String,
    pub runs: Vec<SeedRun>,
    pub auc: MeanError,
    pub auc_pr: MeanError,
    pub precision: MeanError,
    pub recall: MeanError,
}

impl SeedSummary {
    /// Aggregates the successful runs; failed runs stay listed in `runs`.
    pub fn from_runs(model: &str, runs: Vec<SeedRun>) -> Self {
        let ok: Vec<Summary> = runs.iter().filter_map(|r| r.summary).collect();
        let col = |f: fn(&Summary) -> f64| MeanError::of(&ok.iter().map(f).collect::<Vec<_>>());
        SeedSummary {
            model: model.to_string(),
            auc: col(|s| s.auc),
            auc_pr: col(|s| s.auc_pr),
            precision: col(|s| s.precision),
            recall: col(|s| s.recall),
            runs,
        }
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.failure.is_some()).count()
    }
}

fn seed_run(seed: u64, outcome: Result<RunOutcome>) -> SeedRun {
    match outcome {
        Ok(o) => SeedRun {
            seed,
            summary: o.test.as_ref().map(|e| e.summary),
            failure: if o.report.diverged() { Some(format!("diverged at epoch {}", o.report.stopped_epoch + 1)) } else { None },
            best_epoch: o.report.best_epoch,
            stopped_epoch: o.report.stopped_epoch,
        },
        Err(e) => SeedRun { seed, summary: None, failure: Some(e.to_string()), best_epoch: 0, stopped_epoch: 0 },
    }
}

/// Trains once per seed on a fixed split and summarizes test metrics.
pub fn seed_experiment(spec: &ModelSpec, data: &Container, cfg: &TrainConfig, seeds: &[u64]) -> Result<SeedSummary> {
    if seeds.len() < 2 {
        return Err(Error::invalid(format!("seed experiment needs at least 2 seeds, got {}", seeds.len())));
    }
    let runs = seeds
        .iter()
        .map(|&seed| seed_run(seed, run(spec, data, &TrainConfig { seed, ..cfg.clone() })))
        .collect();
    Ok(SeedSummary::from_runs(spec.family.display_name(), runs))
}

pub const SEED_TABLE_HEADER: &str = "Model,AUC ± error rate,AUC-PR ± error rate,Precision ± error rate,Recall ± error rate";

pub fn seed_table_csv(rows: &[SeedSummary]) -> String {
    let mut out = format!("{SEED_TABLE_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model,
            r.auc.cell(),
            r.auc_pr.cell(),
            r.precision.cell(),
            r.recall.cell()
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FractionRow {
    pub fraction: f64,
    pub model: String,
    pub train_samples: usize,
    pub summary: Option<Summary>,
    pub failure: Option<String>,
    pub test_digest: String,
}

/// One run per fraction on nested training subsets; validation and test
/// splits stay fixed.
pub fn fraction_experiment(spec: &ModelSpec, data: &Container, cfg: &TrainConfig, fractions: &[f64]) -> Result<Vec<FractionRow>> {
    if fractions.is_empty() {
        return Err(Error::invalid("fraction experiment needs at least one fraction"));
    }
    for &p in fractions {
        if !FRACTIONS.iter().any(|&q| (q - p).abs() < 1e-12) {
            return Err(Error::invalid(format!("fraction {p} is not one of {FRACTIONS:?}")));
        }
    }
    let (_, _, test) = data.split(cfg.split_ratios, cfg.split_seed)?;
    let test_digest = test.split_digest();
    let mut rows = Vec::new();
    for &p in fractions {
        let outcome = run(spec, data, &TrainConfig { fraction: p, ..cfg.clone() });
        let row = match outcome {
            Ok(o) => {
                debug_assert_eq!(o.test_digest, test_digest);
                FractionRow {
                    fraction: p,
                    model: spec.family.display_name().to_string(),
                    train_samples: o.report.train_ids.len(),
                    summary: o.test.as_ref().map(|e| e.summary),
                    failure: o.report.diverged().then(|| "diverged".to_string()),
                    test_digest: o.test_digest,
                }
            }
            Err(e) => FractionRow {
                fraction: p,
                model: spec.family.display_name().to_string(),
                train_samples: 0,
                summary: None,
                failure: Some(e.to_string()),
                test_digest: test_digest.clone(),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

pub const FRACTION_TABLE_HEADER: &str = "Fraction,Model,AUC,AUC-PR,Precision,Recall";

pub fn fraction_table_csv(rows: &[FractionRow]) -> String {
    let mut out = format!("{FRACTION_TABLE_HEADER}\n");
    for r in rows {
        let pct = format!("{}%", (r.fraction * 100.0).round() as u32);
        match &r.summary {
            Some(s) => out.push_str(&format!(
                "{pct},{},{:.4},{:.4},{:.4},{:.4}\n",
                r.model, s.auc, s.auc_pr, s.precision, s.recall
            )),
            None => out.push_str(&format!("{pct},{},failed,failed,failed,failed\n", r.model)),
        }
    }
    out
}
