//! Masked weighted loss, Adam, early stopping and the two experiment
//! protocols (seed variation and nested training fractions).

mod adam;
mod config;
mod experiments;
mod stopping;
mod train;

pub use adam::Adam;
pub use config::{PosWeight, TrainConfig};
pub use experiments::{
    error_rate, fraction_experiment, seed_experiment, seed_table_csv, fraction_table_csv, FractionRow, MeanError, SeedRun,
    SeedSummary, SEED_TABLE_HEADER, FRACTION_TABLE_HEADER,
};
pub use stopping::{Decision, EarlyStopper};
pub use train::{
    auto_pos_weight, eval_tiles, evaluate_model, predict, predict_logits, run, train, EpochRecord, RunOutcome,
    StopReason, TrainReport,
};

use crate::error::Result;
use crate::tensor::ops::LossDiagnostics;
use crate::tensor::{Tape, Var};

/// Mean sigmoid cross-entropy over unmasked pixels, positives weighted by
/// `pos_weight`; label `-1` pixels get neither value nor gradient.
pub fn masked_weighted_ce_loss(tape: &mut Tape, logits: Var, labels: &[f32], pos_weight: f32) -> Result<(Var, LossDiagnostics)> {
    tape.masked_bce(logits, labels, pos_weight)
}
