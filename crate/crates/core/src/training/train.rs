use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::{PosWeight, TrainConfig};
use super::stopping::EarlyStopper;
use crate::dataio::{crop_at, normalize, random_crop, to_batch, Container, Sample, CROP};
use crate::error::{Error, Result};
use crate::metrics::{self, Evaluation, MaskedPredictions};
use crate::models::{build, ForwardCtx, ModelGraph, ModelSpec};
use crate::rng::{self, Stream};
use crate::tensor::{Tape, Tensor};

const EVAL_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    TimeBudget,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
    pub val_auc_pr: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelSpec,
    pub seed: u64,
    pub config: TrainConfig,
    pub config_hash: String,
    pub stats_digest: String,
    pub train_digest: String,
    pub val_digest: String,
    pub train_ids: Vec<usize>,
    pub pos_weight: f64,
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_auc_pr: f64,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn diverged(&self) -> bool {
        self.stop_reason == StopReason::Diverged
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Unmasked negatives over unmasked positives.
pub fn auto_pos_weight(data: &Container) -> Result<f64> {
    let (mut pos, mut neg) = (0u64, 0u64);
    for s in &data.samples {
        for &l in &s.label {
            if l == 1.0 {
                pos += 1;
            } else if l == 0.0 {
                neg += 1;
            }
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(format!("training split has {pos} positive and {neg} negative pixels")));
    }
    Ok(neg as f64 / pos as f64)
}

fn normalized(data: &Container) -> Result<Vec<Sample>> {
    data.samples.iter().map(|s| normalize(s, &data.stats)).collect()
}

/// Non-overlapping crop offsets tiling a grid from its origin.
pub fn eval_tiles(h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for ty in 0..h / CROP {
        for tx in 0..w / CROP {
            out.push((ty * CROP, tx * CROP));
        }
    }
    out
}

/// Eval-mode logits for a normalized `[N, 12, 32, 32]` input.
pub fn predict_logits(model: &ModelGraph, inputs: Tensor) -> Result<Vec<f32>> {
    let mut tape = Tape::new();
    let x = tape.input(inputs, false);
    let f = model.forward(&mut tape, x, &mut ForwardCtx::eval())?;
    Ok(tape.value(f.logits).to_vec())
}

fn predict_normalized(model: &ModelGraph, samples: &[Sample]) -> Result<MaskedPredictions> {
    let mut crops = Vec::new();
    for s in samples {
        for (dy, dx) in eval_tiles(s.h, s.w) {
            crops.push(crop_at(s, CROP, dy, dx)?);
        }
    }
    if crops.is_empty() {
        return Err(Error::invalid(format!("samples smaller than the {CROP}x{CROP} model input")));
    }
    let (mut logits, mut labels) = (Vec::new(), Vec::new());
    for chunk in crops.chunks(EVAL_BATCH) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let b = to_batch(&refs)?;
        logits.extend(predict_logits(model, b.inputs)?);
        labels.extend(b.labels);
    }
    MaskedPredictions::from_logits(&logits, labels)
}

/// Predictions over every 32×32 tile of every sample, normalized with the
/// container's statistics.
pub fn predict(model: &ModelGraph, data: &Container) -> Result<MaskedPredictions> {
    predict_normalized(model, &normalized(data)?)
}

pub fn evaluate_model(model: &ModelGraph, data: &Container) -> Result<Evaluation> {
    metrics::evaluate(&predict(model, data)?)
}

/// Trains a fresh model with early stopping on validation AUC-PR and returns
/// it with its best-epoch weights restored. A non-finite loss ends training
/// with [`StopReason::Diverged`].
pub fn train(spec: &ModelSpec, train: &Container, val: &Container, cfg: &TrainConfig) -> Result<(ModelGraph, TrainReport)> {
    cfg.validate()?;
    if train.stats.digest() != val.stats.digest() {
        return Err(Error::DigestMismatch { expected: train.stats.digest(), found: val.stats.digest() });
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("train and validation splits must be non-empty"));
    }
    let pos_weight = match cfg.pos_weight {
        PosWeight::Auto => auto_pos_weight(train)?,
        PosWeight::Fixed(w) => w,
    };
    let mut model = build(spec, cfg.seed)?;
    let train_norm = normalized(train)?;
    let val_norm = normalized(val)?;
    let mut opt = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut stopper = EarlyStopper::new(cfg.patience, cfg.min_delta);
    let mut best_state = model.state_tensors();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let started = Instant::now();
    let mut slowest = 0.0f64;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let epoch_started = Instant::now();
        let order = rng::permutation(&mut rng::stream(cfg.seed, Stream::Shuffle, epoch as u64), train.len());
        let (mut loss_sum, mut loss_n) = (0.0f64, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let crops = chunk
                .iter()
                .map(|&i| {
                    let index = ((epoch as u64) << 32) | train.ids[i] as u64;
                    random_crop(&train_norm[i], CROP, cfg.seed, index).map(|(s, _)| s)
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Sample> = crops.iter().collect();
            let batch = to_batch(&refs)?;
            let mut tape = Tape::new();
            let x = tape.input(batch.inputs, false);
            let mut ctx = ForwardCtx::train(rng::mix(cfg.seed, ((epoch as u64) << 32) | bi as u64));
            let step = model.forward(&mut tape, x, &mut ctx).and_then(|f| {
                let (loss, diag) = tape.masked_bce(f.logits, &batch.labels, pos_weight as f32)?;
                Ok((f, loss, diag))
            });
            let (f, loss, diag) = match step {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => {
                    stop_reason = StopReason::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if diag.all_masked {
                continue;
            }
            let value = tape.value(loss)[0] as f64;
            let grads = tape.backward(loss)?;
            let grads: Vec<Vec<f32>> =
                f.params.iter().zip(model.params()).map(|(v, p)| grads.get_or_zeros(*v, p.tensor.numel())).collect();
            if !value.is_finite() || grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
                stop_reason = StopReason::Diverged;
                break 'epochs;
            }
            opt.step(model.params_mut(), &grads)?;
            model.apply_bn_updates(&mut ctx);
            loss_sum += value * chunk.len() as f64;
            loss_n += chunk.len();
        }
        let preds = match predict_normalized(&model, &val_norm) {
            Ok(p) => p,
            Err(Error::NonFinite { .. }) => {
                stop_reason = StopReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let val_auc_pr = metrics::pr_auc(&preds)?;
        let val_auc = metrics::roc_auc(&preds).ok();
        let d = stopper.observe(epoch, val_auc_pr);
        if d.improved {
            best_state = model.state_tensors();
        }
        let train_loss = if loss_n == 0 { 0.0 } else { loss_sum / loss_n as f64 };
        epochs.push(EpochRecord { epoch, train_loss, val_auc, val_auc_pr, improved: d.improved });
        if d.stop {
            stop_reason = StopReason::Patience;
            break;
        }
        slowest = slowest.max(epoch_started.elapsed().as_secs_f64());
        if cfg.time_budget_secs.is_some_and(|b| started.elapsed().as_secs_f64() + slowest > b) && epoch < cfg.max_epochs {
            stop_reason = StopReason::TimeBudget;
            break;
        }
    }
    model.load_state(&best_state)?;
    let report = TrainReport {
        model: spec.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        stats_digest: train.stats.digest(),
        train_digest: train.split_digest(),
        val_digest: val.split_digest(),
        train_ids: train.ids.clone(),
        pos_weight,
        stopped_epoch: epochs.len(),
        best_epoch: stopper.best_epoch(),
        best_val_auc_pr: stopper.best().unwrap_or(0.0),
        epochs,
        stop_reason,
    };
    Ok((model, report))
}

/// A trained model with its report and test-split evaluation.
pub struct RunOutcome {
    pub model: ModelGraph,
    pub report: TrainReport,
    pub test: Option<Evaluation>,
    pub test_digest: String,
}

/// Splits `data` with `cfg.split_seed`, takes the nested training fraction,
/// trains and evaluates on the test split.
pub fn run(spec: &ModelSpec, data: &Container, cfg: &TrainConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let (train_all, val, test) = data.split(cfg.split_ratios, cfg.split_seed)?;
    let train_set = train_all.fraction(cfg.fraction, cfg.split_seed)?;
    let (model, report) = train(spec, &train_set, &val, cfg)?;
    let test_eval = if report.diverged() { None } else { Some(evaluate_model(&model, &test)?) };
    Ok(RunOutcome { model, report, test: test_eval, test_digest: test.split_digest() })
}
