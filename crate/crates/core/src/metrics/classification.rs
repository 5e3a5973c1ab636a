use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-pixel probabilities with ternary labels; `-1` pixels are ignored.
#[derive(Clone, Debug)]
pub struct MaskedPredictions {
    probs: Vec<f32>,
    labels: Vec<f32>,
}

impl MaskedPredictions {
    pub fn new(probs: Vec<f32>, labels: Vec<f32>) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(Error::dim("masked_predictions", format!("{} scores vs {} labels", probs.len(), labels.len())));
        }
        for (i, (&p, &l)) in probs.iter().zip(&labels).enumerate() {
            if l != -1.0 && l != 0.0 && l != 1.0 {
                return Err(Error::invalid(format!("label {l} at pixel {i} is not in {{-1, 0, 1}}")));
            }
            if l != -1.0 && !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("probability {p} at pixel {i} outside [0, 1]")));
            }
        }
        Ok(MaskedPredictions { probs, labels })
    }

    /// Applies a sigmoid to raw logits.
    pub fn from_logits(logits: &[f32], labels: Vec<f32>) -> Result<Self> {
        let probs = logits.iter().map(|&z| (1.0 / (1.0 + (-(z as f64)).exp())) as f32).collect();
        Self::new(probs, labels)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn labels(&self) -> &[f32] {
        &self.labels
    }

    /// `(score, is_positive)` for every unmasked pixel, in input order.
    pub fn unmasked(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.probs.iter().zip(&self.labels).filter(|(_, &l)| l != -1.0).map(|(&p, &l)| (p as f64, l == 1.0))
    }

    pub fn extend(&mut self, other: &MaskedPredictions) {
        self.probs.extend_from_slice(&other.probs);
        self.labels.extend_from_slice(&other.labels);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// No unmasked pixels were counted.
    pub fn is_degenerate(&self) -> bool {
        self.total() == 0
    }

    pub fn to_csv(&self) -> String {
        format!(
            "actual,predicted_fire,predicted_no_fire\nfire,{},{}\nno_fire,{},{}\n",
            self.tp, self.fn_, self.fp, self.tn
        )
    }
}

/// A ratio with a flag for a zero denominator (value reported as 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rate {
    pub value: f64,
    pub degenerate: bool,
}

fn rate(num: u64, den: u64) -> Rate {
    if den == 0 {
        Rate { value: 0.0, degenerate: true }
    } else {
        Rate { value: num as f64 / den as f64, degenerate: false }
    }
}

/// Counts at `threshold`; a pixel is predicted positive when `p > threshold`.
pub fn confusion(preds: &MaskedPredictions, threshold: f64) -> Result<ConfusionCounts> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    let mut c = ConfusionCounts::default();
    for (p, pos) in preds.unmasked() {
        match (p > threshold, pos) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn precision(c: &ConfusionCounts) -> Rate {
    rate(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> Rate {
    rate(c.tp, c.tp + c.fn_)
}

/// Mann-Whitney statistic: the fraction of (positive, negative) pairs in
/// which the positive scores higher, ties counting one half.
pub fn roc_auc_scores(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut wins2) = (0u64, 0u128);
    let (mut n_pos, mut n_neg) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if positive[idx[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        // doubled to keep half-ties integral
        wins2 += (2 * p as u128) * neg_below as u128 + (p as u128) * (n as u128);
        neg_below += n;
        n_pos += p;
        n_neg += n;
        i = j;
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric {
            metric: "roc_auc",
            detail: format!("needs both classes, got {n_pos} positive and {n_neg} negative pixels"),
        });
    }
    Ok(wins2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Step-wise average precision over a descending ranking; equal scores keep
/// their input order.
pub fn average_precision_scores(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric { metric: "pr_auc", detail: "no positive pixels".into() });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut sum) = (0u64, 0.0f64);
    for (rank, &i) in idx.iter().enumerate() {
        if positive[i] {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

fn split(preds: &MaskedPredictions) -> (Vec<f64>, Vec<bool>) {
    preds.unmasked().unzip()
}

pub fn roc_auc(preds: &MaskedPredictions) -> Result<f64> {
    let (s, p) = split(preds);
    roc_auc_scores(&s, &p)
}

pub fn pr_auc(preds: &MaskedPredictions) -> Result<f64> {
    let (s, p) = split(preds);
    average_precision_scores(&s, &p)
}

/// The four headline test metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub auc: f64,
    pub auc_pr: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub summary: Summary,
    pub confusion: ConfusionCounts,
    pub threshold: f64,
    pub unmasked_pixels: u64,
    pub positive_pixels: u64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
}

pub fn evaluate(preds: &MaskedPredictions) -> Result<Evaluation> {
    let c = confusion(preds, 0.5)?;
    let (p, r) = (precision(&c), recall(&c));
    Ok(Evaluation {
        summary: Summary { auc: roc_auc(preds)?, auc_pr: pr_auc(preds)?, precision: p.value, recall: r.value },
        confusion: c,
        threshold: 0.5,
        unmasked_pixels: c.total(),
        positive_pixels: c.tp + c.fn_,
        precision_degenerate: p.degenerate,
        recall_degenerate: r.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(p: &[f32], l: &[f32]) -> MaskedPredictions {
        MaskedPredictions::new(p.to_vec(), l.to_vec()).unwrap()
    }

    #[test]
    fn confusion_basics() {
        let c = confusion(&mp(&[0.9, 0.2], &[1.0, 0.0]), 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(precision(&c).value, 1.0);
        assert_eq!(recall(&c).value, 1.0);
        let e = confusion(&mp(&[0.9, 0.2], &[-1.0, -1.0]), 0.5).unwrap();
        assert!(e.is_degenerate());
        assert!(precision(&e).degenerate && recall(&e).degenerate);
        assert!(confusion(&mp(&[0.5], &[1.0]), 1.0).is_err());
    }

    #[test]
    fn roc_worked_example() {
        assert_eq!(roc_auc(&mp(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0])).unwrap(), 0.75);
        assert_eq!(roc_auc(&mp(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(roc_auc(&mp(&[0.3; 4], &[0.0, 1.0, 0.0, 1.0])).unwrap(), 0.5);
        assert!(matches!(roc_auc(&mp(&[0.3, 0.4], &[1.0, 1.0])), Err(Error::UndefinedMetric { .. })));
    }

    #[test]
    fn ap_worked_example() {
        let v = pr_auc(&mp(&[0.8, 0.4, 0.35, 0.1], &[1.0, 0.0, 1.0, 0.0])).unwrap();
        assert!((v - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(pr_auc(&mp(&[0.9, 0.8, 0.1], &[1.0, 1.0, 0.0])).unwrap(), 1.0);
        assert!(pr_auc(&mp(&[0.9], &[0.0])).is_err());
    }

    #[test]
    fn masked_pixels_may_hold_anything() {
        assert!(MaskedPredictions::new(vec![7.0], vec![-1.0]).is_ok());
        assert!(MaskedPredictions::new(vec![7.0], vec![0.0]).is_err());
        assert!(MaskedPredictions::new(vec![0.5], vec![2.0]).is_err());
    }
}
