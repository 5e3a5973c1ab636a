use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class weight for positive pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosWeight {
    /// Unmasked negatives over unmasked positives in the training split.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Smallest gain in validation AUC-PR that counts as an improvement.
    pub min_delta: f64,
    pub pos_weight: PosWeight,
    /// Model seed: initialization, shuffling, crops and dropout.
    pub seed: u64,
    /// Seed of the train/val/test partition, fixed across model seeds.
    pub split_seed: u64,
    pub split_ratios: [f64; 3],
    pub fraction: f64,
    /// Optional wall-clock cap in seconds. No epoch starts unless the slowest
    /// epoch so far would still finish inside it.
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 100,
            patience: 30,
            max_epochs: 200,
            min_delta: 1e-5,
            pos_weight: PosWeight::Auto,
            seed: 0,
            split_seed: 0,
            split_ratios: [0.8, 0.1, 0.1],
            fraction: 1.0,
            time_budget_secs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} outside [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps {} must be > 0", self.adam_eps));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch_size, patience and max_epochs must be >= 1".into());
        }
        if !(self.min_delta >= 0.0) {
            return bad(format!("min_delta {} must be >= 0", self.min_delta));
        }
        if let PosWeight::Fixed(w) = self.pos_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("pos_weight {w} must be finite and > 0"));
            }
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return bad(format!("fraction {} outside (0, 1]", self.fraction));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: TrainConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        crate::digest::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_json() {
        let c = TrainConfig::default();
        assert_eq!((c.learning_rate, c.beta1, c.beta2, c.adam_eps), (1e-4, 0.9, 0.999, 1e-8));
        assert_eq!((c.batch_size, c.patience), (100, 30));
        assert_eq!(TrainConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = TrainConfig::from_json(r#"{"batch_size": 8, "pos_weight": {"fixed": 3.0}}"#).unwrap();
        assert_eq!(partial.batch_size, 8);
        assert_eq!(partial.pos_weight, PosWeight::Fixed(3.0));
        assert!(TrainConfig::from_json(r#"{"beta1": 1.0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"patience": 0}"#).is_err());
    }
}
