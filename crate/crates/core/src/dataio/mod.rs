//! Samples, feature statistics, the `WFD1` container and preprocessing.

mod container;
mod split;
mod synth;
mod transform;

pub use container::{Container, SplitTag, WFD1_MAGIC, WFD1_VERSION};
pub use split::{fraction, split, SplitIds, FRACTIONS};
pub use synth::{synthesize, SynthConfig};
pub use transform::{crop_at, normalize, random_crop, to_batch, Batch, CROP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 12;
pub const CHANNELS: usize = NUM_FEATURES + 1;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "Elevation",
    "WindDirection",
    "WindVelocity",
    "MinTemp",
    "MaxTemp",
    "Humidity",
    "Precipitation",
    "Drought",
    "Vegetation",
    "PopulationDensity",
    "ERC",
    "PreviousFireMask",
];

pub const ELEVATION: usize = 0;
pub const DROUGHT: usize = 7;
pub const VEGETATION: usize = 8;
pub const PREVIOUS_FIRE_MASK: usize = 11;

/// Label value for pixels excluded from loss and metrics.
pub const UNCERTAIN: f32 = -1.0;

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| n.eq_ignore_ascii_case(name))
}

/// Digest of the fixed channel order, so containers from other tools can be
/// checked for layout compatibility.
pub fn channel_order_digest() -> String {
    crate::digest::sha256_hex(FEATURE_NAMES.join(",").as_bytes())
}

/// One example: 12 feature grids and a label grid, all `h×w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub h: usize,
    pub w: usize,
    /// Channel-major `[12][h][w]`.
    pub features: Vec<f32>,
    pub label: Vec<f32>,
}

impl Sample {
    pub fn new(h: usize, w: usize, features: Vec<f32>, label: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::invalid("sample grids must be non-empty"));
        }
        if features.len() != NUM_FEATURES * h * w || label.len() != h * w {
            return Err(Error::invalid(format!(
                "sample {h}x{w} needs {} feature and {} label values, got {} and {}",
                NUM_FEATURES * h * w,
                h * w,
                features.len(),
                label.len()
            )));
        }
        if let Some(v) = label.iter().find(|&&v| v != -1.0 && v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!("label value {v} is not in {{-1, 0, 1}}")));
        }
        Ok(Sample { h, w, features, label })
    }

    pub fn feature(&self, c: usize) -> &[f32] {
        let n = self.h * self.w;
        &self.features[c * n..(c + 1) * n]
    }

    pub fn feature_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.h * self.w;
        &mut self.features[c * n..(c + 1) * n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub min: f32,
    pub max: f32,
    pub mean: f32,
    pub std: f32,
}

/// Per-feature statistics used for clipping and standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats(pub [FeatureStat; NUM_FEATURES]);

#[derive(Debug, Deserialize)]
struct StatRow {
    feature: String,
    min: f32,
    max: f32,
    mean: f32,
    std: f32,
}

impl FeatureStats {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in FEATURE_NAMES.iter().zip(&self.0) {
            let finite = [s.min, s.max, s.mean, s.std].iter().all(|v| v.is_finite());
            if !finite || !(s.std > 0.0) || !(s.min <= s.mean && s.mean <= s.max) {
                return Err(Error::invalid(format!(
                    "stats for {name} must be finite with std > 0 and min <= mean <= max, got {s:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NUM_FEATURES * 16);
        for s in &self.0 {
            crate::codec::put_f32s(&mut out, &[s.min, s.max, s.mean, s.std]);
        }
        out
    }

    /// Content digest of the stats block as stored in a container.
    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(&self.to_bytes())
    }

    /// Reads `feature,min,max,mean,std` rows; every feature must appear once.
    pub fn from_csv_reader(r: impl std::io::Read) -> Result<Self> {
        let mut rows: [Option<FeatureStat>; NUM_FEATURES] = [None; NUM_FEATURES];
        for row in csv::Reader::from_reader(r).deserialize::<StatRow>() {
            let row = row?;
            let i = feature_index(&row.feature)
                .ok_or_else(|| Error::invalid(format!("unknown feature {:?} in stats", row.feature)))?;
            if rows[i].is_some() {
                return Err(Error::invalid(format!("feature {} listed twice in stats", FEATURE_NAMES[i])));
            }
            rows[i] = Some(FeatureStat { min: row.min, max: row.max, mean: row.mean, std: row.std });
        }
        let mut out = [FeatureStat { min: 0.0, max: 0.0, mean: 0.0, std: 0.0 }; NUM_FEATURES];
        for (i, r) in rows.iter().enumerate() {
            out[i] = r.ok_or_else(|| Error::invalid(format!("stats missing feature {}", FEATURE_NAMES[i])))?;
        }
        let stats = FeatureStats(out);
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,min,max,mean,std\n");
        for (name, f) in FEATURE_NAMES.iter().zip(&self.0) {
            s.push_str(&format!("{name},{},{},{},{}\n", f.min, f.max, f.mean, f.std));
        }
        s
    }

    /// Empirical statistics over all samples; the fire-mask channel gets
    /// fixed categorical bounds since it is never standardized.
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("cannot compute stats of zero samples"));
        }
        let mut out = [FeatureStat { min: -1.0, max: 1.0, mean: 0.0, std: 1.0 }; NUM_FEATURES];
        for (c, slot) in out.iter_mut().enumerate().take(PREVIOUS_FIRE_MASK) {
            let (mut lo, mut hi, mut sum, mut n) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f64, 0usize);
            for s in samples {
                for &v in s.feature(c) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                    sum += v as f64;
                    n += 1;
                }
            }
            let mean = sum / n as f64;
            let var = samples
                .iter()
                .flat_map(|s| s.feature(c).iter())
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let std = if var > 0.0 { var.sqrt() as f32 } else { 1.0 };
            *slot = FeatureStat { min: lo, max: hi, mean: (mean as f32).clamp(lo, hi), std };
        }
        let stats = FeatureStats(out);
        stats.validate()?;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_csv_round_trip() {
        let mut arr = [FeatureStat { min: 0.0, max: 10.0, mean: 4.0, std: 2.0 }; NUM_FEATURES];
        arr[3].mean = 3.5;
        let stats = FeatureStats(arr);
        let back = FeatureStats::from_csv_reader(stats.to_csv().as_bytes()).unwrap();
        assert_eq!(back, stats);
    }

    #[test]
    fn stats_csv_rejects_missing_and_invalid() {
        assert!(FeatureStats::from_csv_reader("feature,min,max,mean,std\nElevation,0,1,0.5,1\n".as_bytes()).is_err());
        let mut arr = [FeatureStat { min: 0.0, max: 10.0, mean: 4.0, std: 2.0 }; NUM_FEATURES];
        arr[0].std = 0.0;
        assert!(FeatureStats(arr).validate().is_err());
    }

    #[test]
    fn sample_rejects_bad_labels() {
        assert!(Sample::new(1, 1, vec![0.0; 12], vec![0.5]).is_err());
        assert!(Sample::new(1, 1, vec![0.0; 12], vec![-1.0]).is_ok());
    }
}
