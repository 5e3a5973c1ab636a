use super::{FeatureStats, Sample, NUM_FEATURES, PREVIOUS_FIRE_MASK};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Model input side after cropping.
pub const CROP: usize = 32;

/// Clips each feature to `[min, max]` and standardizes it; the fire-mask
/// channel and the label pass through unchanged.
pub fn normalize(sample: &Sample, stats: &FeatureStats) -> Result<Sample> {
    stats.validate()?;
    let mut out = sample.clone();
    for c in 0..NUM_FEATURES {
        if c == PREVIOUS_FIRE_MASK {
            continue;
        }
        let s = stats.0[c];
        let (lo, hi, mean, std) = (s.min as f64, s.max as f64, s.mean as f64, s.std as f64);
        for v in out.feature_mut(c) {
            *v = (((*v as f64).clamp(lo, hi) - mean) / std) as f32;
        }
    }
    Ok(out)
}

/// `size×size` window at offset `(dy, dx)` of every grid.
pub fn crop_at(sample: &Sample, size: usize, dy: usize, dx: usize) -> Result<Sample> {
    if size == 0 || dy + size > sample.h || dx + size > sample.w {
        return Err(Error::invalid(format!(
            "crop {size}x{size} at ({dy}, {dx}) does not fit a {}x{} sample",
            sample.h, sample.w
        )));
    }
    let grab = |grid: &[f32]| -> Vec<f32> {
        (0..size).flat_map(|y| grid[(dy + y) * sample.w + dx..][..size].iter().copied()).collect()
    };
    let features = (0..NUM_FEATURES).flat_map(|c| grab(sample.feature(c))).collect();
    Sample::new(size, size, features, grab(&sample.label))
}

/// Crops at an offset drawn from the `(seed, index)` crop stream; returns the
/// offset with the crop.
pub fn random_crop(sample: &Sample, size: usize, seed: u64, index: u64) -> Result<(Sample, (usize, usize))> {
    if sample.h < size || sample.w < size {
        return Err(Error::invalid(format!("source {}x{} smaller than crop {size}", sample.h, sample.w)));
    }
    let mut rng = rng::stream(seed, Stream::Crop, index);
    let dy = rng::below(&mut rng, sample.h - size + 1);
    let dx = rng::below(&mut rng, sample.w - size + 1);
    Ok((crop_at(sample, size, dy, dx)?, (dy, dx)))
}

/// Model-ready stack of same-size samples.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[N, 12, H, W]`.
    pub inputs: Tensor,
    /// `N·H·W` labels in `{-1, 0, 1}`.
    pub labels: Vec<f32>,
}

pub fn to_batch(samples: &[&Sample]) -> Result<Batch> {
    let first = samples.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let (h, w) = (first.h, first.w);
    let mut inputs = Vec::with_capacity(samples.len() * NUM_FEATURES * h * w);
    let mut labels = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if s.h != h || s.w != w {
            return Err(Error::invalid(format!("batch mixes {h}x{w} and {}x{} samples", s.h, s.w)));
        }
        inputs.extend_from_slice(&s.features);
        labels.extend_from_slice(&s.label);
    }
    Ok(Batch { inputs: Tensor::new(&[samples.len(), NUM_FEATURES, h, w], inputs)?, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::FeatureStat;

    fn stats() -> FeatureStats {
        FeatureStats([FeatureStat { min: 0.0, max: 10.0, mean: 4.0, std: 2.0 }; NUM_FEATURES])
    }

    fn constant(v: f32, side: usize) -> Sample {
        Sample::new(side, side, vec![v; NUM_FEATURES * side * side], vec![0.0; side * side]).unwrap()
    }

    #[test]
    fn normalize_worked_values() {
        let out = normalize(&constant(5.0, 1), &stats()).unwrap();
        assert_eq!(out.feature(0), &[0.5]);
        assert_eq!(out.feature(PREVIOUS_FIRE_MASK), &[5.0]);
        let out = normalize(&constant(50.0, 1), &stats()).unwrap();
        assert_eq!(out.feature(3), &[3.0]);
    }

    #[test]
    fn full_size_crop_is_identity() {
        let mut s = constant(0.0, CROP);
        for (i, v) in s.features.iter_mut().enumerate() {
            *v = i as f32;
        }
        let (c, off) = random_crop(&s, CROP, 1, 0).unwrap();
        assert_eq!(off, (0, 0));
        assert_eq!(c, s);
        assert!(random_crop(&constant(0.0, 16), CROP, 1, 0).is_err());
    }
}
