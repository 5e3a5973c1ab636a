use super::{Container, SplitTag};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Training-set proportions of the fraction experiment.
pub const FRACTIONS: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 1.00];

/// Positions of each split within the source container.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIds {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded permutation of `0..n` cut into train/val/test by `ratios`.
pub fn split(n: usize, ratios: [f64; 3], seed: u64) -> Result<SplitIds> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let perm = rng::permutation(&mut rng::stream(seed, Stream::Split, 0), n);
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let ids = SplitIds {
        train: perm[..n_train].to_vec(),
        val: perm[n_train..n_train + n_val].to_vec(),
        test: perm[n_train + n_val..].to_vec(),
    };
    for (name, part) in [("train", &ids.train), ("val", &ids.val), ("test", &ids.test)] {
        if part.is_empty() {
            return Err(Error::invalid(format!("{name} split is empty for {n} samples with ratios {ratios:?}")));
        }
    }
    Ok(ids)
}

/// The first `round(p·n)` entries of one seeded permutation of `train`, in
/// their original order. Prefixes of a single permutation nest, so
/// `fraction(p) ⊆ fraction(q)` whenever `p < q`.
pub fn fraction(train: &[usize], p: f64, seed: u64) -> Result<Vec<usize>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("fraction {p} outside (0, 1]")));
    }
    let n = train.len();
    let k = (p * n as f64).round() as usize;
    if k == 0 {
        return Err(Error::invalid(format!("fraction {p} of {n} training samples is empty")));
    }
    let perm = rng::permutation(&mut rng::stream(seed, Stream::Split, 1), n);
    let mut keep: Vec<usize> = perm[..k].to_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| train[i]).collect())
}

impl Container {
    /// Splits into tagged train/val/test subsets.
    pub fn split(&self, ratios: [f64; 3], seed: u64) -> Result<(Container, Container, Container)> {
        let ids = split(self.len(), ratios, seed)?;
        Ok((
            self.subset(&ids.train, Some(SplitTag::Train)),
            self.subset(&ids.val, Some(SplitTag::Val)),
            self.subset(&ids.test, Some(SplitTag::Test)),
        ))
    }

    /// Nested training fraction of this (train) container.
    pub fn fraction(&self, p: f64, seed: u64) -> Result<Container> {
        let positions: Vec<usize> = (0..self.len()).collect();
        let keep = fraction(&positions, p, seed)?;
        Ok(self.subset(&keep, self.split))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_ratios() {
        let s = split(100, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(split(3, [0.8, 0.1, 0.1], 3).is_err());
        assert!(split(100, [0.8, 0.1, 0.2], 3).is_err());
    }

    #[test]
    fn full_fraction_is_identity() {
        let train = vec![9, 4, 7, 1];
        assert_eq!(fraction(&train, 1.0, 5).unwrap(), train);
        assert!(fraction(&train, 0.0, 5).is_err());
        assert!(fraction(&train, 0.1, 5).is_err());
    }
}
