use std::path::Path;

use super::{FeatureStat, FeatureStats, Sample, CHANNELS, NUM_FEATURES};
use crate::codec::{put_f32s, put_u32, ByteReader};
use crate::error::{Error, Result};

pub const WFD1_MAGIC: &[u8; 4] = b"WFD1";
pub const WFD1_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Samples sharing one grid size and one set of normalization statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub h: usize,
    pub w: usize,
    pub stats: FeatureStats,
    pub samples: Vec<Sample>,
    /// Set on subsets produced by splitting; not stored on disk.
    pub split: Option<SplitTag>,
    /// Index of each sample in the container it was loaded from.
    pub ids: Vec<usize>,
}

impl Container {
    pub fn new(h: usize, w: usize, stats: FeatureStats, samples: Vec<Sample>) -> Result<Self> {
        stats.validate()?;
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.h != h || s.w != w) {
            return Err(Error::invalid(format!("sample {i} is {}x{}, container is {h}x{w}", s.h, s.w)));
        }
        let ids = (0..samples.len()).collect();
        Ok(Container { h, w, stats, samples, split: None, ids })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Subset by positions in this container, keeping original ids.
    pub fn subset(&self, positions: &[usize], tag: Option<SplitTag>) -> Container {
        Container {
            h: self.h,
            w: self.w,
            stats: self.stats.clone(),
            samples: positions.iter().map(|&i| self.samples[i].clone()).collect(),
            split: tag,
            ids: positions.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let grid = self.h * self.w;
        let mut out = Vec::with_capacity(24 + NUM_FEATURES * 16 + self.len() * CHANNELS * grid * 4);
        out.extend_from_slice(WFD1_MAGIC);
        for v in [WFD1_VERSION, self.len() as u32, self.h as u32, self.w as u32, CHANNELS as u32] {
            put_u32(&mut out, v);
        }
        out.extend_from_slice(&self.stats.to_bytes());
        for s in &self.samples {
            put_f32s(&mut out, &s.features);
            put_f32s(&mut out, &s.label);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(WFD1_MAGIC)?;
        let field = |r: &mut ByteReader, what: &str, check: &dyn Fn(u32) -> bool| -> Result<u32> {
            let at = r.offset();
            let v = r.u32(what)?;
            if !check(v) {
                return Err(Error::format(at, format!("invalid {what} {v}")));
            }
            Ok(v)
        };
        field(&mut r, "version", &|v| v == WFD1_VERSION)?;
        let count = field(&mut r, "count", &|_| true)? as usize;
        let h = field(&mut r, "height", &|v| v > 0 && v <= 1 << 14)? as usize;
        let w = field(&mut r, "width", &|v| v > 0 && v <= 1 << 14)? as usize;
        field(&mut r, "channel count", &|v| v as usize == CHANNELS)?;
        let stats_at = r.offset();
        let raw = r.f32s(NUM_FEATURES * 4, "stats block")?;
        let mut arr = [FeatureStat { min: 0.0, max: 0.0, mean: 0.0, std: 0.0 }; NUM_FEATURES];
        for (s, q) in arr.iter_mut().zip(raw.chunks_exact(4)) {
            *s = FeatureStat { min: q[0], max: q[1], mean: q[2], std: q[3] };
        }
        let stats = FeatureStats(arr);
        stats.validate().map_err(|e| Error::format(stats_at, e.to_string()))?;
        let grid = h * w;
        let expected = (count as u128) * (CHANNELS * grid * 4) as u128;
        if expected != r.remaining() as u128 {
            return Err(Error::format(
                r.offset(),
                format!("{count} samples of {h}x{w} need {expected} payload bytes, found {}", r.remaining()),
            ));
        }
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let features = r.f32s(NUM_FEATURES * grid, "features")?;
            let at = r.offset();
            let label = r.f32s(grid, "label")?;
            samples.push(Sample::new(h, w, features, label).map_err(|e| Error::format(at, e.to_string()))?);
        }
        r.finish()?;
        Container::new(h, w, stats, samples)
    }

    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(&self.encode())
    }

    /// Digest over sample ids and content, used to prove two runs saw the
    /// same split.
    pub fn split_digest(&self) -> String {
        let mut bytes = Vec::new();
        for (id, s) in self.ids.iter().zip(&self.samples) {
            put_u32(&mut bytes, *id as u32);
            put_f32s(&mut bytes, &s.features);
            put_f32s(&mut bytes, &s.label);
        }
        crate::digest::sha256_hex(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsio::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&crate::fsio::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> FeatureStats {
        FeatureStats([FeatureStat { min: -1.0, max: 1.0, mean: 0.0, std: 0.5 }; NUM_FEATURES])
    }

    fn tiny(count: usize) -> Container {
        let samples = (0..count)
            .map(|i| {
                let f = (0..NUM_FEATURES * 4).map(|k| (i * 100 + k) as f32 * 0.25).collect();
                Sample::new(2, 2, f, vec![0.0, 1.0, -1.0, 0.0]).unwrap()
            })
            .collect();
        Container::new(2, 2, stats(), samples).unwrap()
    }

    #[test]
    fn round_trip_including_empty() {
        for n in [0, 3] {
            let c = tiny(n);
            let bytes = c.encode();
            let back = Container::decode(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.encode(), bytes);
        }
    }

    #[test]
    fn header_errors_carry_offsets() {
        let mut b = tiny(1).encode();
        b[4] = 9;
        assert!(matches!(Container::decode(&b), Err(Error::Format { offset: 4, .. })));
        let b = tiny(2).encode();
        assert!(matches!(Container::decode(&b[..b.len() - 1]), Err(Error::Format { .. })));
    }
}
