use serde::Serialize;

/// A named single-channel float map rendered as an 8-bit graymap.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Heatmap {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    name: &'a str,
    width: usize,
    height: usize,
    min: f32,
    max: f32,
}

impl Heatmap {
    pub fn range(&self) -> (f32, f32) {
        let lo = self.values.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        if self.values.is_empty() {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// Binary `P5` image after min-max scaling to `0..=255`; a constant map
    /// renders black.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (lo, hi) = self.range();
        let span = (hi - lo) as f64;
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|&v| {
            if span > 0.0 {
                (((v - lo) as f64 / span) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        }));
        out
    }

    /// JSON with the raw float range behind the 8-bit scaling.
    pub fn sidecar_json(&self) -> String {
        let (min, max) = self.range();
        let s = Sidecar { name: &self.name, width: self.width, height: self.height, min, max };
        serde_json::to_string_pretty(&s).expect("sidecar serializes")
    }
}
