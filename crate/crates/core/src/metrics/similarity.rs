use serde::Serialize;

use crate::dataio::{Container, FEATURE_NAMES, NUM_FEATURES};
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Single-pass (Welford) running moments for a pair of series.
#[derive(Default)]
struct PairMoments {
    n: f64,
    mx: f64,
    my: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl PairMoments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        let dx = x - self.mx;
        self.mx += dx / self.n;
        let dy = y - self.my;
        self.my += dy / self.n;
        self.sxx += dx * (x - self.mx);
        self.syy += dy * (y - self.my);
        self.sxy += dx * (y - self.my);
    }
}

/// Sample correlation of two equally long series.
pub fn pearson(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("pearson", format!("{} vs {} values", a.len(), b.len())));
    }
    let mut m = PairMoments::default();
    for (&x, &y) in a.iter().zip(b) {
        m.push(x as f64, y as f64);
    }
    if !(m.sxx > 0.0 && m.syy > 0.0) {
        return Err(Error::UndefinedMetric { metric: "pearson", detail: "a series has zero variance".into() });
    }
    Ok((m.sxy / (m.sxx.sqrt() * m.syy.sqrt())).clamp(-1.0, 1.0))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Mean local structural similarity over every full 7×7 Gaussian window.
pub fn ssim(a: &[f32], b: &[f32], h: usize, w: usize, data_range: f64) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::dim("ssim", format!("grids of {} and {} values for {h}x{w}", a.len(), b.len())));
    }
    if !(data_range > 0.0) {
        return Err(Error::invalid(format!("ssim data_range {data_range} must be positive")));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dim("ssim", format!("{h}x{w} grid smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let g = gaussian_window();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let (mut total, mut count) = (0.0f64, 0usize);
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let (mut mx, mut my) = (0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let k = g[dy] * g[dx];
                    let i = (y0 + dy) * w + x0 + dx;
                    mx += k * a[i] as f64;
                    my += k * b[i] as f64;
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let k = g[dy] * g[dx];
                    let i = (y0 + dy) * w + x0 + dx;
                    let (ex, ey) = (a[i] as f64 - mx, b[i] as f64 - my);
                    vx += k * ex * ex;
                    vy += k * ey * ey;
                    cxy += k * ex * ey;
                }
            }
            let num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += (num / den).min(1.0);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Symmetric `n×n` matrix with unit diagonal; `f` is evaluated for `i < j`.
pub fn pairwise_matrix(n: usize, mut f: impl FnMut(usize, usize) -> Result<f64>) -> Result<Vec<Vec<f64>>> {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = 1.0;
        for j in i + 1..n {
            let v = f(i, j)?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Pearson,
    Ssim,
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Measure::Pearson),
            "ssim" => Ok(Measure::Ssim),
            _ => Err(Error::invalid(format!("unknown measure {s:?}; expected pearson or ssim"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureMatrix {
    pub measure: Measure,
    pub values: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = FEATURE_NAMES.iter().position(|n| *n == a)?;
        let j = FEATURE_NAMES.iter().position(|n| *n == b)?;
        Some(self.values[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("feature,{}\n", FEATURE_NAMES.join(","));
        for (name, row) in FEATURE_NAMES.iter().zip(&self.values) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Feature-by-feature similarity over raw values. Pearson pools all pixels
/// of all samples; SSIM rescales each feature to `[0, 1]` by its raw extremes
/// and averages per-sample scores.
pub fn feature_matrix(data: &Container, measure: Measure) -> Result<FeatureMatrix> {
    if data.is_empty() {
        return Err(Error::invalid("feature matrix needs at least one sample"));
    }
    let pooled: Vec<Vec<f32>> =
        (0..NUM_FEATURES).map(|c| data.samples.iter().flat_map(|s| s.feature(c).iter().copied()).collect()).collect();
    let values = match measure {
        Measure::Pearson => pairwise_matrix(NUM_FEATURES, |i, j| pearson(&pooled[i], &pooled[j]))?,
        Measure::Ssim => {
            let scaled: Vec<Vec<f32>> = pooled
                .iter()
                .map(|v| {
                    let lo = v.iter().copied().fold(f32::INFINITY, f32::min) as f64;
                    let hi = v.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
                    let span = if hi > lo { hi - lo } else { 1.0 };
                    v.iter().map(|&x| ((x as f64 - lo) / span) as f32).collect()
                })
                .collect();
            let grid = data.h * data.w;
            pairwise_matrix(NUM_FEATURES, |i, j| {
                let mut sum = 0.0;
                for k in 0..data.len() {
                    let r = k * grid..(k + 1) * grid;
                    sum += ssim(&scaled[i][r.clone()], &scaled[j][r], data.h, data.w, 1.0)?;
                }
                Ok(sum / data.len() as f64)
            })?
        }
    };
    Ok(FeatureMatrix { measure, values })
}
