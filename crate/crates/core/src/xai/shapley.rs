use serde::Serialize;

use super::{input_gradients, pixel_weights};
use crate::dataio::{FEATURE_NAMES, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::models::SegmentationModel;
use crate::rng::{self, Rng, Stream};
use crate::tensor::Tensor;

/// Largest player count accepted by [`exact_shapley`].
pub const MAX_EXACT_PLAYERS: usize = 16;

/// A cooperative game over `players()` players; coalitions are bitmasks.
pub trait Game {
    fn players(&self) -> usize;
    fn values(&mut self, coalitions: &[u32]) -> Result<Vec<f64>>;
}

/// A game given by a closure, handy for constructed examples.
pub struct FnGame<F: FnMut(u32) -> f64> {
    pub n: usize,
    pub f: F,
}

impl<F: FnMut(u32) -> f64> Game for FnGame<F> {
    fn players(&self) -> usize {
        self.n
    }

    fn values(&mut self, coalitions: &[u32]) -> Result<Vec<f64>> {
        Ok(coalitions.iter().map(|&s| (self.f)(s)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMethod {
    Exact,
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapleyResult {
    pub phi: Vec<f64>,
    pub v_empty: f64,
    pub v_full: f64,
    pub method: ShapMethod,
}

impl ShapleyResult {
    /// `|Σφ − (v(N) − v(∅))|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.v_full - self.v_empty)).abs()
    }
}

/// Shapley values by direct summation over all coalitions; each of the
/// `2^n` values is computed once.
pub fn exact_shapley(game: &mut impl Game) -> Result<ShapleyResult> {
    let n = game.players();
    if n == 0 || n > MAX_EXACT_PLAYERS {
        return Err(Error::invalid(format!(
            "exact Shapley needs 1..={MAX_EXACT_PLAYERS} players, got {n}; use gradient_shap for larger feature sets"
        )));
    }
    let all: Vec<u32> = (0..1u32 << n).collect();
    let mut v = Vec::with_capacity(all.len());
    for chunk in all.chunks(256) {
        let vals = game.values(chunk)?;
        if vals.len() != chunk.len() {
            return Err(Error::invalid("game returned the wrong number of values"));
        }
        v.extend(vals);
    }
    // |S|!(n-|S|-1)!/n! by coalition size
    let mut weight = vec![0.0f64; n];
    for (s, w) in weight.iter_mut().enumerate() {
        let mut x = 1.0 / n as f64;
        for k in 1..=s {
            x *= k as f64 / (n - k) as f64;
        }
        *w = x;
    }
    let mut phi = vec![0.0f64; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        let mut acc = 0.0;
        for s in 0..1u32 << n {
            if s & bit == 0 {
                acc += weight[s.count_ones() as usize] * (v[(s | bit) as usize] - v[s as usize]);
            }
        }
        *p = acc;
    }
    Ok(ShapleyResult { phi, v_empty: v[0], v_full: v[(1usize << n) - 1], method: ShapMethod::Exact })
}

/// How absent features are filled in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Zeros,
    /// Spatial mean of the channel in the explained sample.
    Mean,
}

/// `v(S)`: mean logit over a pixel set with channels outside `S` replaced by
/// the baseline.
pub struct ValueFunction<'a, M: SegmentationModel + ?Sized> {
    model: &'a M,
    input: Tensor,
    baseline: Vec<f32>,
    weights: Vec<f32>,
}

impl<'a, M: SegmentationModel + ?Sized> ValueFunction<'a, M> {
    /// `input` is one normalized `[12, H, W]` sample; `pixels` indexes the
    /// `H·W` output map.
    pub fn new(model: &'a M, input: &Tensor, baseline: Baseline, pixels: &[usize]) -> Result<Self> {
        let [c, h, w] = *input.shape() else {
            return Err(Error::dim("value_function", format!("expects [12, H, W], got {:?}", input.shape())));
        };
        if c != NUM_FEATURES {
            return Err(Error::dim("value_function", format!("{c} channels, expected {NUM_FEATURES}")));
        }
        let hw = h * w;
        let base = match baseline {
            Baseline::Zeros => vec![0.0; c * hw],
            Baseline::Mean => input
                .data()
                .chunks(hw)
                .flat_map(|ch| {
                    let m = (ch.iter().map(|&x| x as f64).sum::<f64>() / hw as f64) as f32;
                    std::iter::repeat(m).take(hw)
                })
                .collect(),
        };
        Ok(ValueFunction { model, input: input.clone(), baseline: base, weights: pixel_weights(hw, pixels)? })
    }

    fn masked(&self, s: u32) -> Vec<f32> {
        let hw = self.input.numel() / NUM_FEATURES;
        let mut out = self.input.data().to_vec();
        for c in 0..NUM_FEATURES {
            if s & (1 << c) == 0 {
                out[c * hw..(c + 1) * hw].copy_from_slice(&self.baseline[c * hw..(c + 1) * hw]);
            }
        }
        out
    }
}

impl<M: SegmentationModel + ?Sized> Game for ValueFunction<'_, M> {
    fn players(&self) -> usize {
        NUM_FEATURES
    }

    fn values(&mut self, coalitions: &[u32]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(coalitions.len());
        let shape = self.input.shape().to_vec();
        for chunk in coalitions.chunks(32) {
            let data: Vec<f32> = chunk.iter().flat_map(|&s| self.masked(s)).collect();
            let x = Tensor::new(&[chunk.len(), shape[0], shape[1], shape[2]], data)?;
            let logits = super::logits(self.model, x)?;
            let hw = self.weights.len();
            for l in logits.chunks(hw) {
                out.push(l.iter().zip(&self.weights).map(|(&z, &w)| z as f64 * w as f64).sum());
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientShapResult {
    /// Mean signed attribution total per feature (sum over pixels).
    pub totals: Vec<f64>,
    /// Mean absolute per-pixel attribution per feature.
    pub mean_abs: Vec<f64>,
    /// Feature names by descending `mean_abs`.
    pub ranking: Vec<(String, f64)>,
    pub draws: usize,
    pub method: ShapMethod,
}

/// Expected-gradients estimate of the mean logit over `pixels`: each draw
/// picks a background sample and `λ ~ U(0, 1)` and attributes
/// `(x − x_bg) ⊙ ∇F(x_bg + λ(x − x_bg))`.
pub fn gradient_shap<M: SegmentationModel + ?Sized>(
    model: &M,
    samples: &[Tensor],
    background: &[Tensor],
    pixels: &[usize],
    n_draws: usize,
    seed: u64,
) -> Result<GradientShapResult> {
    if n_draws < 1 {
        return Err(Error::invalid("gradient_shap needs n_draws >= 1"));
    }
    if background.is_empty() || samples.is_empty() {
        return Err(Error::invalid("gradient_shap needs at least one sample and one background sample"));
    }
    let shape = samples[0].shape().to_vec();
    if shape.len() != 3 || shape[0] != NUM_FEATURES {
        return Err(Error::dim("gradient_shap", format!("samples must be [12, H, W], got {shape:?}")));
    }
    for t in samples.iter().chain(background) {
        if t.shape() != shape.as_slice() {
            return Err(Error::dim("gradient_shap", format!("{:?} vs {shape:?}", t.shape())));
        }
    }
    let hw = shape[1] * shape[2];
    let weights = pixel_weights(hw, pixels)?;
    let mut totals = vec![0.0f64; NUM_FEATURES];
    let mut abs = vec![0.0f64; NUM_FEATURES];
    let mut rng = rng::stream(seed, Stream::Explain, 0);
    for x in samples {
        let draws: Vec<(usize, f32)> =
            (0..n_draws).map(|_| (rng::below(&mut rng, background.len()), rng.gen::<f32>())).collect();
        for chunk in draws.chunks(32) {
            let mut data = Vec::with_capacity(chunk.len() * x.numel());
            for &(b, lam) in chunk {
                let bg = background[b].data();
                data.extend(x.data().iter().zip(bg).map(|(&xi, &bi)| bi + lam * (xi - bi)));
            }
            let inputs = Tensor::new(&[chunk.len(), shape[0], shape[1], shape[2]], data)?;
            let (grads, _) = input_gradients(model, inputs, &weights)?;
            for (k, &(b, _)) in chunk.iter().enumerate() {
                let g = &grads[k * x.numel()..(k + 1) * x.numel()];
                let bg = background[b].data();
                for c in 0..NUM_FEATURES {
                    for i in c * hw..(c + 1) * hw {
                        let a = (x.data()[i] - bg[i]) as f64 * g[i] as f64;
                        totals[c] += a;
                        abs[c] += a.abs();
                    }
                }
            }
        }
    }
    let denom = (samples.len() * n_draws) as f64;
    totals.iter_mut().for_each(|t| *t /= denom);
    abs.iter_mut().for_each(|t| *t /= denom * hw as f64);
    let mut ranking: Vec<(String, f64)> = FEATURE_NAMES.iter().map(|s| s.to_string()).zip(abs.iter().copied()).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(GradientShapResult { totals, mean_abs: abs, ranking, draws: n_draws, method: ShapMethod::Gradient })
}
