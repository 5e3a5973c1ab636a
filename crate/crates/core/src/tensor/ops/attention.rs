//! Windowed multi-head self-attention with optional cyclic shift.

use crate::error::{Error, Result};
use crate::tensor::tape::{accumulate, Node, Op};
use crate::tensor::{Tape, Var};

/// Logit offset for token pairs that the cyclic shift made adjacent.
pub const WINDOW_MASK_VALUE: f32 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionLayout {
    pub heads: usize,
    pub window: usize,
    pub shift: usize,
}

pub(crate) struct AttentionSaved {
    pub qkv: Var,
    pub heads: usize,
    pub window: usize,
    pub dim: usize,
    /// Token index for each window slot, windows in row-major order.
    pub tokens: Vec<u32>,
    pub probs: Vec<f32>,
}

impl AttentionLayout {
    /// Checks the layout against a square grid of `side` and `dim` features.
    pub fn validate(&self, side: usize, dim: usize) -> Result<()> {
        if self.heads == 0 || dim % self.heads != 0 {
            return Err(Error::dim("window_attention", format!("dim {dim} (axis 2) not divisible by {} heads", self.heads)));
        }
        if self.window == 0 || side % self.window != 0 {
            return Err(Error::dim(
                "window_attention",
                format!("grid side {side} (axis 1) not divisible by window {}", self.window),
            ));
        }
        if self.shift != 0 && self.shift * 2 != self.window {
            return Err(Error::invalid(format!("shift must be 0 or window/2, got {}", self.shift)));
        }
        Ok(())
    }
}

/// Region label of a coordinate on the shifted grid; pairs in different
/// regions were not neighbours before the roll.
fn region(c: usize, side: usize, window: usize, shift: usize) -> usize {
    if shift == 0 || c < side - window {
        0
    } else if c < side - shift {
        1
    } else {
        2
    }
}

/// Window slot → token map, plus each slot's region label.
fn window_tokens(side: usize, window: usize, shift: usize) -> (Vec<u32>, Vec<u8>) {
    let per = side / window;
    let mut tokens = Vec::with_capacity(side * side);
    let mut labels = Vec::with_capacity(side * side);
    for wy in 0..per {
        for wx in 0..per {
            for i in 0..window {
                for j in 0..window {
                    let (sy, sx) = (wy * window + i, wx * window + j);
                    let (y, x) = ((sy + shift) % side, (sx + shift) % side);
                    tokens.push((y * side + x) as u32);
                    labels.push((region(sy, side, window, shift) * 3 + region(sx, side, window, shift)) as u8);
                }
            }
        }
    }
    (tokens, labels)
}

impl Tape {
    /// Attention core over packed `[N, T, 3·D]` query/key/value projections;
    /// returns `[N, T, D]` before the output projection.
    pub fn window_attention_core(&mut self, qkv: Var, layout: AttentionLayout) -> Result<Var> {
        let s = self.shape(qkv).to_vec();
        if s.len() != 3 || s[2] % 3 != 0 {
            return Err(Error::dim("window_attention", format!("qkv must be [N, T, 3D], got {s:?}")));
        }
        let (n, t, dim) = (s[0], s[1], s[2] / 3);
        let side = (t as f64).sqrt().round() as usize;
        if side * side != t {
            return Err(Error::dim("window_attention", format!("token count {t} (axis 1) is not a square grid")));
        }
        layout.validate(side, dim)?;
        let AttentionLayout { heads, window, shift } = layout;
        let dh = dim / heads;
        let tw = window * window;
        let nw = t / tw;
        let scale = 1.0 / (dh as f64).sqrt();
        let (tokens, labels) = window_tokens(side, window, shift);
        let xv = self.value(qkv);
        let mut out = vec![0.0f32; n * t * dim];
        let mut probs = vec![0.0f32; n * nw * heads * tw * tw];
        let mut row = vec![0.0f64; tw];
        for b in 0..n {
            let tok = |slot: usize| (b * t + tokens[slot] as usize) * 3 * dim;
            for w in 0..nw {
                let slots = w * tw..(w + 1) * tw;
                for h in 0..heads {
                    let pbase = ((b * nw + w) * heads + h) * tw * tw;
                    for (qi, qs) in slots.clone().enumerate() {
                        let q = &xv[tok(qs) + h * dh..tok(qs) + (h + 1) * dh];
                        let mut max = f64::NEG_INFINITY;
                        for (ki, ks) in slots.clone().enumerate() {
                            let k = &xv[tok(ks) + dim + h * dh..tok(ks) + dim + (h + 1) * dh];
                            let mut dot: f64 = q.iter().zip(k).map(|(&a, &b)| a as f64 * b as f64).sum();
                            dot *= scale;
                            if labels[qs] != labels[ks] {
                                dot += WINDOW_MASK_VALUE as f64;
                            }
                            row[ki] = dot;
                            max = max.max(dot);
                        }
                        let mut z = 0.0;
                        for r in row.iter_mut() {
                            *r = (*r - max).exp();
                            z += *r;
                        }
                        let o = (b * t + tokens[qs] as usize) * dim + h * dh;
                        let mut acc = vec![0.0f64; dh];
                        for (ki, ks) in slots.clone().enumerate() {
                            let p = row[ki] / z;
                            probs[pbase + qi * tw + ki] = p as f32;
                            let v = &xv[tok(ks) + 2 * dim + h * dh..tok(ks) + 2 * dim + (h + 1) * dh];
                            for (a, &vv) in acc.iter_mut().zip(v) {
                                *a += p * vv as f64;
                            }
                        }
                        for (dst, a) in out[o..o + dh].iter_mut().zip(&acc) {
                            *dst = *a as f32;
                        }
                    }
                }
            }
        }
        let saved = AttentionSaved { qkv, heads, window, dim, tokens, probs };
        self.push("window_attention", vec![n, t, dim], out, Op::WindowAttention(saved))
    }

    /// Full attention layer on `[N, T, D]` tokens: packed QKV projection,
    /// windowed attention, output projection.
    pub fn window_attention(
        &mut self,
        x: Var,
        layout: AttentionLayout,
        qkv_w: Var,
        qkv_b: Option<Var>,
        proj_w: Var,
        proj_b: Option<Var>,
    ) -> Result<Var> {
        let qkv = self.dense(x, qkv_w, qkv_b)?;
        let a = self.window_attention_core(qkv, layout)?;
        self.dense(a, proj_w, proj_b)
    }
}

pub(crate) fn backward(nodes: &[Node], s: &AttentionSaved, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    let xv = &nodes[s.qkv.index()].value;
    let shape = &nodes[s.qkv.index()].shape;
    let (n, t, dim) = (shape[0], shape[1], s.dim);
    let (heads, tw) = (s.heads, s.window * s.window);
    let dh = dim / heads;
    let nw = t / tw;
    let scale = 1.0 / (dh as f64).sqrt();
    accumulate(nodes, grads, s.qkv, |d| {
        let mut dp = vec![0.0f64; tw];
        for b in 0..n {
            let tok = |slot: usize| (b * t + s.tokens[slot] as usize) * 3 * dim;
            for w in 0..nw {
                for h in 0..heads {
                    let pbase = ((b * nw + w) * heads + h) * tw * tw;
                    for qi in 0..tw {
                        let qs = w * tw + qi;
                        let go = &g[(b * t + s.tokens[qs] as usize) * dim + h * dh..][..dh];
                        let p = &s.probs[pbase + qi * tw..pbase + (qi + 1) * tw];
                        for ki in 0..tw {
                            let vo = tok(w * tw + ki) + 2 * dim + h * dh;
                            dp[ki] = go.iter().zip(&xv[vo..vo + dh]).map(|(&a, &b)| a as f64 * b as f64).sum();
                            for c in 0..dh {
                                d[vo + c] += (p[ki] as f64 * go[c] as f64) as f32;
                            }
                        }
                        let dot: f64 = dp.iter().zip(p).map(|(a, &b)| a * b as f64).sum();
                        let qo = tok(qs) + h * dh;
                        for ki in 0..tw {
                            let ds = p[ki] as f64 * (dp[ki] - dot) * scale;
                            if ds == 0.0 {
                                continue;
                            }
                            let ko = tok(w * tw + ki) + dim + h * dh;
                            for c in 0..dh {
                                d[qo + c] += (ds * xv[ko + c] as f64) as f32;
                                d[ko + c] += (ds * xv[qo + c] as f64) as f32;
                            }
                        }
                    }
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn pseudo(n: usize, seed: u32) -> Vec<f32> {
        (0..n).map(|i| (((i as u32).wrapping_mul(2654435761).wrapping_add(seed) >> 8) % 1000) as f32 / 500.0 - 1.0).collect()
    }

    /// softmax(QKᵀ/√d)V over an explicit list of visible keys per query.
    fn masked_oracle(x: &[f32], t: usize, dim: usize, heads: usize, visible: impl Fn(usize, usize) -> bool) -> Vec<f64> {
        let dh = dim / heads;
        let mut out = vec![0.0; t * dim];
        for h in 0..heads {
            for q in 0..t {
                let keys: Vec<usize> = (0..t).filter(|&k| visible(q, k)).collect();
                let logits: Vec<f64> = keys
                    .iter()
                    .map(|&k| {
                        (0..dh).map(|c| x[q * 3 * dim + h * dh + c] as f64 * x[k * 3 * dim + dim + h * dh + c] as f64).sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
                for (l, &k) in logits.iter().zip(&keys) {
                    let p = (l - m).exp() / z;
                    for c in 0..dh {
                        out[q * dim + h * dh + c] += p * x[k * 3 * dim + 2 * dim + h * dh + c] as f64;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn single_window_is_full_attention() {
        let (t, dim) = (16, 8);
        let data = pseudo(t * 3 * dim, 7);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(&[1, t, 3 * dim], data.clone()).unwrap(), false);
        let y = tape.window_attention_core(x, AttentionLayout { heads: 2, window: 4, shift: 0 }).unwrap();
        let want = masked_oracle(&data, t, dim, 2, |_, _| true);
        for (a, b) in tape.value(y).iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }

    #[test]
    fn shifted_windows_match_region_oracle() {
        let (side, window, shift, dim) = (4, 2, 1, 4);
        let t = side * side;
        let data = pseudo(t * 3 * dim, 11);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(&[1, t, 3 * dim], data.clone()).unwrap(), false);
        let y = tape.window_attention_core(x, AttentionLayout { heads: 1, window, shift }).unwrap();
        // token at (y, x) sits at shifted coordinate ((y - shift) mod side, ...)
        let key = |tok: usize| {
            let sy = (tok / side + side - shift) % side;
            let sx = (tok % side + side - shift) % side;
            let reg = |c: usize| if c < side - window { 0 } else if c < side - shift { 1 } else { 2 };
            (sy / window, sx / window, reg(sy), reg(sx))
        };
        let want = masked_oracle(&data, t, dim, 1, |q, k| key(q) == key(k));
        for (a, b) in tape.value(y).iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_logits_average_values() {
        let (t, dim) = (16, 2);
        let mut data = vec![0.0f32; t * 3 * dim];
        for tok in 0..t {
            data[tok * 3 * dim + 2 * dim] = tok as f32;
            data[tok * 3 * dim + 2 * dim + 1] = 1.0;
        }
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(&[1, t, 3 * dim], data).unwrap(), false);
        let y = tape.window_attention_core(x, AttentionLayout { heads: 1, window: 2, shift: 0 }).unwrap();
        // window containing tokens 0, 1, 4, 5
        assert!((tape.value(y)[0] - 2.5).abs() < 1e-6);
        assert!((tape.value(y)[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn layout_errors() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[1, 16, 12]).unwrap(), false);
        assert!(tape.window_attention_core(x, AttentionLayout { heads: 3, window: 2, shift: 0 }).is_err());
        assert!(tape.window_attention_core(x, AttentionLayout { heads: 2, window: 3, shift: 0 }).is_err());
        assert!(tape.window_attention_core(x, AttentionLayout { heads: 2, window: 2, shift: 2 }).is_err());
    }
}
