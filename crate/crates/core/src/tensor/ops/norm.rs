//! Batch and layer normalization.

use crate::error::{Error, Result};
use crate::tensor::tape::{accumulate, Node, Op};
use crate::tensor::{Tape, Var};

/// Weight of the previous running statistic in the exponential update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Per-channel running mean and (biased) variance of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![0.0; channels], var: vec![1.0; channels] }
    }
}

pub(crate) struct NormSaved {
    pub x: Var,
    pub gamma: Var,
    pub beta: Var,
    pub xhat: Vec<f32>,
    pub inv_std: Vec<f32>,
    /// Statistics came from the input itself (and so depend on it).
    pub batch_stats: bool,
}

impl Tape {
    fn check_affine(&self, op: &'static str, gamma: Var, beta: Var, channels: usize, eps: f32) -> Result<()> {
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("{op}: eps must be > 0, got {eps}")));
        }
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(Error::dim(
                op,
                format!("gamma {:?} / beta {:?} do not match {channels} channels", self.shape(gamma), self.shape(beta)),
            ));
        }
        Ok(())
    }

    /// Batch normalization over axis 1 of an `[N, C, ...]` input.
    ///
    /// `Train` normalizes with batch statistics and folds them into
    /// `running` with momentum [`BN_MOMENTUM`]; `Eval` reads `running`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f32,
        mode: NormMode,
        running: &mut RunningStats,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::dim("batch_norm", format!("input must be [N, C, ...], got {shape:?}")));
        }
        let (n, c) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        self.check_affine("batch_norm", gamma, beta, c, eps)?;
        if running.mean.len() != c || running.var.len() != c {
            return Err(Error::dim("batch_norm", format!("running stats sized for {} channels, input has {c}", running.mean.len())));
        }
        let count = n * spatial;
        if count == 0 {
            return Err(Error::dim("batch_norm", "empty batch"));
        }
        let xv = self.value(x);
        let at = |b: usize, ch: usize| (b * c + ch) * spatial;
        let mut inv_std = vec![0.0f32; c];
        let mut means = vec![0.0f64; c];
        for ch in 0..c {
            let (mean, var) = match mode {
                NormMode::Train => {
                    let mut s = 0.0f64;
                    for b in 0..n {
                        s += xv[at(b, ch)..at(b, ch) + spatial].iter().map(|&v| v as f64).sum::<f64>();
                    }
                    let mean = s / count as f64;
                    let mut ss = 0.0f64;
                    for b in 0..n {
                        ss += xv[at(b, ch)..at(b, ch) + spatial].iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>();
                    }
                    let var = ss / count as f64;
                    running.mean[ch] = (BN_MOMENTUM * running.mean[ch] as f64 + (1.0 - BN_MOMENTUM) * mean) as f32;
                    running.var[ch] = (BN_MOMENTUM * running.var[ch] as f64 + (1.0 - BN_MOMENTUM) * var) as f32;
                    (mean, var)
                }
                NormMode::Eval => (running.mean[ch] as f64, running.var[ch] as f64),
            };
            means[ch] = mean;
            inv_std[ch] = (1.0 / (var + eps as f64).sqrt()) as f32;
        }
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let mut xhat = vec![0.0f32; xv.len()];
        let mut out = vec![0.0f32; xv.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = at(b, ch);
                for i in base..base + spatial {
                    let h = ((xv[i] as f64 - means[ch]) * inv_std[ch] as f64) as f32;
                    xhat[i] = h;
                    out[i] = gv[ch] * h + bv[ch];
                }
            }
        }
        let saved = NormSaved { x, gamma, beta, xhat, inv_std, batch_stats: mode == NormMode::Train };
        self.push("batch_norm", shape, out, Op::BatchNorm(saved))
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let Some(&d) = shape.last() else {
            return Err(Error::dim("layer_norm", "input must have at least one axis"));
        };
        self.check_affine("layer_norm", gamma, beta, d, eps)?;
        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let rows = xv.len() / d;
        let mut inv_std = vec![0.0f32; rows];
        let mut xhat = vec![0.0f32; xv.len()];
        let mut out = vec![0.0f32; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps as f64).sqrt();
            inv_std[r] = is as f32;
            for j in 0..d {
                let h = ((row[j] as f64 - mean) * is) as f32;
                xhat[r * d + j] = h;
                out[r * d + j] = gv[j] * h + bv[j];
            }
        }
        let saved = NormSaved { x, gamma, beta, xhat, inv_std, batch_stats: true };
        self.push("layer_norm", shape, out, Op::LayerNorm(saved))
    }
}

/// Input gradient of a normalization group of `m` elements sharing one
/// `inv_std`, given `gh = g·gamma`.
fn group_dx(gh: &[f64], xhat: &[f32], inv_std: f64, batch_stats: bool, dx: &mut [f64]) {
    if !batch_stats {
        for (d, g) in dx.iter_mut().zip(gh) {
            *d = g * inv_std;
        }
        return;
    }
    let m = gh.len() as f64;
    let sum_g: f64 = gh.iter().sum();
    let sum_gx: f64 = gh.iter().zip(xhat).map(|(g, &h)| g * h as f64).sum();
    for i in 0..gh.len() {
        dx[i] = inv_std / m * (m * gh[i] - sum_g - xhat[i] as f64 * sum_gx);
    }
}

pub(crate) fn batch_norm_backward(nodes: &[Node], s: &NormSaved, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    let shape = &nodes[s.x.index()].shape;
    let (n, c) = (shape[0], shape[1]);
    let spatial: usize = shape[2..].iter().product();
    let gamma = &nodes[s.gamma.index()].value;
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    let mut dx = vec![0.0f32; g.len()];
    let mut gh = Vec::with_capacity(n * spatial);
    let mut xh = Vec::with_capacity(n * spatial);
    let mut dgrp = vec![0.0f64; n * spatial];
    for ch in 0..c {
        gh.clear();
        xh.clear();
        for b in 0..n {
            let base = (b * c + ch) * spatial;
            for i in base..base + spatial {
                dgamma[ch] += g[i] as f64 * s.xhat[i] as f64;
                dbeta[ch] += g[i] as f64;
                gh.push(g[i] as f64 * gamma[ch] as f64);
                xh.push(s.xhat[i]);
            }
        }
        group_dx(&gh, &xh, s.inv_std[ch] as f64, s.batch_stats, &mut dgrp);
        for b in 0..n {
            let base = (b * c + ch) * spatial;
            for k in 0..spatial {
                dx[base + k] = dgrp[b * spatial + k] as f32;
            }
        }
    }
    accumulate(nodes, grads, s.x, |d| super::elementwise::add_into(d, &dx));
    accumulate(nodes, grads, s.gamma, |d| d.iter_mut().zip(&dgamma).for_each(|(d, v)| *d += *v as f32));
    accumulate(nodes, grads, s.beta, |d| d.iter_mut().zip(&dbeta).for_each(|(d, v)| *d += *v as f32));
}

pub(crate) fn layer_norm_backward(nodes: &[Node], s: &NormSaved, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    let d = *nodes[s.x.index()].shape.last().unwrap();
    let gamma = &nodes[s.gamma.index()].value;
    let rows = g.len() / d;
    let mut dgamma = vec![0.0f64; d];
    let mut dbeta = vec![0.0f64; d];
    let mut dx = vec![0.0f32; g.len()];
    let mut gh = vec![0.0f64; d];
    let mut drow = vec![0.0f64; d];
    for r in 0..rows {
        let gr = &g[r * d..(r + 1) * d];
        let xr = &s.xhat[r * d..(r + 1) * d];
        for j in 0..d {
            dgamma[j] += gr[j] as f64 * xr[j] as f64;
            dbeta[j] += gr[j] as f64;
            gh[j] = gr[j] as f64 * gamma[j] as f64;
        }
        group_dx(&gh, xr, s.inv_std[r] as f64, true, &mut drow);
        for j in 0..d {
            dx[r * d + j] = drow[j] as f32;
        }
    }
    accumulate(nodes, grads, s.x, |dd| super::elementwise::add_into(dd, &dx));
    accumulate(nodes, grads, s.gamma, |dd| dd.iter_mut().zip(&dgamma).for_each(|(a, v)| *a += *v as f32));
    accumulate(nodes, grads, s.beta, |dd| dd.iter_mut().zip(&dbeta).for_each(|(a, v)| *a += *v as f32));
}
