use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{SegmentationModel, STEM_CHANNELS};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CamHeatmap {
    /// Channel weights `w_k`: mean gradient of the class score over map `k`.
    pub weights: Vec<f64>,
    /// `ReLU(w_k·A^k)` per channel, each `side×side`.
    pub channel_maps: Vec<Vec<f32>>,
    /// `ReLU(Σ_k w_k·A^k)`.
    pub combined: Vec<f32>,
    /// Output pixels whose logits form the class score.
    pub pixels: Vec<usize>,
    /// Side of the target activation maps.
    pub map_side: usize,
    /// Side of the rendered maps.
    pub side: usize,
}

/// Bilinear resampling of a square map (align-corners); identity when the
/// sizes match.
pub fn bilinear_upsample(map: &[f32], from: usize, to: usize) -> Vec<f32> {
    if from == to {
        return map.to_vec();
    }
    let scale = if to > 1 { (from - 1) as f64 / (to - 1) as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(to * to);
    for y in 0..to {
        let fy = y as f64 * scale;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        let y1 = (y0 + 1).min(from - 1);
        for x in 0..to {
            let fx = x as f64 * scale;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let x1 = (x0 + 1).min(from - 1);
            let at = |yy: usize, xx: usize| map[yy * from + xx] as f64;
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
            let bot = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
            out.push((top * (1.0 - ty) + bot * ty) as f32);
        }
    }
    out
}

/// SEG-Grad-CAM on the model's first convolution. The class score is the
/// sum of fire logits over `pixels`; by default the pixels predicted as fire,
/// or every pixel when none is.
pub fn seg_grad_cam<M: SegmentationModel + ?Sized>(model: &M, x: &Tensor, pixels: Option<&[usize]>) -> Result<CamHeatmap> {
    let shape = x.shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::dim("seg_grad_cam", format!("expects one [12, H, W] sample, got {shape:?}")));
    }
    let target_shape = model.target_shape();
    let [k, th, tw] = target_shape[..] else {
        return Err(Error::invalid(format!("target layer has shape {target_shape:?}, expected [C, H, W]")));
    };
    if k != STEM_CHANNELS || th != tw {
        return Err(Error::invalid(format!("target layer must have {STEM_CHANNELS} square maps, got {target_shape:?}")));
    }
    let mut tape = Tape::new();
    let input = tape.input(x.clone().reshape(&[1, shape[0], shape[1], shape[2]])?, true);
    let out = model.infer(&mut tape, input, None)?;
    let z = tape.value(out.logits).to_vec();
    let side = (z.len() as f64).sqrt() as usize;
    let m: Vec<usize> = match pixels {
        Some(p) => {
            if p.is_empty() || p.iter().any(|&i| i >= z.len()) {
                return Err(Error::invalid("pixel set is empty or out of range"));
            }
            p.to_vec()
        }
        None => {
            let fire: Vec<usize> = (0..z.len()).filter(|&i| z[i] > 0.0).collect();
            if fire.is_empty() {
                (0..z.len()).collect()
            } else {
                fire
            }
        }
    };
    let mut sel = vec![0.0f32; z.len()];
    for &i in &m {
        sel[i] = 1.0;
    }
    let score = tape.weighted_sum(out.logits, sel)?;
    let grads = tape.backward_retained(score)?;
    let a = tape.value(out.target).to_vec();
    let n = th * tw;
    let g = grads.get_or_zeros(out.target, a.len());
    let weights: Vec<f64> = g.chunks(n).map(|c| c.iter().map(|&v| v as f64).sum::<f64>() / n as f64).collect();
    let mut channel_maps = Vec::with_capacity(k);
    let mut sum = vec![0.0f64; n];
    for (c, w) in weights.iter().enumerate() {
        let ac = &a[c * n..(c + 1) * n];
        let map: Vec<f32> = ac.iter().map(|&v| (w * v as f64).max(0.0) as f32).collect();
        for (s, &v) in sum.iter_mut().zip(ac) {
            *s += w * v as f64;
        }
        channel_maps.push(bilinear_upsample(&map, th, side));
    }
    let combined: Vec<f32> = sum.iter().map(|&v| v.max(0.0) as f32).collect();
    Ok(CamHeatmap {
        weights,
        channel_maps,
        combined: bilinear_upsample(&combined, th, side),
        pixels: m,
        map_side: th,
        side,
    })
}
