use serde::Serialize;

use super::input_gradients;
use crate::dataio::NUM_FEATURES;
use crate::error::{Error, Result};
use crate::models::SegmentationModel;
use crate::tensor::Tensor;

pub const DEFAULT_IG_STEPS: usize = 128;
const IG_BATCH: usize = 32;

/// Positive contribution ratios; all zero (and flagged) when no total is
/// positive.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pcr {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

pub fn pcr(gamma: &[f64]) -> Pcr {
    let pos: f64 = gamma.iter().map(|g| g.max(0.0)).sum();
    if pos > 0.0 {
        Pcr { values: gamma.iter().map(|g| g.max(0.0) / pos).collect(), degenerate: false }
    } else {
        Pcr { values: vec![0.0; gamma.len()], degenerate: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IgAttribution {
    /// `[12, H, W]` attributions, channel-major.
    pub attributions: Vec<f32>,
    /// Per-feature sums over pixels.
    pub totals: Vec<f64>,
    pub pcr: Pcr,
    pub steps: usize,
    pub f_input: f64,
    pub f_baseline: f64,
    /// `|Σ attributions − (F(x) − F(0))|`.
    pub completeness_gap: f64,
}

/// Integrated gradients of the summed output logits from an all-zero
/// baseline, with the path sampled at midpoints `λ = (t − ½)/m`.
pub fn integrated_gradients<M: SegmentationModel + ?Sized>(model: &M, x: &Tensor, steps: usize) -> Result<IgAttribution> {
    if steps < 1 {
        return Err(Error::invalid("integrated_gradients needs at least 1 step"));
    }
    let shape = x.shape().to_vec();
    if shape.len() != 3 || shape[0] != NUM_FEATURES {
        return Err(Error::dim("integrated_gradients", format!("expects [12, H, W], got {shape:?}")));
    }
    let (numel, hw) = (x.numel(), shape[1] * shape[2]);
    let ones = vec![1.0f32; hw];
    let mut grad_sum = vec![0.0f64; numel];
    let lambdas: Vec<f32> = (1..=steps).map(|t| ((t as f64 - 0.5) / steps as f64) as f32).collect();
    for chunk in lambdas.chunks(IG_BATCH) {
        let data: Vec<f32> = chunk.iter().flat_map(|&l| x.data().iter().map(move |&v| l * v)).collect();
        let inputs = Tensor::new(&[chunk.len(), shape[0], shape[1], shape[2]], data)?;
        let (g, _) = input_gradients(model, inputs, &ones)?;
        for gb in g.chunks(numel) {
            for (acc, &v) in grad_sum.iter_mut().zip(gb) {
                *acc += v as f64;
            }
        }
    }
    let mut ends = x.data().to_vec();
    ends.extend(std::iter::repeat(0.0).take(numel));
    let (_, f) = input_gradients(model, Tensor::new(&[2, shape[0], shape[1], shape[2]], ends)?, &ones)?;
    let attributions: Vec<f64> =
        x.data().iter().zip(&grad_sum).map(|(&xi, &g)| xi as f64 * g / steps as f64).collect();
    let totals: Vec<f64> = attributions.chunks(hw).map(|c| c.iter().sum()).collect();
    let gap = (totals.iter().sum::<f64>() - (f[0] - f[1])).abs();
    Ok(IgAttribution {
        attributions: attributions.iter().map(|&a| a as f32).collect(),
        pcr: pcr(&totals),
        totals,
        steps,
        f_input: f[0],
        f_baseline: f[1],
        completeness_gap: gap,
    })
}
