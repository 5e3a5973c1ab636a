use crate::dataio::NUM_FEATURES;
use crate::error::{Error, Result};
use crate::models::{Inference, SegmentationModel, STEM_CHANNELS};
use crate::tensor::{Tape, Tensor};

/// Per-pixel linear model `logit = Σ_c w_c·x_c + b`, routed through a
/// 16-channel 1×1 layer so it has a Grad-CAM target. Attributions of a linear
/// model have closed forms, which makes it a reference for the explainers.
#[derive(Clone, Debug)]
pub struct LinearModel {
    pub weights: [f32; NUM_FEATURES],
    pub bias: f32,
}

impl LinearModel {
    /// The logit of one pixel given its 12 feature values.
    pub fn pixel_logit(&self, x: &[f32]) -> f64 {
        self.weights.iter().zip(x).map(|(&w, &v)| w as f64 * v as f64).sum::<f64>() + self.bias as f64
    }
}

impl SegmentationModel for LinearModel {
    fn infer(&self, tape: &mut Tape, input: crate::tensor::Var, target_offset: Option<&Tensor>) -> Result<Inference> {
        let shape = tape.shape(input).to_vec();
        if shape.len() != 4 || shape[1] != NUM_FEATURES {
            return Err(Error::dim("linear_model", format!("expects [N, 12, H, W], got {shape:?}")));
        }
        let mut w1 = vec![0.0f32; STEM_CHANNELS * NUM_FEATURES];
        for c in 0..NUM_FEATURES {
            w1[c * NUM_FEATURES + c] = 1.0;
        }
        let w1 = tape.input(Tensor::new(&[STEM_CHANNELS, NUM_FEATURES, 1, 1], w1)?, false);
        let mut target = tape.conv2d(input, w1, None, 1, 0)?;
        if let Some(off) = target_offset {
            let n = shape[0];
            let data: Vec<f32> = (0..n).flat_map(|_| off.data().iter().copied()).collect();
            let o = tape.input(Tensor::new(tape.shape(target), data)?, false);
            target = tape.add(target, o)?;
        }
        let mut w2 = vec![0.0f32; STEM_CHANNELS];
        w2[..NUM_FEATURES].copy_from_slice(&self.weights);
        let w2 = tape.input(Tensor::new(&[1, STEM_CHANNELS, 1, 1], w2)?, false);
        let b = tape.input(Tensor::new(&[1], vec![self.bias])?, false);
        let logits = tape.conv2d(target, w2, Some(b), 1, 0)?;
        Ok(Inference { logits, target })
    }

    fn target_shape(&self) -> Vec<usize> {
        vec![STEM_CHANNELS, 32, 32]
    }
}
