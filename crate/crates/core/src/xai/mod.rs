//! Attribution methods over any [`SegmentationModel`]: exact and gradient
//! Shapley values, SEG-Grad-CAM, Integrated Gradients and positive
//! contribution ratios, plus per-sample explanation bundles.

mod bundle;
mod gradcam;
mod ig;
mod linear;
mod pgm;
mod shapley;

pub use bundle::{explain_sample, sample_input, ExplainBundle, ExplainModel, Methods, ModelPanel, PcrRow};
pub use gradcam::{bilinear_upsample, seg_grad_cam, CamHeatmap};
pub use ig::{integrated_gradients, pcr, IgAttribution, Pcr, DEFAULT_IG_STEPS};
pub use linear::LinearModel;
pub use pgm::Heatmap;
pub use shapley::{
    exact_shapley, gradient_shap, Baseline, FnGame, Game, GradientShapResult, ShapMethod, ShapleyResult, ValueFunction,
    MAX_EXACT_PLAYERS,
};

use crate::error::{Error, Result};
use crate::models::SegmentationModel;
use crate::tensor::{Tape, Tensor};

/// `1/|M|` on the pixel set, zero elsewhere.
pub(crate) fn pixel_weights(hw: usize, pixels: &[usize]) -> Result<Vec<f32>> {
    if pixels.is_empty() {
        return Err(Error::invalid("pixel set is empty"));
    }
    let mut w = vec![0.0f32; hw];
    let share = 1.0 / pixels.len() as f32;
    for &p in pixels {
        if p >= hw {
            return Err(Error::invalid(format!("pixel {p} outside a map of {hw} pixels")));
        }
        w[p] = share;
    }
    Ok(w)
}

pub(crate) fn logits<M: SegmentationModel + ?Sized>(model: &M, inputs: Tensor) -> Result<Vec<f32>> {
    let mut tape = Tape::new();
    let x = tape.input(inputs, false);
    let out = model.infer(&mut tape, x, None)?;
    Ok(tape.value(out.logits).to_vec())
}

/// Gradient of `F_b = Σ_p weights[p]·logit_b[p]` with respect to each batch
/// input, and the `F_b` values. Eval mode keeps samples independent.
pub(crate) fn input_gradients<M: SegmentationModel + ?Sized>(
    model: &M,
    inputs: Tensor,
    weights: &[f32],
) -> Result<(Vec<f32>, Vec<f64>)> {
    let n = inputs.shape()[0];
    let numel = inputs.numel();
    let mut tape = Tape::new();
    let x = tape.input(inputs, true);
    let out = model.infer(&mut tape, x, None)?;
    let z = tape.value(out.logits);
    if z.len() != n * weights.len() {
        return Err(Error::dim("attribution", format!("{} logits for {n} maps of {} pixels", z.len(), weights.len())));
    }
    let f: Vec<f64> = z
        .chunks(weights.len())
        .map(|c| c.iter().zip(weights).map(|(&a, &w)| a as f64 * w as f64).sum())
        .collect();
    let all: Vec<f32> = (0..n).flat_map(|_| weights.iter().copied()).collect();
    let s = tape.weighted_sum(out.logits, all)?;
    let g = tape.backward(s)?;
    Ok((g.get_or_zeros(x, numel), f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synthesize, SynthConfig, NUM_FEATURES};
    use crate::models::{build, Family, ModelSpec, Width};
    use crate::rng::{self, Rng, Stream};

    fn sample(seed: u64, side: usize) -> Tensor {
        let mut r = rng::stream(seed, Stream::Synth, 0);
        let data = (0..NUM_FEATURES * side * side).map(|_| r.gen::<f32>() * 4.0 - 2.0).collect();
        Tensor::new(&[NUM_FEATURES, side, side], data).unwrap()
    }

    fn linear(w: &[f32]) -> LinearModel {
        let mut weights = [0.0f32; NUM_FEATURES];
        weights[..w.len()].copy_from_slice(w);
        LinearModel { weights, bias: 0.25 }
    }

    #[test]
    fn gradcam_with_constant_gradients_is_relu_of_activation() {
        let x = sample(1, 32);
        let cam = seg_grad_cam(&linear(&[1.0]), &x, Some(&(0..1024).collect::<Vec<_>>())).unwrap();
        assert_eq!(cam.weights[0], 1.0);
        assert!(cam.weights[1..].iter().all(|&w| w == 0.0));
        let expect: Vec<f32> = x.data()[..1024].iter().map(|&v| v.max(0.0)).collect();
        assert_eq!(cam.combined, expect);
        assert_eq!(cam.channel_maps[0], expect);
    }

    #[test]
    fn gradcam_combined_map_is_not_a_sum_of_channel_maps() {
        let x = sample(2, 32);
        let cam = seg_grad_cam(&linear(&[1.0, -1.0]), &x, Some(&(0..1024).collect::<Vec<_>>())).unwrap();
        let summed: Vec<f32> = (0..1024).map(|i| cam.channel_maps[0][i] + cam.channel_maps[1][i]).collect();
        assert!(cam.combined.iter().chain(cam.channel_maps.iter().flatten()).all(|&v| v >= 0.0));
        assert_ne!(cam.combined, summed);
        for i in 0..1024 {
            let d = x.data()[i] - x.data()[1024 + i];
            assert!((cam.combined[i] - d.max(0.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn gradcam_weights_scale_with_pixel_share() {
        let x = sample(3, 32);
        let cam = seg_grad_cam(&linear(&[2.0]), &x, Some(&(0..256).collect::<Vec<_>>())).unwrap();
        assert!((cam.weights[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ig_is_exact_on_a_linear_model() {
        let w = [0.5, -1.5, 2.0, 0.0, 1.0, -0.25, 0.75, 0.1, -0.3, 0.6, 1.2, -2.0];
        let m = linear(&w);
        let x = sample(4, 8);
        let ig = integrated_gradients(&m, &x, 4).unwrap();
        for c in 0..NUM_FEATURES {
            for p in 0..64 {
                let i = c * 64 + p;
                assert!((ig.attributions[i] as f64 - w[c] as f64 * x.data()[i] as f64).abs() < 1e-5);
            }
        }
        let scale = (ig.f_input - ig.f_baseline).abs();
        assert!(ig.completeness_gap <= 1e-5 * scale.max(1.0));
    }

    #[test]
    fn ig_at_the_baseline_is_zero() {
        let m = linear(&[1.0, 2.0, 3.0]);
        let x = Tensor::new(&[NUM_FEATURES, 4, 4], vec![0.0; NUM_FEATURES * 16]).unwrap();
        let ig = integrated_gradients(&m, &x, 16).unwrap();
        assert!(ig.attributions.iter().all(|&a| a == 0.0));
        assert!(ig.pcr.degenerate);
    }

    #[test]
    fn value_function_shapley_on_linear_model() {
        let w = [1.0, -2.0, 0.0, 0.5, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, -1.0, 0.0];
        let m = linear(&w);
        let x = sample(5, 4);
        let pixels: Vec<usize> = (0..16).collect();
        let mut vf = ValueFunction::new(&m, &x, Baseline::Zeros, &pixels).unwrap();
        let r = exact_shapley(&mut vf).unwrap();
        for c in 0..NUM_FEATURES {
            let mean: f64 = x.data()[c * 16..(c + 1) * 16].iter().map(|&v| v as f64).sum::<f64>() / 16.0;
            assert!((r.phi[c] - w[c] as f64 * mean).abs() < 1e-5, "feature {c}");
            if w[c] == 0.0 {
                assert_eq!(r.phi[c], 0.0);
            }
        }
        assert!(r.efficiency_gap() <= 1e-6 * (r.v_full - r.v_empty).abs().max(1.0));
    }

    #[test]
    fn gradient_shap_on_linear_model_with_zero_background() {
        let w = [1.0, -2.0, 0.5, 0.0, 0.25, 0.0, 3.0, 0.0, 0.0, 0.0, -1.0, 0.0];
        let m = linear(&w);
        let xs = vec![sample(6, 4), sample(7, 4)];
        let bg = vec![Tensor::new(&[NUM_FEATURES, 4, 4], vec![0.0; NUM_FEATURES * 16]).unwrap()];
        let pixels: Vec<usize> = (0..16).collect();
        let r = gradient_shap(&m, &xs, &bg, &pixels, 8, 3).unwrap();
        for c in 0..NUM_FEATURES {
            let exact: f64 = xs
                .iter()
                .map(|x| w[c] as f64 * x.data()[c * 16..(c + 1) * 16].iter().map(|&v| v as f64).sum::<f64>() / 16.0)
                .sum::<f64>()
                / 2.0;
            assert!((r.totals[c] - exact).abs() <= 0.02 * exact.abs() + 1e-9, "feature {c}");
        }
        let mut names: Vec<&str> = r.ranking.iter().map(|(n, _)| n.as_str()).collect();
        names.sort_unstable();
        let mut all = crate::dataio::FEATURE_NAMES.to_vec();
        all.sort_unstable();
        assert_eq!(names, all);
        assert_eq!(r, gradient_shap(&m, &xs, &bg, &pixels, 8, 3).unwrap());
    }

    #[test]
    fn bundle_structure_and_determinism() {
        let data = synthesize(&SynthConfig { count: 3, h: 40, w: 40, seed: 2, ..Default::default() }).unwrap();
        let spec = ModelSpec::desk(Family::UNet).with_width(Width::new(1, 8).unwrap());
        let model = build(&spec, 0).unwrap();
        let models = [ExplainModel { name: "UNet".into(), model: &model, trained: false }];
        let methods = Methods { shap: false, gradcam: true, ig: true };
        let b = explain_sample(&models, &data, 1, methods, 8).unwrap();
        assert_eq!(b.heatmap_count(0), 17);
        assert_eq!(b.panels[0].ig_pcr.as_ref().unwrap().len(), 12);
        assert!(b.panels[0].untrained_warning);
        assert_eq!(b, explain_sample(&models, &data, 1, methods, 8).unwrap());
        let only_ig = explain_sample(&models, &data, 1, "ig".parse().unwrap(), 8).unwrap();
        assert_eq!(only_ig.heatmap_count(0), 0);
        let err = explain_sample(&models, &data, 3, methods, 8).unwrap_err().to_string();
        assert!(err.contains("0..3"));

        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let f1 = b.write(d1.path()).unwrap();
        let f2 = b.write(d2.path()).unwrap();
        assert_eq!(f1.len(), f2.len());
        assert_eq!(f1.iter().filter(|p| p.extension().is_some_and(|e| e == "pgm")).count(), 18);
        for (a, c) in f1.iter().zip(&f2) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(c).unwrap());
        }
    }

    #[test]
    fn methods_parse() {
        assert_eq!("shap,gradcam,ig".parse::<Methods>().unwrap(), Methods::ALL);
        assert!("lime".parse::<Methods>().is_err());
        assert!("".parse::<Methods>().is_err());
    }
}
