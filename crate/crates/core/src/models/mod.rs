//! Segmentation architectures: autoencoder, residual encoder-decoder, UNet
//! and Swin-UNet, all mapping `N×12×32×32` inputs to `N×1×32×32` logits.

mod build;
mod graph;
mod spec;

pub use build::{
    build, build_autoencoder, build_res_encoder_decoder, build_swin_unet, build_unet, swin_window, INPUT_SIDE,
    MLP_RATIO, STEM_CHANNELS,
};
pub use graph::{Buffer, Forward, ForwardCtx, GraphNode, LayerInfo, ModelGraph, NodeId, Param, Role, NORM_EPS};
pub use spec::{Family, ModelSpec, Width};

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// Eval-mode view of a trained model used by the attribution methods.
pub struct Inference {
    pub logits: Var,
    /// Activation of the Grad-CAM target layer.
    pub target: Var,
}

pub trait SegmentationModel {
    /// Records an eval-mode forward of `input` (`[N, 12, 32, 32]`). A
    /// per-sample `target_offset` is added to the target activation.
    fn infer(&self, tape: &mut Tape, input: Var, target_offset: Option<&Tensor>) -> Result<Inference>;

    /// Shape of one sample's target activation, `[16, 32, 32]`.
    fn target_shape(&self) -> Vec<usize>;
}

impl SegmentationModel for ModelGraph {
    fn infer(&self, tape: &mut Tape, input: Var, target_offset: Option<&Tensor>) -> Result<Inference> {
        let mut ctx = ForwardCtx::eval();
        if let Some(off) = target_offset {
            ctx.offsets.push((self.cam_target(), off.clone()));
        }
        let f = self.forward(tape, input, &mut ctx)?;
        Ok(Inference { logits: f.logits, target: f.nodes[self.cam_target()] })
    }

    fn target_shape(&self) -> Vec<usize> {
        self.nodes()[self.cam_target()].shape.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Rng, Stream};
    use crate::tensor::ops::NormMode;

    fn random_input(n: usize, seed: u64) -> Tensor {
        let mut r = rng::stream(seed, Stream::Synth, 99);
        let data = (0..n * 12 * 32 * 32).map(|_| r.gen_range(-1.0f32..1.0)).collect();
        Tensor::new(&[n, 12, 32, 32], data).unwrap()
    }

    fn eval_logits(g: &ModelGraph, x: &Tensor, ctx: &mut ForwardCtx) -> Vec<f32> {
        let mut tape = Tape::new();
        let v = tape.input(x.clone(), false);
        let f = g.forward(&mut tape, v, ctx).unwrap();
        tape.value(f.logits).to_vec()
    }

    #[test]
    fn every_family_maps_to_one_logit_map() {
        for fam in Family::ALL {
            let g = build(&ModelSpec::desk(fam), 1).unwrap();
            let mut tape = Tape::new();
            let x = tape.input(random_input(2, 0), false);
            let f = g.forward(&mut tape, x, &mut ForwardCtx::eval()).unwrap();
            assert_eq!(tape.shape(f.logits), &[2, 1, 32, 32], "{fam}");
            assert_eq!(g.target_shape(), vec![16, 32, 32], "{fam}");
            assert_eq!(g.nodes()[g.cam_target()].name, "stem.relu");
        }
    }

    #[test]
    fn every_parameter_receives_gradient() {
        for fam in Family::ALL {
            let g = build(&ModelSpec::desk(fam), 3).unwrap();
            let mut tape = Tape::new();
            let x = tape.input(random_input(2, 1), false);
            let mut ctx = ForwardCtx::train(5);
            let f = g.forward(&mut tape, x, &mut ctx).unwrap();
            let mut r = rng::stream(2, Stream::Synth, 0);
            let w: Vec<f32> = (0..2 * 32 * 32).map(|_| r.gen_range(-1.0f32..1.0)).collect();
            let loss = tape.weighted_sum(f.logits, w).unwrap();
            let grads = tape.backward(loss).unwrap();
            for (p, v) in g.params().iter().zip(&f.params) {
                let gr = grads.get(*v).unwrap_or_else(|| panic!("{fam}: no gradient for {}", p.name));
                assert!(gr.iter().any(|&x| x != 0.0), "{fam}: zero gradient for {}", p.name);
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        for fam in Family::ALL {
            let a = build(&ModelSpec::desk(fam), 9).unwrap().checkpoint_bytes();
            assert_eq!(a, build(&ModelSpec::desk(fam), 9).unwrap().checkpoint_bytes());
            assert_ne!(a, build(&ModelSpec::desk(fam), 10).unwrap().checkpoint_bytes());
        }
    }

    #[test]
    fn parameter_names_are_unique() {
        for fam in Family::ALL {
            let g = build(&ModelSpec::desk(fam), 0).unwrap();
            let mut names: Vec<&str> = g.params().iter().map(|p| p.name.as_str()).collect();
            names.sort_unstable();
            let n = names.len();
            names.dedup();
            assert_eq!(names.len(), n);
        }
    }

    #[test]
    fn autoencoder_count_matches_layer_sum() {
        let g = build(&ModelSpec::desk(Family::Autoencoder), 0).unwrap();
        // (K, Cin, Cout) for every layer, each with a bias
        let layers = [
            (3, 12, 16),
            (3, 16, 16),
            (3, 16, 32),
            (3, 32, 64),
            (3, 64, 64),
            (3, 64, 64),
            (2, 64, 64),
            (2, 64, 64),
            (2, 64, 32),
            (2, 32, 16),
            (1, 16, 1),
        ];
        let oracle: usize = layers.iter().map(|&(k, ci, co)| k * k * ci * co + co).sum();
        assert_eq!(g.param_count(), oracle);
    }

    #[test]
    fn unet_count_matches_layer_sum() {
        let g = build(&ModelSpec::desk(Family::UNet), 0).unwrap();
        let lv = [8usize, 16, 32, 64, 128];
        let mut oracle = 9 * 12 * 16 + 16;
        let mut cin = 16;
        for &c in &lv {
            oracle += 9 * cin * c + 2 * c;
            cin = c;
        }
        for i in (0..4).rev() {
            oracle += 4 * lv[i + 1] * lv[i] + lv[i];
            oracle += 9 * 2 * lv[i] * lv[i] + 2 * lv[i];
        }
        oracle += 8 + 1;
        assert_eq!(g.param_count(), oracle);
    }

    #[test]
    fn first_conv_flops_and_dense_params() {
        let mut b = graph::Builder::new(0);
        let x = b.input(&[12, 32, 32]);
        b.conv("c", x, 64, 3, 1, 1, true).unwrap();
        let t = b.input(&[1, 10]);
        b.dense("d", t, 5, true).unwrap();
        let g = b.finish_unchecked();
        assert_eq!(g.layers()[1].flops, 14_155_776);
        assert_eq!(g.layers()[3].params, 55);
    }

    #[test]
    fn doubling_width_quadruples_conv_weights() {
        let a = build(&ModelSpec::desk(Family::UNet), 0).unwrap();
        let b = build(&ModelSpec::desk(Family::UNet).with_width(Width::new(1, 2).unwrap()), 0).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.name, pb.name);
            if pa.name.ends_with(".weight") && pa.name.starts_with("enc") && pa.name != "enc1.conv.weight" {
                assert_eq!(pb.tensor.numel(), 4 * pa.tensor.numel(), "{}", pa.name);
            }
        }
    }

    #[test]
    fn skip_paths_only_in_unet_and_swin() {
        for fam in Family::ALL {
            let g = build(&ModelSpec::desk(fam), 0).unwrap();
            let has = !g.skip_connections().is_empty();
            assert_eq!(has, matches!(fam, Family::UNet | Family::SwinUNet), "{fam}: {:?}", g.skip_connections());
        }
        let g = build(&ModelSpec::desk(Family::UNet), 0).unwrap();
        assert_eq!(g.skip_connections().len(), 4);
    }

    #[test]
    fn zeroed_residual_branches_are_identity() {
        let mut g = build(&ModelSpec::desk(Family::ResEncoderDecoder), 4).unwrap();
        for p in g.params_mut() {
            if p.name.contains(".c.conv.weight") {
                p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut tape = Tape::new();
        let x = tape.input(random_input(2, 3), false);
        let f = g.forward(&mut tape, x, &mut ForwardCtx::eval()).unwrap();
        for s in 1..=4 {
            let before = g.node_id(&format!("stage{s}.transition.relu")).unwrap();
            let after = g.node_id(&format!("stage{s}.block1.relu")).unwrap();
            assert_eq!(tape.value(f.nodes[before]), tape.value(f.nodes[after]));
        }
    }

    #[test]
    fn unet_skips_are_live() {
        let g = build(&ModelSpec::desk(Family::UNet), 2).unwrap();
        let x = random_input(1, 7);
        let base = eval_logits(&g, &x, &mut ForwardCtx::eval());
        for (from, to) in g.skip_connections() {
            let mut ctx = ForwardCtx::eval();
            ctx.cut_edges.push((g.node_id(&from).unwrap(), g.node_id(&to).unwrap()));
            assert_ne!(eval_logits(&g, &x, &mut ctx), base, "{from} -> {to}");
        }
    }

    #[test]
    fn swin_shift_is_live_and_grids_halve() {
        let shifted = build(&ModelSpec::desk(Family::SwinUNet), 6).unwrap();
        let plain = build(&ModelSpec { shift: false, ..ModelSpec::desk(Family::SwinUNet) }, 6).unwrap();
        assert_eq!(shifted.checkpoint_bytes(), plain.checkpoint_bytes());
        let x = random_input(1, 8);
        assert_ne!(eval_logits(&shifted, &x, &mut ForwardCtx::eval()), eval_logits(&plain, &x, &mut ForwardCtx::eval()));
        let sides: Vec<usize> = ["enc1", "enc2", "enc3", "bottom"]
            .iter()
            .map(|s| {
                let n = &shifted.nodes()[shifted.node_id(&format!("{s}.block2.add2")).unwrap()];
                (n.shape[0] as f64).sqrt() as usize
            })
            .collect();
        assert_eq!(sides, vec![16, 8, 4, 2]);
    }

    #[test]
    fn swin_rejects_indivisible_window() {
        let spec = ModelSpec { window: Some(3), ..ModelSpec::desk(Family::SwinUNet) };
        assert!(matches!(build(&spec, 0), Err(crate::Error::Dimension { .. })));
    }

    #[test]
    fn invalid_width_is_rejected() {
        let spec = ModelSpec::desk(Family::Autoencoder).with_width(Width::new(1, 128).unwrap());
        assert!(build(&spec, 0).is_err());
        assert!(build_unet(&ModelSpec::desk(Family::Autoencoder), 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_restores_outputs() {
        let mut g = build(&ModelSpec::desk(Family::UNet), 1).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(random_input(2, 2), false);
        let mut ctx = ForwardCtx::train(0);
        g.forward(&mut tape, x, &mut ctx).unwrap();
        g.apply_bn_updates(&mut ctx);
        assert_ne!(g.buffers()[0].stats.mean, vec![0.0; 16]);
        let bytes = g.checkpoint_bytes();
        let mut h = build(&ModelSpec::desk(Family::UNet), 2).unwrap();
        h.load_checkpoint_bytes(&bytes).unwrap();
        let input = random_input(1, 4);
        assert_eq!(eval_logits(&g, &input, &mut ForwardCtx::eval()), eval_logits(&h, &input, &mut ForwardCtx::eval()));
        let mut ae = build(&ModelSpec::desk(Family::Autoencoder), 0).unwrap();
        assert!(ae.load_checkpoint_bytes(&bytes).is_err());
    }

    #[test]
    fn frozen_models_refuse_training() {
        let mut g = build(&ModelSpec::desk(Family::Autoencoder), 0).unwrap();
        g.freeze();
        let mut tape = Tape::new();
        let x = tape.input(random_input(1, 0), false);
        assert!(g.forward(&mut tape, x, &mut ForwardCtx::train(0)).is_err());
        assert_eq!(ForwardCtx::eval().mode, NormMode::Eval);
        assert!(g.forward(&mut tape, x, &mut ForwardCtx::eval()).is_ok());
    }
}
