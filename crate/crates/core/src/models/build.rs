//! The four architecture families, expressed on [`Builder`].

use super::graph::{Builder, ModelGraph, NodeId, Role};
use super::spec::{Family, ModelSpec};
use crate::dataio::NUM_FEATURES;
use crate::error::{Error, Result};
use crate::tensor::ops::AttentionLayout;

pub const INPUT_SIDE: usize = 32;
pub const STEM_CHANNELS: usize = 16;
pub const MLP_RATIO: usize = 4;

const AE_ENCODER: [usize; 5] = [64, 128, 256, 256, 256];
const AE_DECODER: [usize; 4] = [256, 256, 128, 64];
const RES_MIDS: [usize; 4] = [64, 128, 256, 512];
const RES_EXPANSION: usize = 4;
const UNET_LEVELS: [usize; 5] = [32, 64, 128, 256, 512];
const SWIN_EMBED: usize = 128;
const SWIN_STAGES: usize = 3;

pub fn build(spec: &ModelSpec, seed: u64) -> Result<ModelGraph> {
    match spec.family {
        Family::Autoencoder => build_autoencoder(spec, seed),
        Family::ResEncoderDecoder => build_res_encoder_decoder(spec, seed),
        Family::UNet => build_unet(spec, seed),
        Family::SwinUNet => build_swin_unet(spec, seed),
    }
}

fn scaled(spec: &ModelSpec, base: &[usize]) -> Result<Vec<usize>> {
    base.iter().map(|&b| spec.width_multiplier.channels(b)).collect()
}

fn check_family(spec: &ModelSpec, family: Family) -> Result<()> {
    if spec.family != family {
        return Err(Error::invalid(format!("spec is for {}, not {}", spec.family, family)));
    }
    Ok(())
}

/// Input plus the shared 16-channel first convolution. Returns `(input, stem)`.
fn stem(b: &mut Builder) -> Result<(NodeId, NodeId)> {
    let x = b.input(&[NUM_FEATURES, INPUT_SIDE, INPUT_SIDE]);
    b.role = Role::Stem;
    let c = b.conv("stem.conv", x, STEM_CHANNELS, 3, 1, 1, true)?;
    let r = b.relu("stem.relu", c);
    Ok((x, r))
}

fn conv_relu(b: &mut Builder, name: &str, x: NodeId, cout: usize) -> Result<NodeId> {
    let c = b.conv(&format!("{name}.conv"), x, cout, 3, 1, 1, true)?;
    Ok(b.relu(&format!("{name}.relu"), c))
}

fn conv_bn_relu(b: &mut Builder, name: &str, x: NodeId, cout: usize, k: usize, stride: usize) -> Result<NodeId> {
    let c = b.conv(&format!("{name}.conv"), x, cout, k, stride, k / 2, false)?;
    let n = b.batch_norm(&format!("{name}.bn"), c)?;
    Ok(b.relu(&format!("{name}.relu"), n))
}

/// Transposed-conv decoder back to 32×32, then a 1×1 head.
fn mirrored_decoder(b: &mut Builder, mut x: NodeId, channels: &[usize]) -> Result<NodeId> {
    b.role = Role::Decoder;
    for (i, &c) in channels.iter().enumerate() {
        let u = b.conv_t(&format!("dec{}.up", i + 1), x, c, 2, 2, true)?;
        x = b.relu(&format!("dec{}.relu", i + 1), u);
    }
    b.role = Role::Head;
    b.conv("head.conv", x, 1, 1, 1, 0, true)
}

pub fn build_autoencoder(spec: &ModelSpec, seed: u64) -> Result<ModelGraph> {
    check_family(spec, Family::Autoencoder)?;
    let enc = scaled(spec, &AE_ENCODER)?;
    let dec = scaled(spec, &AE_DECODER)?;
    let mut b = Builder::new(seed);
    let (_, cam) = stem(&mut b)?;
    b.role = Role::Encoder;
    let mut x = cam;
    for (i, &c) in enc.iter().enumerate() {
        if i == enc.len() - 1 {
            b.role = Role::Bottleneck;
        }
        x = conv_relu(&mut b, &format!("enc{}", i + 1), x, c)?;
        // pooling stops at a 2×2 bottleneck
        if b.shape(x)[1] > 2 {
            x = b.maxpool(&format!("enc{}.pool", i + 1), x)?;
        }
    }
    let out = mirrored_decoder(&mut b, x, &dec)?;
    b.finish(spec.clone(), out, cam)
}

pub fn build_res_encoder_decoder(spec: &ModelSpec, seed: u64) -> Result<ModelGraph> {
    check_family(spec, Family::ResEncoderDecoder)?;
    let blocks = spec.blocks();
    if blocks.len() != RES_MIDS.len() || blocks.contains(&0) {
        return Err(Error::invalid(format!("resnet needs four positive block counts, got {blocks:?}")));
    }
    let mids = scaled(spec, &RES_MIDS)?;
    let dec = scaled(spec, &AE_DECODER)?;
    let mut b = Builder::new(seed);
    let (_, cam) = stem(&mut b)?;
    b.role = Role::Encoder;
    let mut x = b.maxpool("stem.pool", cam)?;
    for (s, (&mid, &count)) in mids.iter().zip(&blocks).enumerate() {
        if s == mids.len() - 1 {
            b.role = Role::Bottleneck;
        }
        let out = mid * RES_EXPANSION;
        let stride = if s == 0 { 1 } else { 2 };
        let p = format!("stage{}", s + 1);
        x = conv_bn_relu(&mut b, &format!("{p}.transition"), x, out, 1, stride)?;
        for k in 0..count {
            let q = format!("{p}.block{}", k + 1);
            let h = conv_bn_relu(&mut b, &format!("{q}.a"), x, mid, 1, 1)?;
            let h = conv_bn_relu(&mut b, &format!("{q}.b"), h, mid, 3, 1)?;
            let h = b.conv(&format!("{q}.c.conv"), h, out, 1, 1, 0, false)?;
            let h = b.batch_norm(&format!("{q}.c.bn"), h)?;
            let sum = b.add(&format!("{q}.add"), x, h)?;
            x = b.relu(&format!("{q}.relu"), sum);
        }
    }
    let out = mirrored_decoder(&mut b, x, &dec)?;
    b.finish(spec.clone(), out, cam)
}

pub fn build_unet(spec: &ModelSpec, seed: u64) -> Result<ModelGraph> {
    check_family(spec, Family::UNet)?;
    let levels = scaled(spec, &UNET_LEVELS)?;
    let rate = spec.dropout();
    let mut b = Builder::new(seed);
    let (_, cam) = stem(&mut b)?;
    b.role = Role::Encoder;
    let mut x = cam;
    let mut skips = Vec::new();
    let depth = levels.len();
    for (i, &c) in levels.iter().enumerate() {
        let name = format!("enc{}", i + 1);
        if i > 0 {
            x = b.maxpool(&format!("{name}.pool"), x)?;
        }
        if i == depth - 1 {
            b.role = Role::Bottleneck;
        }
        x = conv_bn_relu(&mut b, &name, x, c, 3, 1)?;
        if i >= depth - 2 {
            x = b.dropout(&format!("{name}.dropout"), x, rate)?;
        }
        skips.push(x);
    }
    b.role = Role::Decoder;
    for i in (0..depth - 1).rev() {
        let name = format!("dec{}", i + 1);
        let u = b.conv_t(&format!("{name}.up"), x, levels[i], 2, 2, true)?;
        let cat = b.concat(&format!("{name}.concat"), &[skips[i], u])?;
        x = conv_bn_relu(&mut b, &name, cat, levels[i], 3, 1)?;
    }
    b.role = Role::Head;
    let out = b.conv("head.conv", x, 1, 1, 1, 0, true)?;
    b.finish(spec.clone(), out, cam)
}

/// Effective `(window, shift)` for a grid side: the window is clamped to the
/// grid and shifting is disabled once one window covers it.
pub fn swin_window(spec: &ModelSpec, side: usize, shifted: bool) -> Result<AttentionLayout> {
    let window = spec.window().min(side);
    if window == 0 || side % window != 0 {
        return Err(Error::dim("swin", format!("grid side {side} is not divisible by window {window}")));
    }
    let shift = if shifted && spec.shift && window < side { window / 2 } else { 0 };
    Ok(AttentionLayout { heads: 0, window, shift })
}

fn swin_block(b: &mut Builder, spec: &ModelSpec, name: &str, x: NodeId, heads: usize, shifted: bool) -> Result<NodeId> {
    let (t, d) = (b.shape(x)[0], b.shape(x)[1]);
    let side = (t as f64).sqrt().round() as usize;
    let layout = AttentionLayout { heads, ..swin_window(spec, side, shifted)? };
    let n1 = b.layer_norm(&format!("{name}.norm1"), x)?;
    let qkv = b.dense(&format!("{name}.attn.qkv"), n1, 3 * d, true)?;
    let a = b.attention(&format!("{name}.attn.core"), qkv, layout)?;
    let a = b.dense(&format!("{name}.attn.proj"), a, d, true)?;
    let x = b.add(&format!("{name}.add1"), x, a)?;
    let n2 = b.layer_norm(&format!("{name}.norm2"), x)?;
    let h = b.dense(&format!("{name}.mlp.fc1"), n2, MLP_RATIO * d, true)?;
    let h = b.gelu(&format!("{name}.mlp.gelu"), h);
    let h = b.dense(&format!("{name}.mlp.fc2"), h, d, true)?;
    b.add(&format!("{name}.add2"), x, h)
}

fn swin_stage(b: &mut Builder, spec: &ModelSpec, name: &str, mut x: NodeId, heads: usize) -> Result<NodeId> {
    for k in 0..2 {
        x = swin_block(b, spec, &format!("{name}.block{}", k + 1), x, heads, k == 1)?;
    }
    Ok(x)
}

pub fn build_swin_unet(spec: &ModelSpec, seed: u64) -> Result<ModelGraph> {
    check_family(spec, Family::SwinUNet)?;
    let embed = spec.width_multiplier.channels(SWIN_EMBED)?;
    let heads0 = spec.heads();
    if heads0 == 0 || embed % heads0 != 0 {
        return Err(Error::invalid(format!("{heads0} heads do not divide embedding width {embed}")));
    }
    let mut b = Builder::new(seed);
    let (_, cam) = stem(&mut b)?;
    b.role = Role::Encoder;
    let p = b.conv("patch_embed.conv", cam, embed, 2, 2, 0, true)?;
    let t = b.to_tokens("patch_embed.tokens", p)?;
    let mut x = b.layer_norm("patch_embed.norm", t)?;
    let mut skips = Vec::new();
    let (mut d, mut heads) = (embed, heads0);
    for s in 0..SWIN_STAGES {
        x = swin_stage(&mut b, spec, &format!("enc{}", s + 1), x, heads)?;
        skips.push(x);
        let m = b.space_to_depth(&format!("merge{}.gather", s + 1), x)?;
        x = b.dense(&format!("merge{}.reduce", s + 1), m, 2 * d, false)?;
        d *= 2;
        heads *= 2;
    }
    b.role = Role::Bottleneck;
    x = swin_stage(&mut b, spec, "bottom", x, heads)?;
    b.role = Role::Decoder;
    for s in (0..SWIN_STAGES).rev() {
        let name = format!("dec{}", s + 1);
        let e = b.dense(&format!("{name}.expand"), x, 2 * d, false)?;
        let e = b.depth_to_space(&format!("{name}.scatter"), e)?;
        d /= 2;
        heads /= 2;
        let cat = b.concat(&format!("{name}.concat"), &[skips[s], e])?;
        let r = b.dense(&format!("{name}.reduce"), cat, d, true)?;
        x = swin_stage(&mut b, spec, &name, r, heads)?;
    }
    b.role = Role::Head;
    let e = b.dense("head.expand", x, 4 * STEM_CHANNELS, false)?;
    let e = b.depth_to_space("head.scatter", e)?;
    let o = b.dense("head.proj", e, 1, true)?;
    let out = b.to_nchw("head.map", o)?;
    b.finish(spec.clone(), out, cam)
}
