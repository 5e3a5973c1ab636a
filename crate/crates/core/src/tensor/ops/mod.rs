//! Differentiable operators. Each submodule adds recording methods to
//! [`Tape`](super::Tape) and provides the matching backward rule.

pub mod attention;
pub mod conv;
mod dense;
mod elementwise;
mod loss;
mod pool;
pub mod norm;
mod shape;

pub use attention::{AttentionLayout, WINDOW_MASK_VALUE};
pub use loss::LossDiagnostics;
pub use norm::{NormMode, RunningStats, BN_MOMENTUM};

use super::tape::{Node, Op};

pub(crate) fn backward(nodes: &[Node], node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    match &node.op {
        Op::Leaf => {}
        Op::Add(..)
        | Op::Sub(..)
        | Op::Mul(..)
        | Op::Scale(..)
        | Op::Sum(_)
        | Op::Mean(_)
        | Op::WeightedSum(..)
        | Op::Reshape(_)
        | Op::Relu(_)
        | Op::Gelu(_)
        | Op::Sigmoid(_)
        | Op::Softmax { .. }
        | Op::Dropout { .. } => elementwise::backward(nodes, node, g, grads),
        Op::Conv2d(s) => conv::conv2d_backward(nodes, s, g, grads),
        Op::ConvTranspose2d(s) => conv::conv_transpose2d_backward(nodes, s, g, grads),
        Op::MaxPool2d { x, argmax } => pool::backward(nodes, *x, argmax, g, grads),
        Op::BatchNorm(s) => norm::batch_norm_backward(nodes, s, g, grads),
        Op::LayerNorm(s) => norm::layer_norm_backward(nodes, s, g, grads),
        Op::Dense { x, w, b } => dense::backward(nodes, *x, *w, *b, g, grads),
        Op::Concat { .. }
        | Op::NchwToTokens(_)
        | Op::TokensToNchw(_)
        | Op::SpaceToDepth { .. }
        | Op::DepthToSpace { .. } => shape::backward(nodes, node, g, grads),
        Op::WindowAttention(s) => attention::backward(nodes, s, g, grads),
        Op::MaskedBce { logits, dlogits } => loss::backward(nodes, *logits, dlogits, g, grads),
    }
}
