use super::ops::{self, attention::AttentionSaved, conv::ConvSaved, norm::NormSaved};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub requires_grad: bool,
    pub op: Op,
}

/// Operation that produced a node, with whatever the backward rule needs.
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Sum(Var),
    Mean(Var),
    WeightedSum(Var, Vec<f32>),
    Reshape(Var),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Softmax { x: Var, outer: usize, axis: usize, inner: usize },
    Dropout { x: Var, mask: Vec<f32> },
    Conv2d(ConvSaved),
    ConvTranspose2d(ConvSaved),
    MaxPool2d { x: Var, argmax: Vec<u32> },
    BatchNorm(NormSaved),
    LayerNorm(NormSaved),
    Dense { x: Var, w: Var, b: Option<Var> },
    Concat { inputs: Vec<Var>, outer: usize, inners: Vec<usize> },
    NchwToTokens(Var),
    TokensToNchw(Var),
    SpaceToDepth { x: Var, side: usize },
    DepthToSpace { x: Var, side: usize },
    WindowAttention(AttentionSaved),
    /// Precomputed d(loss)/d(logit); the loss is linear in its upstream grad.
    MaskedBce { logits: Var, dlogits: Vec<f32> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::WeightedSum(a, _)
            | Op::Reshape(a)
            | Op::Relu(a)
            | Op::Gelu(a)
            | Op::Sigmoid(a)
            | Op::NchwToTokens(a)
            | Op::TokensToNchw(a) => vec![*a],
            Op::Softmax { x, .. }
            | Op::Dropout { x, .. }
            | Op::MaxPool2d { x, .. }
            | Op::SpaceToDepth { x, .. }
            | Op::DepthToSpace { x, .. } => vec![*x],
            Op::Conv2d(s) | Op::ConvTranspose2d(s) => {
                let mut v = vec![s.x, s.w];
                v.extend(s.b);
                v
            }
            Op::BatchNorm(s) | Op::LayerNorm(s) => vec![s.x, s.gamma, s.beta],
            Op::Dense { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(*b);
                v
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::WindowAttention(s) => vec![s.qkv],
            Op::MaskedBce { logits, .. } => vec![*logits],
        }
    }
}

/// Ordered record of executed operations.
///
/// Nodes are appended in execution order, so every node's inputs precede it
/// and a single reverse sweep visits each node once.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, numel: usize) -> Vec<f32> {
        self.get(v).map(<[f32]>::to_vec).unwrap_or_else(|| vec![0.0; numel])
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f32>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records `t` as an input; it participates in backward iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_unchecked(t.shape().to_vec(), t.data().to_vec(), t.requires_grad(), Op::Leaf)
    }

    /// Records an owned tensor as an input.
    pub fn input(&mut self, t: Tensor, requires_grad: bool) -> Var {
        let shape = t.shape().to_vec();
        self.push_unchecked(shape, t.into_data(), requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[f32] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("tape node holds a consistent shape")
    }

    fn push_unchecked(&mut self, shape: Vec<usize>, value: Vec<f32>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Appends an op result after checking it is finite.
    pub(crate) fn push(&mut self, name: &'static str, shape: Vec<usize>, value: Vec<f32>, op: Op) -> Result<Var> {
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(shape, value, requires_grad, op))
    }

    /// Reverse sweep from a scalar `loss`. The tape is consumed: saved
    /// activations are released and a second call is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let grads = self.backward_retained(loss)?;
        self.consumed = true;
        for node in &mut self.nodes {
            node.op = Op::Leaf;
        }
        Ok(grads)
    }

    /// Reverse sweep that keeps the tape usable for further sweeps.
    pub fn backward_retained(&self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss { shape: root.shape.clone() });
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                ops::backward(&self.nodes, node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Adds into the gradient buffer of `v` when it takes part in backward.
pub(crate) fn accumulate(
    nodes: &[Node],
    grads: &mut [Option<Vec<f32>>],
    v: Var,
    f: impl FnOnce(&mut [f32]),
) {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return;
    }
    let buf = grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
    f(buf);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(t: &mut Tape, data: &[f32]) -> Var {
        t.input(Tensor::new(&[data.len()], data.to_vec()).unwrap(), true)
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let x = var(&mut t, &[1.0, -2.0, 3.0]);
        let s = t.sum(x).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_is_two_x() {
        let mut t = Tape::new();
        let x = var(&mut t, &[1.0, 2.0, 3.0]);
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = var(&mut t, &[1.0, 2.0]);
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn second_backward_needs_retention() {
        let mut t = Tape::new();
        let x = var(&mut t, &[1.0, 2.0]);
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq).unwrap();
        let g1 = t.backward_retained(s).unwrap();
        let g2 = t.backward_retained(s).unwrap();
        assert_eq!(g1.get(x), g2.get(x));
        t.backward(s).unwrap();
        assert!(matches!(t.backward(s), Err(Error::TapeConsumed)));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.input(Tensor::new(&[2], vec![1.0, 2.0]).unwrap(), false);
        let x = var(&mut t, &[3.0, 4.0]);
        let p = t.mul(c, x).unwrap();
        let s = t.sum(p).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap(), &[1.0, 2.0]);
    }
}
