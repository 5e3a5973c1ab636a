//! Layer graph shared by all families: build-time shape inference and
//! accounting, and a tape-recording interpreter for the forward pass.

use serde::Serialize;

use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::tensor::checkpoint;
use crate::tensor::ops::{conv, AttentionLayout, NormMode, RunningStats};
use crate::tensor::{Tape, Tensor, Var};

pub type NodeId = usize;

pub const NORM_EPS: f32 = 1e-5;

/// Position of a node in the encoder/decoder layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Stem,
    Encoder,
    Bottleneck,
    Decoder,
    Head,
}

#[derive(Clone, Debug)]
pub(crate) enum LayerOp {
    Input,
    Conv { w: usize, b: Option<usize>, stride: usize, pad: usize },
    ConvT { w: usize, b: Option<usize>, stride: usize, pad: usize },
    BatchNorm { gamma: usize, beta: usize, buffer: usize },
    LayerNorm { gamma: usize, beta: usize },
    Dense { w: usize, b: Option<usize> },
    Relu,
    Gelu,
    MaxPool,
    Dropout { rate: f32 },
    Add,
    Concat,
    ToTokens,
    ToNchw,
    SpaceToDepth,
    DepthToSpace,
    Attention(AttentionLayout),
}

#[derive(Clone, Debug)]
pub struct GraphNode {
    pub name: String,
    pub(crate) op: LayerOp,
    pub inputs: Vec<NodeId>,
    /// Per-sample output shape: `[C, H, W]` maps or `[T, D]` tokens.
    pub shape: Vec<usize>,
    pub role: Role,
}

/// Accounting record for one node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: &'static str,
    pub out_shape: Vec<usize>,
    pub params: usize,
    pub flops: u64,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug)]
pub struct Buffer {
    pub name: String,
    pub stats: RunningStats,
}

#[derive(Clone, Copy)]
enum Init {
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

/// Incremental graph construction with shape checks at every step.
pub(crate) struct Builder {
    nodes: Vec<GraphNode>,
    layers: Vec<LayerInfo>,
    params: Vec<Param>,
    buffers: Vec<Buffer>,
    pub role: Role,
    seed: u64,
}

fn numel(s: &[usize]) -> u64 {
    s.iter().product::<usize>() as u64
}

impl Builder {
    pub fn new(seed: u64) -> Self {
        Builder { nodes: Vec::new(), layers: Vec::new(), params: Vec::new(), buffers: Vec::new(), role: Role::Input, seed }
    }

    pub fn shape(&self, x: NodeId) -> &[usize] {
        &self.nodes[x].shape
    }

    fn param(&mut self, name: String, shape: &[usize], init: Init) -> Result<usize> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        let idx = self.params.len();
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Uniform { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                let mut rng = rng::stream(self.seed, Stream::Init, idx as u64);
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        self.params.push(Param { name, tensor: Tensor::new(shape, data)? });
        Ok(idx)
    }

    fn push(&mut self, name: &str, kind: &'static str, op: LayerOp, inputs: Vec<NodeId>, shape: Vec<usize>, params: usize, flops: u64) -> NodeId {
        self.layers.push(LayerInfo { name: name.to_string(), kind, out_shape: shape.clone(), params, flops });
        self.nodes.push(GraphNode { name: name.to_string(), op, inputs, shape, role: self.role });
        self.nodes.len() - 1
    }

    fn size(&self, id: usize) -> usize {
        self.params[id].tensor.numel()
    }

    fn map_shape(&self, op: &'static str, x: NodeId) -> Result<(usize, usize, usize)> {
        match *self.shape(x) {
            [c, h, w] => Ok((c, h, w)),
            ref s => Err(Error::dim(op, format!("expects a [C, H, W] map, got {s:?}"))),
        }
    }

    fn token_shape(&self, op: &'static str, x: NodeId) -> Result<(usize, usize)> {
        match *self.shape(x) {
            [t, d] => Ok((t, d)),
            ref s => Err(Error::dim(op, format!("expects [T, D] tokens, got {s:?}"))),
        }
    }

    pub fn input(&mut self, shape: &[usize]) -> NodeId {
        let role = std::mem::replace(&mut self.role, Role::Input);
        let id = self.push("input", "input", LayerOp::Input, vec![], shape.to_vec(), 0, 0);
        self.role = role;
        id
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(&mut self, name: &str, x: NodeId, cout: usize, k: usize, stride: usize, pad: usize, bias: bool) -> Result<NodeId> {
        let (cin, h, w) = self.map_shape("conv2d", x)?;
        let (Some(ho), Some(wo)) = (conv::conv_out(h, k, stride, pad), conv::conv_out(w, k, stride, pad)) else {
            return Err(Error::dim("conv2d", format!("{name}: kernel {k} stride {stride} does not fit {h}x{w}")));
        };
        let wi = self.param(format!("{name}.weight"), &[cout, cin, k, k], Init::Uniform { fan_in: cin * k * k })?;
        let bi = if bias { Some(self.param(format!("{name}.bias"), &[cout], Init::Zeros)?) } else { None };
        let params = self.size(wi) + bi.map_or(0, |b| self.size(b));
        let flops = 2 * (k * k * cin * cout * ho * wo) as u64;
        Ok(self.push(name, "conv2d", LayerOp::Conv { w: wi, b: bi, stride, pad }, vec![x], vec![cout, ho, wo], params, flops))
    }

    /// Transposed convolution; FLOPs are counted over input positions.
    pub fn conv_t(&mut self, name: &str, x: NodeId, cout: usize, k: usize, stride: usize, bias: bool) -> Result<NodeId> {
        let (cin, h, w) = self.map_shape("conv2d_transpose", x)?;
        let (Some(ho), Some(wo)) = (conv::conv_transpose_out(h, k, stride, 0), conv::conv_transpose_out(w, k, stride, 0)) else {
            return Err(Error::dim("conv2d_transpose", format!("{name}: invalid geometry for {h}x{w}")));
        };
        let fan_in = (cin * k * k / (stride * stride)).max(1);
        let wi = self.param(format!("{name}.weight"), &[cin, cout, k, k], Init::Uniform { fan_in })?;
        let bi = if bias { Some(self.param(format!("{name}.bias"), &[cout], Init::Zeros)?) } else { None };
        let params = self.size(wi) + bi.map_or(0, |b| self.size(b));
        let flops = 2 * (k * k * cin * cout * h * w) as u64;
        let op = LayerOp::ConvT { w: wi, b: bi, stride, pad: 0 };
        Ok(self.push(name, "conv2d_transpose", op, vec![x], vec![cout, ho, wo], params, flops))
    }

    pub fn batch_norm(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let (c, _, _) = self.map_shape("batch_norm", x)?;
        let gamma = self.param(format!("{name}.gamma"), &[c], Init::Ones)?;
        let beta = self.param(format!("{name}.beta"), &[c], Init::Zeros)?;
        self.buffers.push(Buffer { name: name.to_string(), stats: RunningStats::new(c) });
        let buffer = self.buffers.len() - 1;
        let shape = self.shape(x).to_vec();
        let flops = 2 * numel(&shape);
        Ok(self.push(name, "batch_norm", LayerOp::BatchNorm { gamma, beta, buffer }, vec![x], shape, 2 * c, flops))
    }

    pub fn layer_norm(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let (_, d) = self.token_shape("layer_norm", x)?;
        let gamma = self.param(format!("{name}.gamma"), &[d], Init::Ones)?;
        let beta = self.param(format!("{name}.beta"), &[d], Init::Zeros)?;
        let shape = self.shape(x).to_vec();
        let flops = 2 * numel(&shape);
        Ok(self.push(name, "layer_norm", LayerOp::LayerNorm { gamma, beta }, vec![x], shape, 2 * d, flops))
    }

    pub fn dense(&mut self, name: &str, x: NodeId, dout: usize, bias: bool) -> Result<NodeId> {
        let (t, din) = self.token_shape("dense", x)?;
        let wi = self.param(format!("{name}.weight"), &[din, dout], Init::Uniform { fan_in: din })?;
        let bi = if bias { Some(self.param(format!("{name}.bias"), &[dout], Init::Zeros)?) } else { None };
        let params = self.size(wi) + bi.map_or(0, |b| self.size(b));
        let flops = 2 * (din * dout * t) as u64;
        Ok(self.push(name, "dense", LayerOp::Dense { w: wi, b: bi }, vec![x], vec![t, dout], params, flops))
    }

    fn elementwise(&mut self, name: &str, kind: &'static str, op: LayerOp, x: NodeId) -> NodeId {
        let shape = self.shape(x).to_vec();
        let flops = 2 * numel(&shape);
        self.push(name, kind, op, vec![x], shape, 0, flops)
    }

    pub fn relu(&mut self, name: &str, x: NodeId) -> NodeId {
        self.elementwise(name, "relu", LayerOp::Relu, x)
    }

    pub fn gelu(&mut self, name: &str, x: NodeId) -> NodeId {
        self.elementwise(name, "gelu", LayerOp::Gelu, x)
    }

    pub fn dropout(&mut self, name: &str, x: NodeId, rate: f32) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(name, "dropout", LayerOp::Dropout { rate }, vec![x], shape, 0, 0))
    }

    pub fn maxpool(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.map_shape("maxpool2d", x)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::dim("maxpool2d", format!("{name}: odd spatial size {h}x{w}")));
        }
        Ok(self.push(name, "maxpool2d", LayerOp::MaxPool, vec![x], vec![c, h / 2, w / 2], 0, 0))
    }

    pub fn add(&mut self, name: &str, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", format!("{name}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let shape = self.shape(a).to_vec();
        let flops = 2 * numel(&shape);
        Ok(self.push(name, "add", LayerOp::Add, vec![a, b], shape, 0, flops))
    }

    /// Channel concat for maps, feature concat for tokens.
    pub fn concat(&mut self, name: &str, xs: &[NodeId]) -> Result<NodeId> {
        let first = self.shape(xs[0]).to_vec();
        let axis = if first.len() == 3 { 0 } else { first.len() - 1 };
        let mut shape = first.clone();
        shape[axis] = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len() || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(Error::dim("concat", format!("{name}: {s:?} incompatible with {first:?}")));
            }
            shape[axis] += s[axis];
        }
        Ok(self.push(name, "concat", LayerOp::Concat, xs.to_vec(), shape, 0, 0))
    }

    pub fn to_tokens(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.map_shape("nchw_to_tokens", x)?;
        Ok(self.push(name, "reshape", LayerOp::ToTokens, vec![x], vec![h * w, c], 0, 0))
    }

    pub fn to_nchw(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let (t, d) = self.token_shape("tokens_to_nchw", x)?;
        let side = grid_side(t)?;
        Ok(self.push(name, "reshape", LayerOp::ToNchw, vec![x], vec![d, side, side], 0, 0))
    }

    pub fn space_to_depth(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let (t, d) = self.token_shape("space_to_depth", x)?;
        let side = grid_side(t)?;
        if side % 2 != 0 {
            return Err(Error::dim("patch_merge", format!("{name}: grid side {side} not divisible by 2")));
        }
        Ok(self.push(name, "reshape", LayerOp::SpaceToDepth, vec![x], vec![t / 4, 4 * d], 0, 0))
    }

    pub fn depth_to_space(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let (t, d) = self.token_shape("depth_to_space", x)?;
        grid_side(t)?;
        if d % 4 != 0 {
            return Err(Error::dim("patch_expand", format!("{name}: {d} features not divisible by 4")));
        }
        Ok(self.push(name, "reshape", LayerOp::DepthToSpace, vec![x], vec![t * 4, d / 4], 0, 0))
    }

    /// Attention core over packed QKV tokens `[T, 3D]`.
    pub fn attention(&mut self, name: &str, qkv: NodeId, layout: AttentionLayout) -> Result<NodeId> {
        let (t, d3) = self.token_shape("window_attention", qkv)?;
        let side = grid_side(t)?;
        let d = d3 / 3;
        layout.validate(side, d)?;
        let tw = (layout.window * layout.window) as u64;
        let flops = 4 * tw * (t * d) as u64;
        Ok(self.push(name, "window_attention", LayerOp::Attention(layout), vec![qkv], vec![t, d], 0, flops))
    }

    #[cfg(test)]
    pub fn finish_unchecked(self) -> ModelGraph {
        let spec = ModelSpec::desk(super::Family::Autoencoder);
        ModelGraph {
            spec,
            seed: self.seed,
            nodes: self.nodes,
            layers: self.layers,
            params: self.params,
            buffers: self.buffers,
            output: 0,
            cam_target: 0,
            frozen: false,
        }
    }

    pub fn finish(self, spec: ModelSpec, output: NodeId, cam_target: NodeId) -> Result<ModelGraph> {
        if self.shape(output) != [1, 32, 32] {
            return Err(Error::dim("build", format!("output shape {:?}, expected [1, 32, 32]", self.shape(output))));
        }
        Ok(ModelGraph {
            spec,
            seed: self.seed,
            nodes: self.nodes,
            layers: self.layers,
            params: self.params,
            buffers: self.buffers,
            output,
            cam_target,
            frozen: false,
        })
    }
}

fn grid_side(t: usize) -> Result<usize> {
    let side = (t as f64).sqrt().round() as usize;
    if side * side != t {
        return Err(Error::dim("tokens", format!("{t} tokens do not form a square grid")));
    }
    Ok(side)
}

/// Per-call forward options: mode, dropout seed and ablation hooks.
#[derive(Clone, Debug)]
pub struct ForwardCtx {
    pub mode: NormMode,
    pub seed: u64,
    pub params_require_grad: bool,
    /// Nodes whose output is replaced by zeros.
    pub zero_nodes: Vec<NodeId>,
    /// Additive per-sample offsets applied to node outputs.
    pub offsets: Vec<(NodeId, Tensor)>,
    /// `(from, to)` edges along which zeros are passed instead of the value.
    pub cut_edges: Vec<(NodeId, NodeId)>,
    pub(crate) bn_updates: Vec<Option<RunningStats>>,
}

impl ForwardCtx {
    pub fn train(seed: u64) -> Self {
        ForwardCtx {
            mode: NormMode::Train,
            seed,
            params_require_grad: true,
            zero_nodes: Vec::new(),
            offsets: Vec::new(),
            cut_edges: Vec::new(),
            bn_updates: Vec::new(),
        }
    }

    pub fn eval() -> Self {
        ForwardCtx { mode: NormMode::Eval, params_require_grad: false, ..Self::train(0) }
    }
}

/// Tape handles produced by one forward pass.
pub struct Forward {
    pub logits: Var,
    /// One handle per parameter, in [`ModelGraph::params`] order.
    pub params: Vec<Var>,
    /// One handle per graph node.
    pub nodes: Vec<Var>,
}

/// A built architecture: layer graph, parameters and normalization buffers.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    spec: ModelSpec,
    seed: u64,
    nodes: Vec<GraphNode>,
    layers: Vec<LayerInfo>,
    params: Vec<Param>,
    buffers: Vec<Buffer>,
    output: NodeId,
    cam_target: NodeId,
    frozen: bool,
}

impl ModelGraph {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn init_seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer] {
        &self.buffers
    }

    /// Post-activation output of the first convolution (16 channels).
    pub fn cam_target(&self) -> NodeId {
        self.cam_target
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// FLOPs of one forward pass on a single `12×32×32` input.
    pub fn flop_estimate(&self) -> u64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Edges from stem/encoder nodes straight into decoder/head nodes.
    pub fn skip_connections(&self) -> Vec<(String, String)> {
        let early = |r: Role| matches!(r, Role::Stem | Role::Encoder);
        let late = |r: Role| matches!(r, Role::Decoder | Role::Head);
        let mut out = Vec::new();
        for n in &self.nodes {
            for &i in &n.inputs {
                if late(n.role) && early(self.nodes[i].role) {
                    out.push((self.nodes[i].name.clone(), n.name.clone()));
                }
            }
        }
        out
    }

    pub fn forward(&self, tape: &mut Tape, input: Var, ctx: &mut ForwardCtx) -> Result<Forward> {
        let train = ctx.mode == NormMode::Train;
        if train && self.frozen {
            return Err(Error::invalid("train-mode forward on a frozen model"));
        }
        let in_shape = tape.shape(input).to_vec();
        if in_shape.len() != 4 || in_shape[1..] != self.nodes[0].shape[..] {
            return Err(Error::dim("forward", format!("input {in_shape:?}, expected [N, {:?}]", self.nodes[0].shape)));
        }
        let n = in_shape[0];
        let params: Vec<Var> =
            self.params.iter().map(|p| tape.input(p.tensor.clone(), ctx.params_require_grad)).collect();
        ctx.bn_updates = vec![None; self.buffers.len()];
        let mut vals: Vec<Var> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let mut ins = Vec::with_capacity(node.inputs.len());
            for &i in &node.inputs {
                if ctx.cut_edges.contains(&(i, id)) {
                    let z = Tensor::zeros(tape.shape(vals[i]))?;
                    ins.push(tape.input(z, false));
                } else {
                    ins.push(vals[i]);
                }
            }
            let x0 = || ins[0];
            let mut v = match &node.op {
                LayerOp::Input => input,
                LayerOp::Conv { w, b, stride, pad } => {
                    tape.conv2d(x0(), params[*w], b.map(|b| params[b]), *stride, *pad)?
                }
                LayerOp::ConvT { w, b, stride, pad } => {
                    tape.conv_transpose2d(x0(), params[*w], b.map(|b| params[b]), *stride, *pad)?
                }
                LayerOp::BatchNorm { gamma, beta, buffer } => {
                    let mut stats = self.buffers[*buffer].stats.clone();
                    let y = tape.batch_norm(x0(), params[*gamma], params[*beta], NORM_EPS, ctx.mode, &mut stats)?;
                    if train {
                        ctx.bn_updates[*buffer] = Some(stats);
                    }
                    y
                }
                LayerOp::LayerNorm { gamma, beta } => tape.layer_norm(x0(), params[*gamma], params[*beta], NORM_EPS)?,
                LayerOp::Dense { w, b } => tape.dense(x0(), params[*w], b.map(|b| params[b]))?,
                LayerOp::Relu => tape.relu(x0())?,
                LayerOp::Gelu => tape.gelu(x0())?,
                LayerOp::MaxPool => tape.maxpool2d(x0(), 2)?,
                LayerOp::Dropout { rate } => tape.dropout(x0(), *rate, rng::mix(ctx.seed, id as u64), train)?,
                LayerOp::Add => tape.add(ins[0], ins[1])?,
                LayerOp::Concat => {
                    let axis = if node.shape.len() == 3 { 1 } else { node.shape.len() };
                    tape.concat(&ins, axis)?
                }
                LayerOp::ToTokens => tape.nchw_to_tokens(x0())?,
                LayerOp::ToNchw => tape.tokens_to_nchw(x0())?,
                LayerOp::SpaceToDepth => tape.space_to_depth(x0())?,
                LayerOp::DepthToSpace => tape.depth_to_space(x0())?,
                LayerOp::Attention(layout) => tape.window_attention_core(x0(), *layout)?,
            };
            if ctx.zero_nodes.contains(&id) {
                v = tape.scale(v, 0.0)?;
            }
            for (target, off) in &ctx.offsets {
                if *target == id {
                    if off.shape() != node.shape.as_slice() {
                        return Err(Error::dim("offset hook", format!("{:?} vs node {:?}", off.shape(), node.shape)));
                    }
                    let mut full = Vec::with_capacity(n * off.numel());
                    for _ in 0..n {
                        full.extend_from_slice(off.data());
                    }
                    let c = tape.input(Tensor::new(tape.shape(v), full)?, false);
                    v = tape.add(v, c)?;
                }
            }
            vals.push(v);
        }
        Ok(Forward { logits: vals[self.output], params, nodes: vals })
    }

    /// Commits running statistics gathered by a train-mode forward.
    pub fn apply_bn_updates(&mut self, ctx: &mut ForwardCtx) {
        for (buf, upd) in self.buffers.iter_mut().zip(ctx.bn_updates.drain(..)) {
            if let Some(s) = upd {
                buf.stats = s;
            }
        }
    }

    /// Parameters followed by running statistics, as named tensors.
    pub fn state_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self.params.iter().map(|p| (p.name.clone(), p.tensor.clone())).collect();
        for b in &self.buffers {
            let c = b.stats.mean.len();
            out.push((format!("{}.running_mean", b.name), Tensor::new(&[c], b.stats.mean.clone()).expect("c > 0")));
            out.push((format!("{}.running_var", b.name), Tensor::new(&[c], b.stats.var.clone()).expect("c > 0")));
        }
        out
    }

    pub fn load_state(&mut self, state: &[(String, Tensor)]) -> Result<()> {
        let expected = self.state_tensors();
        if state.len() != expected.len() {
            return Err(Error::invalid(format!("checkpoint holds {} tensors, model needs {}", state.len(), expected.len())));
        }
        for ((name, t), (en, et)) in state.iter().zip(&expected) {
            if name != en || t.shape() != et.shape() {
                return Err(Error::invalid(format!("checkpoint tensor {name} {:?} does not match {en} {:?}", t.shape(), et.shape())));
            }
        }
        let np = self.params.len();
        for (p, (_, t)) in self.params.iter_mut().zip(state) {
            p.tensor = t.clone();
        }
        for (b, pair) in self.buffers.iter_mut().zip(state[np..].chunks_exact(2)) {
            b.stats.mean = pair[0].1.data().to_vec();
            b.stats.var = pair[1].1.data().to_vec();
        }
        Ok(())
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let state = self.state_tensors();
        checkpoint::encode(state.iter().map(|(n, t)| (n.as_str(), t)))
    }

    pub fn load_checkpoint_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.load_state(&checkpoint::decode(bytes)?)
    }
}
