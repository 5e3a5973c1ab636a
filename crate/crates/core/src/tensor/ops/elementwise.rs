use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::tensor::tape::{accumulate, Node, Op};
use crate::tensor::{Tape, Var};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl Tape {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push("add", self.shape(a).to_vec(), v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        self.push("sub", self.shape(a).to_vec(), v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        self.push("mul", self.shape(a).to_vec(), v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Result<Var> {
        let v = self.value(a).iter().map(|x| x * c).collect();
        self.push("scale", self.shape(a).to_vec(), v, Op::Scale(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).iter().map(|&x| x as f64).sum();
        self.push("sum", vec![], vec![s as f32], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len() as f64;
        let s: f64 = self.value(a).iter().map(|&x| x as f64).sum();
        self.push("mean", vec![], vec![(s / n) as f32], Op::Mean(a))
    }

    /// Scalar `Σ wᵢ·xᵢ`, accumulated in f64.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<f32>) -> Result<Var> {
        if weights.len() != self.value(a).len() {
            return Err(Error::dim(
                "weighted_sum",
                format!("{} weights for {} values", weights.len(), self.value(a).len()),
            ));
        }
        let s: f64 = self.value(a).iter().zip(&weights).map(|(&x, &w)| x as f64 * w as f64).sum();
        self.push("weighted_sum", vec![], vec![s as f32], Op::WeightedSum(a, weights))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() || shape.contains(&0) {
            return Err(Error::dim("reshape", format!("{:?} -> {shape:?}", self.shape(a))));
        }
        let v = self.value(a).to_vec();
        self.push("reshape", shape.to_vec(), v, Op::Reshape(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        self.push("relu", self.shape(a).to_vec(), v, Op::Relu(a))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let v = self
            .value(a)
            .iter()
            .map(|&x| {
                let x = x as f64;
                (0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())) as f32
            })
            .collect();
        self.push("gelu", self.shape(a).to_vec(), v, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| sigmoid(x as f64) as f32).collect();
        self.push("sigmoid", self.shape(a).to_vec(), v, Op::Sigmoid(a))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.value(a);
        let mut y = vec![0.0f32; x.len()];
        let mut row = vec![0.0f64; len];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| x[at(k)]).fold(f32::NEG_INFINITY, f32::max) as f64;
                let mut z = 0.0f64;
                for k in 0..len {
                    row[k] = (x[at(k)] as f64 - max).exp();
                    z += row[k];
                }
                for k in 0..len {
                    y[at(k)] = (row[k] / z) as f32;
                }
            }
        }
        self.push("softmax", shape, y, Op::Softmax { x: a, outer, axis: len, inner })
    }

    /// Inverted dropout. In eval mode (`train == false`) or with `rate == 0`
    /// the input handle is returned unchanged.
    pub fn dropout(&mut self, a: Var, rate: f32, seed: u64, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mut rng = rng::stream(seed, Stream::Dropout, 0);
        let mask: Vec<f32> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { keep_scale })
            .collect();
        let v = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        self.push("dropout", self.shape(a).to_vec(), v, Op::Dropout { x: a, mask })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(super) fn backward(nodes: &[Node], node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    match &node.op {
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, |d| add_into(d, g));
            accumulate(nodes, grads, *b, |d| add_into(d, g));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, |d| add_into(d, g));
            accumulate(nodes, grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[a.index()].value, &nodes[b.index()].value);
            accumulate(nodes, grads, *a, |d| {
                d.iter_mut().zip(g).zip(vb).for_each(|((d, g), y)| *d += g * y)
            });
            accumulate(nodes, grads, *b, |d| {
                d.iter_mut().zip(g).zip(va).for_each(|((d, g), x)| *d += g * x)
            });
        }
        Op::Scale(a, c) => accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g * c)),
        Op::Sum(a) => accumulate(nodes, grads, *a, |d| d.iter_mut().for_each(|d| *d += g[0])),
        Op::Mean(a) => {
            let n = nodes[a.index()].value.len() as f32;
            accumulate(nodes, grads, *a, |d| d.iter_mut().for_each(|d| *d += g[0] / n))
        }
        Op::WeightedSum(a, w) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(w).for_each(|(d, w)| *d += g[0] * w))
        }
        Op::Reshape(a) => accumulate(nodes, grads, *a, |d| add_into(d, g)),
        Op::Relu(a) => {
            let x = &nodes[a.index()].value;
            accumulate(nodes, grads, *a, |d| {
                for i in 0..d.len() {
                    if x[i] > 0.0 {
                        d[i] += g[i];
                    }
                }
            })
        }
        Op::Gelu(a) => {
            let x = &nodes[a.index()].value;
            accumulate(nodes, grads, *a, |d| {
                for i in 0..d.len() {
                    let x = x[i] as f64;
                    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                    let dt = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dt;
                    d[i] += (g[i] as f64 * dy) as f32;
                }
            })
        }
        Op::Sigmoid(a) => {
            let y = &node.value;
            accumulate(nodes, grads, *a, |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            })
        }
        Op::Softmax { x, outer, axis, inner } => {
            let y = &node.value;
            let (outer, len, inner) = (*outer, *axis, *inner);
            accumulate(nodes, grads, *x, |d| {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let dot: f64 = (0..len).map(|k| g[at(k)] as f64 * y[at(k)] as f64).sum();
                        for k in 0..len {
                            d[at(k)] += (y[at(k)] as f64 * (g[at(k)] as f64 - dot)) as f32;
                        }
                    }
                }
            })
        }
        Op::Dropout { x, mask } => {
            accumulate(nodes, grads, *x, |d| d.iter_mut().zip(g).zip(mask).for_each(|((d, g), m)| *d += g * m))
        }
        _ => unreachable!("not an elementwise op"),
    }
}

pub(crate) fn add_into(d: &mut [f32], g: &[f32]) {
    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
}
