use crate::error::{Error, Result};
use crate::tensor::gemm::sgemm;
use crate::tensor::tape::{accumulate, Node, Op};
use crate::tensor::{Tape, Var};

impl Tape {
    /// Affine map over the last axis: `x[..., Din] · w[Din, Dout] + b[Dout]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let Some(&din) = xs.last() else {
            return Err(Error::dim("dense", "input must have at least one axis"));
        };
        if ws.len() != 2 || ws[0] != din {
            return Err(Error::dim("dense", format!("weight {ws:?} does not map last axis of {xs:?}")));
        }
        let dout = ws[1];
        if let Some(b) = b {
            if self.shape(b) != [dout] {
                return Err(Error::dim("dense", format!("bias {:?} expected [{dout}]", self.shape(b))));
            }
        }
        let rows = self.value(x).len() / din;
        let mut out = vec![0.0f32; rows * dout];
        if let Some(b) = b {
            let bv = self.value(b);
            for r in 0..rows {
                out[r * dout..(r + 1) * dout].copy_from_slice(bv);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        sgemm(rows, din, dout, self.value(x), false, self.value(w), false, &mut out, beta);
        let mut shape = xs;
        *shape.last_mut().unwrap() = dout;
        self.push("dense", shape, out, Op::Dense { x, w, b })
    }
}

pub(super) fn backward(nodes: &[Node], x: Var, w: Var, b: Option<Var>, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    let ws = &nodes[w.index()].shape;
    let (din, dout) = (ws[0], ws[1]);
    let rows = g.len() / dout;
    let wv = &nodes[w.index()].value;
    let xv = &nodes[x.index()].value;
    accumulate(nodes, grads, x, |d| sgemm(rows, dout, din, g, false, wv, true, d, 1.0));
    accumulate(nodes, grads, w, |d| sgemm(din, rows, dout, xv, true, g, false, d, 1.0));
    if let Some(b) = b {
        accumulate(nodes, grads, b, |d| {
            let mut acc = vec![0.0f64; dout];
            for r in 0..rows {
                for (a, &v) in acc.iter_mut().zip(&g[r * dout..(r + 1) * dout]) {
                    *a += v as f64;
                }
            }
            d.iter_mut().zip(&acc).for_each(|(d, a)| *d += *a as f32);
        });
    }
}
