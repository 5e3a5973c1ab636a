use crate::error::{Error, Result};
use crate::tensor::tape::{accumulate, Node, Op};
use crate::tensor::{Tape, Var};

impl Tape {
    /// Non-overlapping `window×window` max pooling. Spatial extents must be
    /// multiples of `window`; ties resolve to the first cell in row-major
    /// window order, which also receives the gradient.
    pub fn maxpool2d(&mut self, x: Var, window: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::dim("maxpool2d", format!("input must be NCHW, got {s:?}")));
        }
        if window == 0 || s[2] % window != 0 || s[3] % window != 0 {
            return Err(Error::dim(
                "maxpool2d",
                format!("spatial size {}x{} (axes 2,3) not divisible by window {window}", s[2], s[3]),
            ));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h / window, w / window);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(planes * ho * wo);
        let mut argmax = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * window * w + ox * window;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = base + (oy * window + dy) * w + ox * window + dx;
                            if xv[idx] > xv[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best as u32);
                }
            }
        }
        self.push("maxpool2d", vec![s[0], s[1], ho, wo], out, Op::MaxPool2d { x, argmax })
    }
}

pub(super) fn backward(nodes: &[Node], x: Var, argmax: &[u32], g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    accumulate(nodes, grads, x, |d| {
        for (&idx, &gv) in argmax.iter().zip(g) {
            d[idx as usize] += gv;
        }
    });
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn single_window() {
        let mut t = Tape::new();
        let x = t.input(Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), false);
        let y = t.maxpool2d(x, 2).unwrap();
        assert_eq!(t.value(y), &[4.0]);
    }

    #[test]
    fn constant_input_routes_to_first_cell() {
        let mut t = Tape::new();
        let x = t.input(Tensor::full(&[1, 1, 4, 4], 0.5).unwrap(), true);
        let y = t.maxpool2d(x, 2).unwrap();
        assert_eq!(t.value(y), &[0.5; 4]);
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        let mut want = vec![0.0; 16];
        for i in [0, 2, 8, 10] {
            want[i] = 1.0;
        }
        assert_eq!(g.get(x).unwrap(), want.as_slice());
    }

    #[test]
    fn odd_size_is_rejected() {
        let mut t = Tape::new();
        let x = t.input(Tensor::zeros(&[1, 1, 3, 4]).unwrap(), false);
        assert!(t.maxpool2d(x, 2).is_err());
    }
}
