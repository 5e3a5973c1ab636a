//! Concatenation and layout permutations between NCHW maps and token grids.

use crate::error::{Error, Result};
use crate::tensor::tape::{accumulate, Node, Op};
use crate::tensor::{Tape, Var};

#[derive(Clone, Copy)]
enum Perm {
    NchwToTokens,
    TokensToNchw { side: usize },
    SpaceToDepth { side: usize },
    DepthToSpace { side: usize },
}

/// Gather map: `out[i] = in[idx[i]]`.
fn gather_index(p: Perm, in_shape: &[usize]) -> Vec<usize> {
    let mut idx = Vec::with_capacity(in_shape.iter().product());
    match p {
        Perm::NchwToTokens => {
            let (n, c, hw) = (in_shape[0], in_shape[1], in_shape[2] * in_shape[3]);
            for b in 0..n {
                for t in 0..hw {
                    for ch in 0..c {
                        idx.push((b * c + ch) * hw + t);
                    }
                }
            }
        }
        Perm::TokensToNchw { side } => {
            let (n, t, c) = (in_shape[0], side * side, in_shape[2]);
            for b in 0..n {
                for ch in 0..c {
                    for tok in 0..t {
                        idx.push((b * t + tok) * c + ch);
                    }
                }
            }
        }
        // Sub-token order within a 2x2 group: (0,0), (1,0), (0,1), (1,1) as (row, col).
        Perm::SpaceToDepth { side } => {
            let (n, d, half) = (in_shape[0], in_shape[2], side / 2);
            for b in 0..n {
                for oy in 0..half {
                    for ox in 0..half {
                        for k in 0..4 {
                            let (dy, dx) = (k % 2, k / 2);
                            let tok = (2 * oy + dy) * side + 2 * ox + dx;
                            for ch in 0..d {
                                idx.push((b * side * side + tok) * d + ch);
                            }
                        }
                    }
                }
            }
        }
        Perm::DepthToSpace { side } => {
            let (n, d4) = (in_shape[0], in_shape[2]);
            let d = d4 / 4;
            let big = 2 * side;
            for b in 0..n {
                for y in 0..big {
                    for x in 0..big {
                        let k = (y % 2) + 2 * (x % 2);
                        let tok = (y / 2) * side + x / 2;
                        for ch in 0..d {
                            idx.push((b * side * side + tok) * d4 + k * d + ch);
                        }
                    }
                }
            }
        }
    }
    idx
}

fn grid_side(op: &'static str, shape: &[usize]) -> Result<usize> {
    if shape.len() != 3 {
        return Err(Error::dim(op, format!("tokens must be [N, T, D], got {shape:?}")));
    }
    let side = (shape[1] as f64).sqrt().round() as usize;
    if side * side != shape[1] {
        return Err(Error::dim(op, format!("token count {} (axis 1) is not a square grid", shape[1])));
    }
    Ok(side)
}

impl Tape {
    fn permute(&mut self, name: &'static str, x: Var, p: Perm, shape: Vec<usize>, op: Op) -> Result<Var> {
        let idx = gather_index(p, self.shape(x));
        let xv = self.value(x);
        let out = idx.iter().map(|&i| xv[i]).collect();
        self.push(name, shape, out, op)
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::invalid("concat of zero tensors"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(Error::dim("concat", format!("{s:?} incompatible with {base:?} off axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let tail: usize = base[axis + 1..].iter().product();
        let inners: Vec<usize> = inputs.iter().map(|&v| self.shape(v)[axis] * tail).collect();
        let mut out = Vec::with_capacity(outer * total * tail);
        for o in 0..outer {
            for (&v, &inner) in inputs.iter().zip(&inners) {
                out.extend_from_slice(&self.value(v)[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push("concat", shape, out, Op::Concat { inputs: inputs.to_vec(), outer, inners })
    }

    /// `[N, C, H, W]` → `[N, H·W, C]`, tokens in row-major grid order.
    pub fn nchw_to_tokens(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::dim("nchw_to_tokens", format!("input must be NCHW, got {s:?}")));
        }
        self.permute("nchw_to_tokens", x, Perm::NchwToTokens, vec![s[0], s[2] * s[3], s[1]], Op::NchwToTokens(x))
    }

    /// `[N, T, C]` on a square grid → `[N, C, side, side]`.
    pub fn tokens_to_nchw(&mut self, x: Var) -> Result<Var> {
        let side = grid_side("tokens_to_nchw", self.shape(x))?;
        let s = self.shape(x).to_vec();
        self.permute(
            "tokens_to_nchw",
            x,
            Perm::TokensToNchw { side },
            vec![s[0], s[2], side, side],
            Op::TokensToNchw(x),
        )
    }

    /// Gathers each 2×2 token group into one token of 4·D features.
    pub fn space_to_depth(&mut self, x: Var) -> Result<Var> {
        let side = grid_side("space_to_depth", self.shape(x))?;
        if side % 2 != 0 {
            return Err(Error::dim("space_to_depth", format!("grid side {side} is not divisible by 2")));
        }
        let s = self.shape(x).to_vec();
        let shape = vec![s[0], s[1] / 4, 4 * s[2]];
        self.permute("space_to_depth", x, Perm::SpaceToDepth { side }, shape, Op::SpaceToDepth { x, side })
    }

    /// Inverse of [`space_to_depth`](Self::space_to_depth): 4·D features per
    /// token become a 2×2 group of D-feature tokens.
    pub fn depth_to_space(&mut self, x: Var) -> Result<Var> {
        let side = grid_side("depth_to_space", self.shape(x))?;
        let s = self.shape(x).to_vec();
        if s[2] % 4 != 0 {
            return Err(Error::dim("depth_to_space", format!("feature count {} (axis 2) not divisible by 4", s[2])));
        }
        let shape = vec![s[0], s[1] * 4, s[2] / 4];
        self.permute("depth_to_space", x, Perm::DepthToSpace { side }, shape, Op::DepthToSpace { x, side })
    }
}

pub(super) fn backward(nodes: &[Node], node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    let (x, p) = match &node.op {
        Op::Concat { inputs, outer, inners } => {
            let row: usize = inners.iter().sum();
            let mut off = 0;
            for (&v, &inner) in inputs.iter().zip(inners) {
                accumulate(nodes, grads, v, |d| {
                    for o in 0..*outer {
                        let src = &g[o * row + off..o * row + off + inner];
                        d[o * inner..(o + 1) * inner].iter_mut().zip(src).for_each(|(d, g)| *d += g);
                    }
                });
                off += inner;
            }
            return;
        }
        Op::NchwToTokens(x) => (*x, Perm::NchwToTokens),
        Op::TokensToNchw(x) => (*x, Perm::TokensToNchw { side: node.shape[2] }),
        Op::SpaceToDepth { x, side } => (*x, Perm::SpaceToDepth { side: *side }),
        Op::DepthToSpace { x, side } => (*x, Perm::DepthToSpace { side: *side }),
        _ => unreachable!("not a shape op"),
    };
    let idx = gather_index(p, &nodes[x.index()].shape);
    accumulate(nodes, grads, x, |d| {
        for (&i, &gv) in idx.iter().zip(g) {
            d[i] += gv;
        }
    });
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    fn ramp(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn concat_channels() {
        let mut t = Tape::new();
        let a = t.input(ramp(&[2, 1, 2]), true);
        let b = t.input(Tensor::full(&[2, 2, 2], -1.0).unwrap(), true);
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.shape(c), &[2, 3, 2]);
        assert_eq!(t.value(c), &[0.0, 1.0, -1.0, -1.0, -1.0, -1.0, 2.0, 3.0, -1.0, -1.0, -1.0, -1.0]);
        let w: Vec<f32> = (0..12).map(|i| i as f32).collect();
        let s = t.weighted_sum(c, w).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap(), &[0.0, 1.0, 6.0, 7.0]);
        assert_eq!(g.get(b).unwrap(), &[2.0, 3.0, 4.0, 5.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn token_layout_round_trip() {
        let mut t = Tape::new();
        let x = t.input(ramp(&[2, 3, 4, 4]), false);
        let tok = t.nchw_to_tokens(x).unwrap();
        assert_eq!(t.shape(tok), &[2, 16, 3]);
        assert_eq!(&t.value(tok)[..4], &[0.0, 16.0, 32.0, 1.0]);
        let back = t.tokens_to_nchw(tok).unwrap();
        assert_eq!(t.value(back), t.value(x));
    }

    #[test]
    fn merge_groups_follow_row_then_column_order() {
        let mut t = Tape::new();
        // 4x4 grid, D = 1, token value = its index
        let x = t.input(ramp(&[1, 16, 1]), false);
        let m = t.space_to_depth(x).unwrap();
        assert_eq!(t.shape(m), &[1, 4, 4]);
        assert_eq!(&t.value(m)[..4], &[0.0, 4.0, 1.0, 5.0]);
        let back = t.depth_to_space(m).unwrap();
        assert_eq!(t.value(back), t.value(x));
    }

    #[test]
    fn indivisible_grids_are_rejected() {
        let mut t = Tape::new();
        let odd = t.input(ramp(&[1, 9, 2]), false);
        assert!(t.space_to_depth(odd).is_err());
        let nonsquare = t.input(ramp(&[1, 8, 2]), false);
        assert!(t.tokens_to_nchw(nonsquare).is_err());
    }
}
