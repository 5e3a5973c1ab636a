//! 2-D convolution and its transpose over NCHW batches, lowered to GEMM
//! through an im2col buffer.

use crate::error::{Error, Result};
use crate::tensor::gemm::sgemm;
use crate::tensor::tape::{accumulate, Node, Op};
use crate::tensor::{Tape, Var};

pub(crate) struct ConvSaved {
    pub x: Var,
    pub w: Var,
    pub b: Option<Var>,
    pub stride: usize,
    pub pad: usize,
}

/// Output extent of a convolution along one axis.
pub fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || k > padded {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output extent of a transposed convolution along one axis.
pub fn conv_transpose_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let full = (size - 1) * stride + k;
    if stride == 0 || full <= 2 * pad {
        return None;
    }
    Some(full - 2 * pad)
}

#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(img: &[f32], g: Geometry, cols: &mut [f32]) {
    let ncols = g.cols();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let out = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut out[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &img[(c * g.h + iy as usize) * g.w..][..g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: Geometry, img: &mut [f32]) {
    let ncols = g.cols();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut img[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn add_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (c, chunk) in out.chunks_mut(plane).enumerate() {
        let b = bias[c % bias.len()];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad(g: &[f32], channels: usize, plane: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; channels];
    for (i, chunk) in g.chunks(plane).enumerate() {
        acc[i % channels] += chunk.iter().map(|&v| v as f64).sum::<f64>();
    }
    acc.into_iter().map(|v| v as f32).collect()
}

impl Tape {
    fn conv_operands(
        &self,
        op: &'static str,
        x: Var,
        w: Var,
        b: Option<Var>,
        bias_len_axis: usize,
    ) -> Result<([usize; 4], [usize; 4])> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 4 {
            return Err(Error::dim(op, format!("input must be NCHW, got {xs:?}")));
        }
        if ws.len() != 4 {
            return Err(Error::dim(op, format!("kernel must be rank 4, got {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[bias_len_axis]] {
                return Err(Error::dim(
                    op,
                    format!("bias {:?} does not match kernel axis {bias_len_axis} ({})", self.shape(b), ws[bias_len_axis]),
                ));
            }
        }
        Ok(([xs[0], xs[1], xs[2], xs[3]], [ws[0], ws[1], ws[2], ws[3]]))
    }

    /// Cross-correlation of `x[N,Cin,H,W]` with `w[Cout,Cin,Kh,Kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let ([n, cin, h, wd], [cout, wcin, kh, kw]) = self.conv_operands("conv2d", x, w, b, 0)?;
        if cin != wcin {
            return Err(Error::dim("conv2d", format!("input channels (axis 1) {cin} != kernel axis 1 {wcin}")));
        }
        if stride == 0 {
            return Err(Error::dim("conv2d", "stride must be >= 1"));
        }
        let (Some(ho), Some(wo)) = (conv_out(h, kh, stride, pad), conv_out(wd, kw, stride, pad)) else {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {kh}x{kw} exceeds padded input {}x{} (axes 2,3)", h + 2 * pad, wd + 2 * pad),
            ));
        };
        let g = Geometry { c: cin, h, w: wd, kh, kw, stride, pad, ho, wo };
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = vec![0.0f32; n * cout * ho * wo];
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0f32; g.rows() * g.cols()] };
        for i in 0..n {
            let img = &xv[i * cin * h * wd..(i + 1) * cin * h * wd];
            let colbuf: &[f32] = if g.is_pointwise() {
                img
            } else {
                im2col(img, g, &mut cols);
                &cols
            };
            let dst = &mut out[i * cout * ho * wo..(i + 1) * cout * ho * wo];
            sgemm(cout, g.rows(), g.cols(), wv, false, colbuf, false, dst, 0.0);
        }
        if let Some(b) = b {
            add_bias(&mut out, self.value(b), ho * wo);
        }
        self.push("conv2d", vec![n, cout, ho, wo], out, Op::Conv2d(ConvSaved { x, w, b, stride, pad }))
    }

    /// Transposed convolution of `x[N,Cin,H,W]` with `w[Cin,Cout,Kh,Kw]`;
    /// the adjoint of [`Tape::conv2d`] with the same kernel.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let ([n, cin, h, wd], [wcin, cout, kh, kw]) = self.conv_operands("conv_transpose2d", x, w, b, 1)?;
        if cin != wcin {
            return Err(Error::dim(
                "conv_transpose2d",
                format!("input channels (axis 1) {cin} != kernel axis 0 {wcin}"),
            ));
        }
        if stride == 0 {
            return Err(Error::dim("conv_transpose2d", "stride must be >= 1"));
        }
        let (Some(ho), Some(wo)) = (conv_transpose_out(h, kh, stride, pad), conv_transpose_out(wd, kw, stride, pad))
        else {
            return Err(Error::dim("conv_transpose2d", format!("padding {pad} leaves no output for {h}x{wd}")));
        };
        // Geometry of the forward convolution this op is the adjoint of.
        let g = Geometry { c: cout, h: ho, w: wo, kh, kw, stride, pad, ho: h, wo: wd };
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = vec![0.0f32; n * cout * ho * wo];
        let mut cols = vec![0.0f32; g.rows() * g.cols()];
        for i in 0..n {
            let img = &xv[i * cin * h * wd..(i + 1) * cin * h * wd];
            sgemm(g.rows(), cin, g.cols(), wv, true, img, false, &mut cols, 0.0);
            col2im(&cols, g, &mut out[i * cout * ho * wo..(i + 1) * cout * ho * wo]);
        }
        if let Some(b) = b {
            add_bias(&mut out, self.value(b), ho * wo);
        }
        self.push(
            "conv_transpose2d",
            vec![n, cout, ho, wo],
            out,
            Op::ConvTranspose2d(ConvSaved { x, w, b, stride, pad }),
        )
    }
}

pub(crate) fn conv2d_backward(nodes: &[Node], s: &ConvSaved, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    let xs = &nodes[s.x.index()].shape;
    let ws = &nodes[s.w.index()].shape;
    let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
    let ho = conv_out(h, kh, s.stride, s.pad).unwrap();
    let wo = conv_out(wd, kw, s.stride, s.pad).unwrap();
    let geo = Geometry { c: cin, h, w: wd, kh, kw, stride: s.stride, pad: s.pad, ho, wo };
    let xv = &nodes[s.x.index()].value;
    let wv = &nodes[s.w.index()].value;
    let want_x = nodes[s.x.index()].requires_grad;
    let want_w = nodes[s.w.index()].requires_grad;
    let in_plane = cin * h * wd;
    let out_plane = cout * ho * wo;

    let mut dw = vec![0.0f32; if want_w { wv.len() } else { 0 }];
    let mut dx = vec![0.0f32; if want_x { xv.len() } else { 0 }];
    let mut cols = vec![0.0f32; geo.rows() * geo.cols()];
    for i in 0..n {
        let gout = &g[i * out_plane..(i + 1) * out_plane];
        if want_w {
            let img = &xv[i * in_plane..(i + 1) * in_plane];
            let colbuf: &[f32] = if geo.is_pointwise() {
                img
            } else {
                im2col(img, geo, &mut cols);
                &cols
            };
            sgemm(cout, geo.cols(), geo.rows(), gout, false, colbuf, true, &mut dw, 1.0);
        }
        if want_x {
            let dimg = &mut dx[i * in_plane..(i + 1) * in_plane];
            if geo.is_pointwise() {
                sgemm(geo.rows(), cout, geo.cols(), wv, true, gout, false, dimg, 1.0);
            } else {
                sgemm(geo.rows(), cout, geo.cols(), wv, true, gout, false, &mut cols, 0.0);
                col2im(&cols, geo, dimg);
            }
        }
    }
    if want_x {
        accumulate(nodes, grads, s.x, |d| super::elementwise::add_into(d, &dx));
    }
    if want_w {
        accumulate(nodes, grads, s.w, |d| super::elementwise::add_into(d, &dw));
    }
    if let Some(b) = s.b {
        let db = bias_grad(g, cout, ho * wo);
        accumulate(nodes, grads, b, |d| super::elementwise::add_into(d, &db));
    }
}

pub(crate) fn conv_transpose2d_backward(nodes: &[Node], s: &ConvSaved, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    let xs = &nodes[s.x.index()].shape;
    let ws = &nodes[s.w.index()].shape;
    let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, kh, kw) = (ws[1], ws[2], ws[3]);
    let ho = conv_transpose_out(h, kh, s.stride, s.pad).unwrap();
    let wo = conv_transpose_out(wd, kw, s.stride, s.pad).unwrap();
    let geo = Geometry { c: cout, h: ho, w: wo, kh, kw, stride: s.stride, pad: s.pad, ho: h, wo: wd };
    let xv = &nodes[s.x.index()].value;
    let wv = &nodes[s.w.index()].value;
    let want_x = nodes[s.x.index()].requires_grad;
    let want_w = nodes[s.w.index()].requires_grad;
    let in_plane = cin * h * wd;
    let out_plane = cout * ho * wo;

    let mut dw = vec![0.0f32; if want_w { wv.len() } else { 0 }];
    let mut dx = vec![0.0f32; if want_x { xv.len() } else { 0 }];
    let mut cols = vec![0.0f32; geo.rows() * geo.cols()];
    for i in 0..n {
        if !(want_x || want_w) {
            break;
        }
        im2col(&g[i * out_plane..(i + 1) * out_plane], geo, &mut cols);
        if want_x {
            sgemm(cin, geo.rows(), geo.cols(), wv, false, &cols, false, &mut dx[i * in_plane..(i + 1) * in_plane], 1.0);
        }
        if want_w {
            let img = &xv[i * in_plane..(i + 1) * in_plane];
            sgemm(cin, geo.cols(), geo.rows(), img, false, &cols, true, &mut dw, 1.0);
        }
    }
    if want_x {
        accumulate(nodes, grads, s.x, |d| super::elementwise::add_into(d, &dx));
    }
    if want_w {
        accumulate(nodes, grads, s.w, |d| super::elementwise::add_into(d, &dw));
    }
    if let Some(b) = s.b {
        let db = bias_grad(g, cout, ho * wo);
        accumulate(nodes, grads, b, |d| super::elementwise::add_into(d, &db));
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn identity_kernel_copies_input() {
        let mut t = Tape::new();
        let data: Vec<f32> = (0..9).map(|i| i as f32 - 4.0).collect();
        let x = t.input(Tensor::new(&[1, 1, 3, 3], data.clone()).unwrap(), false);
        let w = t.input(Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap(), false);
        let b = t.input(Tensor::new(&[1], vec![0.0]).unwrap(), false);
        let y = t.conv2d(x, w, Some(b), 1, 0).unwrap();
        assert_eq!(t.value(y), data.as_slice());
    }

    #[test]
    fn ones_kernel_sums_window() {
        let mut t = Tape::new();
        let x = t.input(Tensor::full(&[1, 1, 2, 2], 1.0).unwrap(), false);
        let w = t.input(Tensor::full(&[1, 1, 2, 2], 1.0).unwrap(), false);
        let b = t.input(Tensor::new(&[1], vec![0.0]).unwrap(), false);
        let y = t.conv2d(x, w, Some(b), 1, 0).unwrap();
        assert_eq!(t.shape(y), &[1, 1, 1, 1]);
        assert_eq!(t.value(y), &[4.0]);
    }

    #[test]
    fn pointwise_transpose_is_scalar_multiply() {
        let mut t = Tape::new();
        let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.5).collect();
        let x = t.input(Tensor::new(&[1, 1, 3, 4], data.clone()).unwrap(), false);
        let w = t.input(Tensor::new(&[1, 1, 1, 1], vec![-2.5]).unwrap(), false);
        let y = t.conv_transpose2d(x, w, None, 1, 0).unwrap();
        let want: Vec<f32> = data.iter().map(|v| v * -2.5).collect();
        assert_eq!(t.value(y), want.as_slice());
    }

    #[test]
    fn output_sizes() {
        let mut t = Tape::new();
        let x = t.input(Tensor::zeros(&[2, 3, 5, 7]).unwrap(), false);
        let w = t.input(Tensor::zeros(&[4, 3, 3, 3]).unwrap(), false);
        let y = t.conv2d(x, w, None, 2, 1).unwrap();
        assert_eq!(t.shape(y), &[2, 4, 3, 4]);
        let wt = t.input(Tensor::zeros(&[4, 6, 2, 2]).unwrap(), false);
        let z = t.conv_transpose2d(y, wt, None, 2, 0).unwrap();
        assert_eq!(t.shape(z), &[2, 6, 6, 8]);
    }

    #[test]
    fn shape_errors_name_axes() {
        let mut t = Tape::new();
        let x = t.input(Tensor::zeros(&[1, 2, 3, 3]).unwrap(), false);
        let w = t.input(Tensor::zeros(&[1, 3, 3, 3]).unwrap(), false);
        let err = t.conv2d(x, w, None, 1, 0).unwrap_err().to_string();
        assert!(err.contains("axis 1"), "{err}");
        let big = t.input(Tensor::zeros(&[1, 2, 5, 5]).unwrap(), false);
        let err = t.conv2d(x, big, None, 1, 0).unwrap_err().to_string();
        assert!(err.contains("exceeds"), "{err}");
        assert!(t.conv2d(x, big, None, 0, 1).is_err());
    }
}
