//! 3×3, stride-1, same-padded convolution over NHWC tensors.
//!
//! Each image is lowered to a `(H·W) × (9·C)` patch matrix and multiplied by
//! the kernel viewed as a `(9·C) × K` matrix. Patches are rebuilt during the
//! backward pass instead of being kept alive on the tape.

use crate::error::{Error, Result};
use crate::gemm::{gemm, MatRef};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

pub const KERNEL: usize = 3;

fn im2col(x: &[f64], h: usize, w: usize, c: usize, cols: &mut [f64]) {
    let row_len = 9 * c;
    for y in 0..h {
        for xx in 0..w {
            let row = &mut cols[(y * w + xx) * row_len..][..row_len];
            for ky in 0..KERNEL {
                let iy = y as isize + ky as isize - 1;
                for kx in 0..KERNEL {
                    let ix = xx as isize + kx as isize - 1;
                    let dst = &mut row[(ky * KERNEL + kx) * c..][..c];
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                        dst.fill(0.0);
                    } else {
                        let src = (iy as usize * w + ix as usize) * c;
                        dst.copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], h: usize, w: usize, c: usize, dx: &mut [f64]) {
    let row_len = 9 * c;
    for y in 0..h {
        for xx in 0..w {
            let row = &cols[(y * w + xx) * row_len..][..row_len];
            for ky in 0..KERNEL {
                let iy = y as isize + ky as isize - 1;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = xx as isize + kx as isize - 1;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = (iy as usize * w + ix as usize) * c;
                    let src = &row[(ky * KERNEL + kx) * c..][..c];
                    for (d, s) in dx[dst..dst + c].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Splits an `[N,H,W,C]` or `[H,W,C]` shape into `(n, h, w, c)`.
pub(crate) fn nhwc(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [n, h, w, c] => Ok((n, h, w, c)),
        [h, w, c] => Ok((1, h, w, c)),
        _ => Err(Error::shape(op, format!("expected HxWxC or NxHxWxC input, got {shape:?}"))),
    }
}

pub(crate) fn conv2d_forward(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, h, w, c) = nhwc("conv2d", x.shape())?;
    let k = match *kernel.shape() {
        [3, 3, kc, k] if kc == c => k,
        [3, 3, kc, _] => {
            return Err(Error::shape(
                "conv2d",
                format!("input has {c} channels but kernels expect {kc}"),
            ))
        }
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be 3x3xCxK, got {:?}", kernel.shape()),
            ))
        }
    };
    if bias.shape() != [k] {
        return Err(Error::shape("conv2d", format!("bias must have shape [{k}], got {:?}", bias.shape())));
    }
    let hw = h * w;
    let mut out = vec![0.0; n * hw * k];
    let mut cols = vec![0.0; hw * 9 * c];
    for (img, dst) in x.data().chunks(hw * c).zip(out.chunks_mut(hw * k)) {
        im2col(img, h, w, c, &mut cols);
        for row in dst.chunks_mut(k) {
            row.copy_from_slice(bias.data());
        }
        gemm(hw, 9 * c, k, MatRef::rows(&cols, 9 * c), MatRef::rows(kernel.data(), k), 1.0, dst);
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = k;
    Tensor::new(shape, out)
}

/// Returns `(d_input, d_kernel, d_bias)`; `d_input` is skipped when the input
/// does not need a gradient.
pub(crate) fn conv2d_backward(
    x: &Tensor,
    kernel: &Tensor,
    g: &[f64],
    want_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (_, h, w, c) = nhwc("conv2d", x.shape()).expect("validated in forward");
    let k = kernel.last_dim();
    let hw = h * w;
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; k];
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    let mut cols = vec![0.0; hw * 9 * c];
    let mut dcols = vec![0.0; hw * 9 * c];
    for (i, (img, gi)) in x.data().chunks(hw * c).zip(g.chunks(hw * k)).enumerate() {
        im2col(img, h, w, c, &mut cols);
        gemm(9 * c, hw, k, MatRef::transposed(&cols, 9 * c), MatRef::rows(gi, k), 1.0, &mut dk);
        for row in gi.chunks(k) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        if let Some(dx) = dx.as_mut() {
            gemm(hw, k, 9 * c, MatRef::rows(gi, k), MatRef::transposed(kernel.data(), k), 0.0, &mut dcols);
            col2im_add(&dcols, h, w, c, &mut dx[i * hw * c..(i + 1) * hw * c]);
        }
    }
    (dx, dk, db)
}

impl Tape {
    /// Cross-correlation with a `3×3×C×K` kernel bank plus per-filter bias.
    /// Accepts a single `H×W×C` image or an `N×H×W×C` batch.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let out = conv2d_forward(self.value(input), self.value(kernel), self.value(bias))?;
        self.push("conv2d", out, Op::Conv2d { input, kernel, bias }, &[input, kernel, bias])
    }
}
