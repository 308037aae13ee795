use crate::conv::nhwc;
use crate::error::{Error, Result};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

fn with_spatial(shape: &[usize], h: usize, w: usize) -> Vec<usize> {
    let mut out = shape.to_vec();
    let r = out.len();
    out[r - 3] = h;
    out[r - 2] = w;
    out
}

pub(crate) fn upsample2_backward(input_shape: &[usize], g: &[f64]) -> Vec<f64> {
    let (n, h, w, c) = nhwc("upsample2", input_shape).expect("validated in forward");
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![0.0; n * h * w * c];
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                let src = ((b * oh + y) * ow + x) * c;
                let dst = ((b * h + y / 2) * w + x / 2) * c;
                for ch in 0..c {
                    dx[dst + ch] += g[src + ch];
                }
            }
        }
    }
    dx
}

impl Tape {
    /// 2×2 max pooling with stride 2. On ties the first element of the
    /// window in row-major order wins and receives the gradient.
    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (n, h, w, c) = nhwc("max_pool2", x.shape())?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(
                "max_pool2",
                format!("spatial dimensions must be even, got {h}x{w}"),
            ));
        }
        let (oh, ow) = (h / 2, w / 2);
        let xd = x.data();
        let mut out = Vec::with_capacity(n * oh * ow * c);
        let mut argmax = Vec::with_capacity(n * oh * ow * c);
        for b in 0..n {
            for y in 0..oh {
                for xx in 0..ow {
                    for ch in 0..c {
                        let mut best = ((b * h + 2 * y) * w + 2 * xx) * c + ch;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = ((b * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                        out.push(xd[best]);
                        argmax.push(best);
                    }
                }
            }
        }
        let value = Tensor::new(with_spatial(x.shape(), oh, ow), out)?;
        self.push("max_pool2", value, Op::MaxPool2 { input, argmax }, &[input])
    }

    /// Nearest-neighbour 2× spatial upsampling.
    pub fn upsample2(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (n, h, w, c) = nhwc("upsample2", x.shape())?;
        let (oh, ow) = (2 * h, 2 * w);
        let xd = x.data();
        let mut out = Vec::with_capacity(n * oh * ow * c);
        for b in 0..n {
            for y in 0..oh {
                for xx in 0..ow {
                    let src = ((b * h + y / 2) * w + xx / 2) * c;
                    out.extend_from_slice(&xd[src..src + c]);
                }
            }
        }
        let value = Tensor::new(with_spatial(x.shape(), oh, ow), out)?;
        self.push("upsample2", value, Op::Upsample2 { input }, &[input])
    }
}
