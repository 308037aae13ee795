use crate::error::{Error, Result};
use crate::gemm::{gemm, MatRef};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

fn dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let (fan_in, fan_out) = match *w.shape() {
        [i, o] => (i, o),
        _ => return Err(Error::shape("dense", format!("weights must be 2-D, got {:?}", w.shape()))),
    };
    if x.last_dim() != fan_in || x.shape().len() > 2 {
        return Err(Error::shape(
            "dense",
            format!("input {:?} does not match weights {:?}", x.shape(), w.shape()),
        ));
    }
    if b.shape() != [fan_out] {
        return Err(Error::shape("dense", format!("bias must be [{fan_out}], got {:?}", b.shape())));
    }
    Ok((x.len() / fan_in, fan_in, fan_out))
}

pub(crate) fn dense_backward(x: &Tensor, w: &Tensor, g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [fan_in, fan_out] = *w.shape() else {
        unreachable!("validated in forward")
    };
    let rows = x.len() / fan_in;
    let mut dx = vec![0.0; x.len()];
    gemm(rows, fan_out, fan_in, MatRef::rows(g, fan_out), MatRef::transposed(w.data(), fan_out), 0.0, &mut dx);
    let mut dw = vec![0.0; w.len()];
    gemm(fan_in, rows, fan_out, MatRef::transposed(x.data(), fan_in), MatRef::rows(g, fan_out), 0.0, &mut dw);
    let mut db = vec![0.0; fan_out];
    for row in g.chunks(fan_out) {
        for (d, v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    (dx, dw, db)
}

impl Tape {
    /// Affine map `x · W + b` for a vector `[In]` or a batch `[N, In]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (rows, fan_in, fan_out) = dims(x, w, b)?;
        let mut out = Vec::with_capacity(rows * fan_out);
        for _ in 0..rows {
            out.extend_from_slice(b.data());
        }
        gemm(rows, fan_in, fan_out, MatRef::rows(x.data(), fan_in), MatRef::rows(w.data(), fan_out), 1.0, &mut out);
        let shape = if x.shape().len() == 1 { vec![fan_out] } else { vec![rows, fan_out] };
        let value = Tensor::new(shape, out)?;
        self.push("dense", value, Op::Dense { input, weight, bias }, &[input, weight, bias])
    }
}
