//! Elementwise, activation and shape ops.

use crate::error::{Error, Result};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let out = x.data().iter().map(|&v| if v > 0.0 || v.is_nan() { v } else { 0.0 }).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push("relu", value, Op::Relu { input }, &[input])
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if !x.is_finite() {
            return Err(Error::NonFinite { op: "softmax" });
        }
        let k = x.last_dim();
        let mut out = Vec::with_capacity(x.len());
        for row in x.data().chunks(k) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            out.extend(row.iter().map(|v| (v - max).exp()));
            let z: f64 = out[start..].iter().sum();
            out[start..].iter_mut().for_each(|v| *v /= z);
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push("softmax", value, Op::Softmax { input }, &[input])
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || axis >= sa.len() || sa.iter().zip(&sb).enumerate().any(|(i, (x, y))| i != axis && x != y) {
            return Err(Error::shape("concat", format!("cannot join {sa:?} and {sb:?} on axis {axis}")));
        }
        let outer: usize = sa[..axis].iter().product();
        let inner_a: usize = sa[axis..].iter().product();
        let inner_b: usize = sb[axis..].iter().product();
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(da.len() + db.len());
        for r in 0..outer {
            out.extend_from_slice(&da[r * inner_a..(r + 1) * inner_a]);
            out.extend_from_slice(&db[r * inner_b..(r + 1) * inner_b]);
        }
        let mut shape = sa;
        shape[axis] += sb[axis];
        let value = Tensor::new(shape, out)?;
        let op = Op::Concat {
            a,
            b,
            outer,
            inner_a,
            inner_b,
        };
        self.push("concat", value, op, &[a, b])
    }

    /// Rows `start..start+len` of the leading axis.
    pub fn slice_rows(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if len == 0 || start + len > shape[0] {
            return Err(Error::shape("slice_rows", format!("rows {start}..{} of {shape:?}", start + len)));
        }
        let row: usize = shape[1..].iter().product();
        let data = self.value(input).data()[start * row..(start + len) * row].to_vec();
        let mut out_shape = shape;
        out_shape[0] = len;
        let value = Tensor::new(out_shape, data)?;
        self.push("slice_rows", value, Op::SliceRows { input, offset: start * row }, &[input])
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshaped(shape)?;
        self.push("reshape", value, Op::Reshape { input }, &[input])
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let out = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push("mul", value, Op::Mul { a, b }, &[a, b])
    }

    /// Elementwise product with constant factors (dropout masks, probe weights).
    pub fn scale(&mut self, input: Var, factors: Vec<f64>) -> Result<Var> {
        let x = self.value(input);
        if factors.len() != x.len() {
            return Err(Error::shape("scale", format!("{} factors for {} values", factors.len(), x.len())));
        }
        let out = x.data().iter().zip(&factors).map(|(v, f)| v * f).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push("scale", value, Op::Scale { input, factors }, &[input])
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(input).sum());
        self.push("sum", value, Op::Sum { input }, &[input])
    }
}
