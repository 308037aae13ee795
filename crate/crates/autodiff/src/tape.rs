//! Operation recording and reverse-mode gradient propagation.
//!
//! Every op appends a node to the tape, so node order is always a valid
//! execution order and `backward` can simply walk the tape in reverse.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a user-supplied op: receives input values and the
/// upstream gradient, returns one gradient buffer per input.
pub type CustomBackward = Box<dyn Fn(&[&Tensor], &[f64]) -> Vec<Vec<f64>>>;

pub(crate) enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<usize>,
    },
    Upsample2 {
        input: Var,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu {
        input: Var,
    },
    Softmax {
        input: Var,
    },
    Concat {
        a: Var,
        b: Var,
        outer: usize,
        inner_a: usize,
        inner_b: usize,
    },
    SliceRows {
        input: Var,
        offset: usize,
    },
    Reshape {
        input: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factors: Vec<f64>,
    },
    Sum {
        input: Var,
    },
    SquaredError {
        pred: Var,
        target: Vec<f64>,
    },
    CrossEntropy {
        probs: Var,
        labels: Vec<usize>,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Recorded computation graph.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input (parameter or probe point).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient (images, targets).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub(crate) fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    /// Records an op whose forward value was computed by the caller.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        output: Tensor,
        backward: impl Fn(&[&Tensor], &[f64]) -> Vec<Vec<f64>> + 'static,
    ) -> Result<Var> {
        let op = Op::Custom {
            inputs: inputs.to_vec(),
            backward: Box::new(backward),
        };
        self.push("custom", output, op, inputs)
    }

    /// Propagates d(loss)/d(node) for every node reachable from `loss`,
    /// which must hold a single element.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.backward_node(i, &upstream, &mut grads)?;
            }
            if !upstream.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite { op: "backward" });
            }
            grads[i] = Some(upstream);
        }
        self.grads = grads;
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let mut acc = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, c) in existing.iter_mut().zip(contrib) {
                        *e += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, bias } => {
                let (dx, dk, db) = crate::conv::conv2d_backward(
                    self.value(*input),
                    self.value(*kernel),
                    g,
                    self.requires_grad(*input),
                );
                if let Some(dx) = dx {
                    acc(*input, dx);
                }
                acc(*kernel, dk);
                acc(*bias, db);
            }
            Op::MaxPool2 { input, argmax } => {
                let mut dx = vec![0.0; self.value(*input).len()];
                for (&src, &gi) in argmax.iter().zip(g) {
                    dx[src] += gi;
                }
                acc(*input, dx);
            }
            Op::Upsample2 { input } => {
                acc(*input, crate::pool::upsample2_backward(self.value(*input).shape(), g));
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (dx, dgamma, dbeta) = crate::norm::batch_norm_backward(
                    self.value(*gamma).data(),
                    xhat,
                    inv_std,
                    g,
                    *batch_stats,
                );
                acc(*input, dx);
                acc(*gamma, dgamma);
                acc(*beta, dbeta);
            }
            Op::Dense { input, weight, bias } => {
                let (dx, dw, db) = crate::linear::dense_backward(self.value(*input), self.value(*weight), g);
                acc(*input, dx);
                acc(*weight, dw);
                acc(*bias, db);
            }
            Op::Relu { input } => {
                let x = self.value(*input).data();
                acc(*input, x.iter().zip(g).map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 }).collect());
            }
            Op::Softmax { input } => {
                let y = node.value.data();
                let k = node.value.last_dim();
                let mut dx = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks(k).zip(g.chunks(k)).zip(dx.chunks_mut(k)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..k {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*input, dx);
            }
            Op::Concat {
                a,
                b,
                outer,
                inner_a,
                inner_b,
            } => {
                let mut da = Vec::with_capacity(outer * inner_a);
                let mut db = Vec::with_capacity(outer * inner_b);
                for row in g.chunks(inner_a + inner_b) {
                    da.extend_from_slice(&row[..*inner_a]);
                    db.extend_from_slice(&row[*inner_a..]);
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::SliceRows { input, offset } => {
                let mut dx = vec![0.0; self.value(*input).len()];
                dx[*offset..offset + g.len()].copy_from_slice(g);
                acc(*input, dx);
            }
            Op::Reshape { input } => acc(*input, g.to_vec()),
            Op::Mul { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, g.iter().zip(bv).map(|(gi, bi)| gi * bi).collect());
                acc(*b, g.iter().zip(av).map(|(gi, ai)| gi * ai).collect());
            }
            Op::Scale { input, factors } => {
                acc(*input, g.iter().zip(factors).map(|(gi, f)| gi * f).collect());
            }
            Op::Sum { input } => acc(*input, vec![g[0]; self.value(*input).len()]),
            Op::SquaredError { pred, target } => {
                let p = self.value(*pred).data();
                let scale = 2.0 * g[0] / p.len() as f64;
                acc(*pred, p.iter().zip(target).map(|(pi, ti)| scale * (pi - ti)).collect());
            }
            Op::CrossEntropy { probs, labels } => {
                let p = self.value(*probs);
                let k = p.last_dim();
                let scale = g[0] / labels.len() as f64;
                let mut dp = vec![0.0; p.len()];
                for (row, &label) in labels.iter().enumerate() {
                    let pi = p.data()[row * k + label];
                    if pi >= crate::loss::PROB_FLOOR {
                        dp[row * k + label] = -scale / pi;
                    }
                }
                acc(*probs, dp);
            }
            Op::Custom { inputs, backward } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let contribs = backward(&values, g);
                if contribs.len() != inputs.len() {
                    return Err(Error::shape("custom backward", "one gradient per input required"));
                }
                for (&v, c) in inputs.iter().zip(contribs) {
                    if c.len() != self.value(v).len() {
                        return Err(Error::shape("custom backward", "gradient length mismatch"));
                    }
                    acc(v, c);
                }
            }
        }
        Ok(())
    }
}
