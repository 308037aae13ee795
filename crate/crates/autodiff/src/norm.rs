//! Batch normalization over every axis except the trailing channel axis.

use crate::error::{Error, Result};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;

/// Per-channel statistics of the batch seen by a train-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
}

fn check_affine(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<usize> {
    let c = x.last_dim();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "batch_norm",
            format!(
                "gamma {:?} / beta {:?} must match {c} channels",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    Ok(c)
}

fn normalize(x: &[f64], c: usize, mean: &[f64], inv_std: &[f64], gamma: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = Vec::with_capacity(x.len());
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(c) {
        for j in 0..c {
            let v = (row[j] - mean[j]) * inv_std[j];
            xhat.push(v);
            out.push(gamma[j] * v + beta[j]);
        }
    }
    (xhat, out)
}

pub(crate) fn batch_norm_backward(
    gamma: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    g: &[f64],
    batch_stats: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = gamma.len();
    let m = (xhat.len() / c) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (xr, gr) in xhat.chunks(c).zip(g.chunks(c)) {
        for j in 0..c {
            dgamma[j] += gr[j] * xr[j];
            dbeta[j] += gr[j];
        }
    }
    let mut dx = vec![0.0; xhat.len()];
    for ((dr, xr), gr) in dx.chunks_mut(c).zip(xhat.chunks(c)).zip(g.chunks(c)) {
        for j in 0..c {
            let scale = gamma[j] * inv_std[j];
            dr[j] = if batch_stats {
                // d/dx of gamma * (x - mean(x)) / std(x)
                scale * (gr[j] - dbeta[j] / m - xr[j] * dgamma[j] / m)
            } else {
                scale * gr[j]
            };
        }
    }
    (dx, dgamma, dbeta)
}

impl Tape {
    /// Train-mode batch normalization using the statistics of `input` itself.
    pub fn batch_norm_train(&mut self, input: Var, gamma: Var, beta: Var) -> Result<(Var, BatchStats)> {
        let x = self.value(input);
        let c = check_affine(x, self.value(gamma), self.value(beta))?;
        let m = (x.len() / c) as f64;
        let mut mean = vec![0.0; c];
        for row in x.data().chunks(c) {
            for j in 0..c {
                mean[j] += row[j];
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; c];
        for row in x.data().chunks(c) {
            for j in 0..c {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (xhat, out) = normalize(
            x.data(),
            c,
            &mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let op = Op::BatchNorm {
            input,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats: true,
        };
        let v = self.push("batch_norm", value, op, &[input, gamma, beta])?;
        Ok((v, BatchStats { mean, var }))
    }

    /// Eval-mode batch normalization with externally supplied statistics.
    pub fn batch_norm_eval(&mut self, input: Var, gamma: Var, beta: Var, stats: &BatchStats) -> Result<Var> {
        let x = self.value(input);
        let c = check_affine(x, self.value(gamma), self.value(beta))?;
        if stats.mean.len() != c || stats.var.len() != c {
            return Err(Error::shape("batch_norm", "running statistics do not match channel count"));
        }
        let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (xhat, out) = normalize(
            x.data(),
            c,
            &stats.mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let op = Op::BatchNorm {
            input,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats: false,
        };
        self.push("batch_norm", value, op, &[input, gamma, beta])
    }
}
