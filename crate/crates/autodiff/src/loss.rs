use crate::error::{Error, Result};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

impl Tape {
    fn squared_error(&mut self, name: &'static str, pred: Var, target: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(Error::shape(name, format!("{} predictions for {} targets", p.len(), target.len())));
        }
        let sse: f64 = p.data().iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        let value = Tensor::scalar(sse / p.len() as f64);
        let op = Op::SquaredError {
            pred,
            target: target.to_vec(),
        };
        self.push(name, value, op, &[pred])
    }

    /// Squared error of scalar regression outputs, averaged over the batch.
    pub fn l2_loss(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        self.squared_error("l2_loss", pred, target)
    }

    /// Mean squared error over every element (pixels of a reconstruction).
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        self.squared_error("mse", pred, target)
    }

    /// Mean negative log-likelihood of `labels` under row-wise distributions.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let p = self.value(probs);
        let k = p.last_dim();
        if p.len() != labels.len() * k {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} labels for probabilities {:?}", labels.len(), p.shape()),
            ));
        }
        let mut total = 0.0;
        for (row, &label) in p.data().chunks(k).zip(labels) {
            if label >= k {
                return Err(Error::shape("cross_entropy", format!("label {label} out of {k} classes")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|&v| v < 0.0) {
                return Err(Error::shape("cross_entropy", format!("row is not a distribution (sum {s})")));
            }
            total -= row[label].max(PROB_FLOOR).ln();
        }
        let value = Tensor::scalar(total / labels.len() as f64);
        let op = Op::CrossEntropy {
            probs,
            labels: labels.to_vec(),
        };
        self.push("cross_entropy", value, op, &[probs])
    }
}
