use crate::data::{Image, PreparedEye};
use crate::error::{Error, Result};
use crate::evaluation::{regression_metrics, volume_interval_prediction, RegressionMetrics};
use crate::models::SiameseModel;

/// Interval predictions for every ordered pair of distinct visits in a set
/// of held-out eyes.
#[derive(Clone, Debug)]
pub struct PretextEvaluation {
    pub eye_ids: Vec<u32>,
    /// True intervals `t_b - t_a`, months.
    pub y: Vec<f64>,
    /// Volume-level predictions (mean over B-scans), months.
    pub yhat: Vec<f64>,
    pub metrics: RegressionMetrics,
}

impl PretextEvaluation {
    /// Order accuracy over pairs whose true interval satisfies `keep`.
    pub fn order_accuracy_where(&self, keep: impl Fn(f64) -> bool) -> Option<f64> {
        let hits: Vec<bool> = self
            .y
            .iter()
            .zip(&self.yhat)
            .filter(|(y, _)| keep(**y))
            .map(|(y, p)| (*y > 0.0 && *p > 0.0) || (*y < 0.0 && *p < 0.0))
            .collect();
        (!hits.is_empty()).then(|| hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64)
    }
}

pub fn evaluate_pretext(model: &SiameseModel, eyes: &[&PreparedEye]) -> Result<PretextEvaluation> {
    let (mut eye_ids, mut y, mut yhat) = (Vec::new(), Vec::new(), Vec::new());
    for eye in eyes.iter().filter(|e| e.times.len() >= 2) {
        let per_scan = eye.bscans_per_scan();
        let images: Vec<&Image> = eye.images.iter().flatten().collect();
        let emb = model.embed(&images)?;
        let n = eye.times.len();
        let mut pairs = Vec::with_capacity(n * (n - 1) * per_scan);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                for k in 0..per_scan {
                    pairs.push((&emb[a * per_scan + k], &emb[b * per_scan + k]));
                }
            }
        }
        let preds = model.predict_from_embeddings(&pairs)?;
        let mut chunks = preds.chunks(per_scan);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let chunk = chunks.next().expect("one chunk per ordered pair");
                eye_ids.push(eye.eye_id);
                y.push(eye.times[b] - eye.times[a]);
                yhat.push(volume_interval_prediction(chunk)?);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Data("no held-out eye has two or more scans".into()));
    }
    let metrics = regression_metrics(&y, &yhat)?;
    Ok(PretextEvaluation { eye_ids, y, yhat, metrics })
}
