//! Interval-regression and conversion-classification metrics, plus
//! cross-validation aggregation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::InvalidInput(format!("{} targets vs {} predictions", y.len(), yhat.len())));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("empty input".into()));
    }
    Ok(())
}

/// Volume-level interval estimate: the mean of the per-B-scan predictions.
pub fn volume_interval_prediction(per_bscan: &[f64]) -> Result<f64> {
    if per_bscan.is_empty() {
        return Err(Error::InvalidInput("no B-scan predictions".into()));
    }
    Ok(per_bscan.iter().sum::<f64>() / per_bscan.len() as f64)
}

pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::InvalidInput("R² needs at least two samples".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("R² of a constant target".into()));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

fn sign_matches(y: f64, yhat: f64) -> bool {
    (y > 0.0 && yhat > 0.0) || (y < 0.0 && yhat < 0.0)
}

/// Fraction of pairs whose predicted interval has the sign of the true one.
/// A zero prediction is never correct.
pub fn order_accuracy(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    if y.contains(&0.0) {
        return Err(Error::InvalidInput("zero true interval has no order".into()));
    }
    let hits = y.iter().zip(yhat).filter(|(a, b)| sign_matches(**a, **b)).count();
    Ok(hits as f64 / y.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalBin {
    /// Absolute interval in months at the bin centre.
    pub interval: f64,
    /// `100 · |ŷ − y| / |y|` for each pair in the bin.
    pub relative_errors_pct: Vec<f64>,
    pub order_accuracy: f64,
}

impl IntervalBin {
    pub fn count(&self) -> usize {
        self.relative_errors_pct.len()
    }
}

/// Groups pairs by `|y|` rounded to the nearest multiple of `bin_width`.
pub fn per_interval_breakdown(y: &[f64], yhat: &[f64], bin_width: f64) -> Result<Vec<IntervalBin>> {
    check_pair(y, yhat)?;
    if !(bin_width > 0.0) {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    if y.contains(&0.0) {
        return Err(Error::InvalidInput("zero true interval has no order".into()));
    }
    let mut bins: BTreeMap<i64, (Vec<f64>, usize)> = BTreeMap::new();
    for (&a, &b) in y.iter().zip(yhat) {
        let key = (a.abs() / bin_width).round() as i64;
        let entry = bins.entry(key).or_default();
        entry.0.push(100.0 * (b - a).abs() / a.abs());
        entry.1 += usize::from(sign_matches(a, b));
    }
    Ok(bins
        .into_iter()
        .map(|(key, (errs, hits))| IntervalBin {
            interval: key as f64 * bin_width,
            order_accuracy: hits as f64 / errs.len() as f64,
            relative_errors_pct: errs,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionMetrics {
    pub r2: f64,
    pub mae_months: f64,
    pub order_accuracy: f64,
    pub per_bin: Vec<IntervalBin>,
}

pub const INTERVAL_BIN_MONTHS: f64 = 3.0;

pub fn regression_metrics(y: &[f64], yhat: &[f64]) -> Result<RegressionMetrics> {
    Ok(RegressionMetrics {
        r2: r_squared(y, yhat)?,
        mae_months: mae(y, yhat)?,
        order_accuracy: order_accuracy(y, yhat)?,
        per_bin: per_interval_breakdown(y, yhat, INTERVAL_BIN_MONTHS)?,
    })
}

fn check_scores(labels: &[bool], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidInput(format!("{} labels vs {} scores", labels.len(), scores.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the ROC curve via the Mann–Whitney rank sum; tied scores
/// receive mid-ranks, so a tied positive/negative pair counts one half.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let (n_pos, n_neg) = check_scores(labels, scores)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("ROC AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid_rank = (i + j + 2) as f64 / 2.0;
        pos_rank_sum += mid_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Mean, over positives in descending score order, of the precision at each
/// positive's rank. Ties keep the original sample order.
pub fn average_precision(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let (n_pos, _) = check_scores(labels, scores)?;
    if n_pos == 0 {
        return Err(Error::Undefined("average precision needs a positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank0, &k) in order.iter().enumerate() {
        if labels[k] {
            hits += 1;
            total += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationMetrics {
    pub roc_auc: f64,
    pub average_precision: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn classification_metrics(labels: &[bool], scores: &[f64]) -> Result<ClassificationMetrics> {
    let (n_pos, n_neg) = check_scores(labels, scores)?;
    Ok(ClassificationMetrics {
        roc_auc: roc_auc(labels, scores)?,
        average_precision: average_precision(labels, scores)?,
        n_pos,
        n_neg,
    })
}

pub type MetricSet = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub per_fold: Vec<MetricSet>,
    pub mean: MetricSet,
    /// Population standard deviation.
    pub std: MetricSet,
    pub metadata: BTreeMap<String, String>,
}

pub fn aggregate_cv(per_fold: &[MetricSet]) -> Result<CvReport> {
    if per_fold.len() < 2 {
        return Err(Error::InvalidInput("cross-validation needs at least two folds".into()));
    }
    let keys: Vec<&String> = per_fold[0].keys().collect();
    if let Some(i) = per_fold.iter().position(|m| m.keys().collect::<Vec<_>>() != keys) {
        return Err(Error::InvalidInput(format!("fold {i} reports a different metric set")));
    }
    let n = per_fold.len() as f64;
    let mut mean = MetricSet::new();
    let mut std = MetricSet::new();
    for key in keys {
        let vals: Vec<f64> = per_fold.iter().map(|m| m[key]).collect();
        let mu = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        mean.insert(key.clone(), mu);
        std.insert(key.clone(), var.sqrt());
    }
    Ok(CvReport {
        per_fold: per_fold.to_vec(),
        mean,
        std,
        metadata: BTreeMap::new(),
    })
}

/// Box-plot summary with whiskers at the furthest points within 1.5·IQR.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("box plot needs finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
    Ok(BoxStats {
        q1,
        median,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: sorted.into_iter().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_prediction_is_mean() {
        assert_eq!(volume_interval_prediction(&[10.0, 14.0]).unwrap(), 12.0);
        assert_eq!(volume_interval_prediction(&[7.0]).unwrap(), 7.0);
        assert_eq!(volume_interval_prediction(&[2.5; 5]).unwrap(), 2.5);
        assert!(volume_interval_prediction(&[]).is_err());
    }

    #[test]
    fn r_squared_examples() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_eq!(r_squared(&y, &[1.0; 3]).unwrap(), 0.0);
        assert!((r_squared(&y, &[0.0; 3]).unwrap() - (-1.5)).abs() < 1e-12);
        assert!(matches!(r_squared(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mae(&[3.0, -6.0], &[6.0, -3.0]).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(mae(&[-3.0, 6.0], &[-6.0, 3.0]).unwrap(), mae(&[3.0, -6.0], &[6.0, -3.0]).unwrap());
    }

    #[test]
    fn order_accuracy_examples() {
        assert!((order_accuracy(&[3.0, -6.0, 12.0], &[1.0, -2.0, -5.0]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(order_accuracy(&[3.0, -6.0], &[3.0, -6.0]).unwrap(), 1.0);
        assert_eq!(order_accuracy(&[3.0, -6.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(order_accuracy(&[], &[]).is_err());
        assert!(order_accuracy(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn breakdown_example() {
        let bins = per_interval_breakdown(&[3.0, 3.0, 6.0], &[3.0, 0.0, 3.0], 3.0).unwrap();
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].interval, 3.0);
        assert_eq!(bins[0].relative_errors_pct, vec![0.0, 100.0]);
        assert_eq!(bins[0].order_accuracy, 0.5);
        assert_eq!(bins[1].interval, 6.0);
        assert_eq!(bins[1].relative_errors_pct, vec![50.0]);
        assert_eq!(bins.iter().map(IntervalBin::count).sum::<usize>(), 3);
    }

    #[test]
    fn breakdown_of_exact_predictions() {
        let y = [3.0, -3.0, 6.0, -9.0, 24.0];
        for bin in per_interval_breakdown(&y, &y, 3.0).unwrap() {
            assert!(bin.relative_errors_pct.iter().all(|&e| e == 0.0));
            assert_eq!(bin.order_accuracy, 1.0);
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[true, false, true, false], &[0.9, 0.1, 0.3, 0.35]).unwrap(), 0.75);
        // one tied positive-negative pair out of four contributes 0.5/4
        assert_eq!(roc_auc(&[true, true, false, false], &[0.9, 0.5, 0.5, 0.1]).unwrap(), 3.5 / 4.0);
        assert!(roc_auc(&[true, true], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[true, false, true], &[0.9, 0.8, 0.7]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&[true, true, false], &[0.9, 0.8, 0.1]).unwrap(), 1.0);
        assert_eq!(average_precision(&[false, false, false, true], &[0.9, 0.8, 0.7, 0.1]).unwrap(), 0.25);
        assert!(average_precision(&[false], &[0.3]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let fold = |v: f64| MetricSet::from([("auc".to_string(), v)]);
        let r = aggregate_cv(&[fold(0.7), fold(0.8)]).unwrap();
        assert!((r.mean["auc"] - 0.75).abs() < 1e-12);
        assert!((r.std["auc"] - 0.05).abs() < 1e-12);
        assert_eq!(r.per_fold.len(), 2);
        let r = aggregate_cv(&vec![fold(0.6); 6]).unwrap();
        assert_eq!(r.std["auc"], 0.0);
        assert_eq!(r.per_fold.len(), 6);
        let other = MetricSet::from([("ap".to_string(), 0.1)]);
        assert!(aggregate_cv(&[fold(0.6), other]).is_err());
        assert!(aggregate_cv(&[fold(0.6)]).is_err());
    }

    #[test]
    fn box_stats_quartiles() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0]).unwrap();
        assert_eq!(b.median, 3.5);
        assert_eq!(b.q1, 2.25);
        assert_eq!(b.q3, 4.75);
        assert_eq!(b.whisker_high, 5.0);
        assert_eq!(b.outliers, vec![100.0]);
    }
}
