use super::{EyeSeries, Image, Scan};
use crate::error::{Error, Result};

/// The single visit chosen for the conversion task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Visit {
    pub scan_index: usize,
    pub time: f64,
    /// True when the eye converts within the horizon of this visit.
    pub converts: bool,
}

/// Converters: among scans with `0 < conversion - t <= horizon`, the one
/// furthest from conversion (positive). Non-converters: among scans with
/// `0 < t_last - t <= horizon`, the one furthest from the last acquisition
/// (negative). `None` when no scan qualifies.
pub fn select_visit(series: &EyeSeries, horizon: f64) -> Option<Visit> {
    select_visit_at(&series.times(), series.conversion_time, horizon)
}

/// [`select_visit`] on bare acquisition times (ascending).
pub fn select_visit_at(times: &[f64], conversion_time: Option<f64>, horizon: f64) -> Option<Visit> {
    let (anchor, converts) = match conversion_time {
        Some(c) => (c, true),
        None => (*times.last()?, false),
    };
    times
        .iter()
        .enumerate()
        .filter(|(_, &t)| {
            let gap = anchor - t;
            gap > 0.0 && gap <= horizon
        })
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &time)| Visit {
            scan_index: i,
            time,
            converts,
        })
}

pub fn central_index(n: usize) -> usize {
    n / 2
}

pub fn central_bscan(scan: &Scan) -> Result<&Image> {
    if scan.bscans.is_empty() {
        return Err(Error::Data("empty volume has no central B-scan".into()));
    }
    Ok(&scan.bscans[central_index(scan.bscans.len())])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(times: &[f64], conversion: Option<f64>) -> EyeSeries {
        EyeSeries {
            eye_id: 1,
            patient_id: 1,
            scans: times
                .iter()
                .map(|&t| Scan {
                    time: t,
                    bscans: vec![Image::zeros(2, 2)],
                    surfaces: vec![vec![0.0; 2]],
                    lesion_area: None,
                })
                .collect(),
            conversion_time: conversion,
        }
    }

    #[test]
    fn converter_picks_furthest_eligible_scan() {
        let v = select_visit(&series(&[6.0, 12.0, 18.0, 21.0], Some(24.0)), 12.0).unwrap();
        assert_eq!(v.time, 12.0);
        assert!(v.converts);
    }

    #[test]
    fn non_converter_window_anchored_at_last_scan() {
        let v = select_visit(&series(&[6.0, 18.0, 24.0, 30.0, 33.0, 36.0], None), 12.0).unwrap();
        assert_eq!(v.time, 24.0);
        assert!(!v.converts);
    }

    #[test]
    fn empty_window_gives_none() {
        assert_eq!(select_visit(&series(&[0.0, 10.0], Some(20.0)), 6.0), None);
        assert_eq!(select_visit(&series(&[5.0], None), 12.0), None);
    }

    #[test]
    fn central_index_floor_rule() {
        assert_eq!(central_index(5), 2);
        assert_eq!(central_index(1), 0);
        assert_eq!(central_index(4), 2);
        let empty = Scan {
            time: 0.0,
            bscans: vec![],
            surfaces: vec![],
            lesion_area: None,
        };
        assert!(central_bscan(&empty).is_err());
    }
}
