use rand::Rng;

use super::{Image, PreparedEye};
use crate::error::{Error, Result};

/// Width of the interval bins used to flatten the pair distribution.
pub const BIN_WIDTH_MONTHS: f64 = 3.0;

/// Draws ordered scan pairs of one eye so that the signed interval is close
/// to uniform: a non-empty interval bin is chosen uniformly, then a pair
/// uniformly within it. Same-scan pairs are never produced.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSampler {
    times: Vec<f64>,
    /// Non-empty bins in ascending interval order; each holds `(a, b)` scan
    /// indices with `delta = t_b - t_a`.
    bins: Vec<(i64, Vec<(usize, usize)>)>,
}

impl PairSampler {
    pub fn new(times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Data(format!("pair sampling needs 2 scans, eye has {}", times.len())));
        }
        let mut bins: std::collections::BTreeMap<i64, Vec<(usize, usize)>> = Default::default();
        for a in 0..times.len() {
            for b in 0..times.len() {
                if a != b {
                    let key = ((times[b] - times[a]) / BIN_WIDTH_MONTHS).round() as i64;
                    bins.entry(key).or_default().push((a, b));
                }
            }
        }
        Ok(PairSampler {
            times: times.to_vec(),
            bins: bins.into_iter().collect(),
        })
    }

    /// `(scan_a, scan_b, t_b - t_a)`
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize, f64) {
        let (_, pairs) = &self.bins[rng.random_range(0..self.bins.len())];
        let (a, b) = pairs[rng.random_range(0..pairs.len())];
        (a, b, self.times[b] - self.times[a])
    }

    /// Signed bin centres with their sampling probability.
    pub fn bin_probabilities(&self) -> Vec<(f64, f64)> {
        let p = 1.0 / self.bins.len() as f64;
        self.bins.iter().map(|(k, _)| (*k as f64 * BIN_WIDTH_MONTHS, p)).collect()
    }

    /// Every ordered pair of distinct scans.
    pub fn all_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.bins
            .iter()
            .flat_map(|(_, pairs)| pairs.iter())
            .map(|&(a, b)| (a, b, self.times[b] - self.times[a]))
    }
}

/// Two B-scans at the same slice index from two visits of one eye.
#[derive(Clone, Copy, Debug)]
pub struct ScanPair<'a> {
    pub bscan_a: &'a Image,
    pub bscan_b: &'a Image,
    pub delta_t: f64,
    pub eye_id: u32,
    pub bscan_index: usize,
    pub scan_a: usize,
    pub scan_b: usize,
}

thread_local! {
    static CONSTRUCTED: std::cell::Cell<usize> = const { std::cell::Cell::new(0) };
}

/// Number of [`ScanPair`]s built by [`sample_pair`] on the current thread.
pub fn pairs_constructed() -> usize {
    CONSTRUCTED.with(|c| c.get())
}

pub fn sample_pair<'a, R: Rng + ?Sized>(eye: &'a PreparedEye, bscan_index: usize, rng: &mut R) -> Result<ScanPair<'a>> {
    let sampler = eye
        .sampler
        .as_ref()
        .ok_or_else(|| Error::Data(format!("eye {} has fewer than 2 scans", eye.eye_id)))?;
    if bscan_index >= eye.bscans_per_scan() {
        return Err(Error::Data(format!("B-scan index {bscan_index} out of range")));
    }
    let (a, b, delta_t) = sampler.sample(rng);
    CONSTRUCTED.with(|c| c.set(c.get() + 1));
    Ok(ScanPair {
        bscan_a: &eye.images[a][bscan_index],
        bscan_b: &eye.images[b][bscan_index],
        delta_t,
        eye_id: eye.eye_id,
        bscan_index,
        scan_a: a,
        scan_b: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_scans_give_symmetric_intervals() {
        let s = PairSampler::new(&[0.0, 3.0]).unwrap();
        assert_eq!(s.bin_probabilities(), vec![(-3.0, 0.5), (3.0, 0.5)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let plus = (0..n).filter(|_| s.sample(&mut rng).2 == 3.0).count();
        assert!((plus as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn three_scans_bins_are_equiprobable() {
        let s = PairSampler::new(&[0.0, 3.0, 6.0]).unwrap();
        let mut deltas: Vec<f64> = s.all_pairs().map(|p| p.2).collect();
        deltas.sort_by(f64::total_cmp);
        assert_eq!(deltas, vec![-6.0, -3.0, -3.0, 3.0, 3.0, 6.0]);
        assert_eq!(
            s.bin_probabilities(),
            vec![(-6.0, 0.25), (-3.0, 0.25), (3.0, 0.25), (6.0, 0.25)]
        );
    }

    #[test]
    fn single_scan_is_rejected() {
        assert!(PairSampler::new(&[0.0]).is_err());
    }

    #[test]
    fn sampled_delta_matches_times() {
        let times = [0.0, 3.0, 9.0, 15.0, 18.0];
        let s = PairSampler::new(&times).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (a, b, d) = s.sample(&mut rng);
            assert_ne!(a, b);
            assert_eq!(d, times[b] - times[a]);
        }
    }
}
