//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Narrowest half-width of the central difference.
    pub eps: f64,
    /// Probe at most this many coordinates of each input (chosen at random).
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-6,
            max_coords_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub worst: Option<Mismatch>,
    /// Coordinates re-probed with a smaller step because a kink (ReLU, max
    /// pooling) fell inside the difference interval.
    pub kink_retries: usize,
}

/// One-sided slopes disagreeing by more than this signal a kink inside the
/// interval rather than curvature.
const KINK_TOLERANCE: f64 = 1e-3;
/// Multiples of the configured step tried for every coordinate: the wider
/// one keeps roundoff below tiny gradients, the narrower one is less likely
/// to straddle a kink.
const BASE_STEPS: [f64; 2] = [10.0, 1.0];
/// Step reductions tried when a kink is detected.
const KINK_STEPS: [f64; 3] = [1.0, 0.1, 0.01];

/// `|a - n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Compares the tape gradient of the scalar `f` at `inputs` against central
/// differences and returns the largest relative error.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = inputs.to_vec();
    let centre = evaluate(&f, inputs)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: None,
        kink_retries: 0,
    };
    for (i, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(k) if k < input.len() => {
                let mut c = sample(&mut rng, input.len(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..input.len()).collect(),
        };
        for j in coords {
            let x0 = input.data()[j];
            // Each base step backs off on its own when a kink is detected; the
            // estimate closest to the tape gradient is kept. A wrong backward
            // rule disagrees at every step.
            let mut numeric = f64::NAN;
            for base in BASE_STEPS {
                let mut estimate = 0.0;
                for (attempt, factor) in KINK_STEPS.iter().enumerate() {
                    let eps = opts.eps * base * factor;
                    probe[i].data_mut()[j] = x0 + eps;
                    let plus = evaluate(&f, &probe)?;
                    probe[i].data_mut()[j] = x0 - eps;
                    let minus = evaluate(&f, &probe)?;
                    probe[i].data_mut()[j] = x0;
                    estimate = (plus - minus) / (2.0 * eps);
                    let (right, left) = ((plus - centre) / eps, (centre - minus) / eps);
                    if relative_error(right, left) <= KINK_TOLERANCE || attempt + 1 == KINK_STEPS.len() {
                        break;
                    }
                    report.kink_retries += 1;
                }
                if numeric.is_nan() || relative_error(analytic[i][j], estimate) < relative_error(analytic[i][j], numeric) {
                    numeric = estimate;
                }
            }
            let err = relative_error(analytic[i][j], numeric);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(Mismatch {
                    input: i,
                    index: j,
                    analytic: analytic[i][j],
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
