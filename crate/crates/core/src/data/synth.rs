//! Synthetic longitudinal cohorts of layered retinal B-scans.
//!
//! Each eye carries drusen-like lesions that lift the pigment band off the
//! baseline surface and grow linearly at an eye-specific rate. Growth also
//! thins the dark outer band. Conversion is drawn from a monthly hazard
//! that rises with lesion burden and is diagnosed at the first scheduled
//! visit after onset; that visit shows a choroidal hypertransmission
//! signature and ends the series.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Cohort, EyeSeries, FieldOfView, Image, Patient, PixelSpacing, Scan};
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Probability that a patient contributes a second eye.
    pub second_eye_probability: f64,
    /// Raw B-scan width and preprocessed size; raw depth is twice this.
    pub image_size: usize,
    pub bscans_per_volume: usize,
    /// Each eye follows one of these visit spacings.
    pub visit_spacings_months: Vec<f64>,
    pub min_followup_months: f64,
    pub max_followup_months: f64,
    pub lesions_per_eye: usize,
    /// Initial-scale lesion height as a fraction of the crop depth.
    pub lesion_amplitude: f64,
    /// Mean lesion growth per month, relative to `lesion_amplitude`.
    pub lesion_growth_rate: f64,
    /// Log-normal spread of per-eye growth rates.
    pub growth_rate_spread: f64,
    /// Outer-band thinning per unit of lesion growth.
    pub progression_strength: f64,
    /// Conversion hazard per month at unit lesion burden (lesion area
    /// relative to a typical eye at unit lesion scale).
    pub conversion_hazard: f64,
    /// Log-hazard increase per unit burden.
    pub hazard_burden_gain: f64,
    /// Brightness of the hypertransmission signature at diagnosis.
    pub atrophy_amplitude: f64,
    /// Relative spread of per-eye anatomy (thickness, curvature, gain).
    pub anatomy_variation: f64,
    pub noise_std: f64,
    /// Standard deviation of per-visit registration shifts, in pixels.
    pub jitter_px: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 60,
            second_eye_probability: 0.8,
            image_size: 32,
            bscans_per_volume: 5,
            visit_spacings_months: vec![3.0, 6.0],
            min_followup_months: 36.0,
            max_followup_months: 84.0,
            lesions_per_eye: 3,
            lesion_amplitude: 0.1,
            lesion_growth_rate: 0.015,
            growth_rate_spread: 1.0,
            progression_strength: 0.5,
            conversion_hazard: 0.004,
            hazard_burden_gain: 6.0,
            atrophy_amplitude: 0.3,
            anatomy_variation: 0.1,
            noise_std: 0.03,
            jitter_px: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1");
        }
        if self.image_size < 8 || self.image_size % 8 != 0 {
            return bad("image_size must be a positive multiple of 8");
        }
        if self.bscans_per_volume == 0 {
            return bad("bscans_per_volume must be at least 1");
        }
        if self.visit_spacings_months.is_empty() || self.visit_spacings_months.iter().any(|s| !(*s > 0.0)) {
            return bad("visit spacings must be positive");
        }
        if !(self.min_followup_months >= 0.0 && self.min_followup_months <= self.max_followup_months) {
            return bad("follow-up range is empty");
        }
        if !(0.0..=1.0).contains(&self.second_eye_probability) {
            return bad("second_eye_probability must lie in [0, 1]");
        }
        let rates = [
            ("lesion_amplitude", self.lesion_amplitude),
            ("lesion_growth_rate", self.lesion_growth_rate),
            ("growth_rate_spread", self.growth_rate_spread),
            ("progression_strength", self.progression_strength),
            ("conversion_hazard", self.conversion_hazard),
            ("hazard_burden_gain", self.hazard_burden_gain),
            ("atrophy_amplitude", self.atrophy_amplitude),
            ("anatomy_variation", self.anatomy_variation),
            ("noise_std", self.noise_std),
            ("jitter_px", self.jitter_px),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("synth: {name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.anatomy_variation >= 0.5 {
            return bad("anatomy_variation must be below 0.5");
        }
        Ok(())
    }

    pub fn raw_height(&self) -> usize {
        2 * self.image_size
    }

    pub fn spacing(&self, fov: FieldOfView) -> PixelSpacing {
        PixelSpacing {
            axial_mm: fov.depth_mm / self.image_size as f64,
            lateral_mm: fov.width_mm / self.image_size as f64,
        }
    }
}

#[derive(Clone, Debug)]
struct Lesion {
    x0: f64,
    sigma_x: f64,
    y0: f64,
    sigma_y: f64,
    initial: f64,
}

/// Time-invariant anatomy of one eye, in raw pixel units.
#[derive(Clone, Debug)]
struct EyeModel {
    lesions: Vec<Lesion>,
    growth: f64,
    bm_row: f64,
    curvature: f64,
    tilt: f64,
    outer_band: f64,
    inner_band: f64,
    gain: f64,
    choroid_phase: f64,
}

const VITREOUS: f64 = 0.02;
const DEEP: f64 = 0.08;
const CHOROID: f64 = 0.3;
const DRUSEN: f64 = 0.5;
const PIGMENT: f64 = 0.9;
const OUTER: f64 = 0.12;
const INNER: f64 = 0.5;
const FIBER: f64 = 0.8;

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl EyeModel {
    fn sample(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let s = cfg.image_size as f64;
        let var = cfg.anatomy_variation;
        let jiggle = |rng: &mut ChaCha8Rng| uniform(rng, 1.0 - var, 1.0 + var);
        let n = cfg.lesions_per_eye;
        let count = if n == 0 { 0 } else { rng.random_range(n.saturating_sub(1).max(1)..=n + 1) };
        let lesions = (0..count)
            .map(|_| Lesion {
                x0: uniform(rng, 0.15, 0.85) * s,
                sigma_x: uniform(rng, 0.04, 0.08) * s,
                y0: uniform(rng, -1.0, 1.0),
                sigma_y: uniform(rng, 0.5, 1.0),
                initial: uniform(rng, 0.2, 0.8),
            })
            .collect();
        let log_spread = Normal::new(0.0, cfg.growth_rate_spread.max(1e-12)).expect("valid normal");
        let growth = cfg.lesion_growth_rate * (log_spread.sample(rng) - 0.5 * cfg.growth_rate_spread.powi(2)).exp();
        EyeModel {
            lesions,
            growth,
            bm_row: s * uniform(rng, 1.0 - 0.1 * var, 1.0 + 0.1 * var) + 0.05 * s,
            curvature: s * uniform(rng, 0.04, 0.12),
            tilt: s * uniform(rng, -0.06, 0.06),
            outer_band: 0.18 * s * jiggle(rng),
            inner_band: 0.25 * s * jiggle(rng),
            gain: jiggle(rng),
            choroid_phase: uniform(rng, 0.0, std::f64::consts::TAU),
        }
    }

    /// Relative lesion size: starts at `initial`, grows by `growth` per month.
    fn lesion_scale(&self, lesion: &Lesion, t: f64) -> f64 {
        lesion.initial + self.growth * t
    }

    /// Lesion elevation in pixels at lateral position `x`, slice `y`.
    fn elevation(&self, cfg: &SynthConfig, t: f64, x: f64, y: f64) -> f64 {
        let amp = cfg.lesion_amplitude * cfg.image_size as f64;
        self.lesions
            .iter()
            .map(|l| {
                let dx = (x - l.x0) / l.sigma_x;
                let dy = (y - l.y0) / l.sigma_y;
                amp * self.lesion_scale(l, t) * (-0.5 * (dx * dx + dy * dy)).exp()
            })
            .sum()
    }
}

fn slice_position(b: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * b as f64 / (n - 1) as f64 - 1.0
    }
}

struct VisitState {
    t: f64,
    shift_rows: f64,
    shift_cols: f64,
    atrophy: f64,
}

/// Pixel coverage of `[top, bottom)` for the pixel centred on `row`.
fn coverage(top: f64, bottom: f64, row: f64) -> f64 {
    (bottom.min(row + 0.5) - top.max(row - 0.5)).max(0.0)
}

fn render_bscan(
    cfg: &SynthConfig,
    eye: &EyeModel,
    visit: &VisitState,
    b: usize,
    rng: &mut ChaCha8Rng,
    noise: &Normal<f64>,
) -> (Image, Vec<f32>) {
    let (h, w) = (cfg.raw_height(), cfg.image_size);
    let s = cfg.image_size as f64;
    let y = slice_position(b, cfg.bscans_per_volume);
    let growth_since_baseline = eye.growth * visit.t;
    let outer = eye.outer_band * (1.0 - cfg.progression_strength * growth_since_baseline).max(0.2);
    let pigment = 0.05 * s;
    let fiber = 0.04 * s;
    let mut pixels = vec![0.0f32; h * w];
    let mut surface = Vec::with_capacity(w);
    for c in 0..w {
        let x = c as f64 + visit.shift_cols;
        let u = (x - s / 2.0) / (s / 2.0);
        let bm = eye.bm_row + visit.shift_rows + eye.curvature * (1.0 - u * u) * (1.0 - 0.2 * y * y) + eye.tilt * u;
        surface.push(bm as f32);
        let d = eye.elevation(cfg, visit.t, x, y);
        let choroid = CHOROID
            + 0.05 * (0.7 * x + eye.choroid_phase).sin()
            + visit.atrophy * cfg.atrophy_amplitude * (-(d / (0.02 * s + 1e-9)).powi(2)).exp().max(0.5);
        let pigment_bottom = bm - d;
        let pigment_top = pigment_bottom - pigment;
        let outer_top = pigment_top - outer;
        let inner_top = outer_top - eye.inner_band;
        let layers = [
            (f64::NEG_INFINITY, inner_top, VITREOUS),
            (inner_top, inner_top + fiber, FIBER),
            (inner_top + fiber, outer_top, INNER),
            (outer_top, pigment_top, OUTER),
            (pigment_top, pigment_bottom, PIGMENT),
            (pigment_bottom, bm, DRUSEN),
            (bm, bm + 0.3 * s, choroid),
            (bm + 0.3 * s, f64::INFINITY, DEEP),
        ];
        for r in 0..h {
            let row = r as f64;
            let v: f64 = layers
                .iter()
                .map(|&(top, bottom, value)| coverage(top, bottom, row) * value)
                .sum();
            let n = if cfg.noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
            pixels[r * w + c] = (eye.gain * v + n) as f32;
        }
    }
    (Image { height: h, width: w, pixels }, surface)
}

fn lesion_area(cfg: &SynthConfig, eye: &EyeModel, t: f64) -> f64 {
    let n = cfg.bscans_per_volume;
    let total: f64 = (0..n)
        .map(|b| {
            let y = slice_position(b, n);
            (0..cfg.image_size).map(|c| eye.elevation(cfg, t, c as f64, y)).sum::<f64>()
        })
        .sum();
    total / n as f64
}

fn visit_schedule(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let spacing = cfg.visit_spacings_months[rng.random_range(0..cfg.visit_spacings_months.len())];
    let duration = uniform(rng, cfg.min_followup_months, cfg.max_followup_months);
    let n = (duration / spacing).floor() as usize;
    (0..=n).map(|k| k as f64 * spacing).collect()
}

/// Lesion area of a typical eye whose lesions are all at unit scale.
fn unit_area(cfg: &SynthConfig) -> f64 {
    let s = cfg.image_size as f64;
    let per_lesion = cfg.lesion_amplitude * s * 0.06 * s * (2.0 * std::f64::consts::PI).sqrt() * 0.75;
    per_lesion * cfg.lesions_per_eye.max(1) as f64
}

/// Month of latent onset, if it happens before `horizon`. The hazard is
/// driven by the visible lesion area relative to [`unit_area`].
fn sample_onset(cfg: &SynthConfig, eye: &EyeModel, horizon: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    let unit = unit_area(cfg);
    let mut m = 0.0;
    while m < horizon {
        let burden = if unit > 0.0 { lesion_area(cfg, eye, m + 0.5) / unit } else { 0.0 };
        let hazard = cfg.conversion_hazard * (cfg.hazard_burden_gain * (burden - 1.0)).exp();
        if rng.random::<f64>() < 1.0 - (-hazard).exp() {
            return Some(m + rng.random::<f64>());
        }
        m += 1.0;
    }
    None
}

fn generate_eye(cfg: &SynthConfig, patient_id: u32, eye_id: u32, rng: &mut ChaCha8Rng) -> EyeSeries {
    let model = EyeModel::sample(cfg, rng);
    let mut times = visit_schedule(cfg, rng);
    let last = *times.last().expect("schedule starts at 0");
    let conversion_time = sample_onset(cfg, &model, last, rng)
        .and_then(|onset| times.iter().copied().find(|&t| t >= onset));
    if let Some(c) = conversion_time {
        times.retain(|&t| t <= c);
    }
    let jitter = Normal::new(0.0, cfg.jitter_px.max(1e-12)).expect("valid normal");
    let noise = Normal::new(0.0, cfg.noise_std.max(1e-12)).expect("valid normal");
    let scans = times
        .iter()
        .map(|&t| {
            let (shift_rows, shift_cols) = if cfg.jitter_px > 0.0 {
                (jitter.sample(rng), jitter.sample(rng))
            } else {
                (0.0, 0.0)
            };
            let visit = VisitState {
                t,
                shift_rows,
                shift_cols,
                atrophy: if conversion_time == Some(t) { 1.0 } else { 0.0 },
            };
            let (bscans, surfaces) = (0..cfg.bscans_per_volume)
                .map(|b| render_bscan(cfg, &model, &visit, b, rng, &noise))
                .unzip();
            Scan {
                time: t,
                bscans,
                surfaces,
                lesion_area: Some(lesion_area(cfg, &model, t)),
            }
        })
        .collect();
    EyeSeries {
        eye_id,
        patient_id,
        scans,
        conversion_time,
    }
}

/// Builds a cohort; patient `i` draws from its own seeded stream, so the
/// result does not depend on generation order.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<Cohort> {
    cfg.validate()?;
    let fov = FieldOfView::default();
    let patients = (0..cfg.n_patients)
        .map(|i| {
            let mut rng = rng_for(cfg.seed, &[stream::PATIENT, i as u64]);
            let id = i as u32;
            let n_eyes = if rng.random::<f64>() < cfg.second_eye_probability { 2 } else { 1 };
            let eyes = (0..n_eyes).map(|e| generate_eye(cfg, id, 2 * id + e, &mut rng)).collect();
            Patient { id, eyes }
        })
        .collect();
    let cohort = Cohort {
        patients,
        spacing: Some(cfg.spacing(fov)),
        field_of_view: fov,
    };
    cohort.validate()?;
    Ok(cohort)
}
