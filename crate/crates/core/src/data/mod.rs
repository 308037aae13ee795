//! Longitudinal cohort model and everything that turns it into training
//! samples: preprocessing, interval-pair sampling, patient folds, visit
//! selection for the conversion task and the synthetic cohort generator.

mod folds;
mod io;
mod pairs;
mod preprocess;
mod synth;
mod visits;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use folds::{make_folds, FoldAssignment, FoldRoles, Split};
pub use io::{load_cohort, save_cohort, COHORT_MANIFEST, COHORT_SCHEMA_VERSION};
pub use pairs::{pairs_constructed, sample_pair, PairSampler, ScanPair, BIN_WIDTH_MONTHS};
pub use preprocess::{flatten_crop_resample, prepare_cohort, PreparedEye, PreprocessSpec};
pub use synth::{generate_cohort, SynthConfig};
pub use visits::{central_bscan, central_index, select_visit, select_visit_at, Visit};

/// Single-channel image, row-major, 32-bit intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::Data(format!(
                "{} pixels do not fill a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Image { height, width, pixels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }
}

/// Physical size of one raw pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelSpacing {
    pub axial_mm: f64,
    pub lateral_mm: f64,
}

/// Physical crop window, lateral × axial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub width_mm: f64,
    pub depth_mm: f64,
}

impl Default for FieldOfView {
    fn default() -> Self {
        FieldOfView {
            width_mm: 6.0,
            depth_mm: 0.5,
        }
    }
}

/// One OCT volume acquired at `time` months after the eye's baseline visit.
#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub time: f64,
    pub bscans: Vec<Image>,
    /// Bruch's membrane row per column, one profile per B-scan.
    pub surfaces: Vec<Vec<f32>>,
    /// Ground-truth lesion area in raw pixels (synthetic data only).
    pub lesion_area: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EyeSeries {
    pub eye_id: u32,
    pub patient_id: u32,
    pub scans: Vec<Scan>,
    /// Months from baseline to conversion to advanced disease, if observed.
    pub conversion_time: Option<f64>,
}

impl EyeSeries {
    pub fn times(&self) -> Vec<f64> {
        self.scans.iter().map(|s| s.time).collect()
    }

    pub fn is_converter(&self) -> bool {
        self.conversion_time.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::Data(format!("eye {}: {msg}", self.eye_id));
        if self.scans.is_empty() {
            return Err(ctx("no scans".into()));
        }
        for w in self.scans.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(ctx(format!("acquisition times {} and {} are not increasing", w[0].time, w[1].time)));
            }
        }
        let first = &self.scans[0].bscans;
        let (h, w) = first.first().map(|b| (b.height, b.width)).ok_or_else(|| ctx("empty volume".into()))?;
        for scan in &self.scans {
            if !scan.time.is_finite() || scan.time < 0.0 {
                return Err(ctx(format!("invalid acquisition time {}", scan.time)));
            }
            if scan.bscans.len() != first.len() || scan.surfaces.len() != scan.bscans.len() {
                return Err(ctx("inconsistent B-scan count".into()));
            }
            if scan.bscans.iter().any(|b| b.height != h || b.width != w) {
                return Err(ctx("B-scans differ in size".into()));
            }
            if scan.surfaces.iter().any(|s| s.len() != w) {
                return Err(ctx("surface profile does not span the B-scan width".into()));
            }
        }
        if let Some(c) = self.conversion_time {
            if self.scans.iter().any(|s| s.time > c) {
                return Err(ctx(format!("scan acquired after conversion at {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patient {
    pub id: u32,
    pub eyes: Vec<EyeSeries>,
}

impl Patient {
    pub fn is_converter(&self) -> bool {
        self.eyes.iter().any(EyeSeries::is_converter)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub patients: Vec<Patient>,
    pub spacing: Option<PixelSpacing>,
    pub field_of_view: FieldOfView,
}

impl Cohort {
    pub fn eyes(&self) -> impl Iterator<Item = &EyeSeries> {
        self.patients.iter().flat_map(|p| p.eyes.iter())
    }

    pub fn scan_count(&self) -> usize {
        self.eyes().map(|e| e.scans.len()).sum()
    }

    pub fn converter_eyes(&self) -> usize {
        self.eyes().filter(|e| e.is_converter()).count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        let mut patients = std::collections::HashSet::new();
        for p in &self.patients {
            if !patients.insert(p.id) {
                return Err(Error::Data(format!("duplicate patient {}", p.id)));
            }
            if p.eyes.is_empty() || p.eyes.len() > 2 {
                return Err(Error::Data(format!("patient {} has {} eyes", p.id, p.eyes.len())));
            }
            for e in &p.eyes {
                if e.patient_id != p.id {
                    return Err(Error::Data(format!("eye {} filed under patient {}", e.eye_id, p.id)));
                }
                if !seen.insert(e.eye_id) {
                    return Err(Error::Data(format!("duplicate eye id {}", e.eye_id)));
                }
                e.validate()?;
            }
        }
        Ok(())
    }
}
