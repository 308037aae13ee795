use super::{Cohort, FieldOfView, Image, PixelSpacing};
use crate::data::pairs::PairSampler;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessSpec {
    pub field_of_view: FieldOfView,
    pub out_height: usize,
    pub out_width: usize,
    /// Output row of the flattened surface as a fraction of `out_height - 1`.
    pub anchor: f64,
}

impl PreprocessSpec {
    pub const DEFAULT_ANCHOR: f64 = 0.75;

    pub fn square(size: usize) -> Self {
        PreprocessSpec {
            field_of_view: FieldOfView::default(),
            out_height: size,
            out_width: size,
            anchor: Self::DEFAULT_ANCHOR,
        }
    }
}

fn bilinear(img: &Image, row: f64, col: f64) -> f64 {
    let r = row.clamp(0.0, (img.height - 1) as f64);
    let c = col.clamp(0.0, (img.width - 1) as f64);
    let (r0, c0) = (r.floor() as usize, c.floor() as usize);
    let (r1, c1) = ((r0 + 1).min(img.height - 1), (c0 + 1).min(img.width - 1));
    let (fr, fc) = (r - r0 as f64, c - c0 as f64);
    let at = |rr: usize, cc: usize| img.get(rr, cc) as f64;
    let top = at(r0, c0) + (at(r0, c1) - at(r0, c0)) * fc;
    let bottom = at(r1, c0) + (at(r1, c1) - at(r1, c0)) * fc;
    top + (bottom - top) * fr
}

fn surface_at(surface: &[f32], col: f64) -> f64 {
    let c = col.clamp(0.0, (surface.len() - 1) as f64);
    let c0 = c.floor() as usize;
    let c1 = (c0 + 1).min(surface.len() - 1);
    let f = c - c0 as f64;
    surface[c0] as f64 + (surface[c1] as f64 - surface[c0] as f64) * f
}

/// Flattens the B-scan so that `surface` lies on a fixed output row, crops
/// the physical field of view around it and bilinearly resamples to the
/// output grid. Intensities are clamped to `[0, 1]`.
pub fn flatten_crop_resample(
    raw: &Image,
    surface: &[f32],
    spacing: Option<PixelSpacing>,
    spec: &PreprocessSpec,
) -> Result<Image> {
    let spacing = spacing.ok_or_else(|| Error::Data("pixel spacing metadata is missing".into()))?;
    if !(spacing.axial_mm > 0.0 && spacing.lateral_mm > 0.0) || !spacing.axial_mm.is_finite() || !spacing.lateral_mm.is_finite() {
        return Err(Error::Data(format!("invalid pixel spacing {spacing:?}")));
    }
    if surface.len() != raw.width {
        return Err(Error::Data(format!(
            "surface has {} columns, B-scan has {}",
            surface.len(),
            raw.width
        )));
    }
    let max_row = (raw.height - 1) as f32;
    if let Some(bad) = surface.iter().find(|s| !s.is_finite() || **s < 0.0 || **s > max_row) {
        return Err(Error::Data(format!("surface row {bad} outside image of height {}", raw.height)));
    }
    let (oh, ow) = (spec.out_height, spec.out_width);
    let fov = spec.field_of_view;
    let anchor_row = spec.anchor * (oh - 1) as f64;
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        let depth_mm = (r as f64 - anchor_row) * fov.depth_mm / oh as f64;
        for c in 0..ow {
            let lateral_mm = ((c as f64 + 0.5) / ow as f64 - 0.5) * fov.width_mm;
            let col = raw.width as f64 / 2.0 + lateral_mm / spacing.lateral_mm - 0.5;
            let row = surface_at(surface, col) + depth_mm / spacing.axial_mm;
            out.push(bilinear(raw, row, col).clamp(0.0, 1.0) as f32);
        }
    }
    Image::new(oh, ow, out)
}

/// An eye with every B-scan already preprocessed.
#[derive(Clone, Debug)]
pub struct PreparedEye {
    pub patient_id: u32,
    pub eye_id: u32,
    pub times: Vec<f64>,
    /// `images[scan][bscan]`
    pub images: Vec<Vec<Image>>,
    pub conversion_time: Option<f64>,
    /// Present when the eye has at least two scans.
    pub sampler: Option<PairSampler>,
}

impl PreparedEye {
    pub fn bscans_per_scan(&self) -> usize {
        self.images.first().map_or(0, Vec::len)
    }
}

pub fn prepare_cohort(cohort: &Cohort, spec: &PreprocessSpec) -> Result<Vec<PreparedEye>> {
    let spec = PreprocessSpec {
        field_of_view: cohort.field_of_view,
        ..*spec
    };
    cohort
        .eyes()
        .map(|eye| {
            let images = eye
                .scans
                .iter()
                .map(|scan| {
                    scan.bscans
                        .iter()
                        .zip(&scan.surfaces)
                        .map(|(b, s)| flatten_crop_resample(b, s, cohort.spacing, &spec))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let times = eye.times();
            let sampler = (times.len() >= 2).then(|| PairSampler::new(&times)).transpose()?;
            Ok(PreparedEye {
                patient_id: eye.patient_id,
                eye_id: eye.eye_id,
                times,
                images,
                conversion_time: eye.conversion_time,
                sampler,
            })
        })
        .collect()
}
