//! Cohort directory: `cohort.toml` plus one little-endian f32 file per
//! B-scan and per surface profile.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Cohort, EyeSeries, FieldOfView, Image, Patient, PixelSpacing, Scan};
use crate::error::{Error, Result};

pub const COHORT_MANIFEST: &str = "cohort.toml";
pub const COHORT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    image_height: usize,
    image_width: usize,
    bscans_per_volume: usize,
    spacing: Option<PixelSpacing>,
    field_of_view: FieldOfView,
    patients: Vec<PatientEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatientEntry {
    id: u32,
    eyes: Vec<EyeEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EyeEntry {
    id: u32,
    conversion_time: Option<f64>,
    scans: Vec<ScanEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanEntry {
    time: f64,
    lesion_area: Option<f64>,
    bscans: Vec<String>,
    surfaces: Vec<String>,
}

fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(path, format!("expected {} bytes, found {}", expected * 4, bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Writes `cohort` under `dir`, creating it if needed.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf> {
    cohort.validate()?;
    let first = cohort
        .eyes()
        .next()
        .ok_or_else(|| Error::Data("cannot save an empty cohort".into()))?;
    let (height, width) = (first.scans[0].bscans[0].height, first.scans[0].bscans[0].width);
    let bscans_per_volume = first.scans[0].bscans.len();
    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut patients = Vec::with_capacity(cohort.patients.len());
    for p in &cohort.patients {
        let mut eyes = Vec::with_capacity(p.eyes.len());
        for eye in &p.eyes {
            let mut scans = Vec::with_capacity(eye.scans.len());
            for (k, scan) in eye.scans.iter().enumerate() {
                if scan.bscans.len() != bscans_per_volume
                    || scan.bscans.iter().any(|b| b.height != height || b.width != width)
                {
                    return Err(Error::Data(format!("eye {}: B-scans differ from the cohort shape", eye.eye_id)));
                }
                let mut bscans = Vec::new();
                let mut surfaces = Vec::new();
                for (b, (img, surf)) in scan.bscans.iter().zip(&scan.surfaces).enumerate() {
                    let stem = format!("e{}_s{k}_b{b}", eye.eye_id);
                    let img_name = format!("images/{stem}.f32");
                    let surf_name = format!("images/{stem}_surface.f32");
                    write_f32(&dir.join(&img_name), &img.pixels)?;
                    write_f32(&dir.join(&surf_name), surf)?;
                    bscans.push(img_name);
                    surfaces.push(surf_name);
                }
                scans.push(ScanEntry {
                    time: scan.time,
                    lesion_area: scan.lesion_area,
                    bscans,
                    surfaces,
                });
            }
            eyes.push(EyeEntry {
                id: eye.eye_id,
                conversion_time: eye.conversion_time,
                scans,
            });
        }
        patients.push(PatientEntry { id: p.id, eyes });
    }
    let manifest = Manifest {
        schema_version: COHORT_SCHEMA_VERSION,
        image_height: height,
        image_width: width,
        bscans_per_volume,
        spacing: cohort.spacing,
        field_of_view: cohort.field_of_view,
        patients,
    };
    let path = dir.join(COHORT_MANIFEST);
    let text = toml::to_string(&manifest).map_err(|e| Error::format(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a cohort from a directory or from its manifest path.
pub fn load_cohort(path: &Path) -> Result<Cohort> {
    let manifest_path = if path.is_dir() { path.join(COHORT_MANIFEST) } else { path.to_path_buf() };
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::format(&manifest_path, e))?;
    if manifest.schema_version != COHORT_SCHEMA_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!(
                "schema version {} is not supported (expected {COHORT_SCHEMA_VERSION})",
                manifest.schema_version
            ),
        ));
    }
    let (h, w) = (manifest.image_height, manifest.image_width);
    let mut patients = Vec::with_capacity(manifest.patients.len());
    for p in manifest.patients {
        let mut eyes = Vec::with_capacity(p.eyes.len());
        for e in p.eyes {
            let mut scans = Vec::with_capacity(e.scans.len());
            for s in e.scans {
                if s.bscans.len() != s.surfaces.len() {
                    return Err(Error::format(&manifest_path, format!("eye {}: surface count mismatch", e.id)));
                }
                let bscans = s
                    .bscans
                    .iter()
                    .map(|f| Image::new(h, w, read_f32(&dir.join(f), h * w)?))
                    .collect::<Result<Vec<_>>>()?;
                let surfaces = s
                    .surfaces
                    .iter()
                    .map(|f| read_f32(&dir.join(f), w))
                    .collect::<Result<Vec<_>>>()?;
                scans.push(Scan {
                    time: s.time,
                    bscans,
                    surfaces,
                    lesion_area: s.lesion_area,
                });
            }
            eyes.push(EyeSeries {
                eye_id: e.id,
                patient_id: p.id,
                scans,
                conversion_time: e.conversion_time,
            });
        }
        patients.push(Patient { id: p.id, eyes });
    }
    let cohort = Cohort {
        patients,
        spacing: manifest.spacing,
        field_of_view: manifest.field_of_view,
    };
    cohort.validate()?;
    Ok(cohort)
}
