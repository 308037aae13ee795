use anyhow::Result;
use ltssl_core::data::{generate_cohort, save_cohort};

use super::Global;
use crate::config::Snapshot;
use crate::io::{prepare_out, require_out};

pub fn run(g: &Global) -> Result<()> {
    let out = require_out(g.out.as_deref(), "synth")?;
    let mut cfg = g.config.synth.clone();
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    prepare_out(&out, g.force)?;
    let cohort = generate_cohort(&cfg)?;
    save_cohort(&cohort, &out)?;
    let mut snap = Snapshot::new("synth");
    snap.synth = Some(cfg);
    snap.write(&out)?;
    println!(
        "patients {}, eyes {}, scans {}, converters {}",
        cohort.patients.len(),
        cohort.eyes().count(),
        cohort.scan_count(),
        cohort.converter_eyes()
    );
    Ok(())
}
