//! File plumbing shared by the commands: output directories, plain CSV
//! tables with row-level error reporting, and an ordered worker pool.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};

use crate::error::usage;

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Creates `dir` for a fresh run. An existing non-empty directory is an error
/// unless `force`, in which case its previous contents are removed.
pub fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    let occupied = dir.exists() && fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(true);
    if occupied {
        if !force {
            bail!(usage(format!(
                "output directory {} is not empty; pass --force to replace it",
                dir.display()
            )));
        }
        if !dir.is_dir() {
            bail!(usage(format!("output path {} is not a directory", dir.display())));
        }
        fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn require_out(out: Option<&Path>, command: &str) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .ok_or_else(|| usage(format!("`{command}` needs --out <dir>")))
}

/// A CSV table read from disk; fields never contain commas or quotes.
#[derive(Debug)]
pub struct Table {
    pub path: PathBuf,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path, header: &[&str]) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let found = lines.next().unwrap_or_default();
        if found != header.join(",") {
            bail!("{}: row 1: expected header `{}`, found `{found}`", path.display(), header.join(","));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields.len() != header.len() {
                bail!(
                    "{}: row {}: expected {} fields, found {}",
                    path.display(),
                    i + 2,
                    header.len(),
                    fields.len()
                );
            }
            rows.push(fields);
        }
        Ok(Table {
            path: path.to_path_buf(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn str(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    /// Field `col` of data row `row` (0-based), parsed; errors name the file
    /// and the 1-based line.
    pub fn parse<T: FromStr>(&self, row: usize, col: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let field = &self.rows[row][col];
        field.parse().map_err(|e| {
            anyhow!(
                "{}: row {}: cannot parse `{field}`: {e}",
                self.path.display(),
                row + 2
            )
        })
    }

    /// Parses a finite float, rejecting NaN and infinities.
    pub fn number(&self, row: usize, col: usize) -> Result<f64> {
        let v: f64 = self.parse(row, col)?;
        if !v.is_finite() {
            bail!("{}: row {}: non-finite value `{v}`", self.path.display(), row + 2);
        }
        Ok(v)
    }
}

pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Runs `f(0..n)` on up to `jobs` threads and returns results in index order.
pub fn ordered_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                *slots[i].lock().expect("slot lock") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every index ran"))
        .collect()
}
