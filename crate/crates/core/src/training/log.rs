use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub index: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Append-only metric log; serialized as `step|epoch,split,metric,value`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricLog {
    pub index_name: String,
    pub rows: Vec<MetricRow>,
}

impl MetricLog {
    pub fn new(index_name: &str) -> Self {
        MetricLog {
            index_name: index_name.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, index: usize, split: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            index,
            split: split.into(),
            metric: metric.into(),
            value,
        });
    }

    /// Values of one series in logged order.
    pub fn series(&self, split: &str, metric: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.metric == metric)
            .map(|r| (r.index, r.value))
            .collect()
    }

    /// Floats are written in shortest round-trip form, so parsing the CSV
    /// recovers every value bit for bit.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},split,metric,value\n", self.index_name);
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.index, r.split, r.metric, r.value).expect("writing to a string");
        }
        out
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(path, "empty metric log"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() != 4 || cols[1..] != ["split", "metric", "value"] {
            return Err(Error::format(path, format!("row 1: unexpected header `{header}`")));
        }
        let mut log = MetricLog::new(cols[0]);
        for (i, line) in lines.enumerate() {
            let row = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::format(path, format!("row {row}: expected 4 fields, found {}", f.len())));
            }
            let index = f[0]
                .parse()
                .map_err(|_| Error::format(path, format!("row {row}: bad index `{}`", f[0])))?;
            let value = f[3]
                .parse()
                .map_err(|_| Error::format(path, format!("row {row}: bad value `{}`", f[3])))?;
            log.push(index, f[1], f[2], value);
        }
        Ok(log)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }
}
