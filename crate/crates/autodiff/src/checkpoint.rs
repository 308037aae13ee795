//! Weight checkpoint files.
//!
//! A checkpoint is a pair of files: a line-oriented `key = value` manifest and
//! a raw little-endian `f64` buffer holding every tensor back to back. The
//! manifest lists each tensor's name, shape, kind and byte offset, plus free
//! form `meta.*` entries that callers use to describe the architecture.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::params::{ParamKind, ParamStore};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

fn data_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn check_value(key: &str, value: &str) -> Result<()> {
    if key.contains('=') || key.contains('\n') || value.contains('\n') || key.trim() != key {
        return Err(Error::Checkpoint(format!("unencodable entry `{key}`")));
    }
    Ok(())
}

/// Writes `manifest` and a sibling `.bin` data file.
pub fn save(manifest: &Path, store: &ParamStore, meta: &BTreeMap<String, String>) -> Result<()> {
    let data_file = data_path(manifest);
    let mut text = String::from("# weight checkpoint\n");
    let mut bytes = Vec::with_capacity(8 * (store.count(ParamKind::Trainable) + store.count(ParamKind::Buffer)));
    let push = |text: &mut String, k: &str, v: &str| -> Result<()> {
        check_value(k, v)?;
        text.push_str(k);
        text.push_str(" = ");
        text.push_str(v);
        text.push('\n');
        Ok(())
    };
    push(&mut text, "format_version", &FORMAT_VERSION.to_string())?;
    push(&mut text, "dtype", "f64")?;
    push(&mut text, "byte_order", "little")?;
    let file_name = data_file.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    push(&mut text, "data_file", &file_name)?;
    push(&mut text, "param_count", &store.len().to_string())?;
    for (k, v) in meta {
        push(&mut text, &format!("meta.{k}"), v)?;
    }
    for (i, (_, p)) in store.iter().enumerate() {
        let shape: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
        push(&mut text, &format!("param.{i}.name"), &p.name)?;
        push(&mut text, &format!("param.{i}.shape"), &shape.join("x"))?;
        push(&mut text, &format!("param.{i}.kind"), p.kind.as_str())?;
        push(&mut text, &format!("param.{i}.offset"), &bytes.len().to_string())?;
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    push(&mut text, "data_bytes", &bytes.len().to_string())?;
    fs::write(&data_file, &bytes)?;
    fs::write(manifest, text)?;
    Ok(())
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Checkpoint(format!("line {}: expected `key = value`", n + 1)))?;
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Checkpoint(format!("line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(map)
}

fn field<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Checkpoint(format!("missing `{key}`")))
}

fn number<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    field(map, key)?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("`{key}` is not a valid number")))
}

/// Reads a checkpoint written by [`save`]; returns the tensors and the
/// `meta.*` entries with the prefix stripped.
pub fn load(manifest: &Path) -> Result<(ParamStore, BTreeMap<String, String>)> {
    let map = parse_manifest(&fs::read_to_string(manifest)?)?;
    let version: u32 = number(&map, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    if field(&map, "dtype")? != "f64" || field(&map, "byte_order")? != "little" {
        return Err(Error::Checkpoint("only little-endian f64 data is supported".into()));
    }
    let data_file = manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(field(&map, "data_file")?);
    let bytes = fs::read(&data_file)?;
    let expected: usize = number(&map, "data_bytes")?;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{} holds {} bytes, manifest says {expected}",
            data_file.display(),
            bytes.len()
        )));
    }

    let count: usize = number(&map, "param_count")?;
    let mut store = ParamStore::new();
    for i in 0..count {
        let name = field(&map, &format!("param.{i}.name"))?;
        let shape: Vec<usize> = field(&map, &format!("param.{i}.shape"))?
            .split('x')
            .map(|d| d.parse().map_err(|_| Error::Checkpoint(format!("bad shape for `{name}`"))))
            .collect::<Result<_>>()?;
        let kind = ParamKind::parse(field(&map, &format!("param.{i}.kind"))?)
            .ok_or_else(|| Error::Checkpoint(format!("bad kind for `{name}`")))?;
        let offset: usize = number(&map, &format!("param.{i}.offset"))?;
        let n: usize = shape.iter().product();
        let end = offset + 8 * n;
        if offset % 8 != 0 || end > bytes.len() {
            return Err(Error::Checkpoint(format!("`{name}` lies outside the data file")));
        }
        let values = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let tensor = Tensor::new(shape, values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if store.id(name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
        store.add(name, tensor, kind);
    }
    let meta = map
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone())))
        .collect();
    Ok((store, meta))
}
