//! JSON header + row-major values, inline or in a little-endian f64 sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::field::SupportField;
use super::grid::GridSpec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueStorage {
    Inline,
    /// Values go to `<stem>.bin` next to the header.
    Sidecar,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldHeader {
    n: usize,
    #[serde(rename = "box")]
    bounds: Vec<[f64; 2]>,
    m: usize,
    time: f64,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values_file: Option<String>,
}

pub fn encode_f64_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64_le(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!("binary length {} not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn header_of(field: &SupportField, values: Option<Vec<f64>>, values_file: Option<String>) -> FieldHeader {
    let g = field.grid();
    FieldHeader {
        n: g.n(),
        bounds: g.lo().iter().zip(g.hi()).map(|(&l, &h)| [l, h]).collect(),
        m: g.m(),
        time: field.time,
        label: field.label.clone(),
        mask: field.mask().map(|m| m.iter().map(|&a| a as u8).collect()),
        values,
        values_file,
    }
}

/// Serializes a field with inline values.
pub fn to_json(field: &SupportField) -> Result<String> {
    Ok(serde_json::to_string(&header_of(field, Some(field.values().to_vec()), None))?)
}

pub fn from_json(text: &str) -> Result<SupportField> {
    let h: FieldHeader = serde_json::from_str(text)?;
    let grid = h.grid()?;
    let values = h.values.ok_or_else(|| Error::Format("inline values missing".into()))?;
    build(grid, values, h.mask, h.time, h.label)
}

impl FieldHeader {
    fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.n,
            self.bounds.iter().map(|b| b[0]).collect(),
            self.bounds.iter().map(|b| b[1]).collect(),
            self.m,
        )
    }
}

fn build(grid: GridSpec, values: Vec<f64>, mask: Option<Vec<u8>>, time: f64, label: String) -> Result<SupportField> {
    let mask = mask.map(|m| m.into_iter().map(|b| b != 0).collect());
    SupportField::with_mask(grid, values, mask, time, label)
}

/// Writes `path` (JSON header) and, for [`ValueStorage::Sidecar`], `path.with_extension("bin")`.
pub fn write_field(field: &SupportField, path: &Path, storage: ValueStorage) -> Result<()> {
    let header = match storage {
        ValueStorage::Inline => header_of(field, Some(field.values().to_vec()), None),
        ValueStorage::Sidecar => {
            let bin = path.with_extension("bin");
            fs::write(&bin, encode_f64_le(field.values()))?;
            let name = bin
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Error::Io("sidecar path has no file name".into()))?;
            header_of(field, None, Some(name))
        }
    };
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<SupportField> {
    let h: FieldHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    let grid = h.grid()?;
    let values = match (h.values, h.values_file) {
        (Some(v), None) => v,
        (None, Some(name)) => {
            let dir = path.parent().unwrap_or_else(|| Path::new("."));
            decode_f64_le(&fs::read(dir.join(name))?)?
        }
        _ => return Err(Error::Format("exactly one of values / values_file required".into())),
    };
    build(grid, values, h.mask, h.time, h.label)
}
