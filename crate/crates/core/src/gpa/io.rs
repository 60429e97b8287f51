//! Model file: a versioned JSON document.
//!
//! Reals are written with 17 significant digits so a save/load cycle is
//! bit-exact. Undefined grid values are `null` in `values` and `true` in
//! `undefined_mask`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{GpaError, Result};
use crate::kernels::KernelSpec;

use super::grid::{Grid, MultiGrid, SupportMode};
use super::model::{Geometry, GpaModel, ModelMeta};

/// Newest file version this build writes and reads.
pub const FORMAT_VERSION: u32 = 1;

fn exact(v: f64) -> Result<Box<RawValue>> {
    if !v.is_finite() {
        return Err(GpaError::Format(format!("cannot store non-finite value {v}")));
    }
    Ok(RawValue::from_string(format!("{v:.16e}"))?)
}

#[derive(Serialize)]
struct MetaOut<'a> {
    n: u64,
    m: usize,
    fitted_at: Option<&'a str>,
}

#[derive(Serialize)]
struct FileOut<'a> {
    version: u32,
    p: usize,
    support_mode: SupportMode,
    lo: Box<RawValue>,
    hi: Box<RawValue>,
    #[serde(rename = "J")]
    segments: usize,
    h: Box<RawValue>,
    kernel_id: String,
    nu: usize,
    values: Vec<Option<Box<RawValue>>>,
    undefined_mask: Vec<bool>,
    meta: MetaOut<'a>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaIn {
    n: u64,
    m: usize,
    fitted_at: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileIn {
    version: u32,
    p: usize,
    support_mode: SupportMode,
    lo: f64,
    hi: f64,
    #[serde(rename = "J")]
    segments: usize,
    h: f64,
    kernel_id: String,
    nu: usize,
    values: Vec<Option<f64>>,
    undefined_mask: Vec<bool>,
    meta: MetaIn,
}

/// Serializes a model to pretty-printed JSON.
pub fn to_string(model: &GpaModel) -> Result<String> {
    let axis = model.geometry().axis();
    let values = model
        .values()
        .iter()
        .map(|v| v.map(exact).transpose())
        .collect::<Result<Vec<_>>>()?;
    let file = FileOut {
        version: FORMAT_VERSION,
        p: model.dim(),
        support_mode: axis.mode(),
        lo: exact(axis.lo())?,
        hi: exact(axis.hi())?,
        segments: axis.segments(),
        h: exact(model.bandwidth())?,
        kernel_id: model.kernel().id(),
        nu: model.order(),
        values,
        undefined_mask: model.values().iter().map(Option::is_none).collect(),
        meta: MetaOut {
            n: model.meta().sample_size,
            m: model.meta().machines,
            fitted_at: model.meta().fitted_at.as_deref(),
        },
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

/// Parses a model document, rejecting versions newer than [`FORMAT_VERSION`].
pub fn from_str(text: &str) -> Result<GpaModel> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    let version = raw
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| GpaError::Format("missing integer field `version`".into()))?;
    if version == 0 || version > u64::from(FORMAT_VERSION) {
        return Err(GpaError::UnsupportedVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let file: FileIn = serde_json::from_value(raw)?;
    debug_assert_eq!(file.version, FORMAT_VERSION);

    if file.values.len() != file.undefined_mask.len() {
        return Err(GpaError::Format(format!(
            "{} values but {} mask entries",
            file.values.len(),
            file.undefined_mask.len()
        )));
    }
    if let Some(j) = file
        .values
        .iter()
        .zip(&file.undefined_mask)
        .position(|(v, &undef)| v.is_none() != undef)
    {
        return Err(GpaError::Format(format!("value {j} disagrees with its undefined flag")));
    }
    let axis = Grid::new(file.lo, file.hi, file.segments, file.support_mode)?;
    let geometry = match file.p {
        0 => return Err(GpaError::Format("p must be at least 1".into())),
        1 => Geometry::Line(axis),
        p => Geometry::Lattice(MultiGrid::new(axis, p)?),
    };
    let kernel: KernelSpec = file.kernel_id.parse()?;
    GpaModel::from_values(
        geometry,
        file.values,
        file.h,
        kernel,
        file.nu,
        ModelMeta {
            sample_size: file.meta.n,
            machines: file.meta.m,
            fitted_at: file.meta.fitted_at,
        },
    )
}

pub fn save(model: &GpaModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_string(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<GpaModel> {
    from_str(&fs::read_to_string(path)?)
}
