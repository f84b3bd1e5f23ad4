//! Model, batch and config files, and atomic output writes.

use std::fs;
use std::path::{Path, PathBuf};

use batchei::gp::{DomainBox, Kernel, KernelFamily, PosteriorGP};
use batchei::qei::Batch;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub family: KernelFamily,
    pub variance: f64,
    pub ranges: Vec<f64>,
}

/// Known-hyperparameter GP model as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kernel: KernelFile,
    #[serde(default)]
    pub prior_mean: f64,
    #[serde(default)]
    pub design: Vec<Vec<f64>>,
    #[serde(default)]
    pub responses: Vec<f64>,
    /// Defaults to the unit cube.
    #[serde(default)]
    pub domain: Option<DomainBox>,
}

pub struct LoadedModel {
    pub model: PosteriorGP,
    pub domain: DomainBox,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Deserializes JSON, reporting the path of the offending field and its
/// line and column.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Usage(format!("{origin}: {inner}"))
        } else {
            CliError::Usage(format!("{origin}: at {path}: {inner}"))
        }
    })
}

pub fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let origin = path.display().to_string();
    let file: ModelFile = parse_json(&read(path)?, &origin)?;
    let d = file.kernel.ranges.len();
    for (i, row) in file.design.iter().enumerate() {
        if row.len() != d {
            return Err(CliError::Usage(format!(
                "{origin}: design row {i} has {} coordinates, the kernel has {d} ranges",
                row.len()
            )));
        }
    }
    let kernel = Kernel::new(file.kernel.family, file.kernel.variance, file.kernel.ranges)?;
    let domain = file.domain.unwrap_or_else(|| DomainBox::unit(d));
    domain.validate()?;
    if domain.dim() != d {
        return Err(CliError::Usage(format!(
            "{origin}: domain has {} dimensions, the kernel has {d} ranges",
            domain.dim()
        )));
    }
    let model = PosteriorGP::new(kernel, file.prior_mean, file.design, file.responses)?;
    Ok(LoadedModel { model, domain })
}

/// Reads a batch stored as an array of rows, or as `{"points": [...]}`.
pub fn load_batch(path: &Path, domain: &DomainBox) -> Result<Batch, CliError> {
    let origin = path.display().to_string();
    let value: Value = parse_json(&read(path)?, &origin)?;
    let rows = match &value {
        Value::Array(rows) => rows,
        Value::Object(map) => match map.get("points") {
            Some(Value::Array(rows)) if map.len() == 1 => rows,
            _ => return Err(CliError::Usage(format!("{origin}: expected an array of rows or {{\"points\": [...]}}"))),
        },
        _ => return Err(CliError::Usage(format!("{origin}: expected an array of rows"))),
    };
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{origin}: batch has no rows")));
    }
    let d = domain.dim();
    let mut points = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let bad = |what: String| CliError::Usage(format!("{origin}: batch row {i}: {what}"));
        let cells = row.as_array().ok_or_else(|| bad(format!("expected an array, found {row}")))?;
        if cells.len() != d {
            return Err(bad(format!("expected {d} coordinates, found {}", cells.len())));
        }
        let mut x = Vec::with_capacity(d);
        for (c, cell) in cells.iter().enumerate() {
            match cell.as_f64() {
                Some(v) if v.is_finite() => x.push(v),
                _ => return Err(bad(format!("coordinate {c} is not a finite number ({cell})"))),
            }
        }
        if !domain.contains(&x) {
            return Err(bad("lies outside the domain".into()));
        }
        points.push(x);
    }
    Ok(Batch::new(points, domain.clone())?)
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("output");
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::Io(format!("{}: {e}", path.display()))
    })
}
