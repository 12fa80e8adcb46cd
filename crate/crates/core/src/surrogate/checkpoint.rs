//! Model checkpoints: a JSON header next to a little-endian f64 parameter blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Architecture, Committee, NormStats, SurrogateModel};
use crate::experiment::io::{read_f64_blob, write_f64_blob};
use crate::solvers::SpatialGrid;
use crate::{Result, StapError};

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    grid: SpatialGrid,
    norm: NormStats,
    seed: u64,
    param_count: usize,
    params_file: String,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<stem>.json` and `<stem>.f64`.
pub fn write_model(model: &SurrogateModel, stem: &Path) -> Result<()> {
    let blob = with_ext(stem, ".f64");
    let header = Header {
        architecture: model.architecture.clone(),
        grid: model.grid,
        norm: model.norm,
        seed: model.seed,
        param_count: model.params.len(),
        params_file: blob.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let json_path = with_ext(stem, ".json");
    let text = serde_json::to_string_pretty(&header).map_err(|e| StapError::json(&json_path, e))?;
    fs::write(&json_path, text).map_err(|e| StapError::io(&json_path, e))?;
    write_f64_blob(&blob, &model.params)
}

pub fn read_model(stem: &Path) -> Result<SurrogateModel> {
    let json_path = with_ext(stem, ".json");
    let text = fs::read_to_string(&json_path).map_err(|e| StapError::io(&json_path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| StapError::json(&json_path, e))?;
    let blob = with_ext(stem, ".f64");
    let params = read_f64_blob(&blob)?;
    if params.len() != header.param_count {
        return Err(StapError::Artifact {
            path: blob,
            reason: format!("expected {} parameters, found {}", header.param_count, params.len()),
        });
    }
    SurrogateModel::from_parts(header.architecture, header.grid, header.norm, params, header.seed)
}

/// Members are stored as `<dir>/member_<m>.{json,f64}`.
pub fn write_committee(committee: &Committee, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| StapError::io(dir, e))?;
    for (m, member) in committee.members.iter().enumerate() {
        write_model(member, &dir.join(format!("member_{m}")))?;
    }
    Ok(())
}

pub fn read_committee(dir: &Path, size: usize) -> Result<Committee> {
    let members = (0..size)
        .map(|m| read_model(&dir.join(format!("member_{m}"))))
        .collect::<Result<Vec<_>>>()?;
    Committee::new(members)
}
