//! Binary blobs and JSON sidecars.
//!
//! Every array of states is written as raw little-endian `f64` values with a
//! JSON sidecar describing its shape and where it came from.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::solvers::{SpatialGrid, State, Trajectory};
use crate::{Result, StapError};

pub fn write_f64_blob(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| StapError::io(path, e))
}

pub fn read_f64_blob(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| StapError::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(StapError::Artifact { path: path.into(), reason: format!("{} bytes is not a multiple of 8", bytes.len()) });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| StapError::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| StapError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| StapError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| StapError::json(path, e))
}

/// Sidecar for a blob of `records` records of `states_per_record` states each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSidecar {
    pub grid: SpatialGrid,
    pub dt: f64,
    pub trajectory_length: usize,
    pub records: usize,
    pub states_per_record: usize,
    /// Free-form description of the seeds used to produce the data.
    pub seed_lineage: String,
    pub data_file: String,
}

fn sidecar_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let mut json = stem.as_os_str().to_owned();
    json.push(".json");
    let mut blob = stem.as_os_str().to_owned();
    blob.push(".f64");
    (PathBuf::from(json), PathBuf::from(blob))
}

/// Writes records of equally many states as `<stem>.f64` plus `<stem>.json`.
pub fn write_records(
    stem: &Path,
    records: &[Vec<State>],
    dt: f64,
    trajectory_length: usize,
    seed_lineage: &str,
) -> Result<()> {
    let (json, blob) = sidecar_paths(stem);
    let per = records.first().map_or(0, Vec::len);
    let grid = records
        .first()
        .and_then(|r| r.first())
        .map(|s| s.grid)
        .unwrap_or(SpatialGrid { num_points: 0, domain_length: 0.0 });
    let mut values = Vec::new();
    for r in records {
        if r.len() != per {
            return Err(StapError::ShapeMismatch("records differ in length".into()));
        }
        for s in r {
            values.extend_from_slice(&s.values);
        }
    }
    write_f64_blob(&blob, &values)?;
    let sidecar = StateSidecar {
        grid,
        dt,
        trajectory_length,
        records: records.len(),
        states_per_record: per,
        seed_lineage: seed_lineage.to_string(),
        data_file: blob.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    write_json(&json, &sidecar)
}

pub fn read_records(stem: &Path) -> Result<(StateSidecar, Vec<Vec<State>>)> {
    let (json, blob) = sidecar_paths(stem);
    let sidecar: StateSidecar = read_json(&json)?;
    let values = read_f64_blob(&blob)?;
    let n = sidecar.grid.num_points;
    let expected = sidecar.records * sidecar.states_per_record * n;
    if values.len() != expected {
        return Err(StapError::Artifact {
            path: blob,
            reason: format!("expected {expected} values, found {}", values.len()),
        });
    }
    let mut it = values.chunks_exact(n.max(1));
    let mut records = Vec::with_capacity(sidecar.records);
    for _ in 0..sidecar.records {
        let r = (0..sidecar.states_per_record)
            .map(|_| State { values: it.next().expect("sized above").to_vec(), grid: sidecar.grid })
            .collect();
        records.push(r);
    }
    Ok((sidecar, records))
}

pub fn write_states(stem: &Path, states: &[State], dt: f64, trajectory_length: usize, lineage: &str) -> Result<()> {
    let records: Vec<Vec<State>> = states.iter().map(|s| vec![s.clone()]).collect();
    write_records(stem, &records, dt, trajectory_length, lineage)
}

pub fn read_states(stem: &Path) -> Result<Vec<State>> {
    let (_, records) = read_records(stem)?;
    Ok(records.into_iter().flatten().collect())
}

pub fn write_trajectories(stem: &Path, trajectories: &[Trajectory], dt: f64, lineage: &str) -> Result<()> {
    let records: Vec<Vec<State>> = trajectories.iter().map(|t| t.states.clone()).collect();
    let l = trajectories.first().map_or(0, Trajectory::steps);
    write_records(stem, &records, dt, l, lineage)
}

pub fn read_trajectories(stem: &Path) -> Result<Vec<Trajectory>> {
    let (_, records) = read_records(stem)?;
    Ok(records.into_iter().map(|states| Trajectory { states }).collect())
}
