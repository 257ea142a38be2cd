//! On-disk layouts shared by the subcommands.
//!
//! A dataset directory holds `dataset.json` plus one volume and one truth
//! container per entry. A surface set holds `surfaces.json` plus one surface
//! and optionally one uncertainty and one probability-map container per entry.

use std::fs;
use std::path::{Path, PathBuf};

use bmseg::geometry::Volume;
use bmseg::surface::{SurfaceGrid, UncertaintyGrid};
use bmseg::tensor_io::{load_surface, load_tensor, load_volume, save_tensor, Tensor};
use bmseg::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DATASET_INDEX: &str = "dataset.json";
pub const SURFACE_INDEX: &str = "surfaces.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub volume: String,
    pub truth: Option<String>,
    pub manifest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub suite: Option<String>,
    pub seed: Option<u64>,
    pub entries: Vec<DatasetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEntry {
    pub name: String,
    pub surface: String,
    pub sigma: Option<String>,
    pub probmap: Option<String>,
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceIndex {
    pub entries: Vec<SurfaceEntry>,
}

/// One named surface with its optional uncertainty.
pub struct NamedSurface {
    pub name: String,
    pub surface: SurfaceGrid,
    pub sigma: Option<UncertaintyGrid>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(dir: &Path) -> Result<DatasetIndex> {
    read_json(&dir.join(DATASET_INDEX))
}

pub fn load_entry_volume(dir: &Path, e: &DatasetEntry) -> Result<Volume> {
    load_volume(&dir.join(&e.volume))
}

pub fn load_entry_truth(dir: &Path, e: &DatasetEntry) -> Result<SurfaceGrid> {
    let truth = e
        .truth
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("dataset entry {} has no reference surface", e.name)))?;
    load_surface(&dir.join(truth))
}

pub fn save_uncertainty(path: &Path, unc: &UncertaintyGrid) -> Result<()> {
    save_tensor(path, &Tensor::from_f64(vec![unc.n_bscans(), unc.width()], unc.as_flat())?)
}

pub fn load_uncertainty(path: &Path) -> Result<UncertaintyGrid> {
    let t = load_tensor(path)?;
    match t.shape[..] {
        [b, w] => UncertaintyGrid::new(b, w, t.to_f64()),
        _ => Err(Error::Format(format!("{}: uncertainty must be 2-D, got {:?}", path.display(), t.shape))),
    }
}

/// Loads a surface set, or the reference surfaces of a dataset directory.
pub fn load_surfaces(dir: &Path) -> Result<Vec<NamedSurface>> {
    let surface_index = dir.join(SURFACE_INDEX);
    if surface_index.exists() {
        let index: SurfaceIndex = read_json(&surface_index)?;
        return index
            .entries
            .iter()
            .map(|e| {
                Ok(NamedSurface {
                    name: e.name.clone(),
                    surface: load_surface(&dir.join(&e.surface))?,
                    sigma: e.sigma.as_ref().map(|s| load_uncertainty(&dir.join(s))).transpose()?,
                })
            })
            .collect();
    }
    let index = read_dataset(dir)?;
    index
        .entries
        .iter()
        .map(|e| {
            Ok(NamedSurface {
                name: e.name.clone(),
                surface: load_entry_truth(dir, e)?,
                sigma: None,
            })
        })
        .collect()
}

/// Expands a path against the output root when it is relative and the root is set.
pub fn resolve_out(out: &Path, root: Option<PathBuf>) -> PathBuf {
    match root {
        Some(r) if out.is_relative() => r.join(out),
        _ => out.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_root_applies_to_relative_paths_only() {
        let root = Some(PathBuf::from("/data/runs"));
        assert_eq!(resolve_out(Path::new("a/b"), root.clone()), PathBuf::from("/data/runs/a/b"));
        assert_eq!(resolve_out(Path::new("/abs"), root), PathBuf::from("/abs"));
        assert_eq!(resolve_out(Path::new("a"), None), PathBuf::from("a"));
    }

    #[test]
    fn uncertainty_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let unc = UncertaintyGrid::new(2, 3, vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]).unwrap();
        save_uncertainty(&dir.path().join("s"), &unc).unwrap();
        assert_eq!(load_uncertainty(&dir.path().join("s")).unwrap(), unc);
    }

    #[test]
    fn surface_set_without_index_reads_dataset_truth() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_surfaces(dir.path()).is_err());
        write_json(&dir.path().join(SURFACE_INDEX), &SurfaceIndex { entries: vec![] }).unwrap();
        assert!(load_surfaces(dir.path()).unwrap().is_empty());
    }
}
