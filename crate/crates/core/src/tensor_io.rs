//! `.tns` tensor container: raw little-endian float32 payload in `<name>.tns`
//! next to a JSON header in `<name>.json`.
//!
//! ```text
//! {"dtype":"f32le","order":"C","shape":[B,H,W],"geometry":{...}}
//! ```
//!
//! Surfaces use the same container with NaN marking undefined positions.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Volume, VolumeGeometry};
use crate::surface::SurfaceGrid;

pub const DTYPE: &str = "f32le";
pub const ORDER: &str = "C";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dtype: String,
    pub order: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<VolumeGeometry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
    pub geometry: Option<VolumeGeometry>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor {
            shape,
            values,
            geometry: None,
        })
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self> {
        Tensor::new(shape, values.iter().map(|&v| v as f32).collect())
    }

    pub fn with_geometry(mut self, geometry: VolumeGeometry) -> Self {
        self.geometry = Some(geometry);
        self
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Both file paths for a container, given either file or the bare stem.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("tns") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let payload = PathBuf::from(format!("{}.tns", stem.display()));
    let header = PathBuf::from(format!("{}.json", stem.display()));
    (payload, header)
}

pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let (payload_path, header_path) = container_paths(path);
    if let Some(parent) = payload_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let header = TensorHeader {
        dtype: DTYPE.into(),
        order: ORDER.into(),
        shape: tensor.shape.clone(),
        geometry: tensor.geometry,
    };
    let mut bytes = Vec::with_capacity(tensor.values.len() * 4);
    for v in &tensor.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))?;
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let (payload_path, header_path) = container_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Format(format!("missing header {}", header_path.display()))
        }
        _ => Error::io(&header_path, e),
    })?;
    let header: TensorHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", header_path.display())))?;
    if header.dtype != DTYPE {
        return Err(Error::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.order != ORDER {
        return Err(Error::Format(format!("unsupported order {:?}", header.order)));
    }
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let expected = header.shape.iter().product::<usize>() * 4;
    if bytes.len() != expected {
        return Err(Error::Truncation {
            expected,
            found: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Tensor {
        shape: header.shape,
        values,
        geometry: header.geometry,
    })
}

fn require_geometry(t: &Tensor, path: &Path) -> Result<VolumeGeometry> {
    t.geometry
        .ok_or_else(|| Error::Format(format!("{} carries no geometry", path.display())))
}

pub fn save_volume(path: &Path, volume: &Volume) -> Result<()> {
    let g = *volume.geometry();
    let t = Tensor::from_f64(vec![g.n_bscans, g.height, g.width], &volume.to_flat())?;
    save_tensor(path, &t.with_geometry(g))
}

pub fn load_volume(path: &Path) -> Result<Volume> {
    let t = load_tensor(path)?;
    let g = require_geometry(&t, path)?;
    if t.shape != [g.n_bscans, g.height, g.width] {
        return Err(Error::Format(format!(
            "volume shape {:?} disagrees with its geometry",
            t.shape
        )));
    }
    Volume::from_flat(g, &t.to_f64())
}

pub fn save_surface(path: &Path, grid: &SurfaceGrid) -> Result<()> {
    let g = *grid.geometry();
    let t = Tensor::from_f64(vec![g.n_bscans, g.width], &grid.to_flat())?;
    save_tensor(path, &t.with_geometry(g))
}

pub fn load_surface(path: &Path) -> Result<SurfaceGrid> {
    let t = load_tensor(path)?;
    let g = require_geometry(&t, path)?;
    if t.shape != [g.n_bscans, g.width] {
        return Err(Error::Format(format!(
            "surface shape {:?} disagrees with its geometry",
            t.shape
        )));
    }
    SurfaceGrid::from_flat(g, &t.to_f64())
}
