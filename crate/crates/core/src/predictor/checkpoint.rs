//! Weight checkpoints: one `.tns` container per layer tensor plus a JSON manifest.
//!
//! ```text
//! <dir>/checkpoint.json
//! <dir>/layer0.weight.tns  layer0.weight.json
//! <dir>/layer0.bias.tns    layer0.bias.json
//! ...
//! ```
//!
//! Tensors are stored as float32, so a reloaded net holds the weights rounded
//! to single precision.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::net::{ToyNet, ToyNetConfig};
use crate::error::{Error, Result};
use crate::tensor_io::{load_tensor, save_tensor, Tensor};

pub const MANIFEST_NAME: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ToyNetConfig,
    pub seed: u64,
    pub epoch: usize,
    /// In layer order, weight before bias.
    pub tensors: Vec<TensorEntry>,
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_NAME)
}

pub fn save_checkpoint(dir: &Path, net: &ToyNet, epoch: usize) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    for (i, l) in net.layers().iter().enumerate() {
        let parts = [
            ("weight", vec![l.out_c, l.in_c, l.kernel, l.kernel], net.layer_weights(i)),
            ("bias", vec![l.out_c], net.layer_bias(i)),
        ];
        for (kind, shape, values) in parts {
            let name = format!("layer{i}.{kind}");
            save_tensor(&dir.join(&name), &Tensor::from_f64(shape.clone(), values)?)?;
            tensors.push(TensorEntry {
                file: format!("{name}.tns"),
                name,
                shape,
            });
        }
    }
    let manifest = CheckpointManifest {
        config: net.config().clone(),
        seed: net.config().seed,
        epoch,
        tensors,
    };
    let path = manifest_path(dir);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ToyNet, CheckpointManifest)> {
    let path = manifest_path(dir);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut net = ToyNet::zeros(manifest.config.clone())?;
    let layers = net.layers().to_vec();
    if manifest.tensors.len() != 2 * layers.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} tensors, config needs {}",
            manifest.tensors.len(),
            2 * layers.len()
        )));
    }
    for (i, l) in layers.iter().enumerate() {
        for (j, (offset, shape)) in [
            (l.weight_offset, vec![l.out_c, l.in_c, l.kernel, l.kernel]),
            (l.bias_offset, vec![l.out_c]),
        ]
        .into_iter()
        .enumerate()
        {
            let entry = &manifest.tensors[2 * i + j];
            let t = load_tensor(&dir.join(&entry.file))?;
            if t.shape != shape {
                return Err(Error::Shape(format!(
                    "{}: expected shape {shape:?}, found {:?}",
                    entry.name, t.shape
                )));
            }
            let n = t.values.len();
            net.params_mut()[offset..offset + n].copy_from_slice(&t.to_f64());
        }
    }
    Ok((net, manifest))
}
