//! Checkpoints are pretty-printed JSON:
//!
//! ```text
//! { "format": "cltc-checkpoint", "version": 1,
//!   "config": <arbitrary JSON>,
//!   "tensors": [ { "name": "...", "shape": [..], "values": [..] }, ... ] }
//! ```
//!
//! Tensor values are row-major. Names follow the owning module's `visit`
//! order; loading matches by name and checks shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Module, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "cltc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: serde_json::Value,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_module<M: Module + ?Sized>(module: &mut M, config: serde_json::Value) -> Self {
        let mut tensors = Vec::new();
        module.visit("", &mut |name, p| {
            tensors.push(TensorRecord {
                name: name.to_string(),
                shape: p.shape().to_vec(),
                values: p.value.iter().copied().collect(),
            });
        });
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            tensors,
        }
    }

    /// Copies stored values into `module`. Every parameter must be present
    /// with a matching shape.
    pub fn apply_to<M: Module + ?Sized>(&self, module: &mut M) -> Result<()> {
        let mut failure = None;
        module.visit("", &mut |name, p| {
            if failure.is_some() {
                return;
            }
            match self.tensors.iter().find(|t| t.name == name) {
                None => failure = Some(Error::Serde(format!("checkpoint lacks tensor `{name}`"))),
                Some(t) if t.shape != p.shape() => {
                    failure = Some(Error::Shape(format!(
                        "tensor `{name}`: checkpoint shape {:?}, model shape {:?}",
                        t.shape,
                        p.shape()
                    )))
                }
                Some(t) => match Tensor::from_shape_vec(t.shape.clone(), t.values.clone()) {
                    Ok(v) => p.value = v,
                    Err(e) => failure = Some(Error::Shape(format!("tensor `{name}`: {e}"))),
                },
            }
        });
        failure.map_or(Ok(()), Err)
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(checkpoint).map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Serde(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            ck.format,
            ck.version
        )));
    }
    for t in &ck.tensors {
        if t.shape.iter().product::<usize>() != t.values.len() || t.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Serde(format!("{}: tensor `{}` is malformed", path.display(), t.name)));
        }
    }
    Ok(ck)
}
