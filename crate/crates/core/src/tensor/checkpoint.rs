//! Named-tensor checkpoints as versioned JSON.
//!
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so save/load round-trips bit-exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Parameter, Tensor2};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "lhe-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Free-form model metadata (variant, K, hidden size, ...).
    pub header: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(header: BTreeMap<String, String>, params: &[Parameter]) -> Self {
        let tensors = params
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                values: p.value.as_slice().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            header,
            tensors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        for t in &ckpt.tensors {
            if t.values.len() != t.rows * t.cols {
                return Err(Error::Checkpoint(format!("tensor {} has wrong value count", t.name)));
            }
        }
        Ok(ckpt)
    }

    /// Copies stored values into `params`, matched by name and shape.
    pub fn restore(&self, params: &mut [Parameter]) -> Result<()> {
        if params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} stored tensors for {} parameters",
                self.tensors.len(),
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let t = self
                .tensors
                .iter()
                .find(|t| t.name == p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", p.name)))?;
            if (t.rows, t.cols) != p.value.shape() {
                return Err(Error::Checkpoint(format!("shape mismatch for {}", p.name)));
            }
            *p = Parameter::new(p.name.clone(), Tensor2::from_vec(t.rows, t.cols, t.values.clone()));
        }
        Ok(())
    }
}
