//! Model checkpoints as JSON.
//!
//! ```json
//! {
//!   "format": "tmc-checkpoint",
//!   "version": 1,
//!   "config": { "kind": "dmtmc", "d_x": 1, ... },
//!   "seed": 0,
//!   "step": 300,
//!   "tensors": [ { "name": "psi_py.l1.w", "rows": 25, "cols": 2, "data": [ ... ] }, ... ]
//! }
//! ```
//!
//! Tensors appear in construction order; `data` is row-major. Loading
//! rebuilds the layout from `config` and requires every name and shape to
//! match, so a checkpoint cannot be applied to a differently shaped model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::models::{TmcConfig, TmcModel};

pub const CHECKPOINT_FORMAT: &str = "tmc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TmcConfig,
    pub seed: u64,
    pub step: u64,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &TmcModel, seed: u64, step: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config,
            seed,
            step,
            tensors: model
                .params
                .tensors()
                .iter()
                .map(|t| TensorRecord {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    data: t.data.clone(),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<TmcModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(contract(format!("not a checkpoint (format '{}')", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(contract(format!("unsupported checkpoint version {}", self.version)));
        }
        let mut model = TmcModel::zeroed(self.config)?;
        if model.params.len() != self.tensors.len() {
            return Err(contract(format!(
                "checkpoint has {} tensors, the configured model {}",
                self.tensors.len(),
                model.params.len()
            )));
        }
        for (t, rec) in model.params.tensors_mut().iter_mut().zip(&self.tensors) {
            if t.name != rec.name || t.rows != rec.rows || t.cols != rec.cols || rec.data.len() != t.data.len() {
                return Err(contract(format!("tensor '{}' does not match the configured layout", rec.name)));
            }
            t.data.copy_from_slice(&rec.data);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
