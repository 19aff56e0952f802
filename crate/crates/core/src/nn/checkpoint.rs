//! Named-tensor checkpoint files.
//!
//! A checkpoint is a JSON document:
//!
//! ```text
//! { "format": "handover-tensors/1",
//!   "dims": { "input": 12, "hidden": 8, "actions": 6 },
//!   "tensors": [ { "name": "u_en", "shape": [8, 12], "values": [...] }, ... ],
//!   "meta": { ... } }
//! ```
//!
//! Values are row-major. Matrices are stored as `[outputs, inputs]`. Floats
//! round-trip exactly through the JSON encoding.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::weights::{ActorCriticWeights, NetDims, Param};
use crate::error::{Error, Result};

pub const FORMAT: &str = "handover-tensors/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub dims: NetDims,
    pub tensors: Vec<NamedTensor>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(dims: NetDims) -> Self {
        Self {
            format: FORMAT.to_string(),
            dims,
            tensors: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    /// Appends every tensor of `w`, prefixing names with `prefix`.
    pub fn push_weights(&mut self, prefix: &str, w: &ActorCriticWeights) {
        for (p, t) in w.iter() {
            self.tensors.push(NamedTensor {
                name: format!("{prefix}{}", p.name()),
                shape: t.shape(),
                values: t.as_slice().to_vec(),
            });
        }
    }

    pub fn weights(&self, prefix: &str) -> Result<ActorCriticWeights> {
        let mut found = Vec::new();
        for nt in &self.tensors {
            let Some(rest) = nt.name.strip_prefix(prefix) else {
                continue;
            };
            let Some(p) = Param::from_name(rest) else {
                continue;
            };
            let t = Tensor::from_vec(nt.shape[0], nt.shape[1], nt.values.clone()).ok_or_else(|| {
                Error::invalid(format!("{}: {} values for shape {:?}", nt.name, nt.values.len(), nt.shape))
            })?;
            found.push((p, t));
        }
        ActorCriticWeights::from_tensors(self.dims, found)
    }

    pub fn from_weights(w: &ActorCriticWeights) -> Self {
        let mut c = Self::new(w.dims());
        c.push_weights("", w);
        c
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if c.format != FORMAT {
            return Err(Error::invalid(format!("unsupported checkpoint format `{}`", c.format)));
        }
        Ok(c)
    }
}

pub fn save_weights(w: &ActorCriticWeights, path: &Path) -> Result<()> {
    Checkpoint::from_weights(w).save(path)
}

pub fn load_weights(path: &Path) -> Result<ActorCriticWeights> {
    Checkpoint::load(path)?.weights("")
}
