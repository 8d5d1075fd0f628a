use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{IdMap, ModelConfig, ModelParameters};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const CHECKPOINT_FORMAT: &str = "diffexr-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// JSON container: config, id maps, vocabulary, free-form metadata, arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub vocab: Vec<String>,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn from_model(model: &ModelParameters, vocab: Vec<String>, meta: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            users: model.users.names().to_vec(),
            items: model.items.names().to_vec(),
            vocab,
            meta,
            params: model
                .store
                .iter()
                .map(|(_, name, t)| ParamEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the parameter structure from the config, then fills every
    /// array by name; shapes must match exactly.
    pub fn to_model(&self) -> Result<ModelParameters> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut rng = StreamRng::seed_from_u64(0);
        let mut model = ModelParameters::init(
            &self.config,
            IdMap::from_names(self.users.iter().cloned()),
            IdMap::from_names(self.items.iter().cloned()),
            &mut rng,
        )?;
        if self.params.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} arrays, found {}",
                model.store.len(),
                self.params.len()
            )));
        }
        for entry in &self.params {
            let id = model
                .store
                .find(&entry.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown array `{}`", entry.name)))?;
            let slot = model.store.get_mut(id);
            if slot.shape() != entry.shape.as_slice() || entry.values.len() != slot.numel() {
                return Err(Error::Checkpoint(format!(
                    "array `{}` has shape {:?}, expected {:?}",
                    entry.name,
                    entry.shape,
                    slot.shape()
                )));
            }
            slot.data_mut().copy_from_slice(&entry.values);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(fs::File::open(path)?);
        serde_json::from_reader(r).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
