//! JSON model dumps.
//!
//! ```json
//! { "format": "randomhar-model", "version": 1,
//!   "config": { ... ModelConfig ... },
//!   "parameters": [ ... flat f64 array ... ],
//!   "history": [ { "epoch": 0, "train_loss": ..., "val_loss": ..., "lr": ... } ] }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, EpochRecord, ModelConfig};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "randomhar-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub parameters: Vec<f64>,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
}

impl From<&Classifier> for ModelFile {
    fn from(m: &Classifier) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config: m.config.clone(),
            parameters: m.params.clone(),
            history: m.history.clone(),
        }
    }
}

impl TryFrom<ModelFile> for Classifier {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format != MODEL_FORMAT {
            return Err(Error::Config(format!("not a model file (format {:?})", f.format)));
        }
        if f.version != MODEL_VERSION {
            return Err(Error::ModelVersion(f.version));
        }
        let mut m = Classifier::from_parameters(f.config, f.parameters)?;
        m.history = f.history;
        Ok(m)
    }
}

pub fn save_model(m: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &ModelFile::from(m))?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    file.try_into()
}
