//! Versioned JSON checkpoints holding the model and the config that made it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UdrnModel;
use crate::trainer::{TrainConfig, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub config: TrainConfig,
    pub model: UdrnModel,
}

impl Checkpoint {
    pub fn new(trained: &TrainedModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config_hash: trained.config.hash(),
            config: trained.config.clone(),
            model: trained.model.clone(),
        }
    }

    pub fn into_trained(self) -> TrainedModel {
        TrainedModel {
            model: self.model,
            config: self.config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::contract(format!(
                "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
                ck.format_version
            )));
        }
        if ck.config_hash != ck.config.hash() {
            return Err(Error::contract("checkpoint config hash does not match its config"));
        }
        Ok(ck)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
