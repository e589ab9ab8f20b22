//! Versioned JSON persistence for a world and its trained classifiers.
//! All reals round-trip bit-exactly (shortest-roundtrip encoding on write,
//! exact parsing on read).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worldgen::{TargetModel, World};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything an experiment needs from disk: the world, the attacked
/// target, and the independent evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    pub schema_version: u32,
    pub world: World,
    pub target: TargetModel,
    pub evaluator: TargetModel,
}

impl WorldFile {
    pub fn new(world: World, target: TargetModel, evaluator: TargetModel) -> Self {
        WorldFile {
            schema_version: SCHEMA_VERSION,
            world,
            target,
            evaluator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "world file schema version {} (expected {})",
                self.schema_version, SCHEMA_VERSION
            )));
        }
        self.world.validate()?;
        self.target.validate()?;
        self.evaluator.validate()?;
        for (name, model) in [("target", &self.target), ("evaluator", &self.evaluator)] {
            if model.n_classes() != self.world.n_classes {
                return Err(Error::shape(format!(
                    "{name} outputs {} classes but the world has {}",
                    model.n_classes(),
                    self.world.n_classes
                )));
            }
            if model.in_dim() != self.world.data_dim {
                return Err(Error::shape(format!(
                    "{name} input dim {} vs world data dim {}",
                    model.in_dim(),
                    self.world.data_dim
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::malformed(path, e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: WorldFile =
            serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))?;
        file.validate()?;
        Ok(file)
    }
}
