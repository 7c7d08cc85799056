//! JSON checkpoints of the three trained models.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use infoqgan_core::generator::{GeneratorSpec, Readout};
use infoqgan_core::nn::DenseNet;
use infoqgan_core::training::{Mode, Trainer};

use crate::config::{Experiment, RunConfig};
use crate::io::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub qubits: usize,
    pub layers: usize,
    pub readout: Readout,
    pub params: Vec<f64>,
}

impl GeneratorRecord {
    pub fn from_spec(g: &GeneratorSpec) -> Self {
        Self {
            qubits: g.qubits(),
            layers: g.layers(),
            readout: g.readout(),
            params: g.params.clone(),
        }
    }

    pub fn to_spec(&self) -> Result<GeneratorSpec> {
        Ok(GeneratorSpec::new(self.qubits, self.layers, self.readout, self.params.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub experiment: Experiment,
    pub mode: Mode,
    pub seed: u64,
    pub epoch: usize,
    pub noise_dim: usize,
    pub code_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub generator: GeneratorRecord,
    pub discriminator: DenseNet,
    pub mine: Option<DenseNet>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn capture(trainer: &Trainer, config: &RunConfig, epoch: usize) -> Self {
        Self {
            generator: GeneratorRecord::from_spec(&trainer.generator),
            discriminator: trainer.discriminator.clone(),
            mine: trainer.mine.as_ref().map(|m| m.net.clone()),
            meta: CheckpointMeta {
                experiment: config.experiment,
                mode: config.mode,
                seed: config.seed,
                epoch,
                noise_dim: config.noise_dim,
                code_dim: config.code_dim,
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = read_json(path)?;
        ck.generator
            .to_spec()
            .with_context(|| format!("{}: generator record is inconsistent", path.display()))?;
        Ok(ck)
    }
}
