//! JSON model checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnsembleModel, Mlp, ModelConfig, Normalizer};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub state_dim: usize,
    pub action_dim: usize,
    pub model: ModelConfig,
    pub normalizer: Normalizer,
    /// Layer widths shared by all members, input first.
    pub layer_sizes: Vec<usize>,
    /// Flat parameter vector per member.
    pub members: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn from_model(model: &EnsembleModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            state_dim: model.state_dim(),
            action_dim: model.action_dim(),
            model: model.config().clone(),
            normalizer: model.normalizer().clone(),
            layer_sizes: model.members()[0].sizes().to_vec(),
            members: model.members().iter().map(|m| m.params().to_vec()).collect(),
        }
    }

    pub fn into_model(self) -> Result<EnsembleModel> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.model.validate()?;
        let d_in = self.state_dim + self.action_dim;
        let mut expected = vec![d_in];
        expected.extend(std::iter::repeat_n(self.model.hidden_size, self.model.num_layers));
        expected.push(2 * self.state_dim);
        if self.layer_sizes != expected {
            return Err(Error::invalid("checkpoint layer sizes disagree with its model config"));
        }
        if self.members.len() != self.model.ensemble_size {
            return Err(Error::invalid("checkpoint member count disagrees with ensemble_size"));
        }
        if self.normalizer.mean.len() != d_in || self.normalizer.std.len() != d_in {
            return Err(Error::invalid("checkpoint normalizer has the wrong dimension"));
        }
        let members = self
            .members
            .into_iter()
            .map(|p| Mlp::from_parts(self.layer_sizes.clone(), p).ok_or_else(|| Error::invalid("checkpoint member has the wrong parameter count")))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleModel::from_parts(self.model, self.state_dim, self.action_dim, self.normalizer, members))
    }
}

pub fn save_checkpoint(model: &EnsembleModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &Checkpoint::from_model(model))?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EnsembleModel> {
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    ckpt.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let cfg = ModelConfig {
            ensemble_size: 2,
            num_layers: 2,
            hidden_size: 6,
            ..Default::default()
        };
        let model = EnsembleModel::new(3, 2, &cfg, 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let cfg = ModelConfig {
            ensemble_size: 1,
            num_layers: 1,
            hidden_size: 4,
            ..Default::default()
        };
        let mut ckpt = Checkpoint::from_model(&EnsembleModel::new(1, 1, &cfg, 0).unwrap());
        ckpt.format_version = 99;
        assert!(matches!(ckpt.into_model(), Err(Error::InvalidInput(_))));
    }
}
