use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::trainer::TrainReport;
use crate::flows::FlowModel;
use crate::{Error, Result};

/// JSON sidecar stored next to a checkpoint's model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: String,
    pub config_hash: String,
    /// Epoch whose parameters were kept, `None` for the initial ones.
    pub epoch: Option<usize>,
    pub val_nll: Option<f64>,
    /// Spacing of the response series in seconds, when known.
    #[serde(default)]
    pub sample_interval: Option<f64>,
}

/// A checkpoint directory:
///
/// ```text
/// model.json  model.bin  standardizer.json  checkpoint.json  report.csv
/// ```
pub struct Checkpoint {
    pub model: FlowModel,
    pub standardizer: Standardizer,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn model_stem(dir: &Path) -> PathBuf {
        dir.join("model")
    }

    pub fn save(&self, dir: impl AsRef<Path>, report: Option<&TrainReport>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.model.save(Self::model_stem(dir))?;
        std::fs::write(
            dir.join("standardizer.json"),
            serde_json::to_string_pretty(&self.standardizer)?,
        )?;
        std::fs::write(dir.join("checkpoint.json"), serde_json::to_string_pretty(&self.meta)?)?;
        if let Some(report) = report {
            std::fs::write(dir.join("report.csv"), report.to_csv())?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.join("model.bin").exists() {
            return Err(Error::InvalidArgument(format!(
                "no checkpoint found in {}",
                dir.display()
            )));
        }
        let model = FlowModel::load(Self::model_stem(dir))?;
        let standardizer: Standardizer =
            serde_json::from_str(&std::fs::read_to_string(dir.join("standardizer.json"))?)?;
        let meta: CheckpointMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("checkpoint.json"))?)?;
        if standardizer.series_len() != model.data_dim() || standardizer.param_dim() != model.cond_dim() {
            return Err(Error::Format("standardizer does not match model dimensions".into()));
        }
        Ok(Self {
            model,
            standardizer,
            meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::build_default_model;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ck = Checkpoint {
            model: build_default_model(4, 2, 1, 0).unwrap(),
            standardizer: Standardizer::identity(4, 1),
            meta: CheckpointMeta {
                stage: "lf".into(),
                config_hash: "abc".into(),
                epoch: Some(3),
                val_nll: Some(1.5),
                sample_interval: Some(0.05),
            },
        };
        ck.save(dir.path(), Some(&TrainReport::default())).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back.meta, ck.meta);
        assert_eq!(back.standardizer, ck.standardizer);
        assert_eq!(back.model.params().values(), ck.model.params().values());
        assert!(Checkpoint::load(dir.path().join("missing")).is_err());
    }
}
