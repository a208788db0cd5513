use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{read_checkpoint, write_checkpoint};
use crate::features::FeatureStats;
use crate::predictor::{Model, ModelConfig};

use super::{TrainConfig, TrainError};

pub const MODEL_META_FILE: &str = "model.json";

/// Everything besides the tensors needed to reuse a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stats: FeatureStats,
    pub q_threshold: f64,
    pub best_epoch: usize,
    pub epochs_trained: usize,
}

pub fn save_checkpoint(dir: &Path, model: &Model, meta: &ModelMeta) -> Result<(), TrainError> {
    write_checkpoint(dir, &model.store.to_entries())?;
    std::fs::write(dir.join(MODEL_META_FILE), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

/// Loads tensors and metadata; a directory without metadata is untrained.
pub fn load_checkpoint(dir: &Path) -> Result<(Model, ModelMeta), TrainError> {
    let meta_path = dir.join(MODEL_META_FILE);
    if !meta_path.exists() {
        return Err(TrainError::UntrainedCheckpoint(format!("{} missing", meta_path.display())));
    }
    let meta: ModelMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
    let mut model = Model::new(meta.model.clone(), 0)?;
    model.store.load_entries(read_checkpoint(dir)?)?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_missing_meta() {
        let cfg = TrainConfig {
            hidden: 8,
            heads: 2,
            head_hidden: 4,
            disc_hidden: 4,
            ..Default::default()
        };
        let model = Model::new(cfg.model_config(), 9).unwrap();
        let meta = ModelMeta {
            model: cfg.model_config(),
            train: cfg,
            stats: FeatureStats::fit(std::iter::empty()),
            q_threshold: 3.0,
            best_epoch: 1,
            epochs_trained: 1,
        };
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &model, &meta).unwrap();
        let (m2, meta2) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(m2.store, model.store);
        assert_eq!(meta2, meta);
        std::fs::remove_file(dir.path().join(MODEL_META_FILE)).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(TrainError::UntrainedCheckpoint(_))));
    }
}
