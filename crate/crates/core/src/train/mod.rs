//! Optimization loop: configuration, learning-rate schedule, AdamW, early
//! stopping, batching, the per-step objective and checkpoints.

mod data;
mod fit;
mod optim;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::encoder::EncoderConfig;
use crate::graph::{GraphError, SplitConfig};
use crate::metrics::MetricsError;
use crate::objectives::{EnvironmentConfig, Factor, GroupDroConfig, LossWeights, ObjectiveError};
use crate::predictor::{ModelConfig, PredictorError, PredictorMode};

pub use data::{stratified_batches, venue_class, Dataset};
pub use fit::{
    build_objective, evaluate, fit, predict, train_step, write_history, write_loss_ledger, FitOutcome, HistoryRow,
    Objective, Predictions, WeightPolicy,
};
pub use optim::{lr_at, AdamW, EarlyStopping, StopDecision};
pub use store::{load_checkpoint, save_checkpoint, ModelMeta, MODEL_META_FILE};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("epoch {epoch} outside 0..{max_epochs}")]
    EpochOutOfRange { epoch: usize, max_epochs: usize },
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("split {0} is empty")]
    EmptySplit(&'static str),
    #[error("paper {0} has no citation label")]
    MissingLabel(String),
    #[error("checkpoint is untrained: {0}")]
    UntrainedCheckpoint(String),
    #[error("bad model metadata: {0}")]
    BadMeta(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<crate::encoder::EncoderError> for TrainError {
    fn from(e: crate::encoder::EncoderError) -> Self {
        TrainError::Predictor(e.into())
    }
}

/// Every knob of a training run, flat so it maps onto a key-value file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
    pub head_hidden: usize,
    pub disc_hidden: usize,
    pub mode: PredictorMode,
    /// Environment reweighting; `false` minimizes the plain mean risk.
    pub group_dro: bool,
    pub lambda_main: f64,
    pub lambda_reg: f64,
    pub lambda_mono: f64,
    pub lambda_smooth: f64,
    pub lambda_adv: f64,
    pub lambda_corr: f64,
    /// Gradient-reversal multiplier in front of the adversary.
    pub adv_scale: f64,
    pub alpha: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub tau: f64,
    pub factors: Vec<Factor>,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub final_lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub train_years: [i32; 2],
    pub val_years: [i32; 2],
    pub test_years: [i32; 2],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let model = ModelConfig::default();
        let dro = GroupDroConfig::default();
        let w = LossWeights::default();
        Self {
            layers: enc.layers,
            hidden: enc.hidden,
            heads: enc.heads,
            dropout: enc.dropout,
            head_hidden: model.head_hidden,
            disc_hidden: model.disc_hidden,
            mode: model.mode,
            group_dro: true,
            lambda_main: w.main,
            lambda_reg: w.reg,
            lambda_mono: w.mono,
            lambda_smooth: w.smooth,
            lambda_adv: w.adv,
            lambda_corr: w.corr,
            adv_scale: 1.0,
            alpha: dro.alpha,
            w_min: dro.w_min,
            w_max: dro.w_max,
            tau: EnvironmentConfig::default().tau,
            factors: Factor::ALL.to_vec(),
            lr: 1e-3,
            weight_decay: 1e-4,
            warmup_epochs: 10,
            final_lr: 1e-5,
            max_epochs: 200,
            batch_size: 128,
            patience: 20,
            train_years: [2010, 2018],
            val_years: [2019, 2019],
            test_years: [2020, 2020],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        let lambdas = [
            ("lambda_main", self.lambda_main),
            ("lambda_reg", self.lambda_reg),
            ("lambda_mono", self.lambda_mono),
            ("lambda_smooth", self.lambda_smooth),
            ("lambda_adv", self.lambda_adv),
            ("lambda_corr", self.lambda_corr),
            ("adv_scale", self.adv_scale),
            ("alpha", self.alpha),
            ("weight_decay", self.weight_decay),
        ];
        for (name, v) in lambdas {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{} must be finite and >= 0, got {}", name, v));
            }
        }
        if !(self.lr > 0.0) || !(self.final_lr > 0.0) {
            return bad("lr and final_lr must be > 0".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2".into());
        }
        if self.max_epochs < 1 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(0.0 < self.w_min && self.w_min <= 0.5 && 0.5 <= self.w_max && self.w_max < 1.0) {
            return bad(format!("clip bounds [{}, {}] must straddle 0.5 inside (0, 1)", self.w_min, self.w_max));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.model_config().encoder.validate()?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                layers: self.layers,
                hidden: self.hidden,
                heads: self.heads,
                dropout: self.dropout,
                ..Default::default()
            },
            head_hidden: self.head_hidden,
            disc_hidden: self.disc_hidden,
            mode: self.mode,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            main: self.lambda_main,
            reg: self.lambda_reg,
            mono: self.lambda_mono,
            smooth: self.lambda_smooth,
            adv: self.lambda_adv,
            corr: self.lambda_corr,
        }
    }

    pub fn dro(&self) -> GroupDroConfig {
        GroupDroConfig {
            alpha: self.alpha,
            w_min: self.w_min,
            w_max: self.w_max,
            ..Default::default()
        }
    }

    pub fn environments(&self) -> EnvironmentConfig {
        EnvironmentConfig { tau: self.tau }
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            train: (self.train_years[0], self.train_years[1]),
            val: (self.val_years[0], self.val_years[1]),
            test: (self.test_years[0], self.test_years[1]),
        }
    }
}
