//! Run configuration: one JSON document with a section per subsystem.
//! Every section falls back to desk-scale defaults; unknown keys are
//! rejected everywhere so typos fail loudly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{DataConfig, MIN_FRAME_POINTS};
use crate::encoder::EncoderConfig;
use crate::error::{ConfigError, Error};
use crate::geometry::CHAMFER_VARIANT;
use crate::sdfnet::SdfConfig;
use crate::training::{AdamConfig, LossWeights, TrainSettings};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub sdfnet: SdfConfig,
    pub loss: LossWeights,
    pub optimizer: AdamConfig,
    pub run: TrainSettings,
    pub eval: EvalConfig,
}

/// Reconstruction and scoring settings; changing these never invalidates
/// a checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Samples per axis of the reconstruction grid.
    pub grid_res: usize,
    /// Chamfer flavor recorded in reports. Only the symmetric mean of
    /// Euclidean nearest-neighbor distances is implemented.
    pub cd_variant: String,
    /// Gate thresholds for assertion-mode evaluation.
    pub max_mean_cd: f64,
    pub min_tsr: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            grid_res: 64,
            cd_variant: CHAMFER_VARIANT.to_string(),
            max_mean_cd: 0.02,
            min_tsr: 80.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.grid_res < 2 {
            return Err(Error::Invalid(
                "eval.grid_res needs at least two samples per axis".into(),
            ));
        }
        if self.cd_variant != CHAMFER_VARIANT {
            return Err(Error::Invalid(format!(
                "eval.cd_variant {:?} is not implemented; only {CHAMFER_VARIANT:?} is",
                self.cd_variant
            )));
        }
        if !(self.max_mean_cd > 0.0 && self.max_mean_cd.is_finite()) {
            return Err(Error::Invalid(
                "eval.max_mean_cd must be positive and finite".into(),
            ));
        }
        if !(0.0..=100.0).contains(&self.min_tsr) {
            return Err(Error::Invalid(
                "eval.min_tsr is a percentage in [0, 100]".into(),
            ));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.data.n_sequences == 0 {
            return Err(Error::Invalid("data.n_sequences must be positive".into()));
        }
        if self.data.n_frames == 0 {
            return Err(Error::Invalid("data.n_frames must be positive".into()));
        }
        if self.data.points_per_frame < MIN_FRAME_POINTS {
            return Err(Error::Invalid(format!(
                "data.points_per_frame must be at least {MIN_FRAME_POINTS}"
            )));
        }
        self.encoder.validate()?;
        self.sdfnet.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        if self.data.window != self.encoder.window {
            return Err(Error::Invalid(format!(
                "data.window {} disagrees with encoder window_T {}",
                self.data.window, self.encoder.window
            )));
        }
        if self.data.n_frames < self.encoder.window {
            return Err(Error::Invalid(format!(
                "sequence length {} is shorter than the window {}",
                self.data.n_frames, self.encoder.window
            )));
        }
        self.run.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    /// The fully resolved document, defaults filled in; written next to
    /// run artifacts so a run is reproducible from its output directory.
    pub fn resolved(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// The sections that define the model and objective; resume refuses
    /// checkpoints whose sections differ (run-section changes are fine).
    pub fn model_sections(&self) -> serde_json::Value {
        json!({
            "data": self.data,
            "encoder": self.encoder,
            "sdfnet": self.sdfnet,
            "loss": self.loss,
            "optimizer": self.optimizer,
        })
    }
}
