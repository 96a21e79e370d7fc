//! Main-lane driving policies: the style-aware rule policy and the attention
//! model trained to imitate it.

pub mod dataset;
pub mod idm;
pub mod loss;
pub mod model;
pub mod rule;
pub mod tensor;
pub mod train;
pub mod weights_io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameTransform};
use crate::sample::T_FUT;
use crate::types::PlannedFrame;

pub use dataset::{generate_dataset, DatasetConfig, TrainingExample};
pub use idm::{idm_accel, IdmParams};
pub use loss::{lambda_weight, loss, LossBreakdown};
pub use model::{attention_forward, embed, predict, ModelConfig, ModelWeights, Prediction};
pub use rule::rule_policy_plan;
pub use train::{train, TrainConfig, TrainOutcome};

/// Future frames at 0.1 s spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub frames: Vec<PlannedFrame>,
}

impl PlannedTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != T_FUT {
            return Err(Error::shape("planned frames", T_FUT, self.frames.len()));
        }
        if self.frames.iter().any(|f| !f.as_array().iter().all(|v| v.is_finite())) {
            return Err(Error::validation("planned trajectory has non-finite values"));
        }
        Ok(())
    }

    pub fn to_global(&self, frame: &Frame) -> PlannedTrajectory {
        PlannedTrajectory {
            frames: self.frames.iter().map(|f| f.from_frame(frame)).collect(),
        }
    }

    pub fn to_local(&self, frame: &Frame) -> PlannedTrajectory {
        PlannedTrajectory {
            frames: self.frames.iter().map(|f| f.to_frame(frame)).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.as_array()).collect()
    }
}
