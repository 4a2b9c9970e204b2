//! Optimization loops for all pipeline stages: decoupled-weight-decay Adam,
//! cosine schedule with warmup, layer-wise learning-rate decay, metrics,
//! evaluation, and checkpointing.

mod checkpoint;
mod evalmetrics;
mod metrics;
mod optimizer;
mod schedule;
mod stages;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use evalmetrics::{mae, rmse, roc_auc_binary, roc_auc_multi_target, Metric};
pub use metrics::{MetricsLog, MetricsRow};
pub use optimizer::AdamW;
pub use schedule::{lr_at_step, Schedule};
pub use stages::{
    evaluate, predictions, train_contrastive, train_denoise, train_distill, train_finetune,
    ContrastiveSetup, DenoiseSetup, DistillSetup, FinetuneSetup, Readout, TrainOutputs,
};

use crate::autodiff::AdError;
use crate::encoder2d::Encoder2DError;
use crate::encoder3d::EncoderError;
use crate::moldata::DataError;
use crate::objectives::ObjectiveError;
use std::fmt;

/// Pipeline stage tag carried by checkpoints and metrics rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    #[serde(rename = "denoise")]
    Denoise,
    #[serde(rename = "distill-graph")]
    DistillGraph,
    #[serde(rename = "distill-node")]
    DistillNode,
    #[serde(rename = "finetune")]
    Finetune,
    #[serde(rename = "contrastive")]
    Contrastive,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Denoise => "denoise",
            Stage::DistillGraph => "distill-graph",
            Stage::DistillNode => "distill-node",
            Stage::Finetune => "finetune",
            Stage::Contrastive => "contrastive",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    /// Layer-wise decay factor in (0, 1]; layer i gets decay^(L - i).
    pub layer_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 5e-4,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.05,
            layer_decay: 0.65,
        }
    }
}

impl OptimizerConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.lr <= 0.0 {
            out.push(format!("optimizer.lr must be > 0, got {}", self.lr));
        }
        if !(0.0 < self.layer_decay && self.layer_decay <= 1.0) {
            out.push(format!(
                "optimizer.layer_decay must lie in (0, 1], got {}",
                self.layer_decay
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Data(DataError),
    Objective(ObjectiveError),
    Ad(AdError),
    Encoder3D(EncoderError),
    Encoder2D(Encoder2DError),
    /// Loss became NaN; training aborts with the offending step and record.
    NanLoss {
        stage: Stage,
        step: u64,
        record_id: String,
    },
    /// A checkpoint from the wrong pipeline stage was supplied.
    StageMismatch { expected: String, got: Stage },
    MissingConformer { id: String },
    BadConfig(Vec<String>),
    /// Checkpoint I/O.
    Io(String),
    /// Checkpoint failed its hash or structural validation.
    Corrupt(String),
    /// Checkpoint format or dtype incompatible with this build.
    Incompatible(String),
    /// Metric cannot apply to the task or no target qualified.
    MetricUnavailable(String),
    /// +vn readout on a student without a virtual token.
    VirtualNodeUnavailable,
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Data(e) => write!(f, "{e}"),
            TrainError::Objective(e) => write!(f, "{e}"),
            TrainError::Ad(e) => write!(f, "{e}"),
            TrainError::Encoder3D(e) => write!(f, "{e}"),
            TrainError::Encoder2D(e) => write!(f, "{e}"),
            TrainError::NanLoss {
                stage,
                step,
                record_id,
            } => write!(f, "{stage}: NaN loss at step {step} on record {record_id}"),
            TrainError::StageMismatch { expected, got } => {
                write!(f, "checkpoint stage {got} where {expected} was required")
            }
            TrainError::MissingConformer { id } => write!(f, "record {id} has no conformer"),
            TrainError::BadConfig(problems) => {
                write!(f, "invalid config: {}", problems.join("; "))
            }
            TrainError::Io(m) => write!(f, "checkpoint io: {m}"),
            TrainError::Corrupt(m) => write!(f, "checkpoint corrupt: {m}"),
            TrainError::Incompatible(m) => write!(f, "checkpoint incompatible: {m}"),
            TrainError::MetricUnavailable(m) => write!(f, "metric unavailable: {m}"),
            TrainError::VirtualNodeUnavailable => {
                write!(f, "virtual-node readout requires a virtual-node-enabled student")
            }
        }
    }
}

impl std::error::Error for TrainError {}

impl From<DataError> for TrainError {
    fn from(e: DataError) -> Self {
        TrainError::Data(e)
    }
}
impl From<ObjectiveError> for TrainError {
    fn from(e: ObjectiveError) -> Self {
        TrainError::Objective(e)
    }
}
impl From<AdError> for TrainError {
    fn from(e: AdError) -> Self {
        TrainError::Ad(e)
    }
}
impl From<EncoderError> for TrainError {
    fn from(e: EncoderError) -> Self {
        TrainError::Encoder3D(e)
    }
}
impl From<Encoder2DError> for TrainError {
    fn from(e: Encoder2DError) -> Self {
        TrainError::Encoder2D(e)
    }
}

pub type TrainResult<T> = Result<T, TrainError>;
