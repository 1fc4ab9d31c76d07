//! Per-camera edge processing: motion gating, detection filtering,
//! single-camera tracking, geo-mapping and the feature-extraction scheduler.

pub mod camera;
pub mod filter;
pub mod gate;
pub mod kalman;
pub mod pipeline;
pub mod scheduler;
pub mod sct;

use thiserror::Error;

use crate::feature::FeatureError;

pub use camera::{geo_map, CalibrationFile, CameraModel};
pub use filter::filter_detections;
pub use gate::{GateOutput, Grid, MotionGate, MotionGateConfig};
pub use kalman::{KalmanParams, KalmanTrack, TrackStatus};
pub use pipeline::{EdgeConfig, EdgePipeline, FrameInput, FrameOutcome, StageTimes};
pub use scheduler::{
    extract_and_attach, FeatureProvider, FeatureQueue, FeatureTask, SchedulerConfig,
};
pub use sct::{ByteTracker, SctConfig};

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error("frame grid is {got:?}, gate expects {expected:?}")]
    GridMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("kalman numerical guard: {0}")]
    NumericalGuard(&'static str),
    #[error("no ground intersection for pixel ray")]
    NoGroundIntersection,
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("calibration file {path}: {reason}")]
    Calibration { path: String, reason: String },
    #[error("no task in feature queue")]
    NoTask,
    #[error("feature provider failed: {0}")]
    Provider(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}
