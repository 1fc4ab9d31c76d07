//! Edge/server multi-camera vehicle tracking.
//!
//! Edge pipelines turn per-camera detection streams into tracklets with
//! aggregated appearance features. A central server re-merges fragmented
//! tracklets, learns camera-to-camera links offline, and associates
//! tracklets across cameras into global trajectories. A deterministic
//! simulator and identification metrics close the loop.

pub mod edge;
pub mod eval;
pub mod feature;
pub mod geometry;
pub mod run;
pub mod server;
pub mod sim;
pub mod types;
pub mod wire;

pub use feature::{aggregate_features, cosine_similarity, FeatureError, FeatureVector};
pub use geometry::{iou, BBox, GeoPoint};
pub use types::{
    BoundaryFeatures, CameraId, Detection, Observation, TrackId, Tracklet, TrackletKey,
};
