//! Deterministic synthetic scenarios: a camera corridor, moving vehicles,
//! noisy detector output, identity features and complete ground truth.

pub mod config;
pub mod features;
pub mod gt_io;
pub mod render;
pub mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{
    CameraLayout, ConfidenceModel, FeatureConfig, NoiseConfig, RasterConfig, ScenarioConfig,
    VehicleShape,
};
pub use features::{identity_basis, oracle_feature, ConstantFeatureProvider, SimFeatureProvider};
pub use gt_io::{format_ground_truth, parse_ground_truth, read_ground_truth, write_ground_truth};
pub use render::{render_detections, RenderStats};
pub use world::{
    generate_world, Direction, GroundTruth, GtBox, GtInterval, GtTransition, ScenarioWorld, Vehicle,
};

use crate::server::{Topology, TopologyPair};
use crate::types::{TrackId, Tracklet};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario config: {0}")]
    Config(String),
    #[error("ground truth line {line}: {reason}")]
    GroundTruth { line: usize, reason: String },
    #[error("{0}")]
    Io(String),
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for `(seed, tags...)`.
pub fn sub_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mixed = tags
        .iter()
        .fold(splitmix(seed), |h, &t| splitmix(h ^ splitmix(t)));
    ChaCha8Rng::seed_from_u64(mixed)
}

pub fn topology(world: &ScenarioWorld) -> Topology {
    Topology {
        pair: world
            .adjacent_pairs()
            .into_iter()
            .map(|(from, to, s)| TopologyPair {
                from,
                to,
                segment_m: Some(s),
            })
            .collect(),
    }
}

/// Cut a tracklet in two around its temporal midpoint so that the halves are
/// at least `gap_ms` apart. The second half gets `new_id`. Features are dropped.
pub fn fragment_tracklet(
    t: &Tracklet,
    gap_ms: f64,
    new_id: TrackId,
) -> Option<(Tracklet, Tracklet)> {
    let mid = 0.5 * (t.start_ms() + t.end_ms());
    let a: Vec<_> = t
        .obs()
        .iter()
        .filter(|o| o.timestamp_ms < mid - gap_ms / 2.0)
        .cloned()
        .collect();
    let cut = a.last()?.timestamp_ms + gap_ms;
    let b: Vec<_> = t
        .obs()
        .iter()
        .filter(|o| o.timestamp_ms >= cut)
        .cloned()
        .collect();
    if b.is_empty() {
        return None;
    }
    Some((
        Tracklet::new(t.camera_id, t.track_id, a).ok()?,
        Tracklet::new(t.camera_id, new_id, b).ok()?,
    ))
}
