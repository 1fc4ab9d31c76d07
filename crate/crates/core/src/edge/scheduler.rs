//! FIFO feature-extraction queue with an adaptive subsampling divisor `K`.
//!
//! Completed tracklets wait here for appearance extraction. Every dequeue
//! takes one frame out of every `K` and then retunes `K` against the queue
//! threshold `T`: a backlog above `T` raises `K` (fewer frames per task), a
//! queue below `T` lowers it again.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::EdgeError;
use crate::feature::{aggregate_features, FeatureVector};
use crate::types::{BoundaryFeatures, CameraId, Observation, Tracklet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub k_init: u32,
    pub queue_threshold: usize,
    pub k_min: u32,
    pub k_max: u32,
    /// Hard capacity used only for overflow reporting.
    pub queue_cap: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            k_init: 5,
            queue_threshold: 10,
            k_min: 1,
            k_max: 15,
            queue_cap: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeatureQueue {
    pending: VecDeque<Tracklet>,
    k: u32,
    cfg: SchedulerConfig,
}

/// One unit of extraction work: a tracklet and the observation indices to embed.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTask {
    pub tracklet: Tracklet,
    pub frames: Vec<usize>,
    pub k: u32,
}

impl FeatureTask {
    pub fn observations(&self) -> Vec<&Observation> {
        self.frames
            .iter()
            .map(|&i| &self.tracklet.obs()[i])
            .collect()
    }
}

impl FeatureQueue {
    pub fn new(cfg: SchedulerConfig) -> Self {
        let k = cfg
            .k_init
            .clamp(cfg.k_min.max(1), cfg.k_max.max(cfg.k_min.max(1)));
        Self {
            pending: VecDeque::new(),
            k,
            cfg,
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn overflowed(&self) -> bool {
        self.pending.len() > self.cfg.queue_cap
    }

    pub fn pending(&self) -> impl Iterator<Item = &Tracklet> {
        self.pending.iter()
    }

    pub fn enqueue(&mut self, t: Tracklet) {
        self.pending.push_back(t);
    }

    /// Pop the oldest tracklet, subsample it with the current `K`, then retune `K`.
    pub fn dequeue(&mut self) -> Result<FeatureTask, EdgeError> {
        let tracklet = self.pending.pop_front().ok_or(EdgeError::NoTask)?;
        let k = self.k;
        let frames = subsample_indices(tracklet.len(), k);
        self.adjust();
        Ok(FeatureTask {
            tracklet,
            frames,
            k,
        })
    }

    fn adjust(&mut self) {
        let len = self.pending.len();
        let t = self.cfg.queue_threshold.max(1);
        if len > t {
            // step grows with the size of the backlog, at least 1
            let step = (len - t).div_ceil(t) as u32;
            self.k = (self.k + step).min(self.cfg.k_max);
        } else if len < t {
            self.k = self.k.saturating_sub(1).max(self.cfg.k_min);
        }
    }
}

/// Indices `0, K, 2K, ...`; never empty for a non-empty tracklet.
pub fn subsample_indices(len: usize, k: u32) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    (0..len).step_by(k.max(1) as usize).collect()
}

/// Source of per-frame appearance embeddings.
pub trait FeatureProvider {
    /// One feature per observation, in order.
    fn extract(
        &mut self,
        camera_id: CameraId,
        frames: &[&Observation],
    ) -> Result<Vec<FeatureVector>, EdgeError>;
}

/// Run the provider on a task and attach the confidence-weighted aggregate.
pub fn extract_and_attach(
    task: FeatureTask,
    provider: &mut dyn FeatureProvider,
) -> Result<Tracklet, EdgeError> {
    let frames = task.observations();
    if frames.is_empty() {
        return Err(EdgeError::Provider("task has no frames".into()));
    }
    let features = provider.extract(task.tracklet.camera_id, &frames)?;
    if features.len() != frames.len() {
        return Err(EdgeError::Provider(format!(
            "provider returned {} features for {} frames",
            features.len(),
            frames.len()
        )));
    }
    let samples: Vec<(FeatureVector, f64)> = features
        .iter()
        .cloned()
        .zip(frames.iter().map(|o| o.confidence))
        .collect();
    let aggregate = aggregate_features(&samples)?;
    let start = features[0].clone().normalized()?;
    let end = features[features.len() - 1].clone().normalized()?;
    let mut tracklet = task.tracklet;
    tracklet.feature = Some(aggregate);
    tracklet.boundary = Some(BoundaryFeatures { start, end });
    Ok(tracklet)
}
