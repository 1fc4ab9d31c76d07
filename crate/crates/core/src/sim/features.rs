//! Identity-conditioned embeddings standing in for a re-identification network.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};

use super::world::GroundTruth;
use super::{sub_rng, FeatureConfig};
use crate::edge::{EdgeError, FeatureProvider};
use crate::feature::FeatureVector;
use crate::geometry::{iou, BBox};
use crate::types::{CameraId, Observation};

const TAG_IDENTITY: u64 = 3;
const TAG_CAMERA_BIAS: u64 = 4;
const TAG_FRAME_NOISE: u64 = 5;
const TAG_CLUTTER: u64 = 6;

fn gaussian_vec(seed: u64, tags: &[u64], dim: usize) -> Vec<f64> {
    let mut rng = sub_rng(seed, tags);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Random unit vector fixed by `(seed, vehicle)`.
pub fn identity_basis(seed: u64, vehicle: u32, dim: usize) -> FeatureVector {
    FeatureVector::new(gaussian_vec(seed, &[TAG_IDENTITY, vehicle as u64], dim))
        .normalized()
        .expect("gaussian draw is non-zero")
}

/// Embedding of `vehicle` seen by `camera` at `frame`: identity basis, plus
/// a per-camera offset, plus per-frame noise, re-normalized.
pub fn oracle_feature(
    seed: u64,
    vehicle: u32,
    camera: CameraId,
    frame: u32,
    cfg: &FeatureConfig,
) -> FeatureVector {
    let mut v = identity_basis(seed, vehicle, cfg.dim).into_inner();
    if cfg.camera_bias_sigma > 0.0 {
        let bias = gaussian_vec(seed, &[TAG_CAMERA_BIAS, camera as u64], cfg.dim);
        v.iter_mut()
            .zip(bias)
            .for_each(|(x, b)| *x += cfg.camera_bias_sigma * b);
    }
    if cfg.noise_sigma > 0.0 {
        let noise = gaussian_vec(
            seed,
            &[TAG_FRAME_NOISE, camera as u64, frame as u64, vehicle as u64],
            cfg.dim,
        );
        v.iter_mut()
            .zip(noise)
            .for_each(|(x, n)| *x += cfg.noise_sigma * n);
    }
    FeatureVector::new(v)
        .normalized()
        .unwrap_or_else(|_| identity_basis(seed, vehicle, cfg.dim))
}

/// Looks up which vehicle a box shows and returns its oracle feature.
/// Boxes matching no vehicle get an unrelated random embedding.
pub struct SimFeatureProvider {
    seed: u64,
    cfg: FeatureConfig,
    truth: HashMap<(CameraId, u32), Vec<(u32, BBox)>>,
    min_iou: f64,
}

impl SimFeatureProvider {
    pub fn new(seed: u64, cfg: FeatureConfig, gt: &GroundTruth) -> Self {
        let mut truth: HashMap<(CameraId, u32), Vec<(u32, BBox)>> = HashMap::new();
        for b in &gt.boxes {
            truth
                .entry((b.camera, b.frame))
                .or_default()
                .push((b.vehicle, b.bbox));
        }
        Self {
            seed,
            cfg,
            truth,
            min_iou: 0.3,
        }
    }

    pub fn vehicle_at(&self, camera: CameraId, o: &Observation) -> Option<u32> {
        self.truth
            .get(&(camera, o.frame_index))?
            .iter()
            .map(|(v, b)| (*v, iou(b, &o.bbox)))
            .filter(|(_, s)| *s >= self.min_iou)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(v, _)| v)
    }
}

impl FeatureProvider for SimFeatureProvider {
    fn extract(
        &mut self,
        camera_id: CameraId,
        frames: &[&Observation],
    ) -> Result<Vec<FeatureVector>, EdgeError> {
        Ok(frames
            .iter()
            .map(|o| match self.vehicle_at(camera_id, o) {
                Some(v) => oracle_feature(self.seed, v, camera_id, o.frame_index, &self.cfg),
                None => {
                    let tag = [
                        TAG_CLUTTER,
                        camera_id as u64,
                        o.frame_index as u64,
                        o.bbox.x.to_bits(),
                        o.bbox.y.to_bits(),
                    ];
                    FeatureVector::new(gaussian_vec(self.seed, &tag, self.cfg.dim))
                        .normalized()
                        .expect("gaussian draw is non-zero")
                }
            })
            .collect())
    }
}

/// Returns the same unit vector for every frame; for timing runs.
pub struct ConstantFeatureProvider {
    pub dim: usize,
}

impl FeatureProvider for ConstantFeatureProvider {
    fn extract(
        &mut self,
        _: CameraId,
        frames: &[&Observation],
    ) -> Result<Vec<FeatureVector>, EdgeError> {
        let mut v = vec![0.0; self.dim.max(1)];
        v[0] = 1.0;
        Ok(vec![FeatureVector::new(v); frames.len()])
    }
}
