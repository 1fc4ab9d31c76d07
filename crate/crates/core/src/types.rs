//! Detections, observations, and single-camera tracklets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::FeatureVector;
use crate::geometry::{BBox, GeoPoint};

pub type CameraId = u32;
pub type TrackId = u32;

/// One candidate vehicle observation in one frame of one camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub camera_id: CameraId,
    pub frame_index: u32,
    pub timestamp_ms: f64,
    pub bbox: BBox,
    pub confidence: f64,
    pub class_id: u32,
}

/// Frame timestamp on the scenario clock.
pub fn frame_timestamp_ms(frame_index: u32, fps: f64) -> f64 {
    frame_index as f64 * 1000.0 / fps
}

/// A tracked detection as stored in a tracklet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame_index: u32,
    pub timestamp_ms: f64,
    pub bbox: BBox,
    pub confidence: f64,
    pub gps: Option<GeoPoint>,
}

impl Observation {
    pub fn from_detection(det: &Detection) -> Self {
        Self {
            frame_index: det.frame_index,
            timestamp_ms: det.timestamp_ms,
            bbox: det.bbox,
            confidence: det.confidence,
            gps: None,
        }
    }
}

/// Globally unique tracklet identity: camera plus camera-local track id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackletKey {
    pub camera_id: CameraId,
    pub track_id: TrackId,
}

impl std::fmt::Display for TrackletKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "c{}/t{}", self.camera_id, self.track_id)
    }
}

/// Features of the first and last extracted frame of a tracklet.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFeatures {
    pub start: FeatureVector,
    pub end: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackletError {
    #[error("tracklet has no observations")]
    Empty,
    #[error("frame indices not strictly increasing at position {0}")]
    NonIncreasingFrames(usize),
}

/// A single-camera track: ordered observations plus the aggregated appearance feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    pub camera_id: CameraId,
    pub track_id: TrackId,
    obs: Vec<Observation>,
    pub feature: Option<FeatureVector>,
    pub boundary: Option<BoundaryFeatures>,
}

impl Tracklet {
    pub fn new(
        camera_id: CameraId,
        track_id: TrackId,
        obs: Vec<Observation>,
    ) -> Result<Self, TrackletError> {
        if obs.is_empty() {
            return Err(TrackletError::Empty);
        }
        if let Some(i) = obs
            .windows(2)
            .position(|w| w[1].frame_index <= w[0].frame_index)
        {
            return Err(TrackletError::NonIncreasingFrames(i + 1));
        }
        Ok(Self {
            camera_id,
            track_id,
            obs,
            feature: None,
            boundary: None,
        })
    }

    pub fn key(&self) -> TrackletKey {
        TrackletKey {
            camera_id: self.camera_id,
            track_id: self.track_id,
        }
    }

    pub fn obs(&self) -> &[Observation] {
        &self.obs
    }

    pub fn obs_mut(&mut self) -> &mut [Observation] {
        &mut self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn first(&self) -> &Observation {
        &self.obs[0]
    }

    pub fn last(&self) -> &Observation {
        &self.obs[self.obs.len() - 1]
    }

    pub fn start_ms(&self) -> f64 {
        self.first().timestamp_ms
    }

    pub fn end_ms(&self) -> f64 {
        self.last().timestamp_ms
    }

    pub fn with_feature(mut self, feature: FeatureVector) -> Self {
        self.feature = Some(feature);
        self
    }

    /// Feature at the start boundary, falling back to the aggregate.
    pub fn start_feature(&self) -> Option<&FeatureVector> {
        self.boundary
            .as_ref()
            .map(|b| &b.start)
            .or(self.feature.as_ref())
    }

    /// Feature at the end boundary, falling back to the aggregate.
    pub fn end_feature(&self) -> Option<&FeatureVector> {
        self.boundary
            .as_ref()
            .map(|b| &b.end)
            .or(self.feature.as_ref())
    }

    /// Append another tracklet's observations; `other` must start after `self` ends.
    pub fn extend_with(&mut self, other: &Tracklet) -> Result<(), TrackletError> {
        if other.first().frame_index <= self.last().frame_index {
            return Err(TrackletError::NonIncreasingFrames(self.obs.len()));
        }
        self.obs.extend_from_slice(&other.obs);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ob(frame: u32) -> Observation {
        Observation {
            frame_index: frame,
            timestamp_ms: frame as f64 * 100.0,
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            confidence: 0.9,
            gps: None,
        }
    }

    #[test]
    fn rejects_empty_and_unordered() {
        assert_eq!(Tracklet::new(0, 1, vec![]), Err(TrackletError::Empty));
        assert_eq!(
            Tracklet::new(0, 1, vec![ob(3), ob(3)]),
            Err(TrackletError::NonIncreasingFrames(1))
        );
    }

    #[test]
    fn start_end_follow_observations() {
        let t = Tracklet::new(2, 7, vec![ob(1), ob(4), ob(9)]).unwrap();
        assert_eq!(t.start_ms(), 100.0);
        assert_eq!(t.end_ms(), 900.0);
        assert_eq!(
            t.key(),
            TrackletKey {
                camera_id: 2,
                track_id: 7
            }
        );
    }

    #[test]
    fn extend_requires_later_start() {
        let mut a = Tracklet::new(0, 1, vec![ob(1), ob(2)]).unwrap();
        let b = Tracklet::new(0, 2, vec![ob(2), ob(3)]).unwrap();
        assert!(a.extend_with(&b).is_err());
        let c = Tracklet::new(0, 3, vec![ob(5)]).unwrap();
        a.extend_with(&c).unwrap();
        assert_eq!(a.len(), 3);
    }
}
