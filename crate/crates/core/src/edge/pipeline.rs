use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::camera::{geo_map, CameraModel};
use super::filter::filter_detections;
use super::gate::{Grid, MotionGate, MotionGateConfig};
use super::kalman::KalmanParams;
use super::scheduler::SchedulerConfig;
use super::sct::{ByteTracker, SctConfig};
use super::EdgeError;
use crate::types::{Detection, Tracklet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeConfig {
    pub conf_thresh: f64,
    pub nms_iou: f64,
    pub gate_enabled: bool,
    pub gate: MotionGateConfig,
    pub sct: SctConfig,
    pub kalman: KalmanParams,
    /// Assumed height of the vehicle reference point above ground, meters.
    pub vehicle_height_m: f64,
    pub scheduler: SchedulerConfig,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            conf_thresh: 0.35,
            nms_iou: 0.40,
            gate_enabled: true,
            gate: MotionGateConfig::default(),
            sct: SctConfig::default(),
            kalman: KalmanParams::default(),
            vehicle_height_m: 0.5,
            scheduler: SchedulerConfig::default(),
        }
    }
}

/// Detector output and optional motion raster for one frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameInput<'a> {
    pub frame_index: u32,
    pub timestamp_ms: f64,
    pub detections: &'a [Detection],
    pub grid: Option<&'a Grid>,
}

/// Wall-clock milliseconds spent per stage on one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimes {
    pub gate_ms: f64,
    pub filter_ms: f64,
    pub sct_ms: f64,
    pub geo_ms: f64,
}

impl StageTimes {
    pub const NAMES: [&'static str; 4] = ["gate", "filter", "sct", "geo"];

    pub fn as_array(&self) -> [f64; 4] {
        [self.gate_ms, self.filter_ms, self.sct_ms, self.geo_ms]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

#[derive(Clone, Debug, Default)]
pub struct FrameOutcome {
    pub active: bool,
    pub foreground: usize,
    pub closed: Vec<Tracklet>,
    pub times: StageTimes,
}

/// Per-camera chain: motion gate, detection filter, tracker, geo-mapping.
#[derive(Clone, Debug)]
pub struct EdgePipeline {
    camera: CameraModel,
    cfg: EdgeConfig,
    gate: Option<MotionGate>,
    tracker: ByteTracker,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

impl EdgePipeline {
    pub fn new(camera: CameraModel, cfg: EdgeConfig) -> Self {
        let tracker = ByteTracker::new(camera.camera_id, cfg.sct.clone(), cfg.kalman.clone());
        Self {
            camera,
            cfg,
            gate: None,
            tracker,
        }
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn config(&self) -> &EdgeConfig {
        &self.cfg
    }

    pub fn tracker(&self) -> &ByteTracker {
        &self.tracker
    }

    /// Process one frame; frames must arrive in increasing `frame_index` order.
    pub fn process_frame(&mut self, input: FrameInput<'_>) -> Result<FrameOutcome, EdgeError> {
        let mut times = StageTimes::default();

        let t0 = Instant::now();
        let gate_out = match (self.cfg.gate_enabled, input.grid) {
            (true, Some(grid)) => {
                let gate = self.gate.get_or_insert_with(|| {
                    MotionGate::new(self.cfg.gate.clone(), grid.width, grid.height)
                });
                gate.update(Some(grid))?
            }
            _ => super::gate::GateOutput {
                foreground: 0,
                active: true,
            },
        };
        times.gate_ms = ms_since(t0);

        let mut closed = if gate_out.active {
            let t1 = Instant::now();
            let dets = filter_detections(input.detections, self.cfg.conf_thresh, self.cfg.nms_iou);
            times.filter_ms = ms_since(t1);

            let t2 = Instant::now();
            let closed = self.tracker.step(&dets, input.frame_index);
            times.sct_ms = ms_since(t2);
            closed
        } else {
            // skipped frame: only age out tracks that are already dead
            let t2 = Instant::now();
            let closed = self.tracker.expire(input.frame_index);
            times.sct_ms = ms_since(t2);
            closed
        };

        let t3 = Instant::now();
        self.geo_annotate(&mut closed);
        times.geo_ms = ms_since(t3);

        Ok(FrameOutcome {
            active: gate_out.active,
            foreground: gate_out.foreground,
            closed,
            times,
        })
    }

    /// End of stream: close all open tracks.
    pub fn finish(&mut self) -> Vec<Tracklet> {
        let mut closed = self.tracker.flush();
        self.geo_annotate(&mut closed);
        closed
    }

    fn geo_annotate(&self, tracklets: &mut [Tracklet]) {
        for t in tracklets {
            for o in t.obs_mut() {
                o.gps = geo_map(&self.camera, o.bbox.center(), self.cfg.vehicle_height_m).ok();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, GeoPoint};
    use nalgebra::Vector3;

    fn camera() -> CameraModel {
        CameraModel::nadir(
            0,
            960.0,
            1920,
            1080,
            Vector3::new(0.0, 0.0, 30.0),
            0.0,
            GeoPoint::new(52.5, 13.4),
        )
    }

    fn dets(frame: u32) -> Vec<Detection> {
        if frame >= 60 {
            return vec![];
        }
        vec![Detection {
            camera_id: 0,
            frame_index: frame,
            timestamp_ms: frame as f64 * 1000.0 / 15.0,
            bbox: BBox::from_center(200.0 + 20.0 * frame as f64, 400.0, 144.0, 58.0),
            confidence: 0.9,
            class_id: 0,
        }]
    }

    fn raster(frame: u32) -> Grid {
        let mut g = Grid::filled(480, 270, 0.0);
        if frame < 60 && frame > 0 {
            let x = (200 + 20 * frame as usize - 72) / 4;
            g.paint(x, (400 - 29) / 4, x + 36, (400 + 29) / 4, 255.0);
        }
        g
    }

    fn run(gate: bool) -> Vec<Tracklet> {
        let mut p = EdgePipeline::new(
            camera(),
            EdgeConfig {
                gate_enabled: gate,
                ..EdgeConfig::default()
            },
        );
        let mut out = Vec::new();
        for f in 0..120 {
            let d = dets(f);
            let g = raster(f);
            let o = p
                .process_frame(FrameInput {
                    frame_index: f,
                    timestamp_ms: f as f64 * 1000.0 / 15.0,
                    detections: &d,
                    grid: Some(&g),
                })
                .unwrap();
            out.extend(o.closed);
        }
        out.extend(p.finish());
        out
    }

    #[test]
    fn emits_geo_annotated_tracklet() {
        let out = run(false);
        assert_eq!(out.len(), 1);
        let t = &out[0];
        assert_eq!(t.len(), 60);
        assert!(t.obs().iter().all(|o| o.gps.is_some()));
        assert!(t
            .obs()
            .windows(2)
            .all(|w| w[0].frame_index < w[1].frame_index));
    }

    #[test]
    fn gate_skips_frames_without_motion() {
        let out = run(true);
        // frame 0 seeds the background; frames 1..60 carry motion
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].first().frame_index, 1);
        assert_eq!(out[0].len(), 59);
    }

    #[test]
    fn gate_is_transparent_when_every_frame_is_active() {
        // absent rasters mean every frame is active
        let run_absent = |gate: bool| {
            let mut p = EdgePipeline::new(
                camera(),
                EdgeConfig {
                    gate_enabled: gate,
                    ..EdgeConfig::default()
                },
            );
            let mut out = Vec::new();
            for f in 0..120 {
                let d = dets(f);
                let o = p
                    .process_frame(FrameInput {
                        frame_index: f,
                        timestamp_ms: f as f64 * 1000.0 / 15.0,
                        detections: &d,
                        grid: None,
                    })
                    .unwrap();
                out.extend(o.closed);
            }
            out.extend(p.finish());
            out
        };
        assert_eq!(run_absent(true), run_absent(false));
    }
}
