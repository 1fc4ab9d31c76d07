//! Per-camera detector output and motion rasters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::config::ConfidenceModel;
use super::sub_rng;
use super::world::ScenarioWorld;
use crate::geometry::BBox;
use crate::types::frame_timestamp_ms;
use crate::wire::{FrameMsg, PaintRect, RasterMsg, SCHEMA_VERSION};

const TAG_RENDER: u64 = 2;

/// Class id emitted for every synthetic detection.
pub const VEHICLE_CLASS: u32 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub true_detections: u64,
    pub missed: u64,
    pub false_positives: u64,
    pub dropped_frames: u64,
}

fn draw_conf(m: ConfidenceModel, rng: &mut ChaCha8Rng) -> f64 {
    match m {
        ConfidenceModel::Fixed { value } => value,
        ConfidenceModel::Uniform { min, max } if max > min => rng.gen_range(min..=max),
        ConfidenceModel::Uniform { min, .. } => min,
    }
}

fn normal(sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    } else {
        0.0
    }
}

fn cell_rect(b: &BBox, cell: f64, gw: u32, gh: u32) -> Option<PaintRect> {
    let x0 = (b.x / cell).floor().max(0.0);
    let y0 = (b.y / cell).floor().max(0.0);
    let x1 = (b.right() / cell).ceil().min(gw as f64);
    let y1 = (b.bottom() / cell).ceil().min(gh as f64);
    (x1 > x0 && y1 > y0).then(|| PaintRect {
        x0: x0 as u32,
        y0: y0 as u32,
        x1: x1 as u32,
        y1: y1 as u32,
        value: 255.0,
    })
}

/// One stream per camera, frames in order; dropped frames are absent.
pub fn render_detections(world: &ScenarioWorld) -> (Vec<Vec<FrameMsg>>, RenderStats) {
    let cfg = &world.cfg;
    let n = &cfg.noise;
    let frames = cfg.frame_count();
    let mut stats = RenderStats::default();
    let mut streams = Vec::with_capacity(world.cameras.len());

    for cam in &world.cameras {
        let mut rng = sub_rng(cfg.seed, &[TAG_RENDER, cam.camera_id as u64]);
        let (iw, ih) = (cam.image_width as f64, cam.image_height as f64);
        let cell = cfg.raster.cell_px as f64;
        let gw = cam.image_width.div_ceil(cfg.raster.cell_px);
        let gh = cam.image_height.div_ceil(cfg.raster.cell_px);
        let mut stream = Vec::with_capacity(frames as usize);

        for f in 0..frames {
            let t_ms = frame_timestamp_ms(f, cfg.fps);
            if rng.gen::<f64>() < n.frame_drop_prob {
                stats.dropped_frames += 1;
                continue;
            }
            let mut detections = Vec::new();
            let mut rects = Vec::new();
            for v in &world.vehicles {
                let Some((x, y)) = v.position(t_ms / 1000.0) else {
                    continue;
                };
                if (x - cam.position.x).abs()
                    > world.visible_half_m + 2.0 * cfg.vehicle.length_m + 50.0
                {
                    continue;
                }
                let Some(b) = world.project_footprint(cam, x, y) else {
                    continue;
                };
                if b.right() <= 0.0 || b.bottom() <= 0.0 || b.x >= iw || b.y >= ih {
                    continue;
                }
                if let Some(r) = cell_rect(&b, cell, gw, gh) {
                    rects.push(r);
                }
                let inside = b.x >= 0.0 && b.y >= 0.0 && b.right() <= iw && b.bottom() <= ih;
                if !inside {
                    continue;
                }
                if rng.gen::<f64>() < n.miss_prob {
                    stats.missed += 1;
                    continue;
                }
                let (cx, cy) = b.center();
                let cx = cx + normal(n.bbox_jitter_px, &mut rng);
                let cy = cy + normal(n.bbox_jitter_px, &mut rng);
                let w = (b.w + normal(n.size_jitter_px, &mut rng)).max(1.0);
                let h = (b.h + normal(n.size_jitter_px, &mut rng)).max(1.0);
                let bbox = if n.bbox_jitter_px > 0.0 || n.size_jitter_px > 0.0 {
                    BBox::from_center(cx, cy, w, h)
                } else {
                    b
                };
                detections.push((bbox, draw_conf(n.true_confidence, &mut rng), VEHICLE_CLASS));
                stats.true_detections += 1;
            }
            if n.fp_rate > 0.0 {
                let k = Poisson::new(n.fp_rate).unwrap().sample(&mut rng) as u32;
                for _ in 0..k {
                    let w = rng.gen_range(40.0..160.0);
                    let h = rng.gen_range(30.0..80.0);
                    let x = rng.gen_range(0.0..iw - w);
                    let y = rng.gen_range(0.0..ih - h);
                    detections.push((
                        BBox::new(x, y, w, h),
                        draw_conf(n.fp_confidence, &mut rng),
                        VEHICLE_CLASS,
                    ));
                    stats.false_positives += 1;
                }
            }
            stream.push(FrameMsg {
                schema_version: SCHEMA_VERSION,
                camera_id: cam.camera_id,
                frame_index: f,
                timestamp_ms: t_ms,
                detections,
                raster: cfg.raster.enabled.then(|| RasterMsg {
                    width: gw,
                    height: gh,
                    rects,
                }),
            });
        }
        streams.push(stream);
    }
    (streams, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_world, NoiseConfig, ScenarioConfig};

    fn cfg(noise: NoiseConfig) -> ScenarioConfig {
        ScenarioConfig {
            seed: 3,
            num_vehicles: 6,
            duration_s: 120.0,
            noise,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn noiseless_equals_ground_truth() {
        let (w, gt) = generate_world(&cfg(NoiseConfig::none())).unwrap();
        let (streams, stats) = render_detections(&w);
        assert_eq!(stats.true_detections as usize, gt.boxes.len());
        let mut got: Vec<(u32, u32, [u64; 4])> = Vec::new();
        for s in &streams {
            for f in s {
                for (b, c, _) in &f.detections {
                    assert_eq!(*c, 0.9);
                    got.push((
                        f.camera_id,
                        f.frame_index,
                        [b.x.to_bits(), b.y.to_bits(), b.w.to_bits(), b.h.to_bits()],
                    ));
                }
            }
        }
        let mut want: Vec<(u32, u32, [u64; 4])> = gt
            .boxes
            .iter()
            .map(|g| {
                (
                    g.camera,
                    g.frame,
                    [
                        g.bbox.x.to_bits(),
                        g.bbox.y.to_bits(),
                        g.bbox.w.to_bits(),
                        g.bbox.h.to_bits(),
                    ],
                )
            })
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn all_missed_leaves_only_false_positives() {
        let noise = NoiseConfig {
            miss_prob: 1.0,
            fp_rate: 0.5,
            ..NoiseConfig::default()
        };
        let (w, _) = generate_world(&cfg(noise)).unwrap();
        let (streams, stats) = render_detections(&w);
        assert_eq!(stats.true_detections, 0);
        let total: usize = streams.iter().flatten().map(|f| f.detections.len()).sum();
        assert_eq!(total as u64, stats.false_positives);
        assert!(streams
            .iter()
            .flatten()
            .flat_map(|f| &f.detections)
            .all(|(_, c, _)| (0.2..=0.6).contains(c)));
    }

    #[test]
    fn jitter_center_error_is_folded_normal() {
        let sigma = 2.0;
        let noise = NoiseConfig {
            bbox_jitter_px: sigma,
            ..NoiseConfig::none()
        };
        let c = ScenarioConfig {
            num_vehicles: 20,
            duration_s: 300.0,
            ..cfg(noise)
        };
        let (w, gt) = generate_world(&c).unwrap();
        let (streams, _) = render_detections(&w);
        let mut errs = Vec::new();
        for s in &streams {
            for f in s {
                let truth: Vec<_> = gt
                    .boxes
                    .iter()
                    .filter(|g| g.camera == f.camera_id && g.frame == f.frame_index)
                    .collect();
                for (b, _, _) in &f.detections {
                    let g = truth
                        .iter()
                        .min_by(|a, z| {
                            a.bbox
                                .center_distance(b)
                                .total_cmp(&z.bbox.center_distance(b))
                        })
                        .unwrap();
                    errs.push((b.center().0 - g.bbox.center().0).abs());
                    errs.push((b.center().1 - g.bbox.center().1).abs());
                }
            }
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(errs.len() > 5000);
        assert!((mean - expected).abs() < 0.05, "{mean} vs {expected}");
    }

    #[test]
    fn frame_drops_and_rasters() {
        let noise = NoiseConfig {
            frame_drop_prob: 0.1,
            ..NoiseConfig::none()
        };
        let (w, _) = generate_world(&cfg(noise)).unwrap();
        let (streams, stats) = render_detections(&w);
        let kept: usize = streams.iter().map(Vec::len).sum();
        assert_eq!(kept as u64 + stats.dropped_frames, 4 * 1800);
        let dropped = stats.dropped_frames as f64 / 7200.0;
        assert!((dropped - 0.1).abs() < 0.02);
        // every frame with a detection also paints the raster
        for f in streams.iter().flatten() {
            let r = f.raster.as_ref().unwrap();
            assert_eq!((r.width, r.height), (480, 270));
            if !f.detections.is_empty() {
                assert!(!r.rects.is_empty());
            }
        }
    }
}
