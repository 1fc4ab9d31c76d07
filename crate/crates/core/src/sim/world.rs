//! Vehicles on a straight corridor and what each camera sees of them.

use nalgebra::Vector3;
use rand::Rng;

use super::{sub_rng, ScenarioConfig, SimError};
use crate::edge::CameraModel;
use crate::geometry::{BBox, GeoPoint};
use crate::types::{frame_timestamp_ms, CameraId};

const TAG_VEHICLES: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    East,
    West,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::East => 1.0,
            Direction::West => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: u32,
    pub direction: Direction,
    pub speed_mps: f64,
    pub spawn_s: f64,
    /// East coordinate where the vehicle appears.
    pub start_x: f64,
    /// Lane center, north coordinate.
    pub lane_y: f64,
    pub path_len_m: f64,
}

impl Vehicle {
    /// Center position at time `t`, if the vehicle is on the road.
    pub fn position(&self, t_s: f64) -> Option<(f64, f64)> {
        let d = (t_s - self.spawn_s) * self.speed_mps;
        if d < 0.0 || d > self.path_len_m {
            return None;
        }
        Some((self.start_x + self.direction.sign() * d, self.lane_y))
    }

    /// Time at which the center passes east coordinate `x`.
    pub fn time_at(&self, x: f64) -> f64 {
        self.spawn_s + (x - self.start_x) * self.direction.sign() / self.speed_mps
    }
}

/// Where a vehicle is fully inside one camera's image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtInterval {
    pub vehicle: u32,
    pub camera: CameraId,
    pub t_in_ms: f64,
    pub t_out_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtBox {
    pub vehicle: u32,
    pub camera: CameraId,
    pub frame: u32,
    pub bbox: BBox,
    pub east: f64,
    pub north: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtTransition {
    pub vehicle: u32,
    pub from: CameraId,
    pub to: CameraId,
    pub tau_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub boxes: Vec<GtBox>,
    pub intervals: Vec<GtInterval>,
    pub transitions: Vec<GtTransition>,
}

impl GroundTruth {
    pub fn transitions_between(&self, from: CameraId, to: CameraId) -> Vec<f64> {
        self.transitions
            .iter()
            .filter(|t| t.from == from && t.to == to)
            .map(|t| t.tau_s)
            .collect()
    }

    pub fn identities(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.boxes.iter().map(|b| b.vehicle).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioWorld {
    pub cfg: ScenarioConfig,
    pub cameras: Vec<CameraModel>,
    pub vehicles: Vec<Vehicle>,
    /// Half-length of the stretch of road a camera sees fully, meters.
    pub visible_half_m: f64,
}

impl ScenarioWorld {
    pub fn origin(&self) -> GeoPoint {
        GeoPoint::new(self.cfg.cameras.origin_lat, self.cfg.cameras.origin_lon)
    }

    /// Projected axis-aligned box of a vehicle footprint centered at `(x, y)`.
    pub fn project_footprint(&self, cam: &CameraModel, x: f64, y: f64) -> Option<BBox> {
        project_footprint(&self.cfg, cam, x, y)
    }

    /// Adjacent camera pairs in travel order with the road segment between them.
    pub fn adjacent_pairs(&self) -> Vec<(CameraId, CameraId, f64)> {
        let segs = &self.cfg.cameras.segments_m;
        let mut out: Vec<(CameraId, CameraId, f64)> = segs
            .iter()
            .enumerate()
            .map(|(k, &s)| (k as u32, k as u32 + 1, s))
            .collect();
        if self.cfg.two_way {
            out.extend(
                segs.iter()
                    .enumerate()
                    .map(|(k, &s)| (k as u32 + 1, k as u32, s)),
            );
        }
        out
    }
}

fn project_footprint(cfg: &ScenarioConfig, cam: &CameraModel, x: f64, y: f64) -> Option<BBox> {
    let (hl, hw, z) = (
        cfg.vehicle.length_m / 2.0,
        cfg.vehicle.width_m / 2.0,
        cfg.vehicle.height_m,
    );
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (dx, dy) in [(-hl, -hw), (-hl, hw), (hl, -hw), (hl, hw)] {
        let (u, v) = cam.project(&Vector3::new(x + dx, y + dy, z))?;
        lo = (lo.0.min(u), lo.1.min(v));
        hi = (hi.0.max(u), hi.1.max(v));
    }
    Some(BBox::new(lo.0, lo.1, hi.0 - lo.0, hi.1 - lo.1))
}

fn fully_inside(cam: &CameraModel, b: &BBox) -> bool {
    b.x >= 0.0
        && b.y >= 0.0
        && b.right() <= cam.image_width as f64
        && b.bottom() <= cam.image_height as f64
}

/// Largest offset along the road from the camera center that keeps the box inside.
fn visible_half_length(
    cfg: &ScenarioConfig,
    cam: &CameraModel,
    lane_y: f64,
) -> Result<f64, SimError> {
    let cx = cam.position.x;
    let inside = |d: f64| {
        project_footprint(cfg, cam, cx + d, lane_y).is_some_and(|b| fully_inside(cam, &b))
            && project_footprint(cfg, cam, cx - d, lane_y).is_some_and(|b| fully_inside(cam, &b))
    };
    if !inside(0.0) {
        return Err(SimError::Config(format!(
            "a vehicle in the lane at {lane_y} m does not fit inside camera {}",
            cam.camera_id
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while inside(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(SimError::Config(
                "camera sees an unbounded stretch of road".into(),
            ));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn generate_world(cfg: &ScenarioConfig) -> Result<(ScenarioWorld, GroundTruth), SimError> {
    cfg.validate()?;
    let c = &cfg.cameras;
    let origin = GeoPoint::new(c.origin_lat, c.origin_lon);
    let make = |id: usize, x: f64| {
        CameraModel::nadir(
            id as u32,
            c.focal_px,
            c.image_width,
            c.image_height,
            Vector3::new(x, 0.0, c.height_m),
            0.0,
            origin,
        )
    };

    let probe = make(0, 0.0);
    let lanes = [-cfg.lane_offset_m, cfg.lane_offset_m];
    let half = lanes
        .iter()
        .map(|&y| visible_half_length(cfg, &probe, y))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    let mut xs = vec![0.0];
    for &s in &c.segments_m {
        let last = *xs.last().unwrap();
        xs.push(last + 2.0 * half + s);
    }
    let cameras: Vec<CameraModel> = xs.iter().enumerate().map(|(i, &x)| make(i, x)).collect();

    let x_min = xs[0] - half - cfg.lead_m;
    let x_max = xs[xs.len() - 1] + half + cfg.lead_m;
    let path_len = x_max - x_min;
    let vehicles = spawn_vehicles(cfg, x_min, x_max, path_len);

    let world = ScenarioWorld {
        cfg: cfg.clone(),
        cameras,
        vehicles,
        visible_half_m: half,
    };
    let gt = ground_truth(&world, &xs);
    Ok((world, gt))
}

fn spawn_vehicles(cfg: &ScenarioConfig, x_min: f64, x_max: f64, path_len: f64) -> Vec<Vehicle> {
    let mut rng = sub_rng(cfg.seed, &[TAG_VEHICLES]);
    let spawn_end = cfg.spawn_end_s.unwrap_or_else(|| {
        (cfg.duration_s - path_len / cfg.speed_min_mps - 1.0).max(cfg.spawn_start_s)
    });
    let mut draws: Vec<(f64, Direction, f64)> = (0..cfg.num_vehicles)
        .map(|_| {
            let t = rng.gen_range(cfg.spawn_start_s..=spawn_end);
            let dir = if cfg.two_way && rng.gen_bool(0.5) {
                Direction::West
            } else {
                Direction::East
            };
            let v = if cfg.speed_max_mps > cfg.speed_min_mps {
                rng.gen_range(cfg.speed_min_mps..cfg.speed_max_mps)
            } else {
                cfg.speed_min_mps
            };
            (t, dir, v)
        })
        .collect();
    draws.sort_by(|a, b| a.0.total_cmp(&b.0));

    // per lane, delay each vehicle until it keeps the headway to its predecessor
    // everywhere; arrival-time differences are linear along the path, so the
    // two path ends suffice
    let mut last: [Option<(f64, f64)>; 2] = [None, None];
    let mut out = Vec::with_capacity(draws.len());
    for (i, (t, dir, v)) in draws.into_iter().enumerate() {
        let lane = usize::from(dir == Direction::West);
        let mut spawn = t;
        if let Some((ps, pv)) = last[lane] {
            let need_start = ps + cfg.min_headway_s;
            let need_end = ps + path_len / pv + cfg.min_headway_s - path_len / v;
            spawn = spawn.max(need_start).max(need_end);
        }
        last[lane] = Some((spawn, v));
        let (start_x, lane_y) = match dir {
            Direction::East => (x_min, -cfg.lane_offset_m),
            Direction::West => (x_max, cfg.lane_offset_m),
        };
        out.push(Vehicle {
            id: i as u32 + 1,
            direction: dir,
            speed_mps: v,
            spawn_s: spawn,
            start_x,
            lane_y,
            path_len_m: path_len,
        });
    }
    out
}

fn ground_truth(world: &ScenarioWorld, xs: &[f64]) -> GroundTruth {
    let cfg = &world.cfg;
    let duration_ms = cfg.duration_s * 1000.0;
    let frames = cfg.frame_count();
    let mut gt = GroundTruth::default();
    for v in &world.vehicles {
        let mut seen: Vec<GtInterval> = Vec::new();
        let order: Vec<usize> = match v.direction {
            Direction::East => (0..xs.len()).collect(),
            Direction::West => (0..xs.len()).rev().collect(),
        };
        for &k in &order {
            let cam = &world.cameras[k];
            let (a, b) = (xs[k] - world.visible_half_m, xs[k] + world.visible_half_m);
            let (t0, t1) = {
                let (ta, tb) = (v.time_at(a), v.time_at(b));
                (ta.min(tb), ta.max(tb))
            };
            let (t_in_ms, t_out_ms) = (t0 * 1000.0, t1 * 1000.0);
            if t_out_ms < 0.0 || t_in_ms >= duration_ms {
                continue;
            }
            let first = ((t_in_ms * cfg.fps / 1000.0).floor().max(0.0)) as u32;
            let last = ((t_out_ms * cfg.fps / 1000.0).ceil() as u32).min(frames.saturating_sub(1));
            for f in first..=last {
                let t_s = frame_timestamp_ms(f, cfg.fps) / 1000.0;
                let Some((x, y)) = v.position(t_s) else {
                    continue;
                };
                let Some(bbox) = world.project_footprint(cam, x, y) else {
                    continue;
                };
                if fully_inside(cam, &bbox) {
                    gt.boxes.push(GtBox {
                        vehicle: v.id,
                        camera: k as u32,
                        frame: f,
                        bbox,
                        east: x,
                        north: y,
                    });
                }
            }
            let iv = GtInterval {
                vehicle: v.id,
                camera: k as u32,
                t_in_ms,
                t_out_ms,
            };
            if t_in_ms >= 0.0 && t_out_ms < duration_ms {
                if let Some(prev) = seen.last() {
                    gt.transitions.push(GtTransition {
                        vehicle: v.id,
                        from: prev.camera,
                        to: iv.camera,
                        tau_s: (iv.t_in_ms - prev.t_out_ms) / 1000.0,
                    });
                }
                seen.push(iv);
            }
            gt.intervals.push(iv);
        }
    }
    gt.boxes.sort_by_key(|b| (b.camera, b.frame, b.vehicle));
    gt
}
