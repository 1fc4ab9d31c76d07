use serde::{Deserialize, Serialize};

use super::SimError;

/// Cameras along a straight two-lane corridor, all looking straight down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraLayout {
    pub count: usize,
    pub height_m: f64,
    pub focal_px: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Road length between the fields of view of consecutive cameras.
    pub segments_m: Vec<f64>,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for CameraLayout {
    fn default() -> Self {
        Self {
            count: 4,
            height_m: 30.0,
            focal_px: 960.0,
            image_width: 1920,
            image_height: 1080,
            segments_m: vec![120.0, 150.0, 180.0],
            origin_lat: 52.52,
            origin_lon: 13.405,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleShape {
    pub length_m: f64,
    pub width_m: f64,
    /// Height of the reference plane the footprint is drawn on.
    pub height_m: f64,
}

impl Default for VehicleShape {
    fn default() -> Self {
        Self {
            length_m: 4.5,
            width_m: 1.8,
            height_m: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConfidenceModel {
    Fixed { value: f64 },
    Uniform { min: f64, max: f64 },
}

impl ConfidenceModel {
    fn validate(&self, what: &str) -> Result<(), SimError> {
        let ok = match *self {
            ConfidenceModel::Fixed { value } => (0.0..=1.0).contains(&value),
            ConfidenceModel::Uniform { min, max } => {
                (0.0..=1.0).contains(&min) && (0.0..=1.0).contains(&max) && min <= max
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!(
                "{what} confidence must lie in [0, 1]"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Standard deviation of the box-center jitter, pixels.
    pub bbox_jitter_px: f64,
    /// Standard deviation of the box width/height jitter, pixels.
    pub size_jitter_px: f64,
    pub miss_prob: f64,
    /// Expected false positives per camera frame.
    pub fp_rate: f64,
    pub frame_drop_prob: f64,
    pub true_confidence: ConfidenceModel,
    pub fp_confidence: ConfidenceModel,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            bbox_jitter_px: 0.0,
            size_jitter_px: 0.0,
            miss_prob: 0.0,
            fp_rate: 0.0,
            frame_drop_prob: 0.0,
            true_confidence: ConfidenceModel::Uniform { min: 0.5, max: 1.0 },
            fp_confidence: ConfidenceModel::Uniform { min: 0.2, max: 0.6 },
        }
    }
}

impl NoiseConfig {
    /// No jitter, misses, false positives or drops, and a constant confidence.
    pub fn none() -> Self {
        Self {
            true_confidence: ConfidenceModel::Fixed { value: 0.9 },
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub dim: usize,
    /// Per-dimension noise added to every frame's embedding.
    pub noise_sigma: f64,
    /// Scale of a fixed per-camera offset.
    pub camera_bias_sigma: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            noise_sigma: 0.0,
            camera_bias_sigma: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub enabled: bool,
    pub cell_px: u32,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            cell_px: 4,
        }
    }
}

/// Scenario description (TOML). Every field has a default, so a file with
/// just `seed = 7` is a valid scenario.
///
/// ```toml
/// seed = 7
/// fps = 15.0
/// duration_s = 600.0
/// num_vehicles = 10
/// speed_min_mps = 10.0
/// speed_max_mps = 14.0
///
/// [cameras]
/// count = 4
/// segments_m = [120.0, 150.0, 180.0]
///
/// [noise]
/// bbox_jitter_px = 2.0
/// miss_prob = 0.05
/// true_confidence = { kind = "uniform", min = 0.5, max = 1.0 }
///
/// [features]
/// noise_sigma = 0.1
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub fps: f64,
    pub duration_s: f64,
    pub num_vehicles: usize,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    /// Traffic in both directions, one lane each.
    pub two_way: bool,
    /// Lane centers sit this far either side of the road axis.
    pub lane_offset_m: f64,
    /// Road before the first and after the last field of view.
    pub lead_m: f64,
    /// Minimum time separation between vehicles in one lane, at any point.
    pub min_headway_s: f64,
    pub spawn_start_s: f64,
    /// Latest spawn time; by default vehicles spawn early enough to finish.
    pub spawn_end_s: Option<f64>,
    pub cameras: CameraLayout,
    pub vehicle: VehicleShape,
    pub noise: NoiseConfig,
    pub features: FeatureConfig,
    pub raster: RasterConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fps: 15.0,
            duration_s: 600.0,
            num_vehicles: 10,
            speed_min_mps: 10.0,
            speed_max_mps: 14.0,
            two_way: true,
            lane_offset_m: 3.0,
            lead_m: 20.0,
            min_headway_s: 3.0,
            spawn_start_s: 1.0,
            spawn_end_s: None,
            cameras: CameraLayout::default(),
            vehicle: VehicleShape::default(),
            noise: NoiseConfig::default(),
            features: FeatureConfig::default(),
            raster: RasterConfig::default(),
        }
    }
}

fn prob(v: f64, name: &str) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::Config(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

fn positive(v: f64, name: &str) -> Result<(), SimError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn non_negative(v: f64, name: &str) -> Result<(), SimError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must be >= 0, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        positive(self.fps, "fps")?;
        positive(self.duration_s, "duration_s")?;
        positive(self.speed_min_mps, "speed_min_mps")?;
        positive(self.speed_max_mps, "speed_max_mps")?;
        if self.speed_min_mps > self.speed_max_mps {
            return Err(SimError::Config(
                "speed_min_mps exceeds speed_max_mps".into(),
            ));
        }
        non_negative(self.lane_offset_m, "lane_offset_m")?;
        non_negative(self.lead_m, "lead_m")?;
        non_negative(self.min_headway_s, "min_headway_s")?;
        non_negative(self.spawn_start_s, "spawn_start_s")?;
        if let Some(end) = self.spawn_end_s {
            if !(end >= self.spawn_start_s) {
                return Err(SimError::Config(
                    "spawn_end_s precedes spawn_start_s".into(),
                ));
            }
        }
        let c = &self.cameras;
        if c.count == 0 {
            return Err(SimError::Config("at least one camera is required".into()));
        }
        if c.segments_m.len() + 1 != c.count {
            return Err(SimError::Config(format!(
                "{} cameras need {} road segments between them, found {}",
                c.count,
                c.count - 1,
                c.segments_m.len()
            )));
        }
        for (i, &s) in c.segments_m.iter().enumerate() {
            positive(s, &format!("segments_m[{i}]"))?;
        }
        positive(c.height_m, "cameras.height_m")?;
        positive(c.focal_px, "cameras.focal_px")?;
        if c.image_width == 0 || c.image_height == 0 {
            return Err(SimError::Config("image size must be positive".into()));
        }
        positive(self.vehicle.length_m, "vehicle.length_m")?;
        positive(self.vehicle.width_m, "vehicle.width_m")?;
        if !(self.vehicle.height_m >= 0.0 && self.vehicle.height_m < c.height_m) {
            return Err(SimError::Config(
                "vehicle.height_m must lie below the cameras".into(),
            ));
        }
        let n = &self.noise;
        non_negative(n.bbox_jitter_px, "noise.bbox_jitter_px")?;
        non_negative(n.size_jitter_px, "noise.size_jitter_px")?;
        non_negative(n.fp_rate, "noise.fp_rate")?;
        prob(n.miss_prob, "noise.miss_prob")?;
        prob(n.frame_drop_prob, "noise.frame_drop_prob")?;
        n.true_confidence.validate("true detection")?;
        n.fp_confidence.validate("false positive")?;
        if self.features.dim == 0 {
            return Err(SimError::Config("features.dim must be at least 1".into()));
        }
        non_negative(self.features.noise_sigma, "features.noise_sigma")?;
        non_negative(
            self.features.camera_bias_sigma,
            "features.camera_bias_sigma",
        )?;
        if self.raster.cell_px == 0 {
            return Err(SimError::Config("raster.cell_px must be at least 1".into()));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u32 {
        (self.duration_s * self.fps).floor() as u32
    }
}
