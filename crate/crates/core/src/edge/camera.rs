//! Pinhole camera model and pixel-to-GPS geo-mapping.
//!
//! World coordinates are local ENU meters (x east, y north, z up) around a
//! geodetic origin. `rotation` maps world directions into the camera frame
//! (x right, y down, z forward).

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::EdgeError;
use crate::geometry::GeoPoint;
use crate::types::CameraId;

#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub camera_id: CameraId,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub origin: GeoPoint,
}

impl CameraModel {
    /// Downward-looking camera with image +x pointing east rotated by `yaw_deg`
    /// (counter-clockwise from east).
    #[allow(clippy::too_many_arguments)]
    pub fn nadir(
        camera_id: CameraId,
        focal_px: f64,
        image_width: u32,
        image_height: u32,
        position: Vector3<f64>,
        yaw_deg: f64,
        origin: GeoPoint,
    ) -> Self {
        let (s, c) = yaw_deg.to_radians().sin_cos();
        // rows: camera x (image right), camera y (image down), camera z (optical axis)
        let rotation = Matrix3::new(c, s, 0.0, s, -c, 0.0, 0.0, 0.0, -1.0);
        Self {
            camera_id,
            fx: focal_px,
            fy: focal_px,
            cx: image_width as f64 / 2.0,
            cy: image_height as f64 / 2.0,
            image_width,
            image_height,
            rotation,
            position,
            origin,
        }
    }

    pub fn validate(&self) -> Result<(), EdgeError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(EdgeError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(EdgeError::InvalidCamera(
                "image size must be positive".into(),
            ));
        }
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Matrix3::identity()).abs().max() > 1e-9 {
            return Err(EdgeError::InvalidCamera(
                "rotation is not orthonormal".into(),
            ));
        }
        if !(self.position.z > 0.0) {
            return Err(EdgeError::InvalidCamera(
                "camera must be above the ground".into(),
            ));
        }
        if !self.origin.is_valid() {
            return Err(EdgeError::InvalidCamera("geo origin out of range".into()));
        }
        Ok(())
    }

    /// Project a world point to pixels; `None` when behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        let pc = self.rotation * (p - self.position);
        if pc.z <= 1e-9 {
            return None;
        }
        Some((
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// Intersect the viewing ray through `pixel` with the plane `z = height_m`.
    pub fn back_project(
        &self,
        pixel: (f64, f64),
        height_m: f64,
    ) -> Result<Vector3<f64>, EdgeError> {
        let ray_c = Vector3::new(
            (pixel.0 - self.cx) / self.fx,
            (pixel.1 - self.cy) / self.fy,
            1.0,
        );
        let ray_w = self.rotation.transpose() * ray_c;
        if ray_w.z.abs() < 1e-12 {
            return Err(EdgeError::NoGroundIntersection);
        }
        let s = (height_m - self.position.z) / ray_w.z;
        if !(s > 0.0) || !s.is_finite() {
            return Err(EdgeError::NoGroundIntersection);
        }
        Ok(self.position + ray_w * s)
    }

    pub fn enu_to_geo(&self, p: &Vector3<f64>) -> GeoPoint {
        self.origin.offset_enu(p.x, p.y)
    }

    pub fn contains_pixel(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.image_width as f64 && y <= self.image_height as f64
    }
}

/// Map an image location to GPS by intersecting its ray with the plane at `height_m`.
pub fn geo_map(cam: &CameraModel, pixel: (f64, f64), height_m: f64) -> Result<GeoPoint, EdgeError> {
    let p = cam.back_project(pixel, height_m)?;
    Ok(cam.enu_to_geo(&p))
}

/// On-disk calibration record (TOML).
///
/// ```toml
/// camera_id = 0
/// fx = 960.0
/// fy = 960.0
/// cx = 960.0
/// cy = 540.0
/// image_width = 1920
/// image_height = 1080
/// rotation = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]
/// position = [0.0, 0.0, 30.0]
/// origin_lat = 52.52
/// origin_lon = 13.405
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub camera_id: CameraId,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub rotation: [[f64; 3]; 3],
    pub position: [f64; 3],
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl From<&CameraModel> for CalibrationFile {
    fn from(c: &CameraModel) -> Self {
        let r = &c.rotation;
        Self {
            camera_id: c.camera_id,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            image_width: c.image_width,
            image_height: c.image_height,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            position: [c.position.x, c.position.y, c.position.z],
            origin_lat: c.origin.lat,
            origin_lon: c.origin.lon,
        }
    }
}

impl CalibrationFile {
    pub fn to_model(&self) -> Result<CameraModel, EdgeError> {
        let r = &self.rotation;
        let model = CameraModel {
            camera_id: self.camera_id,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            image_width: self.image_width,
            image_height: self.image_height,
            rotation: Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            position: Vector3::new(self.position[0], self.position[1], self.position[2]),
            origin: GeoPoint::new(self.origin_lat, self.origin_lon),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<CameraModel, EdgeError> {
        let text = std::fs::read_to_string(path).map_err(|e| EdgeError::Calibration {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let file: CalibrationFile = toml::from_str(&text).map_err(|e| EdgeError::Calibration {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        file.to_model()
    }

    pub fn save(model: &CameraModel, path: &Path) -> std::io::Result<()> {
        let text = toml::to_string(&CalibrationFile::from(model)).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }
}
