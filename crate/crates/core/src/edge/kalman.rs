//! Constant-velocity Kalman filter in `(cx, cy, aspect, h)` space.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::EdgeError;
use crate::geometry::BBox;
use crate::types::{Observation, TrackId};

pub type StateVec = SVector<f64, 8>;
pub type StateCov = SMatrix<f64, 8, 8>;
type MeasVec = SVector<f64, 4>;
type MeasCov = SMatrix<f64, 4, 4>;
type MeasMat = SMatrix<f64, 4, 8>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanParams {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    /// Multiplier on the measurement covariance.
    pub measurement_noise_scale: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            measurement_noise_scale: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Clone, Debug)]
pub struct KalmanTrack {
    pub track_id: TrackId,
    pub mean: StateVec,
    pub covariance: StateCov,
    pub status: TrackStatus,
    pub frames_since_update: u32,
    /// Consecutive matched frames while tentative; total matches afterwards.
    pub hits: u32,
    /// Frame index the mean has been propagated to.
    pub frame_index: u32,
    pub history: Vec<Observation>,
}

fn to_xyah(b: &BBox) -> MeasVec {
    let (cx, cy) = b.center();
    MeasVec::new(cx, cy, b.w / b.h, b.h)
}

fn measurement_matrix() -> MeasMat {
    let mut h = MeasMat::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

impl KalmanTrack {
    /// Start a tentative track from its first observation.
    pub fn initiate(params: &KalmanParams, track_id: TrackId, first: Observation) -> Self {
        let z = to_xyah(&first.bbox);
        let h = z[3];
        let mut mean = StateVec::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let p = params.std_weight_position;
        let v = params.std_weight_velocity;
        let std = [
            2.0 * p * h,
            2.0 * p * h,
            1e-2,
            2.0 * p * h,
            10.0 * v * h,
            10.0 * v * h,
            1e-5,
            10.0 * v * h,
        ];
        let covariance =
            StateCov::from_diagonal(&StateVec::from_iterator(std.iter().map(|s| s * s)));
        Self {
            track_id,
            mean,
            covariance,
            status: TrackStatus::Tentative,
            frames_since_update: 0,
            hits: 1,
            frame_index: first.frame_index,
            history: vec![first],
        }
    }

    /// Box decoded from the current state mean.
    pub fn bbox(&self) -> BBox {
        let (cx, cy, a, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        BBox::from_center(cx, cy, a * h, h)
    }

    /// Propagate one frame forward; returns the predicted box.
    pub fn predict(&mut self, params: &KalmanParams) -> BBox {
        let mut f = StateCov::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        let h = self.mean[3];
        let p = params.std_weight_position * h;
        let v = params.std_weight_velocity * h;
        let std = [p, p, 1e-2, p, v, v, 1e-5, v];
        let q = StateCov::from_diagonal(&StateVec::from_iterator(std.iter().map(|s| s * s)));

        self.mean = f * self.mean;
        self.covariance = f * self.covariance * f.transpose() + q;
        self.frame_index += 1;
        self.frames_since_update += 1;
        self.bbox()
    }

    /// Measurement correction with the observed box.
    pub fn update(&mut self, params: &KalmanParams, obs: &BBox) -> Result<(), EdgeError> {
        let hm = measurement_matrix();
        let z = to_xyah(obs);
        let h = self.mean[3];
        let p = params.std_weight_position * h;
        let std = [p, p, 1e-1, p];
        let r = MeasCov::from_diagonal(&MeasVec::from_iterator(
            std.iter().map(|s| s * s * params.measurement_noise_scale),
        ));

        let s = hm * self.covariance * hm.transpose() + r;
        let chol = s.cholesky().ok_or(EdgeError::NumericalGuard(
            "innovation covariance not positive definite",
        ))?;
        // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric
        let gain = chol.solve(&(hm * self.covariance)).transpose();
        let innovation = z - hm * self.mean;

        let mean = self.mean + gain * innovation;
        let ikh = StateCov::identity() - gain * hm;
        // Joseph form keeps the covariance symmetric PSD
        let cov = ikh * self.covariance * ikh.transpose() + gain * r * gain.transpose();
        let cov = (cov + cov.transpose()) * 0.5;

        if !mean.iter().all(|v| v.is_finite()) || !cov.iter().all(|v| v.is_finite()) {
            return Err(EdgeError::NumericalGuard("non-finite state after update"));
        }
        if (0..8).any(|i| cov[(i, i)] < -1e-9) {
            return Err(EdgeError::NumericalGuard(
                "covariance not positive semi-definite after update",
            ));
        }
        if mean[3] <= 0.0 {
            return Err(EdgeError::NumericalGuard(
                "non-positive box height after update",
            ));
        }
        self.mean = mean;
        self.covariance = cov;
        self.frames_since_update = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(b: BBox, frame: u32) -> Observation {
        Observation {
            frame_index: frame,
            timestamp_ms: frame as f64,
            bbox: b,
            confidence: 0.9,
            gps: None,
        }
    }

    fn track() -> KalmanTrack {
        KalmanTrack::initiate(
            &KalmanParams::default(),
            1,
            obs(BBox::from_center(100.0, 50.0, 40.0, 20.0), 0),
        )
    }

    #[test]
    fn stationary_prediction_keeps_box() {
        let mut t = track();
        let before = t.bbox();
        let pred = t.predict(&KalmanParams::default());
        assert!((pred.x - before.x).abs() < 1e-9 && (pred.y - before.y).abs() < 1e-9);
        assert!((pred.w - before.w).abs() < 1e-9 && (pred.h - before.h).abs() < 1e-9);
    }

    #[test]
    fn velocity_propagates_one_step() {
        let mut t = track();
        t.mean[4] = 2.0;
        let pred = t.predict(&KalmanParams::default());
        assert!((pred.center().0 - 102.0).abs() < 1e-9);
    }

    #[test]
    fn predict_grows_covariance_trace() {
        let mut t = track();
        let before = t.covariance.trace();
        t.predict(&KalmanParams::default());
        assert!(t.covariance.trace() > before);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_covariance() {
        let params = KalmanParams::default();
        let mut t = track();
        let pred = t.predict(&params);
        let mean = t.mean;
        let trace = t.covariance.trace();
        t.update(&params, &pred).unwrap();
        for i in 0..4 {
            assert!((t.mean[i] - mean[i]).abs() < 1e-9);
        }
        assert!(t.covariance.trace() < trace);
        assert_eq!(t.frames_since_update, 0);
    }

    #[test]
    fn tiny_measurement_noise_snaps_to_observation() {
        let params = KalmanParams {
            measurement_noise_scale: 1e-12,
            ..KalmanParams::default()
        };
        let mut t = track();
        t.predict(&params);
        let target = BBox::from_center(110.0, 55.0, 44.0, 22.0);
        t.update(&params, &target).unwrap();
        let b = t.bbox();
        assert!((b.center().0 - 110.0).abs() < 1e-4);
        assert!((b.center().1 - 55.0).abs() < 1e-4);
        assert!((b.h - 22.0).abs() < 1e-4);
    }

    #[test]
    fn huge_measurement_noise_keeps_prediction() {
        let params = KalmanParams {
            measurement_noise_scale: 1e12,
            ..KalmanParams::default()
        };
        let mut t = track();
        let pred = t.predict(&params);
        t.update(&params, &BBox::from_center(300.0, 200.0, 44.0, 22.0))
            .unwrap();
        let b = t.bbox();
        assert!((b.center().0 - pred.center().0).abs() < 1e-4);
        assert!((b.center().1 - pred.center().1).abs() < 1e-4);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let params = KalmanParams::default();
        let mut t = track();
        for k in 1..50 {
            t.predict(&params);
            let b = BBox::from_center(100.0 + 3.0 * k as f64, 50.0 + (k % 3) as f64, 40.0, 20.0);
            t.update(&params, &b).unwrap();
            let c = t.covariance;
            assert!((c - c.transpose()).abs().max() < 1e-9);
            let eig = c.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e > -1e-9));
        }
        // velocity should be learned
        assert!((t.mean[4] - 3.0).abs() < 0.5);
    }
}
