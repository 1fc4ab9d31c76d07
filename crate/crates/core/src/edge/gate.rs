//! Background-subtraction motion gate.
//!
//! Each cell of a low-resolution grayscale grid keeps a running Gaussian
//! (mean, variance). A cell is foreground when it deviates from its mean by
//! more than `sigma_mult` standard deviations. Downstream detection and
//! tracking run only when the foreground count exceeds `pixel_threshold`.

use serde::{Deserialize, Serialize};

use super::EdgeError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionGateConfig {
    pub learning_rate: f64,
    pub sigma_mult: f64,
    pub variance_floor: f64,
    pub pixel_threshold: usize,
}

impl Default for MotionGateConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            sigma_mult: 2.5,
            variance_floor: 4.0,
            pixel_threshold: 300,
        }
    }
}

/// Row-major grayscale raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<f32>,
}

impl Grid {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            cells: vec![value; width * height],
        }
    }

    /// Paint the half-open cell rectangle `[x0, x1) x [y0, y1)`, clipped to the grid.
    pub fn paint(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, value: f32) {
        let x1 = x1.min(self.width);
        let y1 = y1.min(self.height);
        for y in y0.min(y1)..y1 {
            let row = y * self.width;
            self.cells[row + x0.min(x1)..row + x1].fill(value);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateOutput {
    pub foreground: usize,
    pub active: bool,
}

#[derive(Clone, Debug)]
pub struct MotionGate {
    cfg: MotionGateConfig,
    width: usize,
    height: usize,
    mean: Vec<f32>,
    var: Vec<f32>,
    initialized: bool,
}

impl MotionGate {
    pub fn new(cfg: MotionGateConfig, width: usize, height: usize) -> Self {
        let floor = cfg.variance_floor as f32;
        Self {
            cfg,
            width,
            height,
            mean: vec![0.0; width * height],
            var: vec![floor; width * height],
            initialized: false,
        }
    }

    pub fn config(&self) -> &MotionGateConfig {
        &self.cfg
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Feed one frame. An absent frame (metadata-only stream) bypasses the gate.
    ///
    /// The first frame seeds the background model and reports no foreground.
    pub fn update(&mut self, frame: Option<&Grid>) -> Result<GateOutput, EdgeError> {
        let Some(frame) = frame else {
            return Ok(GateOutput {
                foreground: 0,
                active: true,
            });
        };
        if frame.width != self.width
            || frame.height != self.height
            || frame.cells.len() != self.mean.len()
        {
            return Err(EdgeError::GridMismatch {
                expected: (self.width, self.height),
                got: (frame.width, frame.height),
            });
        }
        if !self.initialized {
            self.mean.copy_from_slice(&frame.cells);
            self.initialized = true;
            return Ok(GateOutput {
                foreground: 0,
                active: false,
            });
        }

        let lr = self.cfg.learning_rate as f32;
        let k2 = (self.cfg.sigma_mult * self.cfg.sigma_mult) as f32;
        let floor = self.cfg.variance_floor as f32;
        let mut foreground = 0usize;
        for ((m, v), &px) in self
            .mean
            .iter_mut()
            .zip(self.var.iter_mut())
            .zip(&frame.cells)
        {
            let d = px - *m;
            let d2 = d * d;
            if d2 > k2 * *v {
                foreground += 1;
            }
            *m += lr * d;
            *v = ((1.0 - lr) * *v + lr * d2).max(floor);
        }
        Ok(GateOutput {
            foreground,
            active: foreground > self.cfg.pixel_threshold,
        })
    }
}
