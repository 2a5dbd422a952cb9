//! Constant-velocity Kalman filter in (cx, cy, aspect, height) box space.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::domain::BBox;

pub type Vec8 = SVector<f64, 8>;
pub type Mat8 = SMatrix<f64, 8, 8>;
type Vec4 = SVector<f64, 4>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat48 = SMatrix<f64, 4, 8>;

const MIN_HEIGHT: f64 = 1e-6;

/// Noise scales relative to box height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanConfig {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    /// Multiplier on the measurement standard deviation.
    pub measurement_scale: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            measurement_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// cx, cy, aspect, height, then their per-frame velocities.
    pub mean: Vec8,
    pub covariance: Mat8,
}

pub fn measurement_of(b: &BBox) -> [f64; 4] {
    let (cx, cy) = b.center();
    let h = b.height().max(MIN_HEIGHT);
    [cx, cy, b.width() / h, h]
}

impl KalmanState {
    pub fn initiate(b: &BBox, cfg: &KalmanConfig) -> Self {
        let m = measurement_of(b);
        let mut mean = Vec8::zeros();
        for i in 0..4 {
            mean[i] = m[i];
        }
        let h = m[3];
        let p = cfg.std_weight_position;
        let v = cfg.std_weight_velocity;
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
        let covariance = Mat8::from_diagonal(&Vec8::from_iterator(std.iter().map(|s| s * s)));
        KalmanState { mean, covariance }
    }

    pub fn with_velocity(b: &BBox, vx: f64, vy: f64, cfg: &KalmanConfig) -> Self {
        let mut s = Self::initiate(b, cfg);
        s.mean[4] = vx;
        s.mean[5] = vy;
        s
    }

    fn transition() -> Mat8 {
        let mut f = Mat8::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        f
    }

    /// Advances the state by one frame.
    pub fn predict(&mut self, cfg: &KalmanConfig) {
        let h = self.mean[3].max(MIN_HEIGHT);
        let p = cfg.std_weight_position;
        let v = cfg.std_weight_velocity;
        let std = [p * h, p * h, 1e-2, p * h, v * h, v * h, 1e-5, v * h];
        let q = Mat8::from_diagonal(&Vec8::from_iterator(std.iter().map(|s| s * s)));
        let f = Self::transition();
        self.mean = f * self.mean;
        self.covariance = f * self.covariance * f.transpose() + q;
        self.symmetrize();
    }

    fn projection() -> Mat48 {
        let mut h = Mat48::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0;
        }
        h
    }

    fn measurement_noise(&self, cfg: &KalmanConfig) -> Mat4 {
        let h = self.mean[3].max(MIN_HEIGHT);
        let p = cfg.std_weight_position * cfg.measurement_scale;
        let std = [p * h, p * h, 1e-1 * cfg.measurement_scale, p * h];
        Mat4::from_diagonal(&Vec4::from_iterator(std.iter().map(|s| (s * s).max(1e-300))))
    }

    /// Innovation (measurement minus projected mean) for a box.
    pub fn innovation(&self, b: &BBox) -> [f64; 4] {
        let m = measurement_of(b);
        [
            m[0] - self.mean[0],
            m[1] - self.mean[1],
            m[2] - self.mean[2],
            m[3] - self.mean[3],
        ]
    }

    pub fn update(&mut self, b: &BBox, cfg: &KalmanConfig) {
        let hm = Self::projection();
        let z = Vec4::from(measurement_of(b));
        let s = hm * self.covariance * hm.transpose() + self.measurement_noise(cfg);
        let pht = self.covariance * hm.transpose();
        // S is SPD; Cholesky with an LU fallback for near-singular cases.
        let gain = match s.cholesky() {
            Some(ch) => ch.solve(&pht.transpose()).transpose(),
            None => match s.try_inverse() {
                Some(inv) => pht * inv,
                None => return,
            },
        };
        let innovation = z - hm * self.mean;
        self.mean += gain * innovation;
        self.covariance -= gain * s * gain.transpose();
        self.symmetrize();
        if self.mean[3] < MIN_HEIGHT {
            self.mean[3] = MIN_HEIGHT;
        }
    }

    fn symmetrize(&mut self) {
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
    }

    pub fn bbox(&self) -> BBox {
        let (cx, cy, a, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3].max(0.0));
        let w = (a * h).max(0.0);
        BBox::from_center(cx, cy, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }
}
