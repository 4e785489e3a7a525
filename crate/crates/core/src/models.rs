//! Process and measurement models: IMU kinematics, the differential-drive
//! encoder pseudo-measurement and the autoregressive slip dynamics.

use nalgebra::{Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{so3_wedge, GroupElement};

/// Raw IMU reading in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Angular rate (rad/s).
    pub gyro: Vector3<f64>,
    /// Specific force (m/s^2).
    pub accel: Vector3<f64>,
}

/// Left and right wheel angular rates (rad/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderSample {
    pub t: f64,
    pub left: f64,
    pub right: f64,
}

impl ImuSample {
    pub fn new(t: f64, gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { t, gyro, accel }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.gyro.iter().all(|x| x.is_finite())
            && self.accel.iter().all(|x| x.is_finite())
    }
}

impl EncoderSample {
    pub fn new(t: f64, left: f64, right: f64) -> Self {
        Self { t, left, right }
    }

    /// Finite, and both wheel rates within `limit` rad/s.
    pub fn is_plausible(&self, limit: f64) -> bool {
        self.t.is_finite()
            && self.left.is_finite()
            && self.right.is_finite()
            && self.left.abs() <= limit
            && self.right.abs() <= limit
    }
}

/// Noise parameters, initial covariances and slip-test settings.
///
/// Standard deviations of the IMU and slip processes are continuous-time
/// densities (the discrete process covariance is `sigma^2 dt`); the encoder
/// deviations are per-sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
    pub sigma_gyro_bias: f64,
    pub sigma_accel_bias: f64,
    /// Forward wheel-velocity noise (m/s).
    pub sigma_encoder: f64,
    /// Lateral pseudo-measurement noise (m/s).
    pub sigma_lateral: f64,
    /// Vertical pseudo-measurement noise (m/s).
    pub sigma_vertical: f64,
    /// Slip disturbance process noise (m/s per sqrt(s)).
    pub sigma_slip: f64,
    /// Slip decay rate (1/s).
    pub alpha: f64,
    /// Wheel radius (m).
    pub wheel_radius: f64,
    pub gravity: [f64; 3],
    pub init_std_rot: f64,
    pub init_std_vel: f64,
    pub init_std_pos: f64,
    pub init_std_slip: f64,
    pub init_std_gyro_bias: f64,
    pub init_std_accel_bias: f64,
    /// Steady-state slip covariance used by the Chi-square test, row-major.
    pub steady_slip_cov: [f64; 9],
    pub chi2_threshold: f64,
    /// Largest plausible wheel rate (rad/s).
    pub max_wheel_rate: f64,
}

impl NoiseConfig {
    /// Hand-tuned defaults for a Husky-class skid-steer robot. The wheel radius has no
    /// sensible default and must be supplied.
    pub fn hand_tuned(wheel_radius: f64) -> Self {
        Self {
            sigma_gyro: 0.1,
            sigma_accel: 0.1,
            sigma_gyro_bias: 0.001,
            sigma_accel_bias: 0.001,
            sigma_encoder: 0.1,
            sigma_lateral: 0.1,
            sigma_vertical: 0.1,
            sigma_slip: 5.0,
            alpha: 1.0,
            wheel_radius,
            gravity: [0.0, 0.0, -9.81],
            init_std_rot: 0.03,
            init_std_vel: 0.01,
            init_std_pos: 0.01,
            init_std_slip: 0.01,
            init_std_gyro_bias: 0.0001,
            init_std_accel_bias: 0.0025,
            steady_slip_cov: [0.001, 0.0, 0.0, 0.0, 0.001, 0.0, 0.0, 0.0, 0.001],
            chi2_threshold: 4.642,
            max_wheel_rate: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("sigma_gyro", self.sigma_gyro),
            ("sigma_accel", self.sigma_accel),
            ("sigma_gyro_bias", self.sigma_gyro_bias),
            ("sigma_accel_bias", self.sigma_accel_bias),
            ("sigma_encoder", self.sigma_encoder),
            ("sigma_lateral", self.sigma_lateral),
            ("sigma_vertical", self.sigma_vertical),
            ("sigma_slip", self.sigma_slip),
            ("init_std_rot", self.init_std_rot),
            ("init_std_vel", self.init_std_vel),
            ("init_std_pos", self.init_std_pos),
            ("init_std_slip", self.init_std_slip),
            ("init_std_gyro_bias", self.init_std_gyro_bias),
            ("init_std_accel_bias", self.init_std_accel_bias),
            ("alpha", self.alpha),
        ];
        for (name, value) in sigmas {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {value}")));
            }
        }
        if !(self.wheel_radius > 0.0 && self.wheel_radius.is_finite()) {
            return Err(Error::Config(format!(
                "wheel_radius must be > 0, got {}",
                self.wheel_radius
            )));
        }
        if !(self.chi2_threshold > 0.0) {
            return Err(Error::Config("chi2_threshold must be > 0".into()));
        }
        if !(self.max_wheel_rate > 0.0) {
            return Err(Error::Config("max_wheel_rate must be > 0".into()));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("gravity must be finite".into()));
        }
        if self.base_encoder_cov().cholesky().is_none() {
            return Err(Error::Config(
                "encoder covariance must be positive definite".into(),
            ));
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    /// `W_0`, the encoder covariance when no slip is present.
    pub fn base_encoder_cov(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(
            self.sigma_encoder.powi(2),
            self.sigma_lateral.powi(2),
            self.sigma_vertical.powi(2),
        ))
    }

    pub fn steady_slip_cov(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.steady_slip_cov)
    }

    /// Same model with every process-noise variance multiplied by `factor`.
    pub fn with_process_noise_scaled(&self, factor: f64) -> Self {
        let s = factor.sqrt();
        Self {
            sigma_gyro: self.sigma_gyro * s,
            sigma_accel: self.sigma_accel * s,
            sigma_gyro_bias: self.sigma_gyro_bias * s,
            sigma_accel_bias: self.sigma_accel_bias * s,
            sigma_slip: self.sigma_slip * s,
            ..self.clone()
        }
    }
}

/// Time derivative of `(R, v, p)` under the noise-free IMU model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuDerivative {
    pub rot: Matrix3<f64>,
    pub vel: Vector3<f64>,
    pub pos: Vector3<f64>,
}

pub fn imu_deriv(x: &GroupElement, sample: &ImuSample, gravity: &Vector3<f64>) -> ImuDerivative {
    ImuDerivative {
        rot: x.rot * so3_wedge(&sample.gyro),
        vel: x.rot * sample.accel + gravity,
        pos: x.vel(),
    }
}

/// Body-frame velocity implied by the wheel encoders, with the nonholonomic
/// zero lateral and vertical components.
pub fn encoder_measurement(sample: &EncoderSample, wheel_radius: f64) -> Vector3<f64> {
    Vector3::new(0.5 * (sample.left * wheel_radius + sample.right * wheel_radius), 0.0, 0.0)
}

/// Deterministic part of the slip dynamics.
pub fn slip_deriv(slip: &Vector3<f64>, alpha: f64) -> Vector3<f64> {
    -alpha * slip
}

/// Group-shaped derivative `f(X)`: the 6x6 matrix
/// `[R w^, R a + g, v, -alpha u; 0]`.
pub fn full_deriv(x: &GroupElement, sample: &ImuSample, cfg: &NoiseConfig) -> Matrix6<f64> {
    let d = imu_deriv(x, sample, &cfg.gravity());
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&d.rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&d.vel);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&d.pos);
    m.fixed_view_mut::<3, 1>(0, 5).copy_from(&slip_deriv(&x.slip(), cfg.alpha));
    m
}
