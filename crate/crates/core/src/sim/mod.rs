//! Seedable trajectory and sensor simulator.
//!
//! The robot drives on flat ground following piecewise-linear forward-speed
//! and yaw-rate commands; the wheel-contact velocity is along the body x
//! axis. Slip episodes set the world-frame slip velocity `u` to a given value
//! which then decays at rate `alpha`, with optional process noise while the
//! episode lasts. The part of `u` across the body x axis makes the body slide
//! sideways, so the body velocity is `v = R (s, 0, 0) - (u - x x^T u)` with
//! `x` the body x axis, and `R^T (v + u)` has no lateral or vertical part.
//! The wheels report its forward component. Every output value is rounded to
//! nine significant digits so written logs read back exactly.

mod nees;

pub use nees::{monte_carlo_nees, monte_carlo_nees_exact_start, nees, NeesReport};

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::round_sig9;
use crate::liegroup::GroupElement;
use crate::models::{EncoderSample, ImuSample, NoiseConfig};
use crate::slipdetect::LabelInterval;

fn default_imu_rate() -> f64 {
    200.0
}

fn default_encoder_rate() -> f64 {
    13.5
}

fn default_track_width() -> f64 {
    0.555
}

fn default_alpha() -> f64 {
    1.0
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

/// Command ramp: speed and yaw rate move linearly to the given values over
/// `duration` seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub speed: f64,
    pub yaw_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipEpisode {
    pub start: f64,
    /// World-frame slip velocity at onset (m/s).
    pub slip: [f64; 3],
    /// Length of the labelled slip interval. Defaults to the time the
    /// deterministic decay needs to reach 5% of the onset value.
    #[serde(default)]
    pub duration: Option<f64>,
}

/// Per-sample sensor noise of the simulated streams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    /// Gyroscope noise per sample (rad/s).
    pub gyro_std: f64,
    /// Accelerometer noise per sample (m/s^2).
    pub accel_std: f64,
    /// Forward wheel-velocity noise per encoder sample (m/s).
    pub encoder_std: f64,
    /// Slip process noise density during episodes (m/s per sqrt(s)).
    pub slip_noise: f64,
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
}

impl SensorNoise {
    /// Per-sample deviations equivalent to the continuous densities of `cfg`
    /// at the given IMU rate, so simulated data matches the filter model.
    pub fn matched(cfg: &NoiseConfig, imu_rate: f64) -> Self {
        Self {
            gyro_std: cfg.sigma_gyro * imu_rate.sqrt(),
            accel_std: cfg.sigma_accel * imu_rate.sqrt(),
            encoder_std: cfg.sigma_encoder,
            slip_noise: cfg.sigma_slip,
            gyro_bias: [0.0; 3],
            accel_bias: [0.0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryProfile {
    pub duration: f64,
    #[serde(default = "default_imu_rate")]
    pub imu_rate: f64,
    #[serde(default = "default_encoder_rate")]
    pub encoder_rate: f64,
    pub wheel_radius: f64,
    #[serde(default = "default_track_width")]
    pub track_width: f64,
    /// True slip decay rate (1/s).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_speed: f64,
    #[serde(default)]
    pub initial_yaw_rate: f64,
    #[serde(default)]
    pub noise: SensorNoise,
    #[serde(default, rename = "segment")]
    pub segments: Vec<Segment>,
    #[serde(default, rename = "episode")]
    pub episodes: Vec<SlipEpisode>,
}

impl TrajectoryProfile {
    /// Stationary, noise-free profile.
    pub fn still(duration: f64, wheel_radius: f64) -> Self {
        Self {
            duration,
            imu_rate: default_imu_rate(),
            encoder_rate: default_encoder_rate(),
            wheel_radius,
            track_width: default_track_width(),
            alpha: default_alpha(),
            gravity: default_gravity(),
            seed: 0,
            initial_speed: 0.0,
            initial_yaw_rate: 0.0,
            noise: SensorNoise::default(),
            segments: Vec::new(),
            episodes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProfile(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.imu_rate > 0.0 && self.encoder_rate > 0.0) {
            return bad("sensor rates must be > 0".into());
        }
        if !(self.wheel_radius > 0.0) {
            return bad("wheel_radius must be > 0".into());
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be >= 0".into());
        }
        let n = &self.noise;
        if [n.gyro_std, n.accel_std, n.encoder_std, n.slip_noise]
            .iter()
            .any(|s| !(*s >= 0.0))
        {
            return bad("noise deviations must be >= 0".into());
        }
        for s in &self.segments {
            if !(s.duration > 0.0) || !s.speed.is_finite() || !s.yaw_rate.is_finite() {
                return bad(format!("invalid segment {s:?}"));
            }
        }
        for e in &self.episodes {
            if !(e.start >= 0.0 && e.start <= self.duration) {
                return bad(format!("episode start {} outside [0, {}]", e.start, self.duration));
            }
            if e.duration.is_some_and(|d| !(d > 0.0)) {
                return bad("episode duration must be > 0".into());
            }
            if e.duration.is_none() && self.alpha == 0.0 {
                return bad("episodes need an explicit duration when alpha = 0".into());
            }
        }
        Ok(())
    }

    fn episode_end(&self, e: &SlipEpisode) -> f64 {
        let len = e.duration.unwrap_or_else(|| 20f64.ln() / self.alpha);
        (e.start + len).min(self.duration)
    }

    /// Commanded `(speed, yaw_rate, speed_rate, yaw_accel)` at time `t`.
    /// Rates are right-continuous at segment boundaries.
    fn command(&self, t: f64) -> (f64, f64, f64, f64) {
        let (mut s0, mut w0, mut t0) = (self.initial_speed, self.initial_yaw_rate, 0.0);
        for seg in &self.segments {
            let t1 = t0 + seg.duration;
            if t < t1 {
                let ds = (seg.speed - s0) / seg.duration;
                let dw = (seg.yaw_rate - w0) / seg.duration;
                let tau = t - t0;
                return (s0 + ds * tau, w0 + dw * tau, ds, dw);
            }
            (s0, w0, t0) = (seg.speed, seg.yaw_rate, t1);
        }
        (s0, w0, 0.0, 0.0)
    }

    fn segment_boundaries(&self) -> Vec<f64> {
        self.segments
            .iter()
            .scan(0.0, |t, s| {
                *t += s.duration;
                Some(*t)
            })
            .collect()
    }

    /// Slip-labelled intervals merged with their complement over the run.
    pub fn label_intervals(&self) -> Vec<LabelInterval> {
        let mut slips: Vec<(f64, f64)> = self
            .episodes
            .iter()
            .map(|e| (e.start, self.episode_end(e)))
            .collect();
        slips.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in slips {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let mut out = Vec::new();
        let mut cursor = 0.0;
        for (a, b) in merged {
            if a > cursor {
                out.push(LabelInterval { start: cursor, end: a, slip: false });
            }
            if b > a {
                out.push(LabelInterval { start: a, end: b, slip: true });
            }
            cursor = b;
        }
        if cursor < self.duration {
            out.push(LabelInterval { start: cursor, end: self.duration, slip: false });
        }
        out
    }
}

/// True state at one IMU timestamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthRecord {
    pub t: f64,
    pub rot: Matrix3<f64>,
    pub vel: Vector3<f64>,
    pub pos: Vector3<f64>,
    pub slip: Vector3<f64>,
    pub slip_active: bool,
}

impl GroundTruthRecord {
    pub fn group_element(&self) -> GroupElement {
        GroupElement::from_parts(self.rot, self.vel, self.pos, self.slip)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub truth: Vec<GroundTruthRecord>,
    pub imu: Vec<ImuSample>,
    pub encoder: Vec<EncoderSample>,
    pub labels: Vec<LabelInterval>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Tick {
    Imu(usize),
    Encoder(usize),
    Internal,
}

fn yaw_rotation(yaw: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).into_inner()
}

/// Generates truth and noisy sensor streams. Deterministic for a given
/// profile (including its seed).
pub fn simulate(profile: &TrajectoryProfile) -> Result<SimOutput> {
    profile.validate()?;
    let p = profile;
    let g = Vector3::from(p.gravity);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };

    // integration grid: every sensor timestamp plus command and slip breakpoints
    let n_imu = (p.duration * p.imu_rate + 1e-9).floor() as usize + 1;
    let n_enc = (p.duration * p.encoder_rate + 1e-9).floor() as usize + 1;
    let mut grid: Vec<(f64, Tick)> = Vec::with_capacity(n_imu + n_enc + 8);
    grid.extend((0..n_imu).map(|k| (k as f64 / p.imu_rate, Tick::Imu(k))));
    grid.extend((0..n_enc).map(|k| (k as f64 / p.encoder_rate, Tick::Encoder(k))));
    for t in p.segment_boundaries() {
        if t < p.duration {
            grid.push((t, Tick::Internal));
        }
    }
    for e in &p.episodes {
        grid.push((e.start, Tick::Internal));
        grid.push((p.episode_end(e), Tick::Internal));
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let in_episode = |t: f64| p.episodes.iter().any(|e| t >= e.start && t < p.episode_end(e));

    let gyro_bias = Vector3::from(p.noise.gyro_bias);
    let accel_bias = Vector3::from(p.noise.accel_bias);
    let wheel_std = std::f64::consts::SQRT_2 * p.noise.encoder_std / p.wheel_radius;

    // first pass: kinematics and slip at every grid point
    let mut states: Vec<GridState> = Vec::with_capacity(grid.len());
    let mut yaw = 0.0;
    let mut contact_pos = Vector3::zeros();
    let mut slide_pos = Vector3::zeros();
    let mut slip = Vector3::zeros();
    let mut slide = Vector3::zeros();
    let mut t_prev = 0.0;
    let mut started = vec![false; p.episodes.len()];
    for &(t, tick) in &grid {
        let h = t - t_prev;
        if h > 0.0 {
            // RK4 on (yaw, contact position); speed and yaw rate are closed form
            let f = |tau: f64, yaw: f64| {
                let (s, w, _, _) = p.command(tau);
                (w, yaw_rotation(yaw) * Vector3::new(s, 0.0, 0.0))
            };
            let (k1y, k1p) = f(t_prev, yaw);
            let (k2y, k2p) = f(t_prev + 0.5 * h, yaw + 0.5 * h * k1y);
            let (k3y, k3p) = f(t_prev + 0.5 * h, yaw + 0.5 * h * k2y);
            let (k4y, k4p) = f(t, yaw + h * k3y);
            yaw += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            contact_pos += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);

            slip *= (-p.alpha * h).exp();
            if p.noise.slip_noise > 0.0 && in_episode(t_prev) {
                let var = if p.alpha > 0.0 {
                    -(-2.0 * p.alpha * h).exp_m1() / (2.0 * p.alpha)
                } else {
                    h
                };
                let sd = p.noise.slip_noise * var.sqrt();
                slip += Vector3::new(normal(), normal(), normal()) * sd;
            }
            let slide_left = sideways(yaw, &slip);
            slide_pos += (slide + slide_left) * (0.5 * h);
            slide = slide_left;
            t_prev = t;
        }
        let slide_left = slide;
        for (i, e) in p.episodes.iter().enumerate() {
            if !started[i] && t >= e.start {
                started[i] = true;
                slip = Vector3::from(e.slip);
            }
        }
        slide = sideways(yaw, &slip);
        states.push(GridState {
            t,
            tick,
            yaw,
            pos: contact_pos - slide_pos,
            slip,
            slide,
            slide_left,
        });
    }

    let mut out = SimOutput {
        truth: Vec::with_capacity(n_imu),
        imu: Vec::with_capacity(n_imu),
        encoder: Vec::with_capacity(n_enc),
        labels: p
            .label_intervals()
            .into_iter()
            .map(|l| LabelInterval {
                start: round_sig9(l.start),
                end: round_sig9(l.end),
                ..l
            })
            .collect(),
    };
    let imu_points: Vec<usize> = (0..states.len())
        .filter(|&i| matches!(states[i].tick, Tick::Imu(_)))
        .collect();
    let mut next_imu = imu_points.iter().skip(1);

    // second pass: sensors
    for st in &states {
        let (s, w, ds, _) = p.command(st.t);
        let rot = yaw_rotation(st.yaw);
        let vel = rot * Vector3::new(s, 0.0, 0.0) - st.slide;
        match st.tick {
            Tick::Imu(_) => {
                // sliding is not differentiable; report its mean acceleration
                // over the interval to the next sample
                let slide_acc = match next_imu.next() {
                    Some(&j) => -(states[j].slide_left - st.slide) / (states[j].t - st.t),
                    None => Vector3::zeros(),
                };
                let acc_world = rot * Vector3::new(ds, s * w, 0.0) + slide_acc;
                let accel = rot.transpose() * (acc_world - g)
                    + accel_bias
                    + Vector3::new(normal(), normal(), normal()) * p.noise.accel_std;
                let gyro = Vector3::new(0.0, 0.0, w)
                    + gyro_bias
                    + Vector3::new(normal(), normal(), normal()) * p.noise.gyro_std;
                let tq = round_sig9(st.t);
                out.imu.push(ImuSample::new(tq, gyro.map(round_sig9), accel.map(round_sig9)));
                out.truth.push(GroundTruthRecord {
                    t: tq,
                    rot,
                    vel,
                    pos: st.pos,
                    slip: st.slip,
                    slip_active: in_episode(st.t),
                });
            }
            Tick::Encoder(_) => {
                let forward = (rot.transpose() * (vel + st.slip)).x;
                let spin = 0.5 * w * p.track_width;
                let left = (forward - spin) / p.wheel_radius + normal() * wheel_std;
                let right = (forward + spin) / p.wheel_radius + normal() * wheel_std;
                out.encoder.push(EncoderSample::new(
                    round_sig9(st.t),
                    round_sig9(left),
                    round_sig9(right),
                ));
            }
            Tick::Internal => {}
        }
    }
    Ok(out)
}

struct GridState {
    t: f64,
    tick: Tick,
    yaw: f64,
    pos: Vector3<f64>,
    slip: Vector3<f64>,
    /// Lateral and vertical part of the slip, carried by the body.
    slide: Vector3<f64>,
    /// `slide` just before any slip onset at this point.
    slide_left: Vector3<f64>,
}

/// Component of the world-frame slip orthogonal to the body x axis.
fn sideways(yaw: f64, slip: &Vector3<f64>) -> Vector3<f64> {
    let forward = yaw_rotation(yaw) * Vector3::x();
    slip - forward * forward.dot(slip)
}
