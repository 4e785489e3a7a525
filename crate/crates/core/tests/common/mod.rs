#![allow(dead_code)]

use dob_inekf::liegroup::{so3_exp, GroupElement, TangentVec};
use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vec3(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-scale..scale))
}

/// Random axis-angle vector with angle below `max_angle`.
pub fn rotvec(rng: &mut impl Rng, max_angle: f64) -> Vector3<f64> {
    let axis = loop {
        let a = vec3(rng, 1.0);
        if a.norm() > 1e-3 && a.norm() <= 1.0 {
            break a.normalize();
        }
    };
    axis * rng.random_range(0.0..max_angle)
}

pub fn rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    so3_exp(&rotvec(rng, std::f64::consts::PI - 0.1))
}

pub fn tangent(rng: &mut impl Rng, max_angle: f64, scale: f64) -> TangentVec {
    TangentVec {
        rot: rotvec(rng, max_angle),
        cols: [vec3(rng, scale), vec3(rng, scale), vec3(rng, scale)],
    }
}

pub fn element(rng: &mut impl Rng) -> GroupElement {
    GroupElement::new(rotation(rng), [vec3(rng, 3.0), vec3(rng, 10.0), vec3(rng, 1.0)])
}

/// Truncated power series of the matrix exponential.
pub fn series_exp(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut acc = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..terms {
        term = &term * m / k as f64;
        acc += &term;
    }
    acc
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Profile and filter tuning whose noise models agree: the defaults with
/// `sigma_slip = 0.1`, and a slip process that is active for the whole run.
pub fn matched_nees_setup() -> (dob_inekf::sim::TrajectoryProfile, dob_inekf::models::NoiseConfig) {
    use dob_inekf::models::NoiseConfig;
    use dob_inekf::sim::{Segment, SensorNoise, SlipEpisode, TrajectoryProfile};

    let mut cfg = NoiseConfig::hand_tuned(0.165);
    cfg.sigma_slip = 0.1;
    let mut p = TrajectoryProfile::still(20.0, 0.165);
    p.seed = 7;
    p.alpha = cfg.alpha;
    p.noise = SensorNoise::matched(&cfg, p.imu_rate);
    p.segments = vec![
        Segment { duration: 2.0, speed: 1.0, yaw_rate: 0.0 },
        Segment { duration: 8.0, speed: 1.0, yaw_rate: 0.2 },
        Segment { duration: 6.0, speed: 0.5, yaw_rate: -0.2 },
        Segment { duration: 4.0, speed: 1.0, yaw_rate: 0.0 },
    ];
    p.episodes = vec![SlipEpisode { start: 0.0, slip: [0.0; 3], duration: Some(p.duration) }];
    (p, cfg)
}
