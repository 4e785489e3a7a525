//! Trajectory error metrics against interpolated ground truth.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::EstimateRecord;
use crate::liegroup::{so3_exp, so3_log};
use crate::sim::GroundTruthRecord;

/// Per-axis RMSE. Angles (rad) are the yaw/pitch/roll of `R_est R_gt^T`;
/// velocities (m/s) are body-frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RmseReport {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub samples: usize,
}

/// Wraps to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Z-Y-X Euler angles `(yaw, pitch, roll)` with `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn euler_zyx(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    (yaw, pitch, roll)
}

/// Ground truth at `t` by geodesic rotation and linear velocity interpolation;
/// `None` outside the covered span.
pub fn interpolate_truth(gt: &[GroundTruthRecord], t: f64) -> Option<(Matrix3<f64>, Vector3<f64>)> {
    let first = gt.first()?;
    let last = gt.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let i = gt.partition_point(|g| g.t <= t);
    if i == gt.len() || gt[i - 1].t == t {
        let g = &gt[i - 1];
        return Some((g.rot, g.vel));
    }
    let (a, b) = (&gt[i - 1], &gt[i]);
    let s = (t - a.t) / (b.t - a.t);
    let delta = so3_log(&(a.rot.transpose() * b.rot)).ok()?;
    Some((a.rot * so3_exp(&(delta * s)), a.vel + (b.vel - a.vel) * s))
}

/// RMSE of `estimates` inside `window` (inclusive; everything when `None`)
/// against `gt`. Estimates outside the ground-truth span are skipped.
pub fn rmse(
    estimates: &[EstimateRecord],
    gt: &[GroundTruthRecord],
    window: Option<(f64, f64)>,
) -> Result<RmseReport> {
    let mut rows: Vec<&EstimateRecord> = estimates
        .iter()
        .filter(|e| window.is_none_or(|(a, b)| e.t >= a && e.t <= b))
        .collect();
    // the sum is order-dependent in floating point; fix the order
    rows.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then_with(|| a.vel.as_slice().iter().zip(b.vel.as_slice()).fold(
                std::cmp::Ordering::Equal,
                |o, (x, y)| o.then(x.total_cmp(y)),
            ))
    });
    let mut sq = [0.0f64; 6];
    let mut n = 0usize;
    for e in rows {
        let Some((rot, vel)) = interpolate_truth(gt, e.t) else {
            continue;
        };
        let (yaw, pitch, roll) = euler_zyx(&(e.rot * rot.transpose()));
        let dv = e.rot.transpose() * e.vel - rot.transpose() * vel;
        let errs = [wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll), dv.x, dv.y, dv.z];
        for (acc, x) in sq.iter_mut().zip(errs) {
            *acc += x * x;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyWindow);
    }
    let r = sq.map(|s| (s / n as f64).sqrt());
    Ok(RmseReport {
        yaw: r[0],
        pitch: r[1],
        roll: r[2],
        vx: r[3],
        vy: r[4],
        vz: r[5],
        samples: n,
    })
}
