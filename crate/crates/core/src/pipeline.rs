//! Batch filter runs over recorded or simulated logs.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::filter::{CorrectionReport, Estimator, FilterMode, FilterState};
use crate::io::{self, EstimateRecord};
use crate::liegroup::{so3_exp, GroupElement};
use crate::models::{ImuSample, NoiseConfig};
use crate::sim::GroundTruthRecord;
use crate::slipdetect::{chi_square_statistic, SlipDecision};
use crate::stream::Event;

pub const CORRECTION_HEADER: [&str; 10] =
    ["t", "zx", "zy", "zz", "sxx", "syy", "szz", "wxx", "wyy", "wzz"];

/// Everything a run produces, in time order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    /// One record per IMU timestamp, after all events at that time.
    pub estimates: Vec<EstimateRecord>,
    /// One decision per applied encoder correction.
    pub decisions: Vec<SlipDecision>,
    pub corrections: Vec<CorrectionReport>,
}

/// Roll and pitch from a specific-force reading taken at rest, for gravity
/// along `-z`; yaw is zero.
pub fn level_rotation(accel: &Vector3<f64>) -> Matrix3<f64> {
    let up = accel;
    let roll = up.y.atan2(up.z);
    let pitch = (-up.x).atan2((up.y * up.y + up.z * up.z).sqrt());
    so3_exp(&Vector3::new(0.0, pitch, 0.0)) * so3_exp(&Vector3::new(roll, 0.0, 0.0))
}

/// Starting state: the first ground-truth record when available, otherwise
/// gravity-levelled at rest at the origin.
pub fn initial_state(
    cfg: &NoiseConfig,
    mode: FilterMode,
    bias: bool,
    events: &[Event],
    gt: Option<&[GroundTruthRecord]>,
) -> FilterState {
    let t0 = events.first().map_or(0.0, Event::t);
    let x = match gt.and_then(|g| g.first()) {
        Some(g) => g.group_element(),
        None => {
            let first_imu = events.iter().find_map(|e| match e {
                Event::Imu(s) => Some(*s),
                Event::Encoder(_) => None,
            });
            let rot = first_imu
                .filter(ImuSample::is_finite)
                .map_or_else(Matrix3::identity, |s| level_rotation(&s.accel));
            GroupElement::from_parts(rot, Vector3::zeros(), Vector3::zeros(), Vector3::zeros())
        }
    };
    FilterState::new(x, t0, mode, bias, cfg)
}

fn estimate_record(state: &FilterState, steady: &Matrix3<f64>) -> Result<EstimateRecord> {
    let x = &state.x;
    Ok(EstimateRecord {
        t: state.t,
        rot: x.rot,
        pos: x.pos(),
        vel: x.vel(),
        slip: x.slip(),
        r: chi_square_statistic(&x.slip(), steady)?,
    })
}

/// Feeds `events` (time-ordered) to a filter started at `init`.
pub fn run_events(cfg: &NoiseConfig, init: FilterState, events: &[Event]) -> Result<RunOutput> {
    let steady = cfg.steady_slip_cov();
    let mut est = Estimator::new(cfg.clone(), init);
    let mut out = RunOutput::default();
    for event in events {
        let report = est.handle(event)?;
        let record = estimate_record(est.state(), &steady)?;
        match (event, report) {
            (Event::Imu(_), _) => out.estimates.push(record),
            (Event::Encoder(_), report) => {
                if let Some(last) = out.estimates.last_mut().filter(|l| l.t == record.t) {
                    *last = record;
                }
                if let Some(report) = report {
                    out.decisions
                        .push(SlipDecision::new(report.t, record.r, cfg.chi2_threshold));
                    out.corrections.push(report);
                }
            }
        }
    }
    Ok(out)
}

/// Output file locations inside the run's output directory.
pub struct RunPaths {
    pub estimates: PathBuf,
    pub decisions: PathBuf,
    pub corrections: PathBuf,
}

impl RunPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            estimates: dir.join("estimates.csv"),
            decisions: dir.join("slip.csv"),
            corrections: dir.join("corrections.csv"),
        }
    }
}

/// Reads the configured logs, runs the filter and writes `estimates.csv`,
/// `slip.csv` and `corrections.csv` to the output directory.
pub fn run_filter(config: &RunConfig) -> Result<(RunOutput, RunPaths)> {
    let (events, gt) = io::parse_streams(
        &config.imu,
        &config.encoder,
        config.ground_truth.as_deref(),
    )?;
    let init = initial_state(&config.noise, config.mode, config.bias, &events, gt.as_deref());
    let out = run_events(&config.noise, init, &events)?;
    std::fs::create_dir_all(&config.output).map_err(|source| Error::Io {
        path: config.output.clone(),
        source,
    })?;
    let paths = RunPaths::in_dir(&config.output);
    io::write_estimates(&paths.estimates, &out.estimates)?;
    io::write_decisions(&paths.decisions, &out.decisions)?;
    write_corrections(&paths.corrections, &out.corrections)?;
    Ok((out, paths))
}

pub fn write_corrections(path: &Path, reports: &[CorrectionReport]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CORRECTION_HEADER)?;
    for r in reports {
        let row = [
            r.t,
            r.innovation.x,
            r.innovation.y,
            r.innovation.z,
            r.s[(0, 0)],
            r.s[(1, 1)],
            r.s[(2, 2)],
            r.w[(0, 0)],
            r.w[(1, 1)],
            r.w[(2, 2)],
        ];
        w.write_record(row.iter().map(|&x| io::fmt_sig9(x)))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn levelling_recovers_roll_and_pitch() {
        let g = Vector3::new(0.0, 0.0, -9.81);
        let r = so3_exp(&Vector3::new(0.0, -0.1, 0.0)) * so3_exp(&Vector3::new(0.2, 0.0, 0.0));
        let accel = -(r.transpose() * g);
        let est = level_rotation(&accel);
        assert_relative_eq!(est, r, epsilon = 1e-12);
    }
}
