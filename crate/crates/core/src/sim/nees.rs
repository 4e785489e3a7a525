//! Monte-Carlo filter consistency via the normalized estimation error squared.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{simulate, TrajectoryProfile};
use crate::error::{Error, Result};
use crate::filter::{Estimator, FilterMode, FilterState};
use crate::liegroup::{right_invariant_error, GroupElement, TangentVec};
use crate::models::NoiseConfig;
use crate::stream::merge_events;

/// Aggregate NEES over a batch of runs.
#[derive(Clone, Debug, PartialEq)]
pub struct NeesReport {
    /// Error-state dimension.
    pub dim: usize,
    pub runs: usize,
    /// IMU timestamps at which NEES was evaluated.
    pub times: Vec<f64>,
    /// Mean over runs at each timestamp.
    pub per_step_mean: Vec<f64>,
    /// Mean over all runs and timestamps.
    pub mean: f64,
    /// Fraction of individual NEES values inside the two-sided 95% interval
    /// of the chi-square distribution with `dim` degrees of freedom.
    pub coverage: f64,
    pub interval: (f64, f64),
    /// Fractions below and above the interval.
    pub below: f64,
    pub above: f64,
}

/// Runs the slip-augmented filter (no bias states) on `n_runs` simulations of
/// `profile`, each with its own sensor seed and an initial estimate drawn from
/// the filter's initial covariance.
///
/// Run seeds are derived from `profile.seed`, so the report is deterministic.
pub fn monte_carlo_nees(
    profile: &TrajectoryProfile,
    n_runs: usize,
    cfg: &NoiseConfig,
) -> Result<NeesReport> {
    nees_batch(profile, n_runs, cfg, true)
}

/// As [`monte_carlo_nees`] but starting every run at the true initial state.
pub fn monte_carlo_nees_exact_start(
    profile: &TrajectoryProfile,
    n_runs: usize,
    cfg: &NoiseConfig,
) -> Result<NeesReport> {
    nees_batch(profile, n_runs, cfg, false)
}

fn nees_batch(
    profile: &TrajectoryProfile,
    n_runs: usize,
    cfg: &NoiseConfig,
    perturb: bool,
) -> Result<NeesReport> {
    if n_runs < 20 {
        return Err(Error::InvalidProfile(format!(
            "NEES needs at least 20 runs, got {n_runs}"
        )));
    }
    cfg.validate()?;
    profile.validate()?;
    let runs: Vec<Vec<(f64, f64)>> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
            rng.set_stream(i as u64 + 1);
            single_run(profile, cfg, perturb, &mut rng)
        })
        .collect::<Result<_>>()?;

    let dim = 12;
    let chi = ChiSquared::new(dim as f64).expect("positive degrees of freedom");
    let interval = (chi.inverse_cdf(0.025), chi.inverse_cdf(0.975));
    let steps = runs.iter().map(Vec::len).min().unwrap_or(0);
    let times: Vec<f64> = runs[0][..steps].iter().map(|s| s.0).collect();
    let per_step_mean: Vec<f64> = (0..steps)
        .map(|k| runs.iter().map(|r| r[k].1).sum::<f64>() / n_runs as f64)
        .collect();
    let all = runs.iter().flat_map(|r| r[..steps].iter().map(|s| s.1));
    let total = (steps * n_runs).max(1) as f64;
    let below = all.clone().filter(|&e| e < interval.0).count();
    let above = all.clone().filter(|&e| e > interval.1).count();
    let inside = steps * n_runs - below - above;
    Ok(NeesReport {
        dim,
        runs: n_runs,
        mean: all.sum::<f64>() / total,
        coverage: inside as f64 / total,
        below: below as f64 / total,
        above: above as f64 / total,
        times,
        per_step_mean,
        interval,
    })
}

fn single_run(
    profile: &TrajectoryProfile,
    cfg: &NoiseConfig,
    perturb: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>> {
    let mut p = profile.clone();
    p.seed = rng.random();
    let sim = simulate(&p)?;
    let truth0 = sim.truth[0].group_element();
    let mut state = FilterState::new(truth0, sim.truth[0].t, FilterMode::Dob, false, cfg);
    if perturb {
        let std = state.cov.diagonal().map(f64::sqrt);
        let xi: Vec<f64> = std.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
        state.x = GroupElement::exp(&TangentVec::from_slice(&xi)).compose(&truth0);
    }
    let mut est = Estimator::new(cfg.clone(), state);
    let mut truth = sim.truth.iter().peekable();
    let mut out = Vec::with_capacity(sim.truth.len());
    for event in merge_events(&sim.imu, &sim.encoder) {
        est.handle(&event)?;
        // score at each IMU timestamp
        while let Some(rec) = truth.peek() {
            if rec.t > est.state().t {
                break;
            }
            if rec.t == est.state().t {
                out.push((rec.t, nees(est.state(), &rec.group_element())?));
            }
            truth.next();
        }
    }
    Ok(out)
}

/// `xi^T P^-1 xi` with `xi = log(Xhat X^-1)`.
pub fn nees(state: &FilterState, truth: &GroupElement) -> Result<f64> {
    let xi = right_invariant_error(&state.x, truth).log()?.to_dvector();
    let d = state.cov.nrows();
    let xi = DVector::from_iterator(d, xi.iter().copied().take(d));
    let chol = state
        .cov
        .clone()
        .cholesky()
        .expect("filter covariance stays positive definite");
    let z = chol.l().solve_lower_triangular(&xi).expect("nonzero diagonal");
    Ok(z.norm_squared())
}
