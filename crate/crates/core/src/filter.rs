//! Right-invariant EKF with an optional slip-velocity disturbance state.
//!
//! The error state is the right-invariant error `eta = Xhat X^-1 = exp(xi)`
//! with `xi = (xi_R, xi_v, xi_p[, xi_u][, zeta_g, zeta_a])`. Baseline mode
//! drops the slip block; bias mode appends gyroscope and accelerometer bias
//! errors `zeta = bhat - b`.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::liegroup::{so3_exp, so3_wedge, GroupElement, TangentVec};
use crate::models::{encoder_measurement, EncoderSample, ImuSample, NoiseConfig};

/// Smallest eigenvalue allowed in the posterior covariance.
pub const COVARIANCE_FLOOR: f64 = 1e-12;

/// Innovation covariances with a larger condition number are rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

const ROT: usize = 0;
const VEL: usize = 3;
const POS: usize = 6;
const SLIP: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Plain invariant EKF on SE_2(3); constant encoder covariance.
    Baseline,
    /// Slip-augmented SE_3(3) state with adaptive encoder covariance.
    Dob,
}

/// Which blocks are present in the error state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub slip: bool,
    pub bias: bool,
}

impl StateLayout {
    pub fn new(mode: FilterMode, bias: bool) -> Self {
        Self {
            slip: mode == FilterMode::Dob,
            bias,
        }
    }

    pub fn mode(&self) -> FilterMode {
        if self.slip {
            FilterMode::Dob
        } else {
            FilterMode::Baseline
        }
    }

    /// Dimension of the group part of the error state (9 or 12).
    pub fn group_dim(&self) -> usize {
        if self.slip {
            12
        } else {
            9
        }
    }

    pub fn dim(&self) -> usize {
        self.group_dim() + if self.bias { 6 } else { 0 }
    }

    /// Offset of the gyroscope bias block, if present.
    pub fn bias_offset(&self) -> Option<usize> {
        self.bias.then(|| self.group_dim())
    }

    /// Measurement Jacobian of the encoder observation, `[0 I 0 I]` or `[0 I 0]`
    /// padded with zeros for the bias columns.
    pub fn encoder_jacobian(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(3, self.dim());
        h.fixed_view_mut::<3, 3>(0, VEL).fill_with_identity();
        if self.slip {
            h.fixed_view_mut::<3, 3>(0, SLIP).fill_with_identity();
        }
        h
    }

    /// Lifts the group part of a correction to the 12-dimensional tangent.
    fn group_tangent(&self, delta: &DVector<f64>) -> TangentVec {
        let mut xs = [0.0; 12];
        xs[..self.group_dim()].copy_from_slice(&delta.as_slice()[..self.group_dim()]);
        TangentVec::from_slice(&xs)
    }
}

/// Estimate with its error covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub x: GroupElement,
    /// `(b_g, b_a)` when biases are estimated.
    pub bias: Option<Vector6<f64>>,
    pub cov: DMatrix<f64>,
    pub t: f64,
    pub mode: FilterMode,
}

impl FilterState {
    /// Starts at `x` with the diagonal initial covariance from `cfg`. The slip
    /// column of `x` is cleared in baseline mode.
    pub fn new(x: GroupElement, t: f64, mode: FilterMode, bias: bool, cfg: &NoiseConfig) -> Self {
        let layout = StateLayout::new(mode, bias);
        let mut x = x;
        if !layout.slip {
            x.cols[2] = Vector3::zeros();
        }
        let mut diag = vec![
            cfg.init_std_rot,
            cfg.init_std_rot,
            cfg.init_std_rot,
            cfg.init_std_vel,
            cfg.init_std_vel,
            cfg.init_std_vel,
            cfg.init_std_pos,
            cfg.init_std_pos,
            cfg.init_std_pos,
        ];
        if layout.slip {
            diag.extend([cfg.init_std_slip; 3]);
        }
        if layout.bias {
            diag.extend([cfg.init_std_gyro_bias; 3]);
            diag.extend([cfg.init_std_accel_bias; 3]);
        }
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(
            diag.len(),
            diag.into_iter().map(|s| s * s),
        ));
        Self {
            x,
            bias: bias.then(Vector6::zeros),
            cov,
            t,
            mode,
        }
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.mode, self.bias.is_some())
    }

    pub fn gyro_bias(&self) -> Vector3<f64> {
        self.bias.map_or_else(Vector3::zeros, |b| b.fixed_rows::<3>(0).into_owned())
    }

    pub fn accel_bias(&self) -> Vector3<f64> {
        self.bias.map_or_else(Vector3::zeros, |b| b.fixed_rows::<3>(3).into_owned())
    }
}

/// Outcome of one encoder correction.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionReport {
    pub t: f64,
    /// `Pi (Xhat y - b)`, world frame.
    pub innovation: Vector3<f64>,
    /// Innovation covariance.
    pub s: Matrix3<f64>,
    /// Encoder covariance `W_y` applied at this step (body frame).
    pub w: Matrix3<f64>,
    pub posterior: FilterState,
}

/// Linear error dynamics of the 12-dimensional state. Depends on the
/// configuration only.
pub fn error_dynamics(cfg: &NoiseConfig) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(12, 12);
    a.fixed_view_mut::<3, 3>(VEL, ROT)
        .copy_from(&so3_wedge(&cfg.gravity()));
    a.fixed_view_mut::<3, 3>(POS, VEL).fill_with_identity();
    a.fixed_view_mut::<3, 3>(SLIP, SLIP)
        .copy_from(&(Matrix3::identity() * -cfg.alpha));
    a
}

/// Closed-form `exp(A dt)` of [`error_dynamics`].
pub fn state_transition(cfg: &NoiseConfig, dt: f64) -> DMatrix<f64> {
    let g = so3_wedge(&cfg.gravity());
    let mut phi = DMatrix::identity(12, 12);
    phi.fixed_view_mut::<3, 3>(VEL, ROT).copy_from(&(g * dt));
    phi.fixed_view_mut::<3, 3>(POS, ROT)
        .copy_from(&(g * (0.5 * dt * dt)));
    phi.fixed_view_mut::<3, 3>(POS, VEL)
        .copy_from(&(Matrix3::identity() * dt));
    phi.fixed_view_mut::<3, 3>(SLIP, SLIP)
        .copy_from(&(Matrix3::identity() * (-cfg.alpha * dt).exp()));
    phi
}

/// `int_0^dt exp(A s) ds` for the 12-dimensional error dynamics.
fn integrated_transition(cfg: &NoiseConfig, dt: f64) -> DMatrix<f64> {
    let g = so3_wedge(&cfg.gravity());
    let i3 = Matrix3::identity();
    let mut psi = DMatrix::identity(12, 12) * dt;
    psi.fixed_view_mut::<3, 3>(VEL, ROT)
        .copy_from(&(g * (0.5 * dt * dt)));
    psi.fixed_view_mut::<3, 3>(POS, ROT)
        .copy_from(&(g * (dt * dt * dt / 6.0)));
    psi.fixed_view_mut::<3, 3>(POS, VEL)
        .copy_from(&(i3 * (0.5 * dt * dt)));
    let decay = if cfg.alpha > 0.0 {
        -(-cfg.alpha * dt).exp_m1() / cfg.alpha
    } else {
        dt
    };
    psi.fixed_view_mut::<3, 3>(SLIP, SLIP).copy_from(&(i3 * decay));
    psi
}

/// Transition matrix for an arbitrary layout. With biases the coupling block
/// is `-int exp(A s) ds * Ad_X[:, gyro/accel]`, evaluated at `x`.
pub fn layout_transition(
    layout: StateLayout,
    cfg: &NoiseConfig,
    x: &GroupElement,
    dt: f64,
) -> DMatrix<f64> {
    let n = layout.group_dim();
    let phi12 = state_transition(cfg, dt);
    let Some(b0) = layout.bias_offset() else {
        return phi12.view((0, 0), (n, n)).into_owned();
    };
    let mut phi = DMatrix::identity(layout.dim(), layout.dim());
    phi.view_mut((0, 0), (n, n))
        .copy_from(&phi12.view((0, 0), (n, n)));
    let psi = integrated_transition(cfg, dt);
    let ad = x.adjoint();
    let coupling = -(psi.view((0, 0), (n, n)) * ad.view((0, 0), (n, 6)));
    phi.view_mut((0, b0), (n, 6)).copy_from(&coupling);
    phi
}

/// Continuous process noise `Ad_X Cov(w) Ad_X^T` (plus bias random walks) for
/// the given layout.
pub fn process_noise(layout: StateLayout, cfg: &NoiseConfig, x: &GroupElement) -> DMatrix<f64> {
    let n = layout.group_dim();
    let mut cov_w = DVector::zeros(12);
    cov_w.rows_mut(ROT, 3).fill(cfg.sigma_gyro.powi(2));
    cov_w.rows_mut(VEL, 3).fill(cfg.sigma_accel.powi(2));
    cov_w.rows_mut(SLIP, 3).fill(cfg.sigma_slip.powi(2));
    let ad = x.adjoint();
    let ad = ad.view((0, 0), (n, n));
    let cov = DMatrix::from_diagonal(&cov_w.rows(0, n).into_owned());
    let q_group = ad * cov * ad.transpose();
    let Some(b0) = layout.bias_offset() else {
        return q_group;
    };
    let mut q = DMatrix::zeros(layout.dim(), layout.dim());
    q.view_mut((0, 0), (n, n)).copy_from(&q_group);
    for i in 0..3 {
        q[(b0 + i, b0 + i)] = cfg.sigma_gyro_bias.powi(2);
        q[(b0 + 3 + i, b0 + 3 + i)] = cfg.sigma_accel_bias.powi(2);
    }
    q
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Raises every eigenvalue below `floor` to `floor`.
pub fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return m.clone();
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

/// Propagates the mean and covariance by `dt` seconds holding `sample`.
pub fn propagate(
    state: &FilterState,
    sample: &ImuSample,
    dt: f64,
    cfg: &NoiseConfig,
) -> Result<FilterState> {
    if !(dt >= 0.0) {
        return Err(Error::NonMonotonicTime {
            state_t: state.t,
            t: state.t + dt,
        });
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let layout = state.layout();
    let x = &state.x;
    let gyro = sample.gyro - state.gyro_bias();
    let accel = sample.accel - state.accel_bias();
    let g = cfg.gravity();

    let acc_world = x.rot * accel + g;
    let rot = x.rot * so3_exp(&(gyro * dt));
    let vel = x.vel() + acc_world * dt;
    let pos = x.pos() + x.vel() * dt + acc_world * (0.5 * dt * dt);
    let slip = if layout.slip {
        x.slip() * (-cfg.alpha * dt).exp()
    } else {
        Vector3::zeros()
    };

    let phi = layout_transition(layout, cfg, x, dt);
    let q = process_noise(layout, cfg, x);
    let mut cov = &phi * (&state.cov + q * dt) * phi.transpose();
    symmetrize(&mut cov);

    Ok(FilterState {
        x: GroupElement::from_parts(rot, vel, pos, slip),
        bias: state.bias,
        cov,
        t: state.t + dt,
        mode: state.mode,
    })
}

/// `W_y = W_0 exp(|u|)`.
pub fn adaptive_covariance(w0: &Matrix3<f64>, slip: &Vector3<f64>) -> Matrix3<f64> {
    w0 * slip.norm().exp()
}

fn condition_number(s: &Matrix3<f64>) -> f64 {
    let eig = s.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Right-invariant encoder correction.
///
/// The observation is `y = (y_enc, -1, 0, -1)` against `b = (0, -1, 0, -1)`
/// in DOB mode and `(y_enc, -1, 0)` against `(0, -1, 0)` in baseline mode, so
/// the innovation is `R y_enc - v - u`. In DOB mode the encoder covariance is
/// inflated with the prior slip estimate.
pub fn correct_encoder(
    state: &FilterState,
    sample: &EncoderSample,
    cfg: &NoiseConfig,
) -> Result<(FilterState, CorrectionReport)> {
    let layout = state.layout();
    let x = &state.x;
    let y = encoder_measurement(sample, cfg.wheel_radius);
    let innovation = x.rot * y - x.vel() - x.slip();

    let w0 = cfg.base_encoder_cov();
    let w = if layout.slip {
        adaptive_covariance(&w0, &x.slip())
    } else {
        w0
    };
    // noise enters the innovation rotated into the world frame
    let n = x.rot * w * x.rot.transpose();

    let h = layout.encoder_jacobian();
    let ph_t = &state.cov * h.transpose();
    let hph: Matrix3<f64> = (&h * &ph_t).fixed_view::<3, 3>(0, 0).into_owned();
    let mut s = hph + n;
    s = 0.5 * (s + s.transpose());
    let condition = condition_number(&s);
    if !(condition <= MAX_INNOVATION_CONDITION) {
        return Err(Error::SingularInnovation { condition });
    }
    let s_inv = s
        .cholesky()
        .ok_or(Error::SingularInnovation { condition })?
        .inverse();
    let s_inv = DMatrix::from_column_slice(3, 3, s_inv.as_slice());
    let gain = &ph_t * s_inv;
    let delta = &gain * DVector::from_column_slice(innovation.as_slice());

    let xi = layout.group_tangent(&delta);
    let x_new = GroupElement::exp(&xi).compose(x).reorthonormalized();
    let bias = state.bias.map(|b| {
        let b0 = layout.group_dim();
        b + Vector6::from_column_slice(&delta.as_slice()[b0..b0 + 6])
    });

    let d = layout.dim();
    let mut cov = (DMatrix::identity(d, d) - &gain * &h) * &state.cov;
    symmetrize(&mut cov);
    let cov = floor_eigenvalues(&cov, COVARIANCE_FLOOR);

    let posterior = FilterState {
        x: x_new,
        bias,
        cov,
        t: state.t,
        mode: state.mode,
    };
    let report = CorrectionReport {
        t: state.t,
        innovation,
        s,
        w,
        posterior: posterior.clone(),
    };
    Ok((posterior, report))
}

/// Stacked observability matrix with rank diagnostics.
#[derive(Clone, Debug)]
pub struct ObservabilityReport {
    pub matrix: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub rank: usize,
    /// Orthonormal basis of the unobservable subspace, one column per direction.
    pub null_space: DMatrix<f64>,
}

impl ObservabilityReport {
    /// Distance from `v` to its projection on the null space, relative to `|v|`.
    pub fn null_space_residual(&self, v: &DVector<f64>) -> f64 {
        let proj = &self.null_space * (self.null_space.transpose() * v);
        (v - proj).norm() / v.norm()
    }
}

/// Stacks `H Phi^k` for `k = 0..block_rows` for the slip-augmented state.
///
/// # Panics
/// If `block_rows < 4`.
pub fn observability_matrix(cfg: &NoiseConfig, dt: f64, block_rows: usize) -> ObservabilityReport {
    assert!(block_rows >= 4, "observability matrix needs at least 4 block rows");
    let h = StateLayout::new(FilterMode::Dob, false).encoder_jacobian();
    let phi = state_transition(cfg, dt);
    let mut o = DMatrix::zeros(3 * block_rows, 12);
    let mut row = h.clone();
    for k in 0..block_rows {
        o.view_mut((3 * k, 0), (3, 12)).copy_from(&row);
        row = &row * &phi;
    }
    let svd = o.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma = svd.singular_values;
    let tol = o.nrows().max(o.ncols()) as f64 * f64::EPSILON * sigma.max();
    let null_idx: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] <= tol).collect();
    let mut null_space = DMatrix::zeros(12, null_idx.len());
    for (c, &i) in null_idx.iter().enumerate() {
        null_space.set_column(c, &v_t.row(i).transpose());
    }
    ObservabilityReport {
        matrix: o,
        rank: sigma.len() - null_idx.len(),
        singular_values: sigma,
        null_space,
    }
}

/// Event-driven wrapper: holds the latest IMU sample (zero-order hold) and
/// propagates to each incoming timestamp before handling it.
#[derive(Clone, Debug)]
pub struct Estimator {
    cfg: NoiseConfig,
    state: FilterState,
    held: Option<ImuSample>,
}

impl Estimator {
    pub fn new(cfg: NoiseConfig, state: FilterState) -> Self {
        Self {
            cfg,
            state,
            held: None,
        }
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        let dt = t - self.state.t;
        if dt < 0.0 {
            return Err(Error::NonMonotonicTime {
                state_t: self.state.t,
                t,
            });
        }
        match &self.held {
            Some(imu) => {
                self.state = propagate(&self.state, imu, dt, &self.cfg)?;
                self.state.t = t;
            }
            None => self.state.t = t,
        }
        Ok(())
    }

    pub fn handle_imu(&mut self, sample: ImuSample) -> Result<()> {
        self.advance_to(sample.t)?;
        self.held = Some(sample);
        Ok(())
    }

    /// Returns `None` when the sample is outside the plausible wheel-rate
    /// range and was skipped.
    pub fn handle_encoder(&mut self, sample: EncoderSample) -> Result<Option<CorrectionReport>> {
        self.advance_to(sample.t)?;
        if !sample.is_plausible(self.cfg.max_wheel_rate) {
            return Ok(None);
        }
        let (state, report) = correct_encoder(&self.state, &sample, &self.cfg)?;
        self.state = state;
        Ok(Some(report))
    }
}
