//! Matrix Lie groups SO(3) and SE_K(3).
//!
//! An element of SE_K(3) is a rotation `R` together with `K` translational
//! columns, embedded in a `(3 + K) x (3 + K)` matrix
//!
//! ```text
//!     [ R  c_1 ... c_K ]
//!     [ 0      I_K     ]
//! ```
//!
//! The slip-augmented navigation state uses `K = 3` with columns ordered
//! (velocity, position, slip). The baseline navigation state is the `K = 2`
//! case (velocity, position).
//!
//! Tangent vectors are ordered `(xi_R, xi_1, ..., xi_K)`, so for the
//! 12-dimensional state the layout is `(xi_R, xi_v, xi_p, xi_u)`. Every
//! covariance block index in the filter follows this ordering.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Below this rotation angle the trigonometric coefficients switch to their
/// Taylor expansions.
const SMALL_ANGLE: f64 = 1e-7;

/// Logarithm refuses rotations whose angle is within this margin of π.
pub const LOG_ANGLE_MARGIN: f64 = 1e-6;

/// Skew-symmetric matrix such that `so3_wedge(a) * b == a.cross(&b)`.
pub fn so3_wedge(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`so3_wedge`]; reads the antisymmetric part of `m`.
pub fn so3_vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Coefficients `sin(t)/t`, `(1 - cos t)/t^2` and `(t - sin t)/t^3`.
fn rodrigues_coeffs(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
        )
    } else {
        let s = theta.sin();
        let half = (0.5 * theta).sin();
        (
            s / theta,
            2.0 * half * half / (theta * theta),
            (theta - s) / (theta * theta * theta),
        )
    }
}

/// Rodrigues' formula.
pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _) = rodrigues_coeffs(phi.norm());
    let w = so3_wedge(phi);
    Matrix3::identity() + w * a + w * w * b
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (_, b, c) = rodrigues_coeffs(phi.norm());
    let w = so3_wedge(phi);
    Matrix3::identity() + w * b + w * w * c
}

/// Inverse of the left Jacobian of SO(3).
pub fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let d = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let w = so3_wedge(phi);
    Matrix3::identity() - w * 0.5 + w * w * d
}

/// Rotation angle in `[0, π]`, computed without the precision loss of `acos`
/// near the ends of its domain.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let axis = so3_vee(r);
    let cos = 0.5 * (r.trace() - 1.0);
    axis.norm().atan2(cos)
}

/// Logarithm of a rotation matrix.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let w = so3_vee(r);
    let s = w.norm();
    let theta = s.atan2(0.5 * (r.trace() - 1.0));
    if theta > std::f64::consts::PI - LOG_ANGLE_MARGIN {
        return Err(Error::AngleNearPi { angle: theta });
    }
    let scale = if theta < SMALL_ANGLE {
        1.0 + theta * theta / 6.0 + 7.0 * theta.powi(4) / 360.0
    } else {
        theta / s
    };
    Ok(w * scale)
}

/// Nearest rotation matrix in the Frobenius sense (polar decomposition).
pub fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Matrix3::identity();
    };
    if (u * v_t).determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    u * v_t
}

/// Tangent vector of SE_K(3), ordered `(xi_R, xi_1, ..., xi_K)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tangent<const K: usize> {
    pub rot: Vector3<f64>,
    pub cols: [Vector3<f64>; K],
}

/// 12-dimensional tangent vector `(xi_R, xi_v, xi_p, xi_u)`.
pub type TangentVec = Tangent<3>;

impl<const K: usize> Tangent<K> {
    pub const DIM: usize = 3 + 3 * K;

    pub fn zero() -> Self {
        Self {
            rot: Vector3::zeros(),
            cols: [Vector3::zeros(); K],
        }
    }

    /// Reads `3 + 3K` entries. Panics on any other length.
    pub fn from_slice(xs: &[f64]) -> Self {
        assert_eq!(xs.len(), Self::DIM, "tangent vector length");
        let v3 = |i: usize| Vector3::new(xs[i], xs[i + 1], xs[i + 2]);
        Self {
            rot: v3(0),
            cols: std::array::from_fn(|k| v3(3 + 3 * k)),
        }
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        let mut out = DVector::zeros(Self::DIM);
        out.fixed_rows_mut::<3>(0).copy_from(&self.rot);
        for (k, c) in self.cols.iter().enumerate() {
            out.fixed_rows_mut::<3>(3 + 3 * k).copy_from(c);
        }
        out
    }

    /// Lie-algebra matrix of size `(3 + K) x (3 + K)`.
    pub fn wedge(&self) -> DMatrix<f64> {
        let n = 3 + K;
        let mut m = DMatrix::zeros(n, n);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3_wedge(&self.rot));
        for (k, c) in self.cols.iter().enumerate() {
            m.fixed_view_mut::<3, 1>(0, 3 + k).copy_from(c);
        }
        m
    }

    /// Inverse of [`Tangent::wedge`]. The rotational part is read from the
    /// antisymmetric part of the upper-left block.
    pub fn vee(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.shape(), (3 + K, 3 + K), "Lie-algebra matrix shape");
        let block: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        Self {
            rot: so3_vee(&block),
            cols: std::array::from_fn(|k| m.fixed_view::<3, 1>(0, 3 + k).into_owned()),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rot: self.rot * s,
            cols: self.cols.map(|c| c * s),
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_dvector().norm()
    }
}

/// Element of SE_K(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedPose<const K: usize> {
    pub rot: Matrix3<f64>,
    pub cols: [Vector3<f64>; K],
}

/// SE_3(3) navigation state: rotation, velocity, position, slip velocity.
pub type GroupElement = ExtendedPose<3>;

/// SE_2(3) navigation state without the slip column.
pub type Se23 = ExtendedPose<2>;

impl<const K: usize> ExtendedPose<K> {
    pub const DOF: usize = 3 + 3 * K;

    pub fn identity() -> Self {
        Self {
            rot: Matrix3::identity(),
            cols: [Vector3::zeros(); K],
        }
    }

    pub fn new(rot: Matrix3<f64>, cols: [Vector3<f64>; K]) -> Self {
        Self { rot, cols }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Self {
            rot: rt,
            cols: self.cols.map(|c| -(rt * c)),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rot: self.rot * other.rot,
            cols: std::array::from_fn(|k| self.rot * other.cols[k] + self.cols[k]),
        }
    }

    /// Homogeneous `(3 + K) x (3 + K)` matrix form.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = 3 + K;
        let mut m = DMatrix::identity(n, n);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        for (k, c) in self.cols.iter().enumerate() {
            m.fixed_view_mut::<3, 1>(0, 3 + k).copy_from(c);
        }
        m
    }

    /// Reads the upper block rows of a homogeneous matrix; the lower rows are
    /// not checked.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.shape(), (3 + K, 3 + K), "group matrix shape");
        Self {
            rot: m.fixed_view::<3, 3>(0, 0).into_owned(),
            cols: std::array::from_fn(|k| m.fixed_view::<3, 1>(0, 3 + k).into_owned()),
        }
    }

    /// Closed-form exponential: `R = Exp(xi_R)`, `c_k = J_l(xi_R) xi_k`.
    pub fn exp(xi: &Tangent<K>) -> Self {
        let jl = so3_left_jacobian(&xi.rot);
        Self {
            rot: so3_exp(&xi.rot),
            cols: xi.cols.map(|c| jl * c),
        }
    }

    pub fn log(&self) -> Result<Tangent<K>> {
        let phi = so3_log(&self.rot)?;
        let jl_inv = so3_left_jacobian_inv(&phi);
        Ok(Tangent {
            rot: phi,
            cols: self.cols.map(|c| jl_inv * c),
        })
    }

    /// Adjoint matrix with `(Ad_X xi)^ = X xi^ X^-1`.
    ///
    /// Block lower-triangular: `R` on the diagonal and `c_k^ R` in the first
    /// block column.
    pub fn adjoint(&self) -> DMatrix<f64> {
        let n = Self::DOF;
        let mut ad = DMatrix::zeros(n, n);
        for b in 0..=K {
            ad.fixed_view_mut::<3, 3>(3 * b, 3 * b).copy_from(&self.rot);
        }
        for (k, c) in self.cols.iter().enumerate() {
            ad.fixed_view_mut::<3, 3>(3 + 3 * k, 0)
                .copy_from(&(so3_wedge(c) * self.rot));
        }
        ad
    }

    /// Applies the adjoint without forming the matrix.
    pub fn adjoint_apply(&self, xi: &Tangent<K>) -> Tangent<K> {
        let rw = self.rot * xi.rot;
        Tangent {
            rot: rw,
            cols: std::array::from_fn(|k| self.cols[k].cross(&rw) + self.rot * xi.cols[k]),
        }
    }

    /// Replaces the rotation block by its nearest rotation matrix.
    pub fn reorthonormalized(&self) -> Self {
        Self {
            rot: project_to_rotation(&self.rot),
            cols: self.cols,
        }
    }

    /// Largest deviation of `R^T R` from the identity, and of `det R` from 1.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = (self.rot.transpose() * self.rot - Matrix3::identity()).abs().max();
        gram.max((self.rot.determinant() - 1.0).abs())
    }
}

impl GroupElement {
    pub fn from_parts(
        rot: Matrix3<f64>,
        vel: Vector3<f64>,
        pos: Vector3<f64>,
        slip: Vector3<f64>,
    ) -> Self {
        Self::new(rot, [vel, pos, slip])
    }

    pub fn vel(&self) -> Vector3<f64> {
        self.cols[0]
    }

    pub fn pos(&self) -> Vector3<f64> {
        self.cols[1]
    }

    pub fn slip(&self) -> Vector3<f64> {
        self.cols[2]
    }

    /// Drops the slip column.
    pub fn to_se23(&self) -> Se23 {
        Se23::new(self.rot, [self.cols[0], self.cols[1]])
    }
}

impl Se23 {
    /// Embeds with a zero slip column.
    pub fn to_se33(&self) -> GroupElement {
        GroupElement::new(self.rot, [self.cols[0], self.cols[1], Vector3::zeros()])
    }
}

impl<const K: usize> std::ops::Mul for ExtendedPose<K> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

/// Right-invariant error `Xhat X^-1`.
pub fn right_invariant_error<const K: usize>(
    estimate: &ExtendedPose<K>,
    truth: &ExtendedPose<K>,
) -> ExtendedPose<K> {
    estimate.compose(&truth.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Truncated power series of the matrix exponential.
    fn series_exp(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = m.nrows();
        let mut acc = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..terms {
            term = &term * m / k as f64;
            acc += &term;
        }
        acc
    }

    #[test]
    fn wedge_zero_and_unit_x() {
        assert_eq!(so3_wedge(&Vector3::zeros()), Matrix3::zeros());
        let a = Vector3::x();
        let w = so3_wedge(&a);
        // columns are a x e_x, a x e_y, a x e_z
        for (j, e) in [Vector3::x(), Vector3::y(), Vector3::z()].iter().enumerate() {
            assert_eq!(w.column(j).into_owned(), a.cross(e));
        }
        assert_eq!(
            w,
            Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)
        );
    }

    #[test]
    fn wedge_is_antisymmetric_cross_product() {
        let a = Vector3::new(0.3, -1.2, 2.5);
        let b = Vector3::new(-0.7, 0.1, 0.4);
        let w = so3_wedge(&a);
        assert_eq!(w + w.transpose(), Matrix3::zeros());
        assert_relative_eq!(w * b, a.cross(&b), epsilon = 1e-15);
        assert_eq!(so3_vee(&w), a);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(GroupElement::exp(&TangentVec::zero()), GroupElement::identity());
    }

    #[test]
    fn quarter_turn_about_z_matches_series() {
        let mut xi = TangentVec::zero();
        xi.rot = Vector3::new(0.0, 0.0, PI / 2.0);
        let x = GroupElement::exp(&xi);
        let oracle = series_exp(&xi.wedge(), 30);
        assert_relative_eq!(x.to_matrix(), oracle, epsilon = 1e-12);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(x.rot, expected, epsilon = 1e-12);
        assert_eq!(x.vel(), Vector3::zeros());
        assert_eq!(x.slip(), Vector3::zeros());
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let phi = Vector3::new(3e-8, -2e-8, 5e-8);
        for scale in [0.9999, 1.0001] {
            let p = phi * (SMALL_ANGLE / phi.norm()) * scale;
            let w = so3_wedge(&p);
            // second-order series are exact to double precision at this size
            let jl = Matrix3::identity() + w * 0.5 + w * w / 6.0;
            let jl_inv = Matrix3::identity() - w * 0.5 + w * w / 12.0;
            assert_relative_eq!(so3_left_jacobian(&p), jl, epsilon = 1e-15);
            assert_relative_eq!(so3_left_jacobian_inv(&p), jl_inv, epsilon = 1e-15);
        }
        assert_relative_eq!(so3_log(&so3_exp(&phi)).unwrap(), phi, epsilon = 1e-20);
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(GroupElement::identity().log().unwrap(), TangentVec::zero());
    }

    #[test]
    fn log_rejects_angle_near_pi() {
        let r = so3_exp(&(Vector3::new(1.0, 2.0, -1.0).normalize() * (PI - 1e-9)));
        let x = GroupElement::from_parts(r, Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
        assert!(matches!(x.log(), Err(Error::AngleNearPi { .. })));
    }

    #[test]
    fn log_accepts_angle_just_inside_margin() {
        let phi = Vector3::new(0.0, 1.0, 0.0) * (PI - 1e-4);
        assert_relative_eq!(so3_log(&so3_exp(&phi)).unwrap(), phi, epsilon = 1e-9);
    }

    #[test]
    fn adjoint_of_identity() {
        assert_eq!(GroupElement::identity().adjoint(), DMatrix::identity(12, 12));
        assert_eq!(Se23::identity().adjoint(), DMatrix::identity(9, 9));
    }

    #[test]
    fn se23_embedding_preserves_exp() {
        let xi2 = Tangent::<2>::from_slice(&[0.1, -0.2, 0.3, 1.0, 2.0, 3.0, -1.0, 0.5, 0.2]);
        let mut xi3 = TangentVec::zero();
        xi3.rot = xi2.rot;
        xi3.cols[0] = xi2.cols[0];
        xi3.cols[1] = xi2.cols[1];
        assert_eq!(Se23::exp(&xi2).to_se33(), GroupElement::exp(&xi3));
    }

    #[test]
    fn projection_restores_rotation() {
        let r = so3_exp(&Vector3::new(0.4, -0.3, 1.1));
        let noisy = r + Matrix3::new(1e-4, 0.0, 2e-4, 0.0, -1e-4, 0.0, 3e-5, 0.0, 0.0);
        let p = project_to_rotation(&noisy);
        assert!((p.transpose() * p - Matrix3::identity()).abs().max() < 1e-14);
        assert_relative_eq!(p.determinant(), 1.0, epsilon = 1e-14);
        assert!((p - r).abs().max() < 1e-3);
    }
}
