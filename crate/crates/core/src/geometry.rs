//! Rotation and angle primitives.
//!
//! Everything downstream works in terms of three value types: [`Rotation3`]
//! (a validated proper-orthogonal 3x3 matrix), [`WrappedAngle`] (an angle
//! kept canonically in `[-pi, pi)`), and [`UnitVector3`]. All operations are
//! pure functions on immutable values and safe to call concurrently.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// `2 * sqrt(2)`, the chordal distance of two antipodal rotations.
pub const TWO_SQRT_TWO: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Entrywise tolerance for the orthogonality and determinant checks.
pub const ROTATION_TOL: f64 = 1e-9;

/// Tolerance for the unit-norm check of [`UnitVector3`].
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("angle value is not finite: {0}")]
    NonFiniteAngle(f64),
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("vector norm {0} is not unit length")]
    NotUnitLength(f64),
    #[error("quaternion norm {0} deviates from 1 by more than {1}")]
    BadQuaternionNorm(f64, f64),
}

/// Reduces `x` to the canonical interval `[-pi, pi)`. `pi` maps to `-pi`.
///
/// Infallible companion of [`wrap`] for internal hot paths; the input is
/// assumed finite.
#[inline]
pub fn wrap_radians(x: f64) -> f64 {
    debug_assert!(x.is_finite());
    let mut r = (x + PI).rem_euclid(TAU) - PI;
    // rem_euclid can land exactly on TAU through rounding.
    if r >= PI {
        r = -PI;
    }
    r
}

/// An angle in radians, canonically wrapped into `[-pi, pi)`.
///
/// The invariant is enforced on construction and after every arithmetic
/// operation, so a `WrappedAngle` is always a valid canonical representative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct WrappedAngle(f64);

impl WrappedAngle {
    /// Wraps an arbitrary finite angle into `[-pi, pi)`.
    pub fn new(raw: f64) -> Result<Self, GeometryError> {
        if !raw.is_finite() {
            return Err(GeometryError::NonFiniteAngle(raw));
        }
        Ok(Self(wrap_radians(raw)))
    }

    /// The canonical value in `[-pi, pi)`.
    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn zero() -> Self {
        Self(0.0)
    }
}

impl std::ops::Add for WrappedAngle {
    type Output = WrappedAngle;
    fn add(self, rhs: Self) -> Self {
        WrappedAngle(wrap_radians(self.0 + rhs.0))
    }
}

impl std::ops::Sub for WrappedAngle {
    type Output = WrappedAngle;
    fn sub(self, rhs: Self) -> Self {
        WrappedAngle(wrap_radians(self.0 - rhs.0))
    }
}

/// Wraps a raw angle into `[-pi, pi)`; errors on non-finite input.
pub fn wrap(raw: f64) -> Result<WrappedAngle, GeometryError> {
    WrappedAngle::new(raw)
}

/// A unit-norm direction in R^3 (gravity directions, rotation axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    /// Validates that `v` has unit norm within [`UNIT_TOL`].
    pub fn new(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(GeometryError::NotUnitLength(n));
        }
        Ok(Self(v))
    }

    /// Normalizes `v`; errors when the norm is degenerate (close to zero).
    pub fn normalize(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeometryError::NotUnitLength(n));
        }
        Ok(Self(v / n))
    }

    pub fn from_components(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        Self::new(Vector3::new(x, y, z))
    }

    pub fn y_axis() -> Self {
        Self(Vector3::y())
    }

    pub fn z_axis() -> Self {
        Self(Vector3::z())
    }

    #[inline]
    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Angle in `[0, pi]` between two directions.
    ///
    /// Evaluated through the half-chord for nearly parallel inputs, where a
    /// plain `acos` of the dot product cannot resolve below ~1e-8.
    pub fn angle_to(&self, other: &UnitVector3) -> f64 {
        let dot = self.0.dot(&other.0);
        if dot > 0.0 {
            2.0 * (((self.0 - other.0).norm() * 0.5).clamp(0.0, 1.0)).asin()
        } else {
            dot.clamp(-1.0, 1.0).acos()
        }
    }
}

/// Axis-angle representation with angle canonically in `[0, pi]`.
///
/// The zero rotation uses the fixed axis `(0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: UnitVector3,
    pub angle: f64,
}

/// A proper orthogonal 3x3 rotation matrix.
///
/// Validity (orthogonality and `det = +1` within [`ROTATION_TOL`]) is checked
/// at construction; composition of valid rotations stays valid to machine
/// precision, so internal code never re-projects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3 {
    m: Matrix3<f64>,
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Validates `m` as a rotation matrix.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let r = Self { m };
        r.validate()?;
        Ok(r)
    }

    /// Skips validation; the caller guarantees `m` is a rotation.
    #[inline]
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self { m }
    }

    /// Projects an arbitrary matrix onto the nearest rotation (polar
    /// decomposition via SVD). Used at I/O boundaries only.
    pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        let svd = m.svd(true, true);
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(GeometryError::NotARotation("SVD failed".into())),
        };
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            // Flip the axis of the smallest singular value.
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Self::from_matrix(r)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let gram = self.m.transpose() * self.m;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > ROTATION_TOL {
            return Err(GeometryError::NotARotation(format!(
                "orthogonality deviation {dev:.3e}"
            )));
        }
        let det = self.m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotARotation(format!("determinant {det}")));
        }
        Ok(())
    }

    /// Rotation about the y-axis, the 1-DoF family the solver operates in.
    pub fn about_y(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            m: Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c),
        }
    }

    pub fn about_x(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            m: Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        }
    }

    pub fn about_z(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            m: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// The inverse rotation.
    #[inline]
    pub fn transpose(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }

    #[inline]
    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m * v
    }

    /// Builds the rotation from a Hamilton scalar-first quaternion.
    ///
    /// Norms within `norm_tol` of 1 are renormalized (exactly-unit inputs are
    /// kept bit-identical); anything further off is rejected as corrupt.
    pub fn from_quaternion_wxyz(q: [f64; 4], norm_tol: f64) -> Result<Self, GeometryError> {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > norm_tol {
            return Err(GeometryError::BadQuaternionNorm(n, norm_tol));
        }
        let [w, x, y, z] = if (n - 1.0).abs() <= 1e-12 {
            q
        } else {
            [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
        };
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        Ok(Self { m })
    }

    /// Hamilton scalar-first quaternion with a canonical sign: the first
    /// nonzero component is positive.
    pub fn to_quaternion_wxyz(&self) -> [f64; 4] {
        let m = &self.m;
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        // Shepperd's method: branch on the largest of (trace, diagonal).
        let mut q = if tr > m[(0, 0)] && tr > m[(1, 1)] && tr > m[(2, 2)] {
            let s = (tr + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            ]
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            [
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            ]
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            [
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            ]
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            [
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            ]
        };
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        for c in &mut q {
            *c /= n;
        }
        for c in q {
            if c != 0.0 {
                if c < 0.0 {
                    for v in &mut q {
                        *v = -*v;
                    }
                }
                break;
            }
        }
        q
    }

    /// Rotation angle in `[0, pi]` relative to the identity.
    #[inline]
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.m)
    }
}

/// Rotation angle of a rotation matrix, `arccos((tr - 1) / 2)` evaluated
/// stably: the acos form cannot resolve angles below ~1e-8, so small and
/// medium angles go through the equivalent chordal-sine form instead.
fn rotation_angle(m: &Matrix3<f64>) -> f64 {
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    if c > 0.0 {
        let s = ((m - Matrix3::identity()).norm() / TWO_SQRT_TWO).clamp(0.0, 1.0);
        2.0 * s.asin()
    } else {
        c.acos()
    }
}

impl std::ops::Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3 { m: self.m * rhs.m }
    }
}

impl std::ops::Mul for &Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: &Rotation3) -> Rotation3 {
        Rotation3 { m: self.m * rhs.m }
    }
}

/// Geodesic distance `arccos((tr(a^T b) - 1) / 2)` in `[0, pi]`.
///
/// Errors when the trace argument leaves `[-1, 1]` by more than 1e-6, which
/// signals an invalid rotation rather than round-off.
pub fn geodesic_distance(a: &Rotation3, b: &Rotation3) -> Result<f64, GeometryError> {
    let rel = a.m.transpose() * b.m;
    let c = (rel.trace() - 1.0) * 0.5;
    if !(-1.0 - 1e-6..=1.0 + 1e-6).contains(&c) {
        return Err(GeometryError::NotARotation(format!(
            "geodesic cosine {c} outside [-1, 1]"
        )));
    }
    Ok(rotation_angle(&rel))
}

/// Infallible geodesic distance for rotations valid by construction.
#[inline]
pub(crate) fn geodesic_unchecked(a: &Rotation3, b: &Rotation3) -> f64 {
    rotation_angle(&(a.m.transpose() * b.m))
}

/// Chordal distance `||a^T b - I||_F = 2 sqrt(2) sin(geodesic / 2)`.
pub fn chordal_distance(a: &Rotation3, b: &Rotation3) -> f64 {
    ((a.m.transpose() * b.m) - Matrix3::identity()).norm()
}

/// The 1-DoF distance `2 sqrt(2) sin(|eps| / 2)`, equal to the chordal
/// distance of the corresponding y-axis rotations.
pub fn one_dof_distance(eps: WrappedAngle) -> f64 {
    TWO_SQRT_TWO * (eps.radians().abs() * 0.5).sin()
}

/// The minimal-angle rotation `U` taking the y-axis onto `g`, so that
/// `U * (0, 1, 0)^T = g`.
///
/// For `g` within 1e-12 of the antipode `(0, -1, 0)` there is no minimal
/// choice; the fixed fallback is a rotation of `pi` about `(1, 0, 0)`.
pub fn gravity_alignment(g: &UnitVector3) -> Rotation3 {
    let v = g.as_vector();
    let c = v.y; // cos of the alignment angle
    if c <= -1.0 + 1e-12 {
        return Rotation3::about_x(PI);
    }
    // Rodrigues with the unnormalized axis w = e_y x g; exact for c > -1.
    let w = Vector3::new(v.z, 0.0, -v.x);
    let k = skew(&w);
    let m = Matrix3::identity() + k + k * k / (1.0 + c);
    Rotation3::from_matrix_unchecked(m)
}

/// The matrix of a y-axis rotation by `theta`.
pub fn y_rotation(theta: WrappedAngle) -> Rotation3 {
    Rotation3::about_y(theta.radians())
}

/// Splits `r` into a y-axis angle and the off-axis deviation.
///
/// Returns `theta = atan2(r[2,0], r[0,0])` and the geodesic distance between
/// `r` and the pure y-rotation by `theta`. For `r = R_y(theta) * B` with `B`
/// a rotation about x or z, the decomposition is exact.
pub fn extract_y_angle(r: &Rotation3) -> (WrappedAngle, f64) {
    let m = r.matrix();
    let theta = m[(2, 0)].atan2(m[(0, 0)]);
    let residual = geodesic_unchecked(r, &Rotation3::about_y(theta));
    (WrappedAngle(wrap_radians(theta)), residual)
}

/// The y-axis angle minimizing the geodesic distance of `r` to the pure
/// y-rotation family, and the attained minimum.
///
/// Unlike [`extract_y_angle`] this is the exact minimizer
/// `atan2(r[2,0] - r[0,2], r[0,0] + r[2,2])`.
pub fn closest_y_rotation(r: &Rotation3) -> (WrappedAngle, f64) {
    let m = r.matrix();
    let theta = (m[(2, 0)] - m[(0, 2)]).atan2(m[(0, 0)] + m[(2, 2)]);
    let residual = geodesic_unchecked(r, &Rotation3::about_y(theta));
    (WrappedAngle(wrap_radians(theta)), residual)
}

/// Converts a rotation to its canonical axis-angle form.
pub fn to_axis_angle(r: &Rotation3) -> AxisAngle {
    // The quaternion route is stable across the whole angle range,
    // including near pi where the antisymmetric part vanishes.
    let q = r.to_quaternion_wxyz();
    let v = Vector3::new(q[1], q[2], q[3]);
    let vn = v.norm();
    if vn < 1e-12 {
        return AxisAngle {
            axis: UnitVector3::z_axis(),
            angle: 0.0,
        };
    }
    // Canonical sign already guarantees w >= 0, hence angle in (0, pi].
    let w = q[0].max(0.0);
    AxisAngle {
        axis: UnitVector3(v / vn),
        angle: 2.0 * vn.atan2(w),
    }
}

/// Rodrigues' formula.
pub fn from_axis_angle(aa: &AxisAngle) -> Rotation3 {
    let k = skew(aa.axis.as_vector());
    let (s, c) = aa.angle.sin_cos();
    let m = Matrix3::identity() + k * s + k * k * (1.0 - c);
    Rotation3::from_matrix_unchecked(m)
}

/// So(3) log map as a rotation vector (axis scaled by angle).
pub fn log_map(r: &Rotation3) -> Vector3<f64> {
    let aa = to_axis_angle(r);
    aa.axis.as_vector() * aa.angle
}

/// So(3) exp map from a rotation vector.
pub fn exp_map(v: &Vector3<f64>) -> Rotation3 {
    let angle = v.norm();
    if angle < 1e-12 {
        // Second-order expansion keeps the result orthonormal to float
        // precision for tiny steps.
        let k = skew(v);
        return Rotation3::from_matrix_unchecked(Matrix3::identity() + k + k * k * 0.5);
    }
    from_axis_angle(&AxisAngle {
        axis: UnitVector3(v / angle),
        angle,
    })
}

#[inline]
pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of the right Jacobian of the SO(3) exp map at rotation vector `r`.
///
/// First-order term of `log(exp(r) exp(d)) = r + Jr^-1(r) d + O(|d|^2)`.
pub fn right_jacobian_inv(r: &Vector3<f64>) -> Matrix3<f64> {
    let theta = r.norm();
    let k = skew(r);
    let coeff = if theta < 1e-5 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() + k * 0.5 + k * k * coeff
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn random_rotation(rng: &mut StdRng) -> Rotation3 {
        crate::synth::random_rotation(rng)
    }

    #[test]
    fn wrap_examples() {
        assert_abs_diff_eq!(
            wrap(3.0 * PI / 2.0).unwrap().radians(),
            -PI / 2.0,
            epsilon = 1e-12
        );
        assert_eq!(wrap(PI).unwrap().radians(), -PI);
        assert_abs_diff_eq!(wrap(-0.1).unwrap().radians(), -0.1, epsilon = 1e-15);
        assert!(wrap(f64::NAN).is_err());
        assert!(wrap(f64::INFINITY).is_err());
    }

    #[test]
    fn geodesic_examples() {
        let i = Rotation3::identity();
        assert_eq!(geodesic_distance(&i, &i).unwrap(), 0.0);
        let r = Rotation3::about_y(0.3);
        assert_abs_diff_eq!(geodesic_distance(&i, &r).unwrap(), 0.3, epsilon = 1e-12);
        let half_turn = Rotation3::about_x(PI);
        assert_abs_diff_eq!(
            geodesic_distance(&half_turn, &i).unwrap(),
            PI,
            epsilon = 1e-12
        );
        // Symmetry.
        assert_abs_diff_eq!(
            geodesic_distance(&r, &half_turn).unwrap(),
            geodesic_distance(&half_turn, &r).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn geodesic_rejects_invalid_rotation() {
        let bad = Rotation3 {
            m: Matrix3::identity() * 1.5,
        };
        assert!(geodesic_distance(&bad, &Rotation3::identity()).is_err());
    }

    #[test]
    fn chordal_examples() {
        let i = Rotation3::identity();
        assert_eq!(chordal_distance(&i, &i), 0.0);
        assert_abs_diff_eq!(
            chordal_distance(&i, &Rotation3::about_y(PI)),
            TWO_SQRT_TWO,
            epsilon = 1e-12
        );
        // Direct Frobenius evaluation against the closed form for theta = 0.5.
        let direct = chordal_distance(&i, &Rotation3::about_x(0.5));
        let closed = TWO_SQRT_TWO * (0.25f64).sin();
        assert_abs_diff_eq!(direct, closed, epsilon = 1e-9);
        assert_abs_diff_eq!(direct, 0.6997640691250939, epsilon = 1e-12);
    }

    #[test]
    fn one_dof_matches_chordal_on_y_rotations() {
        assert_eq!(one_dof_distance(WrappedAngle::zero()), 0.0);
        assert_abs_diff_eq!(
            one_dof_distance(wrap(PI / 2.0).unwrap()),
            2.0,
            epsilon = 1e-12
        );
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let eps = rand::Rng::random_range(&mut rng, -PI..PI);
            let d = one_dof_distance(wrap(eps).unwrap());
            let c = chordal_distance(&Rotation3::about_y(eps), &Rotation3::identity());
            assert_abs_diff_eq!(d, c, epsilon = 1e-9);
        }
    }

    #[test]
    fn gravity_alignment_examples() {
        let u = gravity_alignment(&UnitVector3::y_axis());
        assert_abs_diff_eq!(
            geodesic_unchecked(&u, &Rotation3::identity()),
            0.0,
            epsilon = 1e-12
        );

        let g = UnitVector3::from_components(1.0, 0.0, 0.0).unwrap();
        let u = gravity_alignment(&g);
        let mapped = u.apply(&Vector3::y());
        assert_abs_diff_eq!((mapped - g.as_vector()).norm(), 0.0, epsilon = 1e-12);
        // Minimal rotation: pi/2 about (0, 0, -1).
        let expected = from_axis_angle(&AxisAngle {
            axis: UnitVector3::from_components(0.0, 0.0, -1.0).unwrap(),
            angle: PI / 2.0,
        });
        assert_abs_diff_eq!(geodesic_unchecked(&u, &expected), 0.0, epsilon = 1e-12);

        // Documented antipodal fallback.
        let down = UnitVector3::from_components(0.0, -1.0, 0.0).unwrap();
        let u = gravity_alignment(&down);
        assert_abs_diff_eq!(
            geodesic_unchecked(&u, &Rotation3::about_x(PI)),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn gravity_alignment_reproduces_random_directions() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..1000 {
            let g = crate::synth::random_unit_vector(&mut rng);
            let u = gravity_alignment(&g);
            u.validate().unwrap();
            let mapped = u.apply(&Vector3::y());
            assert!((mapped - g.as_vector()).norm() < 1e-9);
        }
    }

    #[test]
    fn y_rotation_examples() {
        let r = y_rotation(WrappedAngle::zero());
        assert_eq!(r.matrix(), &Matrix3::identity());
        let r = y_rotation(wrap(PI / 2.0).unwrap());
        let expected = Matrix3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        assert!((r.matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn extract_y_angle_examples() {
        let (theta, res) = extract_y_angle(&Rotation3::about_y(1.2));
        assert_abs_diff_eq!(theta.radians(), 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(res, 0.0, epsilon = 1e-7);

        let r = Rotation3::about_y(0.5) * Rotation3::about_x(0.1);
        let (theta, res) = extract_y_angle(&r);
        assert_abs_diff_eq!(theta.radians(), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(res, 0.1, epsilon = 1e-6);

        let (theta, res) = extract_y_angle(&Rotation3::identity());
        assert_eq!(theta.radians(), 0.0);
        assert_eq!(res, 0.0);
    }

    #[test]
    fn closest_y_rotation_is_a_minimizer() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let r = random_rotation(&mut rng);
            let (theta, res) = closest_y_rotation(&r);
            for delta in [-0.01, 0.01, -0.2, 0.2] {
                let other = geodesic_unchecked(&r, &Rotation3::about_y(theta.radians() + delta));
                assert!(res <= other + 1e-12);
            }
        }
    }

    #[test]
    fn axis_angle_examples() {
        let aa = to_axis_angle(&Rotation3::identity());
        assert_eq!(aa.angle, 0.0);
        assert_eq!(aa.axis, UnitVector3::z_axis());

        let r = Rotation3::about_z(PI);
        let aa = to_axis_angle(&r);
        assert_abs_diff_eq!(aa.angle, PI, epsilon = 1e-12);
        assert!((aa.axis.as_vector().z).abs() > 1.0 - 1e-9);
        let back = from_axis_angle(&aa);
        assert!(geodesic_unchecked(&r, &back) < 1e-9);
    }

    #[test]
    fn axis_angle_round_trip_random() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            let aa = to_axis_angle(&r);
            assert!((0.0..=PI).contains(&aa.angle));
            let back = from_axis_angle(&aa);
            assert!(geodesic_unchecked(&r, &back) < 1e-9);
        }
    }

    #[test]
    fn quaternion_round_trip_random() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..200 {
            let r = random_rotation(&mut rng);
            let q = r.to_quaternion_wxyz();
            let back = Rotation3::from_quaternion_wxyz(q, 1e-3).unwrap();
            assert!(geodesic_unchecked(&r, &back) < 1e-12);
        }
        assert!(Rotation3::from_quaternion_wxyz([0.9, 0.0, 0.0, 0.0], 1e-3).is_err());
    }

    #[test]
    fn right_jacobian_inv_matches_series_near_zero() {
        let v = Vector3::new(1e-7, -2e-7, 5e-8);
        let j = right_jacobian_inv(&v);
        assert!((j - Matrix3::identity() - skew(&v) * 0.5).abs().max() < 1e-13);
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_periodic(x in -3.0f64..3.0, k in -3i32..=3) {
            let w = wrap(x).unwrap().radians();
            prop_assert!((-PI..PI).contains(&w));
            let w2 = wrap(w).unwrap().radians();
            prop_assert!((w - w2).abs() < 1e-12);
            let shifted = wrap(x + TAU * k as f64).unwrap().radians();
            prop_assert!((w - shifted).abs() < 1e-9);
        }

        #[test]
        fn y_rotation_group_is_commutative(a in -PI..PI, b in -PI..PI) {
            let lhs = Rotation3::about_y(a) * Rotation3::about_y(b);
            let rhs = Rotation3::about_y(wrap_radians(a + b));
            prop_assert!((lhs.matrix() - rhs.matrix()).abs().max() < 1e-9);
        }

        #[test]
        fn chordal_geodesic_identity(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let a = crate::synth::random_rotation(&mut rng);
            let b = crate::synth::random_rotation(&mut rng);
            let geo = geodesic_distance(&a, &b).unwrap();
            let chord = chordal_distance(&a, &b);
            prop_assert!((chord - TWO_SQRT_TWO * (geo * 0.5).sin()).abs() < 1e-9);
        }
    }
}
