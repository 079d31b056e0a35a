//! Unit quaternions with a half-angle logarithm.
//!
//! `log(q)` returns `(θ/2)·axis` for a rotation of angle `θ` about `axis`, so
//! its norm lies in `[0, π/2]`. Before taking a logarithm or a power the
//! quaternion is flipped onto the `w ≥ 0` hemisphere, keeping every
//! interpolation on the short arc.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use super::Vec3;

/// Below this vector-part norm the series branches of `log`/`exp` are used.
const SMALL_ANGLE: f64 = 1e-8;

/// A rotation stored as a unit quaternion `w + xi + yj + zk`.
/// Serialized as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A quaternion with zero scalar part, used to embed a point for the sandwich
/// product `q · p · q̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureQuaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<Vec3> for PureQuaternion {
    fn from(v: Vec3) -> Self {
        Self { x: v.x, y: v.y, z: v.z }
    }
}

impl From<PureQuaternion> for Vec3 {
    fn from(p: PureQuaternion) -> Self {
        Vec3::new(p.x, p.y, p.z)
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion from raw components and normalizes it.
    /// A zero quaternion maps to the identity.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n > 0.0 && n.is_finite() {
            Self { w: w / n, x: x / n, y: y / n, z: z / n }
        } else {
            Self::IDENTITY
        }
    }

    /// Rotation of `angle` radians about `axis`. A zero axis yields the identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.try_normalize(1e-15) {
            Some(a) => {
                let (s, c) = (0.5 * angle).sin_cos();
                Self::new_normalize(c, a.x * s, a.y * s, a.z * s)
            }
            None => Self::IDENTITY,
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::X, angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::Y, angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::Z, angle)
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conj(self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Same rotation, flipped so that `w ≥ 0`.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> f64 {
        2.0 * self.log().norm()
    }

    /// Half-angle rotation vector `(θ/2)·axis`, norm in `[0, π/2]`.
    pub fn log(self) -> Vec3 {
        let q = self.canonical();
        let v = q.vector();
        let s = v.norm();
        if s < SMALL_ANGLE {
            // atan2(s, w)/s → 1/w as s → 0
            v / q.w.max(f64::MIN_POSITIVE)
        } else {
            v * (s.atan2(q.w) / s)
        }
    }

    /// Inverse of [`log`](Self::log): `exp(v) = cos‖v‖ + sin‖v‖·v/‖v‖`.
    pub fn exp(v: Vec3) -> Self {
        let t = v.norm();
        let sinc = if t < SMALL_ANGLE { 1.0 - t * t / 6.0 } else { t.sin() / t };
        Self::new_normalize(t.cos(), v.x * sinc, v.y * sinc, v.z * sinc)
    }

    /// `exp(t·log(self))`: the rotation scaled to `t` times its angle.
    pub fn powf(self, t: f64) -> Self {
        Self::exp(self.log() * t)
    }

    /// Rotates a vector: `q · v · q̄`.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.sandwich(PureQuaternion::from(v)).into()
    }

    /// The sandwich product `q · p · q̄` of a pure quaternion.
    pub fn sandwich(self, p: PureQuaternion) -> PureQuaternion {
        // t = 2 (u × p); p' = p + w t + u × t
        let u = self.vector();
        let pv = Vec3::new(p.x, p.y, p.z);
        let t = u.cross(pv) * 2.0;
        let r = pv + t * self.w + u.cross(t);
        PureQuaternion { x: r.x, y: r.y, z: r.z }
    }

    /// Minimal rotation carrying direction `from` onto direction `to`.
    ///
    /// Returns `None` if either vector is (near) zero. For antiparallel inputs
    /// the axis is `from × x̂`, or `from × ŷ` when that vanishes.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Option<Self> {
        let a = from.try_normalize(1e-9)?;
        let b = to.try_normalize(1e-9)?;
        let d = a.dot(b);
        if d < -1.0 + 1e-12 {
            let axis = a
                .cross(Vec3::X)
                .try_normalize(1e-6)
                .or_else(|| a.cross(Vec3::Y).try_normalize(1e-6))?;
            return Some(Self::from_axis_angle(axis, std::f64::consts::PI));
        }
        let c = a.cross(b);
        Some(Self::new_normalize(1.0 + d, c.x, c.y, c.z))
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> super::Mat3 {
        let UnitQuaternion { w, x, y, z } = self;
        super::Mat3::from_rows([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

/// Components already unit-norm to 1e-12 are kept bit-exact so that
/// serialized quaternions round-trip; anything else is normalized.
impl From<[f64; 4]> for UnitQuaternion {
    fn from(a: [f64; 4]) -> Self {
        let n2 = a.iter().map(|v| v * v).sum::<f64>();
        if (n2 - 1.0).abs() <= 1e-12 {
            Self { w: a[0], x: a[1], y: a[2], z: a[3] }
        } else {
            Self::new_normalize(a[0], a[1], a[2], a[3])
        }
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

/// Hamilton product, renormalized.
impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, r: UnitQuaternion) -> UnitQuaternion {
        let (a, b, c, d) = (self.w, self.x, self.y, self.z);
        let (e, f, g, h) = (r.w, r.x, r.y, r.z);
        UnitQuaternion::new_normalize(
            a * e - b * f - c * g - d * h,
            a * f + b * e + c * h - d * g,
            a * g - b * h + c * e + d * f,
            a * h + b * g - c * f + d * e,
        )
    }
}

pub fn quat_log(q: UnitQuaternion) -> Vec3 {
    q.log()
}

pub fn quat_exp(v: Vec3) -> UnitQuaternion {
    UnitQuaternion::exp(v)
}

pub fn quat_pow(v: UnitQuaternion, t: f64) -> UnitQuaternion {
    v.powf(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuaternion {
        loop {
            let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let n2: f64 = v.iter().map(|a| a * a).sum();
            if n2 > 1e-3 && n2 < 1.0 {
                return UnitQuaternion::new_normalize(v[0], v[1], v[2], v[3]);
            }
        }
    }

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn same_rotation(a: UnitQuaternion, b: UnitQuaternion, tol: f64) -> bool {
        let d = (a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z).abs();
        1.0 - d < tol
    }

    #[test]
    fn log_of_identity_and_quarter_turn() {
        assert_eq!(quat_log(UnitQuaternion::IDENTITY), Vec3::ZERO);
        assert!(close(quat_log(UnitQuaternion::rot_z(FRAC_PI_2)), Vec3::new(0.0, 0.0, FRAC_PI_4), 1e-15));
    }

    #[test]
    fn log_norm_matches_acos_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = random_quat(&mut rng);
            let oracle = q.w.abs().acos();
            assert!((quat_log(q).norm() - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn log_is_finite_near_half_turn() {
        for eps in [0.0, 1e-17, 1e-12, 1e-6] {
            let q = UnitQuaternion::new_normalize(eps, 0.0, 0.0, 1.0);
            let l = quat_log(q);
            assert!(l.is_finite());
            assert!((l.norm() - FRAC_PI_2).abs() < 1e-5);
            let q = UnitQuaternion::new_normalize(-eps, 0.0, 1.0, 0.0);
            assert!(quat_log(q).is_finite());
        }
        // -identity is the identity rotation
        let minus_one = UnitQuaternion { w: -1.0, x: 0.0, y: 0.0, z: 0.0 };
        assert_eq!(quat_log(minus_one), Vec3::ZERO);
    }

    #[test]
    fn exp_basics() {
        assert_eq!(quat_exp(Vec3::ZERO), UnitQuaternion::IDENTITY);
        let q = quat_exp(Vec3::new(0.0, 0.0, FRAC_PI_4));
        assert!(same_rotation(q, UnitQuaternion::rot_z(FRAC_PI_2), 1e-15));
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q = random_quat(&mut rng).canonical();
            let r = quat_exp(quat_log(q));
            let err = ((r.w - q.w).powi(2) + (r.x - q.x).powi(2) + (r.y - q.y).powi(2) + (r.z - q.z).powi(2)).sqrt();
            assert!(err < 1e-9, "round trip error {err}");
        }
    }

    #[test]
    fn pow_endpoints_and_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v = random_quat(&mut rng);
            assert!(same_rotation(quat_pow(v, 0.0), UnitQuaternion::IDENTITY, 1e-15));
            assert!(same_rotation(quat_pow(v, 1.0), v, 1e-12));
            let a: f64 = rng.gen_range(0.0..0.5);
            let b: f64 = rng.gen_range(0.0..0.5);
            let lhs = quat_pow(v, a) * quat_pow(v, b);
            let rhs = quat_pow(v, a + b);
            let diff = (lhs.w - rhs.w).abs() + (lhs.vector() - rhs.vector()).norm();
            assert!(diff < 1e-9);
            let t: f64 = rng.gen_range(0.0..=1.0);
            assert!((quat_pow(v, t).angle() - t * v.angle()).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_between_cases() {
        let r = UnitQuaternion::rotation_between(Vec3::X, Vec3::Y).unwrap();
        assert!(same_rotation(r, UnitQuaternion::rot_z(FRAC_PI_2), 1e-15));
        let r = UnitQuaternion::rotation_between(Vec3::X, Vec3::X * 3.0).unwrap();
        assert!(same_rotation(r, UnitQuaternion::IDENTITY, 1e-15));
        // antiparallel: axis from x̂ × x̂ vanishes, falls back to x̂ × ŷ = ẑ
        let r = UnitQuaternion::rotation_between(Vec3::X, -Vec3::X).unwrap();
        assert!((r.angle() - PI).abs() < 1e-12);
        assert!(close(r.rotate(Vec3::X), -Vec3::X, 1e-12));
        assert!(close(r.vector(), Vec3::Z, 1e-12) || close(r.vector(), -Vec3::Z, 1e-12));
        let r = UnitQuaternion::rotation_between(Vec3::Y, -Vec3::Y).unwrap();
        assert!(close(r.rotate(Vec3::Y), -Vec3::Y, 1e-12));
        assert!(UnitQuaternion::rotation_between(Vec3::ZERO, Vec3::Y).is_none());
    }

    #[test]
    fn matrix_agrees_with_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let q = random_quat(&mut rng);
            let v = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            assert!(close(q.to_matrix() * v, q.rotate(v), 1e-12));
        }
    }

    #[test]
    fn products_stay_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut acc = UnitQuaternion::IDENTITY;
        for _ in 0..10_000 {
            acc = acc * random_quat(&mut rng);
            assert!((acc.norm() - 1.0).abs() < 1e-9);
        }
    }
}
