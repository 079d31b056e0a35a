//! Twisted affine transform: scaling, shear, rotation, reflection and a
//! sigmoid-scheduled twist, applied about the key-point centroid.

use serde::{Deserialize, Serialize};

use crate::geom::rotation::{euler, reflection, scaling, shear, twist, twist_angle};
use crate::geom::{Mat3, Vec3};

pub const DEFAULT_RHO_SIG: f64 = 10.0;

pub const SCALE_RANGE: (f64, f64) = (0.5, 2.0);
pub const SHEAR_RANGE: (f64, f64) = (0.0, 1.0);
pub const ANGLE_RANGE: (f64, f64) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);

/// Number of continuous parameters (scaling, shear, rotation).
pub const N_CONTINUOUS: usize = 9;

/// The discrete part of the transform: reflection signs and twist amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteChoice {
    pub r: [f64; 3],
    pub twist: [f64; 2],
}

impl DiscreteChoice {
    pub const IDENTITY: DiscreteChoice = DiscreteChoice { r: [1.0; 3], twist: [0.0; 2] };

    /// All 32 combinations of `r ∈ {−1, 1}³` and twist amplitudes in
    /// `{0, π}²`, in lexicographic order with `+1` and `0` first.
    pub fn all() -> Vec<DiscreteChoice> {
        use std::f64::consts::PI;
        let mut out = Vec::with_capacity(32);
        for rx in [1.0, -1.0] {
            for ry in [1.0, -1.0] {
                for rz in [1.0, -1.0] {
                    for phi_t in [0.0, PI] {
                        for theta_t in [0.0, PI] {
                            out.push(DiscreteChoice { r: [rx, ry, rz], twist: [phi_t, theta_t] });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn has_twist(&self) -> bool {
        self.twist.iter().any(|&t| t != 0.0)
    }
}

/// Parameters of the twisted affine map
/// `p ↦ R_TA(p − μ_init)·(p − μ_init) + μ_goal`, where
/// `R_TA = scaling · shear · rotation · reflection · twist`.
///
/// The twist angles are functions of the centered x and y coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistedAffineParams {
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub s_xy: f64,
    pub s_xz: f64,
    pub s_yz: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub r_x: f64,
    pub r_y: f64,
    pub r_z: f64,
    pub phi_t0: f64,
    pub theta_t0: f64,
    pub rho_sig: f64,
    pub mu_init: Vec3,
    pub mu_goal: Vec3,
}

impl Default for TwistedAffineParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl TwistedAffineParams {
    pub fn identity() -> Self {
        Self::from_parts(&IDENTITY_CONTINUOUS, DiscreteChoice::IDENTITY, DEFAULT_RHO_SIG, Vec3::ZERO, Vec3::ZERO)
    }

    pub fn from_parts(
        a: &[f64; N_CONTINUOUS],
        b: DiscreteChoice,
        rho_sig: f64,
        mu_init: Vec3,
        mu_goal: Vec3,
    ) -> Self {
        Self {
            a_x: a[0],
            a_y: a[1],
            a_z: a[2],
            s_xy: a[3],
            s_xz: a[4],
            s_yz: a[5],
            phi: a[6],
            theta: a[7],
            psi: a[8],
            r_x: b.r[0],
            r_y: b.r[1],
            r_z: b.r[2],
            phi_t0: b.twist[0],
            theta_t0: b.twist[1],
            rho_sig,
            mu_init,
            mu_goal,
        }
    }

    pub fn continuous(&self) -> [f64; N_CONTINUOUS] {
        [self.a_x, self.a_y, self.a_z, self.s_xy, self.s_xz, self.s_yz, self.phi, self.theta, self.psi]
    }

    pub fn discrete(&self) -> DiscreteChoice {
        DiscreteChoice { r: [self.r_x, self.r_y, self.r_z], twist: [self.phi_t0, self.theta_t0] }
    }

    /// `scaling · shear · rotation · reflection`, the position-independent part.
    pub fn linear_part(&self) -> Mat3 {
        scaling(self.a_x, self.a_y, self.a_z)
            * shear(self.s_xy, self.s_xz, self.s_yz)
            * euler(self.phi, self.theta, self.psi)
            * reflection(self.r_x, self.r_y, self.r_z)
    }

    pub fn twist_matrix(&self, centered: Vec3) -> Mat3 {
        twist(
            twist_angle(centered.x, self.phi_t0, self.rho_sig),
            twist_angle(centered.y, self.theta_t0, self.rho_sig),
        )
    }

    /// `R_TA` at a centered position.
    pub fn rotation_factors(&self, centered: Vec3) -> Mat3 {
        self.linear_part() * self.twist_matrix(centered)
    }

    /// `R_TA(p̃)·p̃` for a centered position `p̃`, without the goal anchor.
    #[inline]
    pub fn transform_centered(&self, centered: Vec3) -> Vec3 {
        self.rotation_factors(centered) * centered
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.transform_centered(p - self.mu_init) + self.mu_goal
    }

    /// True when every value lies in its admissible set.
    pub fn in_range(&self) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo - 1e-12 && v <= hi + 1e-12;
        let unit = |v: f64| v == 1.0 || v == -1.0;
        let amp = |v: f64| v == 0.0 || v == std::f64::consts::PI;
        [self.a_x, self.a_y, self.a_z].iter().all(|&v| within(v, SCALE_RANGE))
            && [self.s_xy, self.s_xz, self.s_yz].iter().all(|&v| within(v, SHEAR_RANGE))
            && [self.phi, self.theta, self.psi].iter().all(|&v| within(v, ANGLE_RANGE))
            && [self.r_x, self.r_y, self.r_z].iter().all(|&v| unit(v))
            && amp(self.phi_t0)
            && amp(self.theta_t0)
            && self.rho_sig.is_finite()
    }
}

pub const IDENTITY_CONTINUOUS: [f64; N_CONTINUOUS] = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];

pub fn continuous_bounds() -> ([f64; N_CONTINUOUS], [f64; N_CONTINUOUS]) {
    let (s, h, a) = (SCALE_RANGE, SHEAR_RANGE, ANGLE_RANGE);
    ([s.0, s.0, s.0, h.0, h.0, h.0, a.0, a.0, a.0], [s.1, s.1, s.1, h.1, h.1, h.1, a.1, a.1, a.1])
}

/// `R_TA = R_scaling · R_shear · R_rotation · R_reflection · R_twist` at the
/// centered position `p`.
pub fn make_rotation_factors(params: &TwistedAffineParams, p: Vec3) -> Mat3 {
    params.rotation_factors(p)
}
