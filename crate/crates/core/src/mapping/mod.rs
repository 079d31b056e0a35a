//! Forward evaluation of fitted workspace maps.
//!
//! A [`DiffeoMap`] is an optional twisted affine prefix followed by a chain
//! of RBF composition steps. Position step `j` and orientation step `j`
//! advance together: the weight of orientation step `j` is evaluated at the
//! position produced by the prefix and position steps `1..j`.

mod step;
pub mod twisted;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fitting::FitDiagnostics;
use crate::geom::{Mat3, UnitQuaternion, Vec3};
use crate::{Error, Result};

pub use step::{CompositionStep, StepKind};
pub use twisted::{make_rotation_factors, DiscreteChoice, TwistedAffineParams};

pub const DEFAULT_JACOBIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DIFF")]
    Diff,
    #[serde(rename = "RDIFF")]
    RDiff,
    #[serde(rename = "TADIFF")]
    TaDiff,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Diff, Method::RDiff, Method::TaDiff];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Diff => "DIFF",
            Method::RDiff => "RDIFF",
            Method::TaDiff => "TADIFF",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "diff" => Ok(Method::Diff),
            "rdiff" => Ok(Method::RDiff),
            "tadiff" => Ok(Method::TaDiff),
            other => Err(Error::Config(format!("unknown method '{other}' (expected diff, rdiff or tadiff)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffeoMap {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ta_prefix: Option<TwistedAffineParams>,
    pub position_steps: Vec<CompositionStep>,
    pub orientation_steps: Vec<CompositionStep>,
    /// Pivot orbital steps about their center instead of the origin.
    #[serde(default)]
    pub orbital_about_c3: bool,
    #[serde(default)]
    pub metadata: FitDiagnostics,
}

impl DiffeoMap {
    /// The identity map.
    pub fn empty(method: Method) -> Self {
        Self {
            method,
            ta_prefix: None,
            position_steps: Vec::new(),
            orientation_steps: Vec::new(),
            orbital_about_c3: false,
            metadata: FitDiagnostics::default(),
        }
    }

    /// Number of composition steps `J`.
    pub fn len(&self) -> usize {
        self.position_steps.len().max(self.orientation_steps.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the structural invariants of each method.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Input(format!("{} map: {msg}", self.method)));
        if self.method == Method::TaDiff && self.ta_prefix.is_none() {
            return bad("missing twisted affine prefix");
        }
        if self.method != Method::TaDiff && self.ta_prefix.is_some() {
            return bad("unexpected twisted affine prefix");
        }
        for s in &self.position_steps {
            if !(s.rho >= 0.0 && s.rho.is_finite() && s.c.is_finite() && s.v_translation.is_finite()) {
                return bad("non-finite or negative step parameters");
            }
            match (self.method, s.kind) {
                (_, StepKind::Spin) => return bad("spin step in position chain"),
                (Method::Diff | Method::TaDiff, StepKind::Orbital) => return bad("orbital step outside RDIFF"),
                _ => {}
            }
        }
        if self.orientation_steps.iter().any(|s| s.kind != StepKind::Spin) {
            return bad("orientation chain may only hold spin steps");
        }
        Ok(())
    }

    /// Position after the twisted affine prefix, if any.
    #[inline]
    fn prefix(&self, p: Vec3) -> Vec3 {
        match &self.ta_prefix {
            Some(ta) => ta.apply(p),
            None => p,
        }
    }

    pub fn map_position(&self, p: Vec3) -> Vec3 {
        self.position_steps
            .iter()
            .fold(self.prefix(p), |acc, s| s.apply_position(acc, self.orbital_about_c3))
    }

    pub fn map_orientation(&self, p: Vec3, q: UnitQuaternion) -> UnitQuaternion {
        self.map_pose(p, q).1
    }

    /// Maps a full pose, advancing position and orientation steps jointly.
    pub fn map_pose(&self, p: Vec3, q: UnitQuaternion) -> (Vec3, UnitQuaternion) {
        let mut p = self.prefix(p);
        let mut q = q;
        for j in 0..self.len() {
            if let Some(s) = self.orientation_steps.get(j) {
                q = s.apply_orientation(p, q);
            }
            if let Some(s) = self.position_steps.get(j) {
                p = s.apply_position(p, self.orbital_about_c3);
            }
        }
        (p, q)
    }

    pub fn numerical_jacobian(&self, p: Vec3, h: f64) -> Mat3 {
        central_jacobian(|x| self.map_position(x), p, h)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Input(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let map: DiffeoMap = serde_json::from_str(s).map_err(|e| Error::Input(format!("map JSON: {e}")))?;
        map.validate()?;
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let map: DiffeoMap = crate::io::read_json(path)?;
        map.validate()?;
        Ok(map)
    }
}

pub fn map_position(map: &DiffeoMap, p: Vec3) -> Vec3 {
    map.map_position(p)
}

pub fn map_orientation(map: &DiffeoMap, p: Vec3, q: UnitQuaternion) -> UnitQuaternion {
    map.map_orientation(p, q)
}

pub fn numerical_jacobian(map: &DiffeoMap, p: Vec3, h: f64) -> Mat3 {
    map.numerical_jacobian(p, h)
}

/// Central-difference Jacobian of `f` at `p`; column `j` is `∂f/∂p_j`.
pub fn central_jacobian<F: Fn(Vec3) -> Vec3>(f: F, p: Vec3, h: f64) -> Mat3 {
    let cols = [Vec3::X, Vec3::Y, Vec3::Z].map(|e| (f(p + e * h) - f(p - e * h)) / (2.0 * h));
    Mat3::from_columns(cols[0], cols[1], cols[2])
}

/// Largest singular value, `sqrt(λ_max(mᵀm))`.
pub fn spectral_norm(m: &Mat3) -> f64 {
    let ev = (m.transpose() * *m).symmetric_eigenvalues();
    ev[0].max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn empty_map_is_identity() {
        let m = DiffeoMap::empty(Method::Diff);
        let p = Vec3::new(0.1, 0.2, 0.3);
        let q = UnitQuaternion::rot_y(0.4);
        assert_eq!(m.map_position(p), p);
        assert_eq!(m.map_orientation(p, q), q);
        assert!(m.numerical_jacobian(p, DEFAULT_JACOBIAN_STEP).max_abs_diff(&Mat3::IDENTITY) < 1e-8);
    }

    #[test]
    fn single_steps() {
        let c = Vec3::new(0.5, 0.5, 1.0);
        let v = Vec3::new(0.1, 0.0, -0.2);
        let mut m = DiffeoMap::empty(Method::Diff);
        m.position_steps.push(CompositionStep::translation(4.0, c, v));
        assert_eq!(m.map_position(c), c + v);
        // ∇k(c) = 0, so the Jacobian at the center is exactly I
        assert!(m.numerical_jacobian(c, DEFAULT_JACOBIAN_STEP).max_abs_diff(&Mat3::IDENTITY) < 1e-6);

        let mut m = DiffeoMap::empty(Method::RDiff);
        m.position_steps.push(CompositionStep::orbital(2.0, Vec3::X, UnitQuaternion::rot_z(FRAC_PI_2)));
        assert!((m.map_position(Vec3::X) - Vec3::Y).norm() < 1e-15);

        let mut m = DiffeoMap::empty(Method::Diff);
        let v2 = UnitQuaternion::rot_x(0.7);
        m.orientation_steps.push(CompositionStep::spin(3.0, c, v2));
        let q = UnitQuaternion::rot_z(0.2);
        let out = m.map_orientation(c, q);
        assert!((out * (v2 * q).conj()).angle() < 1e-12);
    }

    #[test]
    fn translation_jacobian_matches_analytic_gradient() {
        let c = Vec3::new(0.1, 0.2, 0.3);
        let v = Vec3::new(0.05, 0.02, -0.03);
        let rho = 6.0;
        let mut m = DiffeoMap::empty(Method::Diff);
        m.position_steps.push(CompositionStep::translation(rho, c, v));
        let p = Vec3::new(0.2, 0.15, 0.35);
        // ∇k = −2ρ²(p − c)k
        let k = (-(rho * rho) * (p - c).norm_squared()).exp();
        let g = (p - c) * (-2.0 * rho * rho * k);
        let mut expected = Mat3::IDENTITY;
        for r in 0..3 {
            for col in 0..3 {
                expected.m[r][col] += v[r] * g[col];
            }
        }
        assert!(m.numerical_jacobian(p, DEFAULT_JACOBIAN_STEP).max_abs_diff(&expected) < 1e-6);
    }

    #[test]
    fn affine_prefix_has_constant_jacobian() {
        let mut ta = TwistedAffineParams::identity();
        ta.a_x = 1.3;
        ta.a_y = 0.8;
        ta.s_xy = 0.4;
        ta.theta = -0.5;
        ta.r_z = -1.0;
        ta.mu_init = Vec3::new(0.3, 0.3, 0.3);
        ta.mu_goal = Vec3::new(0.5, 0.1, 0.9);
        let mut m = DiffeoMap::empty(Method::TaDiff);
        m.ta_prefix = Some(ta);
        let lin = ta.linear_part();
        for p in [Vec3::ZERO, Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.3, 0.3, 0.3)] {
            assert!(m.numerical_jacobian(p, DEFAULT_JACOBIAN_STEP).max_abs_diff(&lin) < 1e-6);
        }
    }

    #[test]
    fn spectral_norm_basics() {
        assert!((spectral_norm(&Mat3::IDENTITY) - 1.0).abs() < 1e-15);
        assert!((spectral_norm(&Mat3::diag(2.0, 0.5, 1.0)) - 2.0).abs() < 1e-15);
        assert!((spectral_norm(&Mat3::diag(-3.0, 0.5, 1.0)) - 3.0).abs() < 1e-15);
        assert_eq!(spectral_norm(&Mat3::ZERO), 0.0);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("tadiff".parse::<Method>().unwrap(), Method::TaDiff);
        assert_eq!("R-DIFF".parse::<Method>().unwrap(), Method::RDiff);
        assert!("affine".parse::<Method>().is_err());
    }

    #[test]
    fn validate_rejects_malformed_maps() {
        let mut m = DiffeoMap::empty(Method::TaDiff);
        assert!(m.validate().is_err());
        m.ta_prefix = Some(TwistedAffineParams::identity());
        assert!(m.validate().is_ok());
        m.position_steps.push(CompositionStep::orbital(1.0, Vec3::X, UnitQuaternion::rot_z(0.1)));
        assert!(m.validate().is_err());
    }
}
