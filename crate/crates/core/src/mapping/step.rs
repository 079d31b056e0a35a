use serde::{Deserialize, Serialize};

use crate::geom::{kernel, PureQuaternion, UnitQuaternion, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    /// `p ↦ p + k(p)·v`
    Translation,
    /// `q ↦ v^k(p) ⊗ q`; leaves positions untouched.
    Spin,
    /// `p ↦ v^k(p) · p · v̄^k(p) + k(p)·v_translation`
    Orbital,
}

/// One RBF-weighted composition step, weighted by `k(p) = exp(−ρ²‖p − c‖²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionStep {
    pub kind: StepKind,
    pub rho: f64,
    pub c: Vec3,
    #[serde(default)]
    pub v_translation: Vec3,
    #[serde(default)]
    pub v_rotation: UnitQuaternion,
}

impl CompositionStep {
    pub fn translation(rho: f64, c: Vec3, v: Vec3) -> Self {
        Self { kind: StepKind::Translation, rho, c, v_translation: v, v_rotation: UnitQuaternion::IDENTITY }
    }

    pub fn spin(rho: f64, c: Vec3, v: UnitQuaternion) -> Self {
        Self { kind: StepKind::Spin, rho, c, v_translation: Vec3::ZERO, v_rotation: v }
    }

    pub fn orbital(rho: f64, c: Vec3, v: UnitQuaternion) -> Self {
        Self { kind: StepKind::Orbital, rho, c, v_translation: Vec3::ZERO, v_rotation: v }
    }

    /// A translation step with zero displacement.
    pub fn null_translation() -> Self {
        Self::translation(0.0, Vec3::ZERO, Vec3::ZERO)
    }

    /// A spin step with the null rotation.
    pub fn null_spin() -> Self {
        Self::spin(0.0, Vec3::ZERO, UnitQuaternion::IDENTITY)
    }

    /// True when the step is the identity map.
    pub fn is_null(&self) -> bool {
        self.v_translation == Vec3::ZERO && self.v_rotation.canonical() == UnitQuaternion::IDENTITY
    }

    #[inline]
    pub fn weight(&self, p: Vec3) -> f64 {
        kernel(p, self.rho, self.c)
    }

    /// Position update. `about_center` moves the orbital pivot from the
    /// coordinate origin to `c`.
    pub fn apply_position(&self, p: Vec3, about_center: bool) -> Vec3 {
        match self.kind {
            StepKind::Spin => p,
            StepKind::Translation => p + self.v_translation * self.weight(p),
            StepKind::Orbital => {
                let k = self.weight(p);
                let r = self.v_rotation.powf(k);
                let pivot = if about_center { self.c } else { Vec3::ZERO };
                let rotated: Vec3 = r.sandwich(PureQuaternion::from(p - pivot)).into();
                rotated + pivot + self.v_translation * k
            }
        }
    }

    /// Orientation update, with the weight evaluated at `p`.
    pub fn apply_orientation(&self, p: Vec3, q: UnitQuaternion) -> UnitQuaternion {
        match self.kind {
            StepKind::Spin => self.v_rotation.powf(self.weight(p)) * q,
            _ => q,
        }
    }
}
