//! Parameter optimization for the three mapping families.
//!
//! * [`fit_diff`]: greedy RBF composition with translation and spin steps.
//! * [`fit_rdiff`]: adds orbital steps that rotate key points about the origin.
//! * [`fit_tadiff`]: twisted affine prefix followed by a translation/spin refinement.

mod affine;
mod greedy;
pub mod optim;
mod rho;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geom::{UnitQuaternion, Vec3};
use crate::mapping::{DiffeoMap, Method};
use crate::{Error, Result};

pub use affine::{fit_tadiff, fit_twisted_affine, twisted_affine_cost, TwistedAffineFit};
pub use greedy::{fit_diff, fit_rdiff};
pub use rho::{optimize_rho, translation_rho_limit, RhoGrid, BOUND_SAFETY, DIFFEO_BOUND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyPoint {
    pub id: String,
    pub position: Vec3,
    #[serde(default)]
    pub orientation: UnitQuaternion,
}

impl KeyPoint {
    pub fn new(id: impl Into<String>, position: Vec3) -> Self {
        Self { id: id.into(), position, orientation: UnitQuaternion::IDENTITY }
    }

    pub fn with_orientation(mut self, q: UnitQuaternion) -> Self {
        self.orientation = q;
        self
    }
}

/// Ordered key points of one workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<KeyPoint>", into = "Vec<KeyPoint>")]
pub struct KeyPointSet {
    points: Vec<KeyPoint>,
}

impl TryFrom<Vec<KeyPoint>> for KeyPointSet {
    type Error = Error;
    fn try_from(points: Vec<KeyPoint>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<KeyPointSet> for Vec<KeyPoint> {
    fn from(s: KeyPointSet) -> Self {
        s.points
    }
}

impl KeyPointSet {
    pub fn new(points: Vec<KeyPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("key point set is empty".into()));
        }
        let mut seen = HashSet::new();
        for p in &points {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Input(format!("duplicate key point id '{}'", p.id)));
            }
            if !p.position.is_finite() || !p.orientation.is_finite() {
                return Err(Error::Input(format!("key point '{}' is not finite", p.id)));
            }
        }
        Ok(Self { points })
    }

    /// Key points with ids `"1"`, `"2"`, … and identity orientations.
    pub fn from_positions(positions: &[Vec3]) -> Result<Self> {
        Self::new(positions.iter().enumerate().map(|(i, &p)| KeyPoint::new((i + 1).to_string(), p)).collect())
    }

    pub fn points(&self) -> &[KeyPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn orientations(&self) -> Vec<UnitQuaternion> {
        self.points.iter().map(|p| p.orientation).collect()
    }

    pub fn centroid(&self) -> Vec3 {
        Vec3::centroid(self.points.iter().map(|p| p.position)).unwrap_or_default()
    }

    /// Axis-aligned bounding box of the positions.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        bounding_box(&self.positions())
    }

    /// Copy with every position and orientation replaced.
    pub fn with_poses(&self, positions: &[Vec3], orientations: &[UnitQuaternion]) -> Result<Self> {
        let points = self
            .points
            .iter()
            .zip(positions.iter().zip(orientations))
            .map(|(kp, (&p, &q))| KeyPoint { id: kp.id.clone(), position: p, orientation: q })
            .collect();
        Self::new(points)
    }

    /// Fails unless both sets list the same ids in the same order.
    pub fn check_aligned(&self, other: &KeyPointSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Config(format!("key point count mismatch: {} vs {}", self.len(), other.len())));
        }
        for (a, b) in self.points.iter().zip(&other.points) {
            if a.id != b.id {
                return Err(Error::Config(format!("key point ids not aligned: '{}' vs '{}'", a.id, b.id)));
            }
        }
        Ok(())
    }
}

pub(crate) fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let lo = points.iter().fold(Vec3::splat(f64::INFINITY), |a, &p| a.min(p));
    let hi = points.iter().fold(Vec3::splat(f64::NEG_INFINITY), |a, &p| a.max(p));
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Stop once the mean key-point error falls below this [m].
    pub position_threshold: f64,
    /// Stop once the mean half-angle orientation error falls below this [rad].
    pub orientation_threshold: f64,
    pub j_max: usize,
    pub rho_grid: RhoGrid,
    /// Perturbed restarts per discrete choice, on top of the identity start.
    pub ta_restarts: usize,
    pub rho_sig: f64,
    pub seed: u64,
    pub orbital_about_c3: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            position_threshold: 0.005,
            orientation_threshold: 0.01,
            j_max: 100,
            rho_grid: RhoGrid::default(),
            ta_restarts: 3,
            rho_sig: crate::mapping::twisted::DEFAULT_RHO_SIG,
            seed: 0,
            orbital_about_c3: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.position_threshold > 0.0 && self.orientation_threshold > 0.0) {
            return Err(Error::Config("thresholds must be positive".into()));
        }
        if self.j_max < 1 {
            return Err(Error::Config("j_max must be at least 1".into()));
        }
        if !(self.rho_sig.is_finite() && self.rho_sig > 0.0) {
            return Err(Error::Config("rho_sig must be positive".into()));
        }
        self.rho_grid.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitDiagnostics {
    /// Number of composition steps `J`.
    pub iterations: usize,
    pub final_position_cost: f64,
    pub final_orientation_cost: f64,
    pub converged: bool,
    /// Mean position error before the first step, then after each step.
    pub per_iteration_costs: Vec<f64>,
    /// The fit stopped early because no candidate step reduced the error.
    pub stalled: bool,
    /// Residual of the twisted affine prefix (TA-DIFF only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ta_residual: Option<f64>,
}

/// Fits a map of the requested family.
pub fn fit(method: Method, inits: &KeyPointSet, goals: &KeyPointSet, cfg: &FitConfig) -> Result<(DiffeoMap, FitDiagnostics)> {
    match method {
        Method::Diff => fit_diff(inits, goals, cfg),
        Method::RDiff => fit_rdiff(inits, goals, cfg),
        Method::TaDiff => fit_tadiff(inits, goals, cfg),
    }
}

/// Mean Euclidean key-point error.
pub fn cost_position(current: &KeyPointSet, goals: &KeyPointSet) -> Result<f64> {
    current.check_aligned(goals)?;
    Ok(mean_position_error(&current.positions(), &goals.positions()))
}

/// Mean half-angle logarithm norm of `q_goal ⊗ q̄`.
pub fn cost_orientation(current: &KeyPointSet, goals: &KeyPointSet) -> Result<f64> {
    current.check_aligned(goals)?;
    Ok(mean_orientation_error(&current.orientations(), &goals.orientations()))
}

pub(crate) fn mean_position_error(points: &[Vec3], goals: &[Vec3]) -> f64 {
    points.iter().zip(goals).map(|(&p, &g)| (g - p).norm()).sum::<f64>() / points.len() as f64
}

pub(crate) fn orientation_error(q: UnitQuaternion, goal: UnitQuaternion) -> f64 {
    (goal * q.conj()).log().norm()
}

pub(crate) fn mean_orientation_error(qs: &[UnitQuaternion], goals: &[UnitQuaternion]) -> f64 {
    qs.iter().zip(goals).map(|(&q, &g)| orientation_error(q, g)).sum::<f64>() / qs.len() as f64
}

/// Orbital rotations `r_k` carrying each goal direction onto the current
/// direction, both taken from the origin. Goal orbital rotations are the
/// identity, so `r̄_k` turns point `k` toward its goal direction. Points at
/// the origin get the identity.
pub fn derive_orbital(current: &KeyPointSet, goals: &KeyPointSet) -> Result<Vec<UnitQuaternion>> {
    current.check_aligned(goals)?;
    Ok(orbital_rotations(&current.positions(), &goals.positions()))
}

pub(crate) fn orbital_rotations(current: &[Vec3], goals: &[Vec3]) -> Vec<UnitQuaternion> {
    current
        .iter()
        .zip(goals)
        .map(|(&p, &g)| UnitQuaternion::rotation_between(g, p).unwrap_or(UnitQuaternion::IDENTITY))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn set(ps: &[Vec3]) -> KeyPointSet {
        KeyPointSet::from_positions(ps).unwrap()
    }

    #[test]
    fn key_point_set_validation() {
        assert!(KeyPointSet::new(vec![]).is_err());
        let dup = vec![KeyPoint::new("a", Vec3::ZERO), KeyPoint::new("a", Vec3::X)];
        assert!(KeyPointSet::new(dup).is_err());
        assert!(KeyPointSet::new(vec![KeyPoint::new("a", Vec3::new(f64::NAN, 0.0, 0.0))]).is_err());
        let a = set(&[Vec3::ZERO, Vec3::X]);
        let b = set(&[Vec3::ZERO]);
        assert!(a.check_aligned(&b).is_err());
        assert!(cost_position(&a, &b).is_err());
    }

    #[test]
    fn position_cost_cases() {
        let ps = [Vec3::ZERO, Vec3::X, Vec3::new(0.2, 0.3, 0.4)];
        assert_eq!(cost_position(&set(&ps), &set(&ps)).unwrap(), 0.0);
        let shifted: Vec<Vec3> = ps.iter().map(|&p| p + Vec3::new(0.1, 0.0, 0.0)).collect();
        assert!((cost_position(&set(&ps), &set(&shifted)).unwrap() - 0.1).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<Vec3> = (0..4).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let b: Vec<Vec3> = (0..4).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let mut oracle = 0.0;
        for k in 0..4 {
            let d = [a[k].x - b[k].x, a[k].y - b[k].y, a[k].z - b[k].z];
            oracle += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        }
        oracle /= 4.0;
        assert!((cost_position(&set(&a), &set(&b)).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn orientation_cost_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<KeyPoint> = (0..5)
            .map(|i| {
                KeyPoint::new(i.to_string(), Vec3::ZERO)
                    .with_orientation(UnitQuaternion::from_axis_angle(Vec3::new(rng.gen(), rng.gen(), rng.gen()), rng.gen_range(-3.0..3.0)))
            })
            .collect();
        let init = KeyPointSet::new(pts.clone()).unwrap();
        assert!(cost_orientation(&init, &init).unwrap() < 1e-15);
        let rotated: Vec<KeyPoint> = pts
            .iter()
            .map(|kp| kp.clone().with_orientation(UnitQuaternion::rot_z(FRAC_PI_2) * kp.orientation))
            .collect();
        let goal = KeyPointSet::new(rotated).unwrap();
        assert!((cost_orientation(&init, &goal).unwrap() - FRAC_PI_4).abs() < 1e-12);

        // per-point angle oracle: half angle = acos|⟨a,b⟩|
        let other: Vec<KeyPoint> = pts
            .iter()
            .map(|kp| kp.clone().with_orientation(UnitQuaternion::from_axis_angle(Vec3::new(rng.gen(), rng.gen(), rng.gen()), rng.gen_range(-3.0..3.0))))
            .collect();
        let other = KeyPointSet::new(other).unwrap();
        let oracle: f64 = init
            .orientations()
            .iter()
            .zip(other.orientations())
            .map(|(a, b)| {
                let d = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
                d.abs().min(1.0).acos()
            })
            .sum::<f64>()
            / 5.0;
        assert!((cost_orientation(&init, &other).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn orbital_rotation_conventions() {
        let r = orbital_rotations(&[Vec3::X], &[Vec3::X * 2.0]);
        assert!(r[0].angle() < 1e-15);
        // current (0,1,0), goal (1,0,0): carries goal onto current, rot_z(+π/2)
        let r = orbital_rotations(&[Vec3::Y], &[Vec3::X])[0];
        assert!((r * UnitQuaternion::rot_z(FRAC_PI_2).conj()).angle() < 1e-12);
        assert!((r.conj().rotate(Vec3::Y) - Vec3::X).norm() < 1e-12);
        // antiparallel: angle π, axis from goal × x̂ (fallback goal × ŷ)
        let r = orbital_rotations(&[-Vec3::Z], &[Vec3::Z])[0];
        assert!((r.angle() - PI).abs() < 1e-12);
        assert!((r.vector().normalize_or_zero() - Vec3::Z.cross(Vec3::X)).norm() < 1e-12);
        // a point at the origin has no direction
        let r = orbital_rotations(&[Vec3::ZERO], &[Vec3::X])[0];
        assert_eq!(r, UnitQuaternion::IDENTITY);
    }

    trait NormalizeOrZero {
        fn normalize_or_zero(self) -> Vec3;
    }
    impl NormalizeOrZero for Vec3 {
        fn normalize_or_zero(self) -> Vec3 {
            self.try_normalize(1e-15).unwrap_or_default()
        }
    }
}
