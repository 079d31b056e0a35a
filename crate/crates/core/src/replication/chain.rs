//! Revolute serial chains and regularized least-squares velocity IK.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geom::{UnitQuaternion, Vec3};
use crate::{Error, Result};

use super::{Pose, Twist};

const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    /// Rotation axis in the joint's own frame.
    pub axis: Vec3,
    /// Offset from the previous joint frame (or the base) to this joint [m].
    pub origin: Vec3,
}

/// A chain of revolute joints. The end effector sits at `tool` in the frame
/// of the last joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerialChain {
    pub base: Vec3,
    pub joints: Vec<Joint>,
    pub tool: Vec3,
    pub angles: Vec<f64>,
}

impl SerialChain {
    pub fn new(base: Vec3, joints: Vec<Joint>, tool: Vec3, angles: Vec<f64>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Config("serial chain needs at least one joint".into()));
        }
        if angles.len() != joints.len() {
            return Err(Error::Config(format!("{} joint angles for {} joints", angles.len(), joints.len())));
        }
        let joints = joints
            .into_iter()
            .map(|j| {
                let axis = j.axis.try_normalize(1e-12).ok_or_else(|| Error::Config("zero joint axis".into()))?;
                Ok(Joint { axis, origin: j.origin })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { base, joints, tool, angles })
    }

    /// Six revolute joints in a yaw, shoulder, elbow, wrist-roll,
    /// wrist-pitch, flange-roll arrangement, roughly 1.3 m tall when
    /// stretched, posed away from the straight-arm singularity.
    pub fn elbow_manipulator(base: Vec3) -> Self {
        let joint = |axis: Vec3, origin: Vec3| Joint { axis, origin };
        let joints = vec![
            joint(Vec3::Z, Vec3::ZERO),
            joint(Vec3::Y, Vec3::new(0.0, 0.0, 0.35)),
            joint(Vec3::Y, Vec3::new(0.0, 0.0, 0.45)),
            joint(Vec3::Z, Vec3::new(0.0, 0.0, 0.40)),
            joint(Vec3::Y, Vec3::ZERO),
            joint(Vec3::Z, Vec3::new(0.0, 0.0, 0.10)),
        ];
        Self { base, joints, tool: Vec3::new(0.0, 0.0, 0.05), angles: vec![0.0, 0.5, 1.0, 0.0, 0.8, 0.0] }
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn forward_kinematics_at(&self, angles: &[f64]) -> Pose {
        let (mut p, mut q) = (self.base, UnitQuaternion::IDENTITY);
        for (j, &theta) in self.joints.iter().zip(angles) {
            p += q.rotate(j.origin);
            q = q * UnitQuaternion::from_axis_angle(j.axis, theta);
        }
        Pose::new(p + q.rotate(self.tool), q)
    }

    pub fn forward_kinematics(&self) -> Pose {
        self.forward_kinematics_at(&self.angles)
    }

    /// Central-difference geometric Jacobian, 6×n: linear rows on top,
    /// angular (world-frame rotation vector) rows below.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let n = self.dof();
        let mut jac = DMatrix::zeros(6, n);
        for i in 0..n {
            let mut plus = self.angles.clone();
            let mut minus = self.angles.clone();
            plus[i] += JACOBIAN_STEP;
            minus[i] -= JACOBIAN_STEP;
            let (a, b) = (self.forward_kinematics_at(&plus), self.forward_kinematics_at(&minus));
            let lin = (a.position - b.position) / (2.0 * JACOBIAN_STEP);
            let ang = (a.orientation * b.orientation.conj()).log() * (2.0 / (2.0 * JACOBIAN_STEP));
            for r in 0..3 {
                jac[(r, i)] = lin[r];
                jac[(r + 3, i)] = ang[r];
            }
        }
        jac
    }

    /// Joint velocities tracking `twist` at the current configuration.
    pub fn resolve_ik(&self, twist: &Twist, lambda: f64) -> DVector<f64> {
        resolve_ik(&self.jacobian(), &twist.to_vector(), lambda)
    }
}

/// Minimizer of `‖J·θ̇ − ẋ‖² + λ‖θ̇‖²`, i.e. `θ̇ = (JᵀJ + λI)⁻¹Jᵀẋ`.
pub fn resolve_ik(jacobian: &DMatrix<f64>, xdot: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = jacobian.ncols();
    let normal = jacobian.transpose() * jacobian + DMatrix::identity(n, n) * lambda;
    let rhs = jacobian.transpose() * xdot;
    match normal.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        // only reachable with λ ≤ 0 and a rank-deficient Jacobian
        None => normal.svd(true, true).solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(j: &DMatrix<f64>, x: &DVector<f64>, t: &DVector<f64>) -> f64 {
        (j * t - x).norm_squared() + t.norm_squared()
    }

    #[test]
    fn zero_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let j = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        assert_eq!(resolve_ik(&j, &DVector::zeros(6), 1.0).norm(), 0.0);
        let x = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        assert_eq!(resolve_ik(&DMatrix::zeros(6, 6), &x, 1.0).norm(), 0.0);
    }

    #[test]
    fn beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let j = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0)) + DMatrix::identity(6, 6) * 2.0;
        let x = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let t = resolve_ik(&j, &x, 1.0);
        let best = objective(&j, &x, &t);
        for _ in 0..2000 {
            let d = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let d = d.normalize() * rng.gen_range(0.0..0.1);
            assert!(best <= objective(&j, &x, &(&t + d)));
        }
    }

    #[test]
    fn fk_of_zero_pose_is_stacked_offsets() {
        let mut c = SerialChain::elbow_manipulator(Vec3::new(1.0, 0.0, 0.0));
        c.angles = vec![0.0; 6];
        let p = c.forward_kinematics();
        assert!((p.position - Vec3::new(1.0, 0.0, 1.35)).norm() < 1e-12);
        assert!(p.orientation.angle() < 1e-12);
    }

    #[test]
    fn jacobian_predicts_motion() {
        let c = SerialChain::elbow_manipulator(Vec3::ZERO);
        let j = c.jacobian();
        let dq = DVector::from_vec(vec![0.01, -0.02, 0.015, 0.01, 0.02, -0.01]);
        let moved: Vec<f64> = c.angles.iter().zip(dq.iter()).map(|(a, b)| a + b).collect();
        let dp = c.forward_kinematics_at(&moved).position - c.forward_kinematics().position;
        let predicted = &j * &dq;
        for r in 0..3 {
            assert!((dp[r] - predicted[r]).abs() < 1e-3);
        }
    }

    #[test]
    fn construction_checks() {
        assert!(SerialChain::new(Vec3::ZERO, vec![], Vec3::ZERO, vec![]).is_err());
        let j = Joint { axis: Vec3::ZERO, origin: Vec3::ZERO };
        assert!(SerialChain::new(Vec3::ZERO, vec![j], Vec3::ZERO, vec![0.0]).is_err());
        let j = Joint { axis: Vec3::new(0.0, 0.0, 2.0), origin: Vec3::ZERO };
        let c = SerialChain::new(Vec3::ZERO, vec![j], Vec3::X, vec![0.0]).unwrap();
        assert_eq!(c.joints[0].axis, Vec3::Z);
        assert!(SerialChain::new(Vec3::ZERO, vec![j], Vec3::X, vec![]).is_err());
    }
}
