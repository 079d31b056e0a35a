//! Follower simulation: a primary trajectory is pushed through a fitted map
//! and a follower tracks the mapped poses with a proportional controller.
//!
//! In point mode the commanded twist is integrated directly. In chain mode
//! it is resolved into joint velocities of a [`SerialChain`] by regularized
//! least squares and the pose follows from forward kinematics.

mod chain;
mod trajectory;

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::geom::{UnitQuaternion, Vec3};
use crate::mapping::DiffeoMap;
use crate::{io, Error, Result};

pub use chain::{resolve_ik, Joint, SerialChain};
pub use trajectory::{slerp, Trajectory, TrajectorySample};

pub const DEFAULT_KP: f64 = 2.0;
pub const DEFAULT_DT: f64 = 0.002;
pub const DEFAULT_IK_DAMPING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion) -> Self {
        Self { position, orientation }
    }

    pub fn at(position: Vec3) -> Self {
        Self::new(position, UnitQuaternion::IDENTITY)
    }
}

/// Spatial velocity: linear [m/s] and world-frame angular [rad/s].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub fn to_vector(&self) -> DVector<f64> {
        let (l, a) = (self.linear, self.angular);
        DVector::from_vec(vec![l.x, l.y, l.z, a.x, a.y, a.z])
    }
}

/// Pose error of `current` relative to `target`: position difference and the
/// full-angle rotation vector `2·log(q_target ⊗ q̄_current)`.
pub fn pose_error(target: &Pose, current: &Pose) -> (Vec3, Vec3) {
    (target.position - current.position, (target.orientation * current.orientation.conj()).log() * 2.0)
}

/// `k_p` times the pose error.
pub fn proportional_velocity(target: &Pose, current: &Pose, k_p: f64) -> Twist {
    let (dp, dr) = pose_error(target, current);
    Twist { linear: dp * k_p, angular: dr * k_p }
}

/// Advances `pose` by `twist` over `dt`.
pub fn integrate(pose: &Pose, twist: &Twist, dt: f64) -> Pose {
    Pose::new(pose.position + twist.linear * dt, UnitQuaternion::exp(twist.angular * (dt / 2.0)) * pose.orientation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Follower {
    Point { pose: Pose },
    Chain { chain: SerialChain },
}

impl Follower {
    pub fn pose(&self) -> Pose {
        match self {
            Follower::Point { pose } => *pose,
            Follower::Chain { chain } => chain.forward_kinematics(),
        }
    }

    /// The default elbow manipulator with its base placed so that the end
    /// effector starts at `position`.
    pub fn chain_at(position: Vec3) -> Self {
        let mut chain = SerialChain::elbow_manipulator(Vec3::ZERO);
        chain.base = position - chain.forward_kinematics().position;
        Follower::Chain { chain }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub k_p: f64,
    pub ik_damping: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, k_p: DEFAULT_KP, ik_damping: DEFAULT_IK_DAMPING }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub t: f64,
    /// Commanded linear speed [m/s].
    pub speed_norm: f64,
    /// Position error to the mapped target when the command was issued [m].
    pub position_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Follower pose at every tick, including the initial one.
    pub follower: Trajectory,
    /// Mapped primary pose at every tick.
    pub targets: Trajectory,
    pub velocity_log: Vec<VelocitySample>,
    pub final_state: Follower,
}

/// Replays `primary` through `map` and tracks it with `follower`.
///
/// Ticks run from the first to the last sample time every `dt` seconds; the
/// last tick is the last multiple of `dt` not past the end.
pub fn simulate_replication(
    map: &DiffeoMap,
    primary: &Trajectory,
    follower: Follower,
    cfg: &SimulationConfig,
) -> Result<SimulationResult> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {}", cfg.dt)));
    }
    if !(cfg.k_p > 0.0 && cfg.k_p.is_finite()) {
        return Err(Error::Config(format!("k_p must be positive, got {}", cfg.k_p)));
    }
    let t0 = primary.start_time();
    let ticks = ((primary.end_time() - t0) / cfg.dt + 1e-9).floor() as usize;
    let mut state = follower;
    let mut follower_samples = Vec::with_capacity(ticks + 1);
    let mut target_samples = Vec::with_capacity(ticks + 1);
    let mut log = Vec::with_capacity(ticks + 1);

    for i in 0..=ticks {
        let t = t0 + i as f64 * cfg.dt;
        let p = primary.pose_at(t);
        let (tp, tq) = map.map_pose(p.position, p.orientation);
        let target = Pose::new(tp, tq);
        let current = state.pose();
        follower_samples.push(TrajectorySample { t, pose: current });
        target_samples.push(TrajectorySample { t, pose: target });

        let twist = proportional_velocity(&target, &current, cfg.k_p);
        log.push(VelocitySample { t, speed_norm: twist.linear.norm(), position_error: (tp - current.position).norm() });
        if i == ticks {
            break;
        }
        match &mut state {
            Follower::Point { pose } => *pose = integrate(pose, &twist, cfg.dt),
            Follower::Chain { chain } => {
                let rates = chain.resolve_ik(&twist, cfg.ik_damping);
                for (a, r) in chain.angles.iter_mut().zip(rates.iter()) {
                    *a += r * cfg.dt;
                }
            }
        }
    }

    Ok(SimulationResult {
        follower: Trajectory::new(follower_samples)?,
        targets: Trajectory::new(target_samples)?,
        velocity_log: log,
        final_state: state,
    })
}

pub fn write_velocity_csv(path: &Path, log: &[VelocitySample]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        t: f64,
        speed_norm: f64,
    }
    let mut w = io::csv_writer(path)?;
    for s in log {
        w.serialize(Row { t: s.t, speed_norm: s.speed_norm }).map_err(io::csv_error(path))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::Method;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn proportional_cases() {
        let p = Pose::new(Vec3::new(0.3, 0.1, 0.2), UnitQuaternion::rot_x(0.4));
        assert_eq!(proportional_velocity(&p, &p, 2.0), Twist::default());
        let t = Pose::new(p.position + Vec3::new(0.1, 0.0, 0.0), p.orientation);
        let v = proportional_velocity(&t, &p, 2.0);
        assert!((v.linear - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
        let c = Pose::at(Vec3::ZERO);
        let t = Pose::new(Vec3::ZERO, UnitQuaternion::rot_z(FRAC_PI_2));
        let v = proportional_velocity(&t, &c, 2.0);
        assert!((v.angular - Vec3::new(0.0, 0.0, PI)).norm() < 1e-12);
    }

    #[test]
    fn follower_at_rest_stays() {
        let p = Pose::new(Vec3::new(0.5, 0.2, 1.0), UnitQuaternion::rot_y(0.3));
        let traj = Trajectory::stationary(p, 1.0).unwrap();
        let out = simulate_replication(&DiffeoMap::empty(Method::Diff), &traj, Follower::Point { pose: p }, &SimulationConfig::default()).unwrap();
        assert_eq!(out.follower.len(), 501);
        assert!(out.velocity_log.iter().all(|v| v.speed_norm == 0.0));
        assert_eq!(out.final_state.pose(), p);
    }

    #[test]
    fn point_mode_error_decays_exponentially() {
        let target = Pose::at(Vec3::new(0.1, 0.0, 0.0));
        let traj = Trajectory::stationary(target, 1.0).unwrap();
        let start = Pose::at(Vec3::ZERO);
        let out = simulate_replication(&DiffeoMap::empty(Method::Diff), &traj, Follower::Point { pose: start }, &SimulationConfig::default()).unwrap();
        let err = (out.final_state.pose().position - target.position).norm();
        let envelope = 0.1 * (-2.0f64).exp();
        assert!((err / envelope - 1.0).abs() < 0.02, "{err} vs {envelope}");
        for w in out.velocity_log.windows(2) {
            assert!(w[1].position_error < w[0].position_error);
        }
    }

    #[test]
    fn chain_mode_tracks_static_target() {
        let start = SerialChain::elbow_manipulator(Vec3::ZERO).forward_kinematics();
        let target = Pose::new(start.position + Vec3::new(0.05, -0.03, 0.02), start.orientation);
        let traj = Trajectory::stationary(target, 4.0).unwrap();
        let map = DiffeoMap::empty(Method::Diff);
        let initial = (start.position - target.position).norm();

        // the unit regularization trades tracking speed for joint-rate size
        let out = simulate_replication(&map, &traj, Follower::chain_at(start.position), &SimulationConfig::default()).unwrap();
        let err = (out.final_state.pose().position - target.position).norm();
        assert!(err < 0.8 * initial, "{err}");

        let cfg = SimulationConfig { ik_damping: 1e-3, ..Default::default() };
        let out = simulate_replication(&map, &traj, Follower::chain_at(start.position), &cfg).unwrap();
        let err = (out.final_state.pose().position - target.position).norm();
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn rejects_bad_config() {
        let traj = Trajectory::stationary(Pose::at(Vec3::ZERO), 1.0).unwrap();
        let f = Follower::Point { pose: Pose::at(Vec3::ZERO) };
        let map = DiffeoMap::empty(Method::Diff);
        assert!(simulate_replication(&map, &traj, f.clone(), &SimulationConfig { dt: 0.0, ..Default::default() }).is_err());
        assert!(simulate_replication(&map, &traj, f, &SimulationConfig { k_p: -1.0, ..Default::default() }).is_err());
    }
}
