//! Built-in scenarios and their on-disk layout.
//!
//! A scenario directory holds a `scenario.json` manifest listing, for each
//! environment, the primary and replica workspace files relative to the
//! directory. Single-environment scenarios keep `primary.json` and
//! `replica.json` at the top level; multi-environment ones use one
//! `env_NNN/` subdirectory per environment. A primary trajectory, if any, is
//! stored as `trajectory.csv`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fitting::{KeyPoint, KeyPointSet};
use crate::geom::{UnitQuaternion, Vec3};
use crate::io::{read_json, write_json, SubKeypointSpec, WorkspaceFile};
use crate::replication::{Pose, Trajectory};
use crate::{Error, Result};

pub const MANIFEST: &str = "scenario.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

/// Left-arm targets of the dual-arm experiment [m].
pub const EXP1_PRIMARY: [[f64; 3]; 4] = [[0.79, 0.48, 1.02], [0.55, 0.16, 1.22], [0.45, 0.41, 1.26], [0.68, 0.24, 1.02]];
/// Right-arm targets of the dual-arm experiment [m].
pub const EXP1_REPLICA: [[f64; 3]; 4] = [[0.50, 0.20, 1.20], [0.70, 0.20, 1.20], [0.70, 0.40, 1.20], [0.50, 0.40, 1.20]];
/// Order in which the primary visits its targets (1-based).
pub const EXP1_VISIT_ORDER: [usize; 8] = [1, 2, 3, 4, 1, 3, 2, 4];

/// Targets of the rotated-plane scenario, a quadrilateral in `z = 0` [m].
pub const SIM1_TARGETS: [[f64; 3]; 4] = [[0.30, 0.05, 0.0], [0.05, 0.35, 0.0], [-0.28, 0.12, 0.0], [-0.02, -0.26, 0.0]];

/// One pair of workspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub primary: WorkspaceFile,
    pub replica: WorkspaceFile,
}

impl Environment {
    /// Expanded `(inits, goals)` ready for fitting.
    pub fn key_points(&self) -> Result<(KeyPointSet, KeyPointSet)> {
        let (a, b) = (self.primary.key_points()?, self.replica.key_points()?);
        a.check_aligned(&b)?;
        Ok((a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generation {
    Sim1(Sim1Params),
    Sim2(Sim2Params),
    Exp1(Exp1Params),
    /// Hand-assembled scenario.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sim1Params {
    /// Goal-plane rotations about the vertical axis through the centroid, one
    /// environment each [deg].
    pub angles_deg: Vec<f64>,
    /// Goal-plane translation applied after the rotation [m].
    pub translation: Vec3,
    pub sub_keypoints: SubKeypointSpec,
}

impl Default for Sim1Params {
    fn default() -> Self {
        Self { angles_deg: vec![0.0, 45.0, 90.0], translation: Vec3::ZERO, sub_keypoints: SubKeypointSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sim2Params {
    pub n: usize,
    pub seed: u64,
    /// Coordinates are drawn uniformly from `[low, high]` [m].
    pub low: f64,
    pub high: f64,
    pub key_points: usize,
}

impl Sim2Params {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, low: 0.1, high: 0.6, key_points: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp1Params {
    /// Primary speed between targets [m/s].
    pub speed: f64,
    /// Rest at each target [s].
    pub hold: f64,
}

impl Default for Exp1Params {
    fn default() -> Self {
        Self { speed: 0.1, hold: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub generation: Generation,
    pub environments: Vec<Environment>,
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    primary: PathBuf,
    replica: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    name: String,
    generation: Generation,
    environments: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trajectory: Option<PathBuf>,
}

impl Scenario {
    /// Writes the scenario below `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let single = self.environments.len() == 1;
        let mut entries = Vec::with_capacity(self.environments.len());
        for (i, env) in self.environments.iter().enumerate() {
            let sub = if single { PathBuf::new() } else { PathBuf::from(format!("env_{i:03}")) };
            let entry = ManifestEntry { primary: sub.join("primary.json"), replica: sub.join("replica.json") };
            env.primary.save(&dir.join(&entry.primary))?;
            env.replica.save(&dir.join(&entry.replica))?;
            entries.push(entry);
        }
        let trajectory = match &self.trajectory {
            Some(t) => {
                t.write_csv(&dir.join(TRAJECTORY_FILE))?;
                Some(PathBuf::from(TRAJECTORY_FILE))
            }
            None => None,
        };
        let manifest = Manifest { name: self.name.clone(), generation: self.generation.clone(), environments: entries, trajectory };
        write_json(&dir.join(MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
        if manifest.environments.is_empty() {
            return Err(Error::Input(format!("{}: scenario has no environments", dir.display())));
        }
        let environments = manifest
            .environments
            .iter()
            .map(|e| {
                Ok(Environment {
                    primary: WorkspaceFile::load(&dir.join(&e.primary))?,
                    replica: WorkspaceFile::load(&dir.join(&e.replica))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let trajectory = manifest.trajectory.map(|p| Trajectory::read_csv(&dir.join(p))).transpose()?;
        Ok(Self { name: manifest.name, generation: manifest.generation, environments, trajectory })
    }

    /// All environments as `(inits, goals)` pairs.
    pub fn key_point_pairs(&self) -> Result<Vec<(KeyPointSet, KeyPointSet)>> {
        self.environments.iter().map(Environment::key_points).collect()
    }
}

fn set_from(points: &[[f64; 3]]) -> KeyPointSet {
    let pts: Vec<Vec3> = points.iter().map(|&p| p.into()).collect();
    KeyPointSet::from_positions(&pts).expect("built-in key points are valid")
}

/// Rotated-plane scenario: four targets, each surrounded by a sub-key-point
/// grid, mapped onto copies of the plane rotated about the vertical axis
/// through its centroid. The sub-key points rotate with the plane.
pub fn generate_sim1(params: &Sim1Params) -> Result<Scenario> {
    let targets = set_from(&SIM1_TARGETS);
    let mut primary = WorkspaceFile::new("sim1-primary", targets.clone());
    primary.sub_keypoints = Some(params.sub_keypoints);
    let inits = primary.key_points()?;
    let center = targets.centroid();

    let mut environments = Vec::with_capacity(params.angles_deg.len());
    for &deg in &params.angles_deg {
        let rot = UnitQuaternion::rot_z(deg * PI / 180.0);
        let goals: Vec<KeyPoint> = inits
            .points()
            .iter()
            .map(|kp| KeyPoint {
                id: kp.id.clone(),
                position: rot.rotate(kp.position - center) + center + params.translation,
                orientation: kp.orientation,
            })
            .collect();
        let replica = WorkspaceFile::new(format!("sim1-replica-{deg}deg"), KeyPointSet::new(goals)?);
        environments.push(Environment { primary: primary.clone(), replica });
    }
    if environments.is_empty() {
        return Err(Error::Config("sim1 needs at least one goal angle".into()));
    }
    Ok(Scenario { name: "sim1".into(), generation: Generation::Sim1(params.clone()), environments, trajectory: None })
}

/// Random scenario: per environment, init and goal positions drawn i.i.d.
/// uniformly from the cube `[low, high]³` with a ChaCha8 generator.
pub fn generate_sim2(params: &Sim2Params) -> Result<Scenario> {
    if params.n == 0 {
        return Err(Error::Config("sim2 needs n ≥ 1".into()));
    }
    if params.key_points == 0 || !(params.low < params.high) {
        return Err(Error::Config(format!("invalid sim2 parameters {params:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut draw = |k: usize| -> Vec<Vec3> {
        (0..k)
            .map(|_| {
                let mut c = || rng.gen_range(params.low..=params.high);
                Vec3::new(c(), c(), c())
            })
            .collect()
    };
    let mut environments = Vec::with_capacity(params.n);
    for i in 0..params.n {
        let inits = KeyPointSet::from_positions(&draw(params.key_points))?;
        let goals = KeyPointSet::from_positions(&draw(params.key_points))?;
        environments.push(Environment {
            primary: WorkspaceFile::new(format!("sim2-{i:03}-primary"), inits),
            replica: WorkspaceFile::new(format!("sim2-{i:03}-replica"), goals),
        });
    }
    Ok(Scenario { name: "sim2".into(), generation: Generation::Sim2(params.clone()), environments, trajectory: None })
}

/// The dual-arm experiment: left-arm targets as inits, right-arm targets as
/// goals, and a primary trajectory visiting the left-arm targets.
pub fn builtin_exp1(params: &Exp1Params) -> Result<Scenario> {
    let inits = set_from(&EXP1_PRIMARY);
    let goals = set_from(&EXP1_REPLICA);
    let waypoints: Vec<Pose> = EXP1_VISIT_ORDER.iter().map(|&i| Pose::at(inits.points()[i - 1].position)).collect();
    let trajectory = Trajectory::through_waypoints(&waypoints, params.speed, params.hold)?;
    Ok(Scenario {
        name: "exp1".into(),
        generation: Generation::Exp1(params.clone()),
        environments: vec![Environment {
            primary: WorkspaceFile::new("exp1-left-arm", inits),
            replica: WorkspaceFile::new("exp1-right-arm", goals),
        }],
        trajectory: Some(trajectory),
    })
}
