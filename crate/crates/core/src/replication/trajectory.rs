//! Time-stamped pose sequences and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{UnitQuaternion, Vec3};
use crate::{io, Error, Result};

use super::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// [s]
    pub t: f64,
    pub pose: Pose,
}

/// Samples with strictly increasing time stamps, interpolated linearly in
/// position and by slerp in orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TrajectorySample>", into = "Vec<TrajectorySample>")]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl TryFrom<Vec<TrajectorySample>> for Trajectory {
    type Error = Error;
    fn try_from(samples: Vec<TrajectorySample>) -> Result<Self> {
        Self::new(samples)
    }
}

impl From<Trajectory> for Vec<TrajectorySample> {
    fn from(t: Trajectory) -> Self {
        t.samples
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvSample {
    t: f64,
    px: f64,
    py: f64,
    pz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("trajectory has no samples".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.pose.position.is_finite() && s.pose.orientation.is_finite()) {
                return Err(Error::Input(format!("trajectory sample {i} is not finite")));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::Input(format!("trajectory time not strictly increasing at sample {i} (t = {})", s.t)));
            }
        }
        Ok(Self { samples })
    }

    /// A trajectory that rests at `pose` for `duration` seconds.
    pub fn stationary(pose: Pose, duration: f64) -> Result<Self> {
        Self::new(vec![TrajectorySample { t: 0.0, pose }, TrajectorySample { t: duration, pose }])
    }

    /// Visits `waypoints` in order along straight lines at `speed` [m/s],
    /// resting `hold` seconds at each, starting with a hold at the first.
    pub fn through_waypoints(waypoints: &[Pose], speed: f64, hold: f64) -> Result<Self> {
        if !(speed > 0.0 && hold > 0.0) {
            return Err(Error::Config("waypoint speed and hold time must be positive".into()));
        }
        let mut samples = Vec::with_capacity(2 * waypoints.len());
        let mut t = 0.0;
        for (i, &pose) in waypoints.iter().enumerate() {
            if i > 0 {
                let dist = (pose.position - waypoints[i - 1].position).norm();
                if dist == 0.0 {
                    continue;
                }
                t += dist / speed;
            }
            samples.push(TrajectorySample { t, pose });
            t += hold;
            samples.push(TrajectorySample { t, pose });
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Pose at time `t`, held constant outside the sampled interval.
    pub fn pose_at(&self, t: f64) -> Pose {
        let s = &self.samples;
        let i = s.partition_point(|x| x.t <= t);
        if i == 0 {
            return s[0].pose;
        }
        if i == s.len() {
            return s[s.len() - 1].pose;
        }
        let (a, b) = (&s[i - 1], &s[i]);
        let u = (t - a.t) / (b.t - a.t);
        Pose {
            position: a.pose.position + (b.pose.position - a.pose.position) * u,
            orientation: slerp(a.pose.orientation, b.pose.orientation, u),
        }
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = io::csv_reader(path)?;
        let mut samples = Vec::new();
        for row in r.deserialize::<CsvSample>() {
            let c = row.map_err(io::csv_error(path))?;
            samples.push(TrajectorySample {
                t: c.t,
                pose: Pose::new(Vec3::new(c.px, c.py, c.pz), UnitQuaternion::from([c.qw, c.qx, c.qy, c.qz])),
            });
        }
        Self::new(samples)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = io::csv_writer(path)?;
        for s in &self.samples {
            let (p, q) = (s.pose.position, s.pose.orientation);
            w.serialize(CsvSample { t: s.t, px: p.x, py: p.y, pz: p.z, qw: q.w, qx: q.x, qy: q.y, qz: q.z })
                .map_err(io::csv_error(path))?;
        }
        w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}

/// Shortest-arc interpolation between two unit quaternions.
pub fn slerp(a: UnitQuaternion, b: UnitQuaternion, u: f64) -> UnitQuaternion {
    (b * a.conj()).canonical().powf(u) * a
}
