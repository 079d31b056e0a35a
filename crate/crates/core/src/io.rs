//! File formats: JSON documents, workspace files and CSV plumbing.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::fitting::{KeyPoint, KeyPointSet};
use crate::geom::Vec3;
use crate::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

/// Pretty-printed JSON with a trailing newline. Parent directories are created.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    ensure_parent(path)?;
    csv::Writer::from_path(path).map_err(|source| Error::Csv { path: path.to_path_buf(), source })
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

pub(crate) fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}

/// Regular grid of auxiliary points placed around every key point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubKeypointSpec {
    pub per_axis: usize,
    /// Distance between neighbouring grid points [m].
    pub spacing: f64,
}

impl Default for SubKeypointSpec {
    fn default() -> Self {
        Self { per_axis: 3, spacing: 0.05 }
    }
}

impl SubKeypointSpec {
    /// Offsets of the grid, x slowest. With an odd `per_axis` the center is
    /// included.
    pub fn offsets(&self) -> Vec<(usize, usize, usize, Vec3)> {
        let n = self.per_axis;
        let half = (n as f64 - 1.0) / 2.0;
        let at = |i: usize| (i as f64 - half) * self.spacing;
        let mut out = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out.push((i, j, k, Vec3::new(at(i), at(j), at(k))));
                }
            }
        }
        out
    }

    /// Replaces each key point by its grid. The center keeps the original id;
    /// the others are named `{id}:{i}{j}{k}`. Orientations are inherited.
    pub fn expand(&self, set: &KeyPointSet) -> Result<KeyPointSet> {
        if self.per_axis == 0 || !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::Config(format!("invalid sub-key-point grid {self:?}")));
        }
        let mut points = Vec::with_capacity(set.len() * self.per_axis.pow(3));
        for kp in set.points() {
            for (i, j, k, off) in self.offsets() {
                let id = if off == Vec3::ZERO { kp.id.clone() } else { format!("{}:{i}{j}{k}", kp.id) };
                points.push(KeyPoint { id, position: kp.position + off, orientation: kp.orientation });
            }
        }
        KeyPointSet::new(points)
    }
}

/// On-disk description of one workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceFile {
    pub name: String,
    pub keypoints: KeyPointSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_keypoints: Option<SubKeypointSpec>,
}

impl WorkspaceFile {
    pub fn new(name: impl Into<String>, keypoints: KeyPointSet) -> Self {
        Self { name: name.into(), keypoints, sub_keypoints: None }
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// The key points used for fitting, with sub-key points expanded.
    pub fn key_points(&self) -> Result<KeyPointSet> {
        match &self.sub_keypoints {
            Some(spec) => spec.expand(&self.keypoints),
            None => Ok(self.keypoints.clone()),
        }
    }
}
