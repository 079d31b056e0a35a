//! Map quality metrics and batch statistics.
//!
//! A map is judged by its key-point error and by its maximum gradient, the
//! largest spectral norm of the numerical Jacobian over a regular grid that
//! covers the init key points. The grid minimum of the Jacobian determinant
//! certifies local invertibility.

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fitting::{fit, FitConfig, FitDiagnostics, KeyPointSet};
use crate::geom::Vec3;
use crate::mapping::{spectral_norm, DiffeoMap, Method, DEFAULT_JACOBIAN_STEP};
use crate::{io, Error, Result};

pub const DEFAULT_GRID_INFLATION: f64 = 0.05;
pub const DEFAULT_GRID_SPACING: f64 = 0.02;
/// Fallback success threshold for maps that carry no fit diagnostics [m].
const DEFAULT_POSITION_THRESHOLD: f64 = 0.005;

/// Axis-aligned evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientGridSpec {
    pub lo: Vec3,
    pub hi: Vec3,
    pub spacing: f64,
}

impl GradientGridSpec {
    pub fn new(lo: Vec3, hi: Vec3, spacing: f64) -> Result<Self> {
        let spec = Self { lo, hi, spacing };
        spec.validate()?;
        Ok(spec)
    }

    /// Bounding box of `points` grown by `inflation` on every side.
    pub fn around(points: &KeyPointSet, inflation: f64, spacing: f64) -> Result<Self> {
        let (lo, hi) = points.bounds();
        Self::new(lo - Vec3::splat(inflation), hi + Vec3::splat(inflation), spacing)
    }

    /// The default evaluation region for a fit from `inits`.
    pub fn for_inits(inits: &KeyPointSet) -> Result<Self> {
        Self::around(inits, DEFAULT_GRID_INFLATION, DEFAULT_GRID_SPACING)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::Config(format!("grid spacing must be positive, got {}", self.spacing)));
        }
        let ok = self.lo.is_finite() && self.hi.is_finite() && (0..3).all(|i| self.hi[i] > self.lo[i]);
        if !ok {
            return Err(Error::Config(format!("degenerate grid bounds {:?} to {:?}", self.lo, self.hi)));
        }
        Ok(())
    }

    /// Points per axis. The last point may fall short of `hi` by less than
    /// one spacing.
    pub fn counts(&self) -> [usize; 3] {
        std::array::from_fn(|i| ((self.hi[i] - self.lo[i]) / self.spacing + 1e-9).floor() as usize + 1)
    }

    pub fn len(&self) -> usize {
        self.counts().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point by flat index, x slowest.
    pub fn point(&self, index: usize) -> Vec3 {
        let [_, ny, nz] = self.counts();
        let (i, j, k) = (index / (ny * nz), (index / nz) % ny, index % nz);
        self.lo + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn points(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: Method,
    pub mean_keypoint_error: f64,
    pub max_keypoint_error: f64,
    /// Largest Jacobian spectral norm over the grid.
    pub max_gradient: f64,
    pub min_jacobian_det: f64,
    pub rbf_iterations: usize,
    pub converged: bool,
    pub grid_points: usize,
    /// Fit plus evaluation time [s]; only filled by batch runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

/// Gradient extrema of `map` over `grid`: `(max spectral norm, min det)`.
pub fn grid_extrema(map: &DiffeoMap, grid: &GradientGridSpec) -> (f64, f64) {
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let j = map.numerical_jacobian(grid.point(i), DEFAULT_JACOBIAN_STEP);
            (spectral_norm(&j), j.determinant())
        })
        .reduce(|| (0.0, f64::INFINITY), |a, b| (a.0.max(b.0), a.1.min(b.1)))
}

/// Key-point errors and grid gradient of a fitted map.
///
/// `converged` is taken from the map's fit diagnostics. A map without any
/// (built by hand) counts as converged when its mean error is below 5 mm.
pub fn evaluate_map(
    map: &DiffeoMap,
    inits: &KeyPointSet,
    goals: &KeyPointSet,
    grid: &GradientGridSpec,
) -> Result<EvaluationReport> {
    inits.check_aligned(goals)?;
    grid.validate()?;
    let errors: Vec<f64> =
        inits.points().iter().zip(goals.points()).map(|(a, b)| (b.position - map.map_position(a.position)).norm()).collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let max = errors.iter().copied().fold(0.0, f64::max);
    let (max_gradient, min_det) = grid_extrema(map, grid);
    let fitted = !map.metadata.per_iteration_costs.is_empty();
    Ok(EvaluationReport {
        method: map.method,
        mean_keypoint_error: mean,
        max_keypoint_error: max,
        max_gradient,
        min_jacobian_det: min_det,
        rbf_iterations: map.len(),
        converged: if fitted { map.metadata.converged } else { mean < DEFAULT_POSITION_THRESHOLD },
        grid_points: grid.len(),
        wall_time: None,
    })
}

/// Five-number summary with Tukey whiskers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme data values within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

impl BoxStats {
    /// `None` for empty input. Non-finite values are ignored.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= fence_lo && x <= fence_hi).collect();
        Some(Self {
            min: v[0],
            q1,
            median,
            q3,
            max: v[v.len() - 1],
            whisker_low: inside.first().copied().unwrap_or(q1),
            whisker_high: inside.last().copied().unwrap_or(q3),
            outliers: v.into_iter().filter(|&x| x < fence_lo || x > fence_hi).collect(),
        })
    }
}

/// Outcome of one method on one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentResult {
    pub env_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<FitDiagnostics>,
    /// Set when fitting or evaluation failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EnvironmentResult {
    pub fn succeeded(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub method: Method,
    pub n_environments: usize,
    pub success_rate: f64,
    /// Largest final mean key-point error over all environments [m].
    pub max_over_envs_positional_error: f64,
    pub mean_iterations: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_distribution: Option<BoxStats>,
    pub per_environment: Vec<EnvironmentResult>,
}

impl BatchSummary {
    /// Aggregates results after sorting them by environment id.
    pub fn from_results(method: Method, mut results: Vec<EnvironmentResult>) -> Self {
        results.sort_by_key(|r| r.env_id);
        let reports: Vec<&EvaluationReport> = results.iter().filter_map(|r| r.report.as_ref()).collect();
        let n = results.len();
        let gradients: Vec<f64> = reports.iter().map(|r| r.max_gradient).collect();
        let mean_iterations = if reports.is_empty() {
            0.0
        } else {
            reports.iter().map(|r| r.rbf_iterations as f64).sum::<f64>() / reports.len() as f64
        };
        let failed = results.iter().any(|r| r.report.is_none());
        Self {
            method,
            n_environments: n,
            success_rate: if n == 0 { 0.0 } else { results.iter().filter(|r| r.succeeded()).count() as f64 / n as f64 },
            max_over_envs_positional_error: if failed {
                f64::INFINITY
            } else {
                reports.iter().map(|r| r.mean_keypoint_error).fold(0.0, f64::max)
            },
            mean_iterations,
            gradient_distribution: BoxStats::from_values(&gradients),
            per_environment: results,
        }
    }

    pub fn median_max_gradient(&self) -> Option<f64> {
        self.gradient_distribution.as_ref().map(|b| b.median)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub grid_inflation: f64,
    pub grid_spacing: f64,
    /// Run environments on the rayon pool.
    pub parallel: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self { grid_inflation: DEFAULT_GRID_INFLATION, grid_spacing: DEFAULT_GRID_SPACING, parallel: true }
    }
}

fn run_one(env_id: usize, inits: &KeyPointSet, goals: &KeyPointSet, method: Method, cfg: &FitConfig, opts: &BatchOptions) -> EnvironmentResult {
    let start = Instant::now();
    let outcome = fit(method, inits, goals, cfg).and_then(|(map, diag)| {
        let grid = GradientGridSpec::around(inits, opts.grid_inflation, opts.grid_spacing)?;
        let mut report = evaluate_map(&map, inits, goals, &grid)?;
        report.wall_time = Some(start.elapsed().as_secs_f64());
        Ok((report, diag))
    });
    match outcome {
        Ok((report, diag)) => EnvironmentResult { env_id, report: Some(report), diagnostics: Some(diag), error: None },
        Err(e) => {
            warn!("environment {env_id}, {method}: {e}");
            EnvironmentResult { env_id, report: None, diagnostics: None, error: Some(e.to_string()) }
        }
    }
}

/// Fits and evaluates every method on every environment. Failures are
/// recorded per environment and never abort the batch.
pub fn run_batch(
    environments: &[(KeyPointSet, KeyPointSet)],
    methods: &[Method],
    cfg: &FitConfig,
    opts: &BatchOptions,
) -> Result<Vec<BatchSummary>> {
    if environments.is_empty() {
        return Err(Error::Config("batch needs at least one environment".into()));
    }
    cfg.validate()?;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let task = |(i, (a, b)): (usize, &(KeyPointSet, KeyPointSet))| run_one(i, a, b, method, cfg, opts);
        let results: Vec<EnvironmentResult> = if opts.parallel {
            environments.par_iter().enumerate().map(task).collect()
        } else {
            environments.iter().enumerate().map(task).collect()
        };
        let summary = BatchSummary::from_results(method, results);
        info!(
            "{method}: success {:.0}%, max error {:.2} mm, mean iterations {:.1}",
            summary.success_rate * 100.0,
            summary.max_over_envs_positional_error * 1e3,
            summary.mean_iterations
        );
        out.push(summary);
    }
    Ok(out)
}

#[derive(Serialize)]
struct CsvRow {
    env_id: usize,
    method: Method,
    max_gradient: Option<f64>,
    final_error: Option<f64>,
    iterations: Option<usize>,
    converged: bool,
}

/// One row per environment and method.
pub fn write_batch_csv(path: &Path, summaries: &[BatchSummary]) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    for s in summaries {
        for r in &s.per_environment {
            let rep = r.report.as_ref();
            w.serialize(CsvRow {
                env_id: r.env_id,
                method: s.method,
                max_gradient: rep.map(|x| x.max_gradient),
                final_error: rep.map(|x| x.mean_keypoint_error),
                iterations: rep.map(|x| x.rbf_iterations),
                converged: r.succeeded(),
            })
            .map_err(io::csv_error(path))?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
