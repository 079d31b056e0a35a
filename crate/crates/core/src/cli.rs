//! The `diffeo` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 fit did not
//! converge (the map is still written), 3 I/O error or malformed input file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use crate::evaluation::{evaluate_map, run_batch, write_batch_csv, BatchOptions, BatchSummary, GradientGridSpec, DEFAULT_GRID_INFLATION};
use crate::fitting::{fit, FitConfig, KeyPointSet};
use crate::geom::{UnitQuaternion, Vec3};
use crate::io::{write_json, WorkspaceFile};
use crate::mapping::{DiffeoMap, Method};
use crate::replication::{simulate_replication, write_velocity_csv, Follower, Pose, SimulationConfig, Trajectory};
use crate::scenario::{builtin_exp1, generate_sim1, generate_sim2, Exp1Params, Scenario, Sim1Params, Sim2Params};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "diffeo", version, about = "Fit, evaluate and replay diffeomorphic workspace maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a map from primary key points to replica key points.
    Fit(FitArgs),
    /// Evaluate key-point error and grid gradient of a map.
    Eval(EvalArgs),
    /// Map a single pose and print it as JSON.
    MapPoint(MapPointArgs),
    /// Replay a primary trajectory through a map with a simulated follower.
    Simulate(SimulateArgs),
    /// Generate a built-in scenario directory.
    Scenario(ScenarioArgs),
    /// Fit and evaluate several methods on every environment of a scenario.
    Batch(BatchArgs),
}

#[derive(Debug, Args)]
struct FitOptions {
    /// Mean key-point error at which fitting stops [m].
    #[arg(long, default_value_t = 0.005)]
    threshold: f64,
    /// Maximum number of composition steps.
    #[arg(long, default_value_t = 100)]
    jmax: usize,
    /// Seed for the twisted affine restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitOptions {
    fn config(&self) -> FitConfig {
        FitConfig { position_threshold: self.threshold, j_max: self.jmax, seed: self.seed, ..FitConfig::default() }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Primary (init) workspace JSON.
    #[arg(long)]
    primary: PathBuf,
    /// Replica (goal) workspace JSON.
    #[arg(long)]
    replica: PathBuf,
    /// Output map JSON.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    options: FitOptions,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    map: PathBuf,
    /// Primary workspace; defaults to the key points stored in the map.
    #[arg(long, requires = "replica")]
    primary: Option<PathBuf>,
    #[arg(long, requires = "primary")]
    replica: Option<PathBuf>,
    /// Grid spacing [m].
    #[arg(long, default_value_t = 0.02)]
    grid_spacing: f64,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MapPointArgs {
    #[arg(long)]
    map: PathBuf,
    /// Position as x,y,z [m].
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    position: Vec3,
    /// Orientation as w,x,y,z.
    #[arg(long, value_parser = parse_quat, allow_hyphen_values = true)]
    orientation: Option<UnitQuaternion>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Point,
    Chain,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    map: PathBuf,
    /// Primary trajectory CSV (t,px,py,pz,qw,qx,qy,qz).
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Point)]
    mode: Mode,
    /// Control period [s].
    #[arg(long, default_value_t = 0.002)]
    dt: f64,
    /// Proportional gain [1/s].
    #[arg(long, default_value_t = 2.0)]
    kp: f64,
    /// Follower trajectory CSV.
    #[arg(long)]
    out: PathBuf,
    /// Velocity log CSV (t,speed_norm); defaults to `<out>.velocity.csv`.
    #[arg(long)]
    velocity_log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioKind {
    Sim1,
    Sim2,
    Exp1,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(value_enum)]
    kind: ScenarioKind,
    /// Number of environments (sim2).
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BatchArgs {
    /// Scenario directory.
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "diff,rdiff,tadiff")]
    methods: Vec<Method>,
    #[arg(long)]
    report: PathBuf,
    /// Per-environment CSV export.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run environments in parallel.
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value_t = 0.02)]
    grid_spacing: f64,
    #[command(flatten)]
    options: FitOptions,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_numbers<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got '{s}'"));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse::<f64>().map_err(|e| format!("'{p}': {e}"))?;
        if !o.is_finite() {
            return Err(format!("'{p}' is not finite"));
        }
    }
    Ok(out)
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    parse_numbers::<3>(s).map(Vec3::from)
}

fn parse_quat(s: &str) -> Result<UnitQuaternion, String> {
    let q = parse_numbers::<4>(s)?;
    if q.iter().all(|&v| v == 0.0) {
        return Err("orientation must be non-zero".into());
    }
    Ok(UnitQuaternion::new_normalize(q[0], q[1], q[2], q[3]))
}

/// Map file written by `fit`: the map plus the key points it was fitted on.
#[derive(Debug, serde::Deserialize, Serialize)]
struct MapFile {
    #[serde(flatten)]
    map: DiffeoMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key_points: Option<StoredKeyPoints>,
}

#[derive(Debug, serde::Deserialize, Serialize)]
struct StoredKeyPoints {
    primary: KeyPointSet,
    replica: KeyPointSet,
}

fn load_map(path: &Path) -> Result<MapFile, Error> {
    let file: MapFile = crate::io::read_json(path)?;
    file.map.validate()?;
    Ok(file)
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Json { .. } | Error::Csv { .. } | Error::Input(_) => EXIT_IO,
        Error::Config(_) | Error::Domain(_) => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::MapPoint(a) => cmd_map_point(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Batch(a) => cmd_batch(a),
    }
}

fn cmd_fit(a: FitArgs) -> Result<i32, Error> {
    let cfg = a.options.config();
    cfg.validate()?;
    let primary = WorkspaceFile::load(&a.primary)?.key_points()?;
    let replica = WorkspaceFile::load(&a.replica)?.key_points()?;
    let (map, diag) = fit(a.method, &primary, &replica, &cfg)?;
    info!("{}: {} steps, final error {:.3} mm", a.method, diag.iterations, diag.final_position_cost * 1e3);
    let file = MapFile { map, key_points: Some(StoredKeyPoints { primary, replica }) };
    write_json(&a.out, &file)?;
    if diag.converged {
        Ok(EXIT_OK)
    } else {
        warn!("fit did not converge: final error {:.3} mm after {} steps", diag.final_position_cost * 1e3, diag.iterations);
        eprintln!("warning: fit did not converge; map written to {}", a.out.display());
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_eval(a: EvalArgs) -> Result<i32, Error> {
    let file = load_map(&a.map)?;
    let (inits, goals) = match (&a.primary, &a.replica, file.key_points) {
        (Some(p), Some(r), _) => (WorkspaceFile::load(p)?.key_points()?, WorkspaceFile::load(r)?.key_points()?),
        (_, _, Some(k)) => (k.primary, k.replica),
        _ => return Err(Error::Config("map has no stored key points; pass --primary and --replica".into())),
    };
    let grid = GradientGridSpec::around(&inits, DEFAULT_GRID_INFLATION, a.grid_spacing)?;
    let report = evaluate_map(&file.map, &inits, &goals, &grid)?;
    match &a.report {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MappedPose {
    position: Vec3,
    orientation: UnitQuaternion,
}

fn cmd_map_point(a: MapPointArgs) -> Result<i32, Error> {
    let file = load_map(&a.map)?;
    let (position, orientation) = file.map.map_pose(a.position, a.orientation.unwrap_or_default());
    println!("{}", serde_json::to_string(&MappedPose { position, orientation }).expect("pose serializes"));
    Ok(EXIT_OK)
}

fn cmd_simulate(a: SimulateArgs) -> Result<i32, Error> {
    let file = load_map(&a.map)?;
    let primary = Trajectory::read_csv(&a.trajectory)?;
    let start = primary.samples()[0].pose;
    let (p, q) = file.map.map_pose(start.position, start.orientation);
    let follower = match a.mode {
        Mode::Point => Follower::Point { pose: Pose::new(p, q) },
        Mode::Chain => Follower::chain_at(p),
    };
    let cfg = SimulationConfig { dt: a.dt, k_p: a.kp, ..SimulationConfig::default() };
    let out = simulate_replication(&file.map, &primary, follower, &cfg)?;
    out.follower.write_csv(&a.out)?;
    let log_path = a.velocity_log.unwrap_or_else(|| a.out.with_extension("velocity.csv"));
    write_velocity_csv(&log_path, &out.velocity_log)?;
    Ok(EXIT_OK)
}

fn cmd_scenario(a: ScenarioArgs) -> Result<i32, Error> {
    let scenario = match a.kind {
        ScenarioKind::Sim1 => generate_sim1(&Sim1Params::default())?,
        ScenarioKind::Sim2 => generate_sim2(&Sim2Params::new(a.n, a.seed))?,
        ScenarioKind::Exp1 => builtin_exp1(&Exp1Params::default())?,
    };
    scenario.save(&a.out)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BatchReport<'a> {
    scenario: &'a str,
    summaries: &'a [BatchSummary],
}

fn cmd_batch(a: BatchArgs) -> Result<i32, Error> {
    let scenario = Scenario::load(&a.scenario)?;
    let envs = scenario.key_point_pairs()?;
    let opts = BatchOptions { grid_spacing: a.grid_spacing, parallel: a.parallel, ..BatchOptions::default() };
    let summaries = run_batch(&envs, &a.methods, &a.options.config(), &opts)?;
    write_json(&a.report, &BatchReport { scenario: &scenario.name, summaries: &summaries })?;
    if let Some(csv) = &a.csv {
        write_batch_csv(csv, &summaries)?;
    }
    Ok(EXIT_OK)
}
