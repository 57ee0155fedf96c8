//! `omnipipe` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or runtime error, 2 usage or validation
//! error, 3 degenerate geometry, 4 insufficient module reach, 5 simulated
//! mission failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use omnipipe::kinematics::{
    forward_kinematics, inverse_kinematics, CommandVector, RobotGeometry, TwistVector,
};
use omnipipe::pipenet::{load_network, ElbowRatioMode, PipeNetwork, PipeSegment, TeeExit};
use omnipipe::planner::{junction_regions, plan_mission, PlanCursor, PlannerConfig};
use omnipipe::sim::{
    run_mission, write_trajectory_csv, Execution, SimConfig, SimState, TeeExperiment,
};
use omnipipe::singularity::{
    failure_probability, sweep_t_junction, tee_mouth_tilt, Interval, TeeSweep,
};
use omnipipe::Error;

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_GEOMETRY: u8 = 3;
const EXIT_REACH: u8 = 4;
const EXIT_MISSION_FAILED: u8 = 5;

#[derive(Parser)]
#[command(
    name = "omnipipe",
    version,
    about = "Kinematics, singularity regions and mission simulation for a three-module in-pipe crawler"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map motor rates th1,th2,th3 (drive) and th4 (roll), rad/s, to the robot twist
    Fk {
        /// Command vector th1,th2,th3,th4 in rad/s
        #[arg(long, value_parser = parse_four, allow_hyphen_values = true)]
        cmd: [f64; 4],
        #[command(flatten)]
        geometry: JacobianArgs,
    },
    /// Map a twist wx,wy,wz (rad/s), vcz (mm/s) to motor rates
    Ik {
        /// Twist wx,wy,wz,vcz
        #[arg(long, value_parser = parse_four, allow_hyphen_values = true)]
        twist: [f64; 4],
        #[command(flatten)]
        geometry: JacobianArgs,
    },
    /// Report the T-junction singularity sector for a pipe diameter
    Sector(SectorArgs),
    /// Write the command schedule for a network to plan.json
    Plan(RunArgs),
    /// Plan and simulate a mission; writes plan.json, trajectory.csv, outcome.json
    Simulate(RunArgs),
    /// Monte-Carlo tee success rate over random initial roll; writes stats.json
    Montecarlo(MonteCarloArgs),
}

#[derive(Args)]
struct JacobianArgs {
    /// Lug radius r, mm
    #[arg(long = "r", allow_hyphen_values = true)]
    lug_radius: Option<f64>,
    /// Arm length l, mm
    #[arg(long = "l", allow_hyphen_values = true)]
    arm_length: Option<f64>,
    /// Robot geometry JSON file
    #[arg(long)]
    geometry: Option<PathBuf>,
}

#[derive(Args)]
struct SectorArgs {
    /// Pipe inner diameter, mm
    #[arg(long = "d", default_value_t = 160.0)]
    diameter: f64,
    /// Module contact reach, mm (defaults to the geometry's reach_max_mm)
    #[arg(long)]
    reach: Option<f64>,
    /// Largest cut-plane tilt, degrees (defaults to the equal-bore mouth tilt, 45°)
    #[arg(long)]
    phi_max_deg: Option<f64>,
    #[arg(long, default_value_t = 91)]
    steps: usize,
    #[arg(long)]
    geometry: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PlannerArgs {
    /// Straight-drive speed, mm/s
    #[arg(long, default_value_t = 100.0)]
    speed: f64,
    /// Tee turn trigger as a fraction of D
    #[arg(long, default_value_t = 0.25)]
    trigger_fraction: f64,
    /// Elbow speed-ratio rule: generalized or fixed-bend
    #[arg(long, default_value = "generalized", value_parser = parse_elbow_mode)]
    elbow_mode: ElbowRatioMode,
    /// Holonomic roll rate, rad/s
    #[arg(long, default_value_t = 0.5)]
    rotate_rate: f64,
    /// Tee turn radius as a fraction of D
    #[arg(long, default_value_t = 0.3)]
    turn_radius_fraction: f64,
    /// Roll to a free-gap centre at every tee, not only when singular
    #[arg(long)]
    align_at_tee: bool,
    /// No-motion deadband, degrees
    #[arg(long, default_value_t = 1.0)]
    deadband_deg: f64,
    /// Gain on the roll-to-module-rotation coupling
    #[arg(long, default_value_t = 1.0)]
    self_rotation_gain: f64,
    /// Disable holonomic roll (robot without module rotation)
    #[arg(long)]
    no_holonomic: bool,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Largest cut-plane tilt for tee regions, degrees
    #[arg(long)]
    phi_max_deg: Option<f64>,
    #[arg(long, default_value_t = 91)]
    sweep_steps: usize,
}

impl SweepArgs {
    fn sweep(&self) -> TeeSweep {
        TeeSweep {
            phi_max_rad: self
                .phi_max_deg
                .map_or_else(|| tee_mouth_tilt(1.0, 1.0), f64::to_radians),
            steps: self.sweep_steps,
        }
    }
}

impl PlannerArgs {
    fn configs(&self, dt: f64) -> (PlannerConfig, SimConfig) {
        let sim = SimConfig {
            dt_s: dt,
            deadband_rad: self.deadband_deg.to_radians(),
            self_rotation_gain: self.self_rotation_gain,
            record: true,
        };
        let planner = sim.matching_planner(PlannerConfig {
            straight_speed_mm_s: self.speed,
            tee_trigger_fraction: self.trigger_fraction,
            elbow_mode: self.elbow_mode,
            holonomic: !self.no_holonomic,
            holonomic_rate_rad_s: self.rotate_rate,
            align_at_tee: self.align_at_tee,
            tee_turn_radius_fraction: self.turn_radius_fraction,
            ..PlannerConfig::default()
        });
        (planner, sim)
    }
}

/// Inputs shared by `plan` and `simulate`.
#[derive(Args)]
struct RunArgs {
    /// Pipe network JSON file
    #[arg(long)]
    network: PathBuf,
    /// Robot geometry JSON file
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Initial roll of module 1, degrees
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    theta5: f64,
    /// Integration step, s
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    planner: PlannerArgs,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// Pipe network JSON file; defaults to straight 200 mm, branch tee, straight 200 mm
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    geometry: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Random seed (falls back to OMNIPIPE_SEED, then 0)
    #[arg(long, env = "OMNIPIPE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Run trials on one thread
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    planner: PlannerArgs,
}

fn parse_four(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 4] = parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 comma-separated numbers, got {}", v.len()))?;
    if arr.iter().any(|x| !x.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(arr)
}

fn parse_elbow_mode(s: &str) -> Result<ElbowRatioMode, String> {
    match s {
        "generalized" => Ok(ElbowRatioMode::Generalized),
        "fixed-bend" => Ok(ElbowRatioMode::FixedBend),
        other => Err(format!(
            "unknown elbow mode `{other}` (generalized | fixed-bend)"
        )),
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidGeometry(_) => EXIT_GEOMETRY,
            Error::InsufficientReach { .. } => EXIT_REACH,
            Error::Io(_) | Error::Csv(_) => EXIT_IO,
            Error::Parse { .. }
            | Error::Document(_)
            | Error::Validation { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidSection { .. }
            | Error::Json(_) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_geometry(path: Option<&Path>) -> CliResult<RobotGeometry> {
    let geom = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure {
                code: EXIT_IO,
                message: format!("{}: {e}", p.display()),
            })?;
            serde_json::from_str(&text).map_err(|e| Failure {
                code: EXIT_USAGE,
                message: format!("{}: {e}", p.display()),
            })?
        }
        None => RobotGeometry::default(),
    };
    geom.validate()?;
    Ok(geom)
}

fn read_network(path: &Path) -> CliResult<PipeNetwork> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(load_network(&text)?)
}

fn jacobian_geometry(args: &JacobianArgs) -> CliResult<RobotGeometry> {
    let mut geom = match &args.geometry {
        Some(p) => read_geometry(Some(p))?,
        None => RobotGeometry::default(),
    };
    if let Some(r) = args.lug_radius {
        geom.lug_radius_mm = r;
    }
    if let Some(l) = args.arm_length {
        geom.arm_length_mm = l;
        geom.a_offset_mm = l / 2.0;
    }
    let (r, l) = (geom.lug_radius_mm, geom.arm_length_mm);
    if !(r.is_finite() && l.is_finite() && r > 0.0 && l > 0.0) {
        return Err(
            Error::InvalidGeometry(format!("r = {r} mm and l = {l} mm must be positive")).into(),
        );
    }
    Ok(geom)
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    println!("{}", serde_json::to_string(value).map_err(Error::from)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct SectorReport {
    diameter_mm: f64,
    reach_mm: f64,
    phi_max_deg: f64,
    sector_deg: f64,
    free_margin_deg: f64,
    failure_probability: f64,
    arcs: Vec<Interval>,
    forbidden_theta5: Vec<Interval>,
}

fn cmd_sector(args: &SectorArgs) -> CliResult {
    let mut geom = read_geometry(args.geometry.as_deref())?;
    if let Some(reach) = args.reach {
        geom.reach_max_mm = reach;
    }
    let phi_max = args.phi_max_deg.map_or_else(
        || tee_mouth_tilt(args.diameter, args.diameter),
        f64::to_radians,
    );
    let region = sweep_t_junction(args.diameter, &geom, phi_max, args.steps)?;
    print_json(&SectorReport {
        diameter_mm: args.diameter,
        reach_mm: geom.reach_max_mm,
        phi_max_deg: phi_max.to_degrees(),
        sector_deg: region.sector_measure_deg + 0.0,
        free_margin_deg: region.free_margin_deg,
        failure_probability: failure_probability(&region) + 0.0,
        arcs: region.forbidden_arcs.clone(),
        forbidden_theta5: region.orientation_forbidden_set.clone(),
    })
}

fn cmd_run(args: &RunArgs, simulate: bool) -> CliResult {
    let geom = read_geometry(args.geometry.as_deref())?;
    let net = read_network(&args.network)?;
    let (planner, sim) = args.planner.configs(args.dt);
    let regions = junction_regions(&net, &geom, &args.planner.sweep.sweep())?;
    let roll = args.theta5.to_radians();
    let plan = plan_mission(&net, PlanCursor::at_roll(roll), &regions, &planner, &geom)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("plan.json"), &plan)?;
    if !simulate {
        return Ok(());
    }
    let report = run_mission(&net, &plan, &regions, &geom, &sim, SimState::at_roll(roll))?;
    let file = fs::File::create(args.out.join("trajectory.csv"))?;
    write_trajectory_csv(&report.records, std::io::BufWriter::new(file))?;
    let summary = report.summary();
    write_json(&args.out.join("outcome.json"), &summary)?;
    print_json(&summary.outcome)?;
    if report.outcome.is_success() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_MISSION_FAILED,
            message: "mission failed".into(),
        })
    }
}

fn default_tee_network() -> PipeNetwork {
    PipeNetwork::new(vec![
        PipeSegment::straight(160.0, 200.0),
        PipeSegment::tee(160.0, 0.0, TeeExit::Branch),
        PipeSegment::straight(160.0, 200.0),
    ])
    .expect("built-in network is valid")
}

fn cmd_montecarlo(args: &MonteCarloArgs) -> CliResult {
    let geom = read_geometry(args.geometry.as_deref())?;
    let net = match &args.network {
        Some(p) => read_network(p)?,
        None => default_tee_network(),
    };
    let (planner, sim) = args.planner.configs(args.dt);
    let experiment = TeeExperiment {
        net: &net,
        planner,
        sim,
        geom,
        sweep: args.planner.sweep.sweep(),
    };
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let summary =
        experiment.monte_carlo(args.trials, args.seed, !args.planner.no_holonomic, exec)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("stats.json"), &summary)?;
    print_json(&summary)
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Fk { cmd, geometry } => {
            let geom = jacobian_geometry(&geometry)?;
            print_json(&forward_kinematics(
                &CommandVector::new(cmd[0], cmd[1], cmd[2], cmd[3]),
                &geom,
            ))
        }
        Command::Ik { twist, geometry } => {
            let geom = jacobian_geometry(&geometry)?;
            let t = TwistVector::new(twist[0], twist[1], twist[2], twist[3]);
            print_json(&inverse_kinematics(&t, &geom)?)
        }
        Command::Sector(args) => cmd_sector(&args),
        Command::Plan(args) => cmd_run(&args, false),
        Command::Simulate(args) => cmd_run(&args, true),
        Command::Montecarlo(args) => cmd_montecarlo(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
