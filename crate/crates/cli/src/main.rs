use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dumbbell_core::gait::run_closed_loop;
use dumbbell_core::log::{compare, format_diff, read_csv, Summary, Termination};
use dumbbell_core::scenario::{self, ScenarioConfig, PRESETS};
use dumbbell_core::sizing::{self, MotorSpec, SizingInput};
use dumbbell_core::Error;

mod plot;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser)]
#[command(
    name = "dumbbell",
    version,
    about = "Variable-inertia dumbbell simulator and MPC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled preset.
    Run {
        /// Path to a scenario TOML file, or the name of a preset.
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write SVG plots of ω, Euler angles, radii and v_x.
        #[arg(long)]
        svg: bool,
    },
    /// Actuator sizing and motor check.
    Size(SizeArgs),
    /// Per-column difference of two trajectory CSV files.
    Compare { a: PathBuf, b: PathBuf },
    /// List or print bundled presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

#[derive(clap::Args)]
struct SizeArgs {
    #[arg(long, default_value_t = 10.0)]
    robot_mass: f64,
    #[arg(long, default_value_t = 0.4)]
    limb_length: f64,
    #[arg(long, default_value_t = 5.0)]
    jump_height: f64,
    #[arg(long, default_value_t = sizing::MOON_GRAVITY)]
    gravity: f64,
    #[arg(long, default_value_t = 4)]
    legs: u32,
    #[arg(long, default_value_t = 0.5)]
    moment_arm_fraction: f64,
    /// Leg angle from vertical at liftoff, degrees.
    #[arg(long, default_value_t = 45.0)]
    leg_angle_deg: f64,
    #[arg(long, default_value_t = MotorSpec::TBM2G.continuous_torque)]
    motor_continuous_torque: f64,
    #[arg(long, default_value_t = MotorSpec::TBM2G.peak_torque)]
    motor_peak_torque: f64,
    #[arg(long, default_value_t = MotorSpec::TBM2G.max_speed)]
    motor_max_speed: f64,
    #[arg(long, default_value_t = MotorSpec::TBM2G.gear_ratio)]
    gear_ratio: f64,
    #[arg(long, default_value_t = MotorSpec::TBM2G.mass)]
    motor_mass: f64,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numeric(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteState(_) | Error::InfeasibleInertia(_) => {
                Failure::Numeric(e.to_string())
            }
            Error::Solver(_) => Failure::Solver(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Config(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out, svg } => run(&scenario, &out, svg),
        Command::Size(args) => size(&args),
        Command::Compare { a, b } => compare_files(&a, &b),
        Command::Presets { action } => presets(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Config(m) => (EXIT_CONFIG, m),
                Failure::Numeric(m) => (EXIT_NUMERIC, m),
                Failure::Solver(m) => (EXIT_SOLVER, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn resolve(scenario: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(scenario);
    if path.exists() {
        return Ok(scenario::load_scenario(path)?);
    }
    if scenario::preset_text(scenario).is_some() {
        return Ok(scenario::preset(scenario)?);
    }
    Err(Failure::Config(format!(
        "`{scenario}` is neither a file nor a preset"
    )))
}

fn run(scenario: &str, out: &Path, svg: bool) -> Result<(), Failure> {
    let cfg = resolve(scenario)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let resolved = out.join("scenario.toml");
    fs::write(&resolved, cfg.to_toml()).map_err(io_err(&resolved))?;

    let log = run_closed_loop(&cfg)?;

    let csv = out.join(&cfg.output.csv);
    let file = File::create(&csv).map_err(io_err(&csv))?;
    log.write_csv(BufWriter::new(file))?;

    let solves = out.join("solver.csv");
    let file = File::create(&solves).map_err(io_err(&solves))?;
    log.write_solver_records(BufWriter::new(file))?;

    let summary = Summary::from_log(&cfg.name, &log);
    let text = summary.to_text();
    let path = out.join(&cfg.output.summary);
    fs::write(&path, &text).map_err(io_err(&path))?;
    print!("{text}");

    if svg {
        for (name, doc) in plot::standard_plots(&log) {
            let path = out.join(name);
            fs::write(&path, doc).map_err(io_err(&path))?;
        }
    }

    match log.termination {
        Termination::NonFinite(msg) => Err(Failure::Numeric(msg)),
        _ => Ok(()),
    }
}

fn size(a: &SizeArgs) -> Result<(), Failure> {
    let input = SizingInput {
        robot_mass: a.robot_mass,
        limb_length: a.limb_length,
        jump_height: a.jump_height,
        gravity: a.gravity,
        legs: a.legs,
        moment_arm_fraction: a.moment_arm_fraction,
        liftoff_leg_angle: a.leg_angle_deg.to_radians(),
    };
    let motor = MotorSpec {
        continuous_torque: a.motor_continuous_torque,
        peak_torque: a.motor_peak_torque,
        max_speed: a.motor_max_speed,
        gear_ratio: a.gear_ratio,
        mass: a.motor_mass,
    };
    let req = sizing::liftoff_requirements(&input)?;
    let report = sizing::check_motor(&req, &motor)?;
    let payload = sizing::payload_estimate(&motor, &input)?;

    let mut out = std::io::stdout().lock();
    let w = |out: &mut dyn Write, s: String| {
        writeln!(out, "{s}").map_err(|e| Failure::Config(e.to_string()))
    };
    w(&mut out, format!("v0               {:>10.3} m/s", req.v0))?;
    w(
        &mut out,
        format!("accel            {:>10.3} m/s^2", req.accel),
    )?;
    w(
        &mut out,
        format!("force_per_leg    {:>10.3} N", req.force_per_leg),
    )?;
    w(
        &mut out,
        format!("hip_torque       {:>10.3} N·m", req.hip_torque),
    )?;
    w(
        &mut out,
        format!("standing_torque  {:>10.3} N·m", req.standing_torque),
    )?;
    w(
        &mut out,
        format!("hip_speed        {:>10.3} RPM", req.hip_speed),
    )?;
    w(&mut out, String::new())?;
    write!(out, "{}", report.to_text()).map_err(|e| Failure::Config(e.to_string()))?;
    w(&mut out, String::new())?;
    w(
        &mut out,
        format!("static_payload   {:>10.3} kg", payload.static_payload),
    )?;
    w(
        &mut out,
        format!("dynamic_payload  {:>10.3} kg", payload.dynamic_payload),
    )?;
    Ok(())
}

fn compare_files(a: &Path, b: &Path) -> Result<(), Failure> {
    let read = |p: &Path| -> Result<_, Failure> {
        let f = File::open(p).map_err(io_err(p))?;
        Ok(read_csv(BufReader::new(f))?)
    };
    let diffs = compare(&read(a)?, &read(b)?)?;
    print!("{}", format_diff(&diffs));
    Ok(())
}

fn presets(action: PresetAction) -> Result<(), Failure> {
    match action {
        PresetAction::List => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
        }
        PresetAction::Show { name } => {
            let text = scenario::preset_text(&name)
                .ok_or_else(|| Failure::Config(format!("unknown preset `{name}`")))?;
            print!("{text}");
        }
    }
    Ok(())
}
