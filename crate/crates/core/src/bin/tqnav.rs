use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tqnav::harness::{self, CoarseAttitude, Config, Scenario};
use tqnav::sim::{self, ScenarioKind};
use tqnav::{ErrorModelKind, Error};

#[derive(Parser)]
#[command(name = "tqnav", version, about = "Trident-quaternion INS alignment and Monte-Carlo harness")]
struct Cli {
    /// Print the full default configuration as TOML and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides sweep.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated filter list, e.g. lqekf,rqekf,ekf.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<ErrorModelKind>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Externally supplied coarse attitude "roll,pitch,yaw" in deg. Sweeps
    /// read it as an error relative to truth handed over at
    /// sweep.coarse_attitude.time; replay reads it as the initial attitude.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
    coarse_att: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write truth, IMU and odometer CSVs for one run of the configured scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_scenario)]
        scenario: Option<ScenarioKind>,
    },
    /// Static (zero-velocity) alignment sweep.
    AlignStatic {
        #[command(flatten)]
        common: Common,
    },
    /// In-motion (odometer-aided) alignment sweep.
    AlignMotion {
        #[command(flatten)]
        common: Common,
    },
    /// Run a filter over recorded IMU and odometer CSV logs.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        imu: PathBuf,
        #[arg(long)]
        odometer: PathBuf,
    },
    /// Re-read a report directory and print its summary.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    match s {
        "static" => Ok(ScenarioKind::Static),
        "in-motion" | "motion" => Ok(ScenarioKind::InMotion),
        _ => Err(format!("unknown scenario '{s}'")),
    }
}

fn load(c: &Common) -> Result<Config, Error> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = c.seed {
        cfg.sweep.seed = s;
    }
    if let Some(f) = &c.filters {
        cfg.sweep.filters = f.clone();
        cfg.replay.filter = f[0];
    }
    Ok(cfg)
}

fn coarse(c: &Common) -> Option<[f64; 3]> {
    c.coarse_att.as_ref().map(|v| [v[0], v[1], v[2]])
}

fn sweep(c: &Common, scenario: ScenarioKind) -> Result<(), Error> {
    let mut cfg = load(c)?;
    cfg.sweep.scenario = scenario;
    if let Some(a) = coarse(c) {
        let base = cfg.sweep.coarse_attitude.unwrap_or_default();
        cfg.sweep.coarse_attitude = Some(CoarseAttitude { attitude_deg: a, ..base });
    }
    cfg.validate()?;
    let report = harness::run_sweep(&cfg)?;
    harness::emit_report(&report, &c.out)?;
    print!("{}", report.summary());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    if cli.dump_defaults {
        print!("{}", Config::default().to_toml());
        return Ok(());
    }
    let Some(cmd) = cli.cmd else {
        return Err(Error::InvalidInput("no subcommand given; see --help".into()));
    };
    match cmd {
        Cmd::Simulate { common, scenario } => {
            let mut cfg = load(&common)?;
            if let Some(s) = scenario {
                cfg.sweep.scenario = s;
            }
            let sc = Scenario::new(&cfg)?;
            let spec = cfg.sensor.to_spec(cfg.sweep.seed)?;
            let data = sc.data(cfg.sweep.seed)?;
            std::fs::create_dir_all(&common.out)?;
            let mut traj = sc.trajectory.clone();
            traj.profile.duration = cfg.duration();
            sim::write_truth_csv(&common.out.join("truth.csv"), &sim::gen_truth(&traj, &spec))?;
            sim::write_imu_csv(&common.out.join("imu.csv"), &data.imu)?;
            sim::write_odometer_csv(&common.out.join("odometer.csv"), &data.odometer)?;
            println!("wrote {} IMU samples to {}", data.imu.len(), common.out.display());
        }
        Cmd::AlignStatic { common } => sweep(&common, ScenarioKind::Static)?,
        Cmd::AlignMotion { common } => sweep(&common, ScenarioKind::InMotion)?,
        Cmd::Replay { common, imu, odometer } => {
            let mut cfg = load(&common)?;
            if let Some(a) = coarse(&common) {
                cfg.replay.attitude_deg = a;
            }
            let rows = harness::replay_files(&imu, &odometer, &cfg)?;
            std::fs::create_dir_all(&common.out)?;
            harness::write_replay_csv(&common.out.join("replay.csv"), &rows, &cfg.earth)?;
            println!("wrote {} epochs to {}", rows.len(), common.out.join("replay.csv").display());
        }
        Cmd::Report { common } => {
            let report = harness::parse_report(&common.out)?;
            print!("{}", report.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tqnav: {e}");
            ExitCode::FAILURE
        }
    }
}
