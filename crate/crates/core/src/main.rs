use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dob_inekf::config::RunConfig;
use dob_inekf::error::{Error, Result};
use dob_inekf::filter::observability_matrix;
use dob_inekf::io::{self, fmt_sig9};
use dob_inekf::metrics::rmse;
use dob_inekf::pipeline::run_filter;
use dob_inekf::sim::{monte_carlo_nees, simulate, TrajectoryProfile};
use dob_inekf::slipdetect::{align_labels, evaluate, SlipDecision};

#[derive(Parser)]
#[command(name = "dob-inekf", version, about = "Invariant EKF with slip-velocity disturbance observer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory profile and write imu/encoder/gt/labels CSVs.
    Simulate {
        profile: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the filter as configured.
    Run {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Per-axis RMSE of an estimate log against ground truth.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Inclusive time window `start,end` in seconds.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
    },
    /// Slip classification metrics of an estimate log against label intervals.
    Detect {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 4.642)]
        threshold: f64,
    },
    /// Rank and null space of the slip-augmented observability matrix.
    Observability {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        dt: f64,
        #[arg(long, default_value_t = 20)]
        rows: usize,
    },
    /// Monte-Carlo NEES of the slip-augmented filter on a profile.
    Nees {
        profile: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `start,end`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if b < a {
        return Err("window end precedes start".into());
    }
    Ok((a, b))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_profile(path: &Path) -> Result<TrajectoryProfile> {
    toml::from_str(&read_text(path)?)
        .map_err(|e: toml::de::Error| Error::InvalidProfile(e.message().to_string()))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { profile, output } => {
            let sim = simulate(&load_profile(&profile)?)?;
            let paths = io::write_simulation(&output, &sim)?;
            println!("imu {}", paths.imu.display());
            println!("encoder {}", paths.encoder.display());
            println!("gt {}", paths.ground_truth.display());
            println!("labels {}", paths.labels.display());
        }
        Command::Run { config } => {
            let cfg = RunConfig::from_file(&config)?;
            let (out, paths) = run_filter(&cfg)?;
            let slips = out.decisions.iter().filter(|d| d.is_slip).count();
            println!("estimates {} rows {}", paths.estimates.display(), out.estimates.len());
            println!("slip {} rows {} flagged {}", paths.decisions.display(), out.decisions.len(), slips);
            println!("corrections {}", paths.corrections.display());
        }
        Command::Evaluate { est, gt, window } => {
            let report = rmse(&io::read_estimates(&est)?, &io::read_ground_truth(&gt)?, window)?;
            println!("axis,rmse");
            for (axis, v) in [
                ("yaw", report.yaw),
                ("pitch", report.pitch),
                ("roll", report.roll),
                ("vx", report.vx),
                ("vy", report.vy),
                ("vz", report.vz),
            ] {
                println!("{axis},{}", fmt_sig9(v));
            }
        }
        Command::Detect { est, labels, threshold } => {
            let decisions: Vec<SlipDecision> = io::read_estimates(&est)?
                .iter()
                .map(|e| SlipDecision::new(e.t, e.r, threshold))
                .collect();
            let (kept, truth) = align_labels(&decisions, &io::read_labels(&labels)?);
            let m = evaluate(&kept, &truth)?;
            println!("tp,fp,tn,fn,fpr,fnr,accuracy");
            println!(
                "{},{},{},{},{},{},{}",
                m.tp,
                m.fp,
                m.tn,
                m.fn_,
                fmt_sig9(m.fpr),
                fmt_sig9(m.fnr),
                fmt_sig9(m.accuracy)
            );
        }
        Command::Observability { config, dt, rows } => {
            let noise = RunConfig::noise_only(&read_text(&config)?)?;
            if rows < 4 {
                return Err(Error::Config("observability needs at least 4 block rows".into()));
            }
            let report = observability_matrix(&noise, dt, rows);
            println!("rank {}", report.rank);
            let sv: Vec<String> = report.singular_values.iter().map(|&s| fmt_sig9(s)).collect();
            println!("singular_values {}", sv.join(","));
            for c in 0..report.null_space.ncols() {
                let v: Vec<String> = report.null_space.column(c).iter().map(|&x| fmt_sig9(x)).collect();
                println!("null {}", v.join(","));
            }
        }
        Command::Nees { profile, config, runs } => {
            let noise = RunConfig::noise_only(&read_text(&config)?)?;
            let report = monte_carlo_nees(&load_profile(&profile)?, runs, &noise)?;
            println!("dim {}", report.dim);
            println!("runs {}", report.runs);
            println!("mean {}", fmt_sig9(report.mean));
            println!("coverage {}", fmt_sig9(report.coverage));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
