use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use axial_twin::harness::{calibration_seed, hold_std};
use axial_twin::signal::FilterSpec;
use axial_twin::testbed::NoiseSpec;
use axial_twin::{calibrate_noise, read_trace, replay_metrics, run_scenario, Error, PathwayKind, ScenarioConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRIAL: u8 = 3;
const EXIT_CALIBRATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "axial-twin",
    version,
    about = "Axial force sensor twin: trials, calibration and trace replay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathwayArg {
    Straight,
    Curved,
}

#[derive(Subcommand)]
enum Command {
    /// Run all trials of a scenario and write their traces.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Master seed for the trial seed split.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        pathway: Option<PathwayArg>,
        #[arg(long)]
        noise_free: bool,
        #[arg(long)]
        trials: Option<u32>,
    },
    /// Find the device noise sigma that gives a target filtered std on a hold.
    Calibrate {
        scenario: PathBuf,
        #[arg(long)]
        target_std: f64,
        #[arg(long, default_value_t = 0.005)]
        tol: f64,
    },
    /// Recompute RMSE and std from recorded traces.
    Report {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value_t = FilterSpec::default().window)]
        window: usize,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::TrialFault { .. } | Error::Consistency(_) | Error::Transition { .. } | Error::Acquisition { .. } => {
            EXIT_TRIAL
        }
        Error::Calibration { .. } => EXIT_CALIBRATION,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run {
            scenario,
            out,
            seed,
            pathway,
            noise_free,
            trials,
        } => {
            let mut cfg = ScenarioConfig::load(&scenario)?;
            if let Some(p) = pathway {
                cfg = cfg.with_pathway_kind(match p {
                    PathwayArg::Straight => PathwayKind::Straight,
                    PathwayArg::Curved => PathwayKind::Curved,
                });
            }
            if let Some(s) = seed {
                cfg.noise.seed = s;
            }
            if let Some(n) = trials {
                cfg.trials = n;
            }
            cfg.noise_free |= noise_free;
            cfg.validate()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;

            let outcome = run_scenario(&cfg, Some(&out))?;
            println!("trial  seed                  rmse_n     std_n      halted_at_s  trace");
            for t in &outcome.trials {
                match (&t.report, &t.failure) {
                    (Some(r), _) => println!(
                        "{:<6} {:<21} {:<10.6} {:<10.6} {:<12} {}",
                        r.trial_index,
                        r.seed,
                        r.rmse_n,
                        r.endoforce_std_n,
                        r.halted_at_s.map_or("-".to_string(), |h| format!("{h:.3}")),
                        r.trace_path.as_ref().map_or(String::new(), |p| p.display().to_string()),
                    ),
                    (None, Some(msg)) => println!("{:<6} FAILED: {msg}", t.trial_index),
                    (None, None) => {}
                }
            }
            if let Some(s) = &outcome.summary {
                println!(
                    "summary {}: mean rmse {:.6} N (min {:.6}, max {:.6}), mean std {:.6} N, {} ok / {} failed",
                    outcome.name, s.mean_rmse_n, s.min_rmse_n, s.max_rmse_n, s.mean_std_n, s.completed, s.failed
                );
            }
            let summary_path = out.join(format!("{}_summary.json", cfg.name));
            let json = serde_json::to_string_pretty(&outcome).expect("outcome serializes");
            std::fs::write(&summary_path, json + "\n").map_err(|e| Error::Io {
                path: summary_path,
                source: e,
            })?;
            let failed = outcome.trials.iter().any(|t| t.failure.is_some());
            Ok(if failed { EXIT_TRIAL } else { 0 })
        }
        Command::Calibrate {
            scenario,
            target_std,
            tol,
        } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let noise = calibrate_noise(&cfg, target_std, tol)?;
            let achieved = hold_std(
                &cfg,
                NoiseSpec {
                    seed: calibration_seed(cfg.noise.seed),
                    ..noise
                },
            )?;
            println!("# filtered hold std {achieved:.6} N (target {target_std} ± {tol} N)");
            println!("noise.sigma_endoforce_n = {}", noise.sigma_endoforce_n);
            Ok(0)
        }
        Command::Report { traces, window } => {
            let filter = FilterSpec { window };
            filter.validate()?;
            let mut rmses = Vec::new();
            for path in &traces {
                let records = read_trace(path)?;
                let m = replay_metrics(&records, filter)?;
                println!(
                    "{}: {} rows, rmse {:.9} N, std {:.9} N",
                    path.display(),
                    records.len(),
                    m.rmse_n,
                    m.endoforce_std_n
                );
                rmses.push(m.rmse_n);
            }
            if rmses.len() > 1 {
                println!(
                    "mean rmse {:.9} N over {} traces",
                    rmses.iter().sum::<f64>() / rmses.len() as f64,
                    rmses.len()
                );
            }
            Ok(0)
        }
    }
}
