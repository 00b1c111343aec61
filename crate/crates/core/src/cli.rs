//! `fibrelay` command-line surface.
//!
//! Exit codes: 0 success, 1 a `verify` verdict is inconsistent, 2 usage or
//! configuration error, 3 numerical failure (unbracketable gain, degenerate
//! state, calibration not converged).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::calibration::{find_zero_lyapunov_gain, CalibrationOptions};
use crate::cocycle::run_trajectory;
use crate::config::{Command, RunConfig, Settings};
use crate::error::{Error, Result};
use crate::lyapunov::{estimate_lambda, LyapunovEstimate};
use crate::output::{
    write_slopes_csv, write_sweep_csv, CalibrationReport, LyapunovReport, OutputDir, RunManifest,
    VerifyReport,
};
use crate::scaling::verify_laws;

pub const WORKERS_ENV: &str = "FIBRELAY_WORKERS";

pub const EXIT_VERDICT: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "fibrelay",
    version,
    about = "Random Fibonacci cocycles for cooperative AF relay chains"
)]
pub struct Cli {
    /// Worker threads for replica parallelism (outputs do not depend on it).
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Estimate the top Lyapunov exponent.
    Lyapunov(RunArgs),
    /// Write per-node trajectories as CSV.
    Simulate(RunArgs),
    /// Find the constant gain with zero Lyapunov exponent.
    Calibrate(RunArgs),
    /// Check the capacity and transmit-power scaling laws.
    Verify(RunArgs),
    /// Tabulate the exponent over a gain grid.
    Sweep(RunArgs),
    /// Re-run a command from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Key-value or JSON config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Coefficient model, e.g. `rayleigh:mu=1`, `deterministic:c=0.2`.
    #[arg(long)]
    pub model: Option<String>,
    /// Constant gain or `nodes:g1,g2,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub gain: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub n0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub i0: Option<String>,
    /// Number of nodes (trajectory length).
    #[arg(long, short = 'n')]
    pub n: Option<String>,
    /// Master seed, or `auto`.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub replicas: Option<String>,
    /// Nodes discarded before accounting, or `auto`.
    #[arg(long)]
    pub burn_in: Option<String>,
    /// `growth_rate` or `tail_ratio`.
    #[arg(long)]
    pub kind: Option<String>,
    /// Admit the signed validation model.
    #[arg(long)]
    pub validation: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub g_init: Option<String>,
    #[arg(long)]
    pub max_steps: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tolerance_sigma: Option<String>,
    /// Comma-separated gains for `sweep`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

impl RunArgs {
    /// Flag values as a settings layer.
    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        let pairs: [(&str, &Option<String>, &str); 14] = [
            ("network.model", &self.model, "--model"),
            ("network.gain", &self.gain, "--gain"),
            ("network.n0", &self.n0, "--n0"),
            ("network.i0", &self.i0, "--i0"),
            ("network.nodes", &self.n, "--n"),
            ("run.seed", &self.seed, "--seed"),
            ("run.replicas", &self.replicas, "--replicas"),
            ("run.burn_in", &self.burn_in, "--burn-in"),
            ("lyapunov.kind", &self.kind, "--kind"),
            ("calibrate.tol", &self.tol, "--tol"),
            ("calibrate.g_init", &self.g_init, "--g-init"),
            ("calibrate.max_steps", &self.max_steps, "--max-steps"),
            (
                "verify.tolerance_sigma",
                &self.tolerance_sigma,
                "--tolerance-sigma",
            ),
            ("sweep.grid", &self.grid, "--grid"),
        ];
        for (key, value, flag) in pairs {
            if let Some(v) = value {
                s.insert(key, v, flag)?;
            }
        }
        if self.validation {
            s.insert("lyapunov.validation", "true", "--validation")?;
        }
        Ok(s)
    }

    /// Defaults, then `--config`, then flags.
    pub fn resolve(&self, command: Command) -> Result<RunConfig> {
        let mut settings = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        settings.overlay(self.settings()?);
        settings.resolve(command)
    }
}

/// What a command produced, for the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerdictFailure,
    NotConverged,
}

/// Parses `std::env::args` and runs.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run_cli(cli))
}

pub fn run_cli(cli: Cli) -> u8 {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {workers} workers: {e}");
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| -> Result<Outcome> {
        match &cli.command {
            CliCommand::Replay { manifest, out } => {
                let m = RunManifest::load(manifest)?;
                run_command(&m.config_echo, out)
            }
            CliCommand::Lyapunov(a) => run_command(&a.resolve(Command::Lyapunov)?, &a.out),
            CliCommand::Simulate(a) => run_command(&a.resolve(Command::Simulate)?, &a.out),
            CliCommand::Calibrate(a) => run_command(&a.resolve(Command::Calibrate)?, &a.out),
            CliCommand::Verify(a) => run_command(&a.resolve(Command::Verify)?, &a.out),
            CliCommand::Sweep(a) => run_command(&a.resolve(Command::Sweep)?, &a.out),
        }
    });
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::VerdictFailure) => EXIT_VERDICT,
        Ok(Outcome::NotConverged) => EXIT_NUMERICAL,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}

/// Runs one resolved command, writing its data files and manifest into `out`.
pub fn run_command(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut dir = OutputDir::create(out)?;
    let stdout = std::io::stdout();
    let outcome = match cfg.command {
        Command::Lyapunov => {
            let est = estimate_lambda(
                &cfg.model,
                &cfg.gain,
                cfg.nodes,
                cfg.replicas,
                cfg.master_seed,
                cfg.kind,
                &cfg.estimator_options(),
            )?;
            let report = LyapunovReport::new(&est, cfg);
            dir.write_json("lyapunov.json", &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Outcome::Success
        }
        Command::Simulate => {
            let net = cfg.network();
            let trajectories = (0..cfg.replicas as u64)
                .into_par_iter()
                .map(|r| run_trajectory(&net, r))
                .collect::<Result<Vec<_>>>()?;
            for t in &trajectories {
                dir.write_with(&format!("trajectory_{:04}.csv", t.stream_id), |w| {
                    t.write_csv(w)
                })?;
            }
            println!(
                "wrote {} trajectories of {} nodes to {}",
                trajectories.len(),
                cfg.nodes,
                out.display()
            );
            Outcome::Success
        }
        Command::Calibrate => {
            let mut opts = CalibrationOptions::new(cfg.nodes, cfg.replicas);
            opts.max_steps = cfg.max_steps.max(cfg.nodes);
            opts.g_init = cfg.g_init;
            opts.estimator = cfg.estimator_options();
            let result = find_zero_lyapunov_gain(&cfg.model, cfg.tol, cfg.master_seed, &opts)?;
            let converged = result.converged;
            let report = CalibrationReport {
                model_spec: cfg.model.to_string(),
                master_seed: cfg.master_seed,
                result,
            };
            dir.write_json("calibration.json", &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if converged {
                Outcome::Success
            } else {
                eprintln!(
                    "calibration did not reach |lambda| <= {} at the step cap",
                    cfg.tol
                );
                Outcome::NotConverged
            }
        }
        Command::Verify => {
            let v = verify_laws(
                &cfg.network(),
                cfg.nodes,
                cfg.replicas,
                &cfg.verify_options(),
            )?;
            let report = VerifyReport {
                model_spec: cfg.model.to_string(),
                gain_spec: cfg.gain.to_string(),
                master_seed: cfg.master_seed,
                all_consistent: v.all_consistent(),
                capacity: v.capacity.clone(),
                power: v.power.clone(),
            };
            dir.write_json("verify.json", &report)?;
            dir.write_with("slopes.csv", |w| write_slopes_csv(w, &v.replica_slopes))?;
            print_verdicts(&mut stdout.lock(), &report)?;
            if report.all_consistent {
                Outcome::Success
            } else {
                Outcome::VerdictFailure
            }
        }
        Command::Sweep => {
            let rows = cfg
                .grid
                .iter()
                .map(|&g| {
                    estimate_lambda(
                        &cfg.model,
                        &crate::coeff::GainPolicy::Constant(g),
                        cfg.nodes,
                        cfg.replicas,
                        cfg.master_seed,
                        cfg.kind,
                        &cfg.estimator_options(),
                    )
                    .map(|e| (g, e))
                })
                .collect::<Result<Vec<(f64, LyapunovEstimate)>>>()?;
            dir.write_with("sweep.csv", |w| write_sweep_csv(w, &rows))?;
            write_sweep_csv(&mut stdout.lock(), &rows).map_err(|e| Error::io("stdout", e))?;
            Outcome::Success
        }
    };
    dir.finish(cfg)?;
    Ok(outcome)
}

fn print_verdicts(w: &mut dyn Write, r: &VerifyReport) -> Result<()> {
    let io = |e| Error::io("stdout", e);
    let lambda = &r.capacity.lambda_estimate;
    writeln!(
        w,
        "lambda_hat = {:.6} +/- {:.2e} ({} replicas, {} nodes); order notation read as Theta_P",
        lambda.lambda_hat, lambda.std_err, lambda.n_replicas, lambda.n_steps
    )
    .map_err(io)?;
    writeln!(
        w,
        "{:<9} {:>12} {:>12} {:>10} {:>10} {:>8} {:>8}  verdict",
        "law", "predicted", "measured", "std_err", "band", "O_P", "Omega_P"
    )
    .map_err(io)?;
    for (name, law) in [("capacity", &r.capacity), ("power", &r.power)] {
        writeln!(
            w,
            "{:<9} {:>12.6} {:>12.6} {:>10.2e} {:>10.2e} {:>8.3} {:>8.3}  {:?}",
            name,
            law.predicted_exponent,
            law.measured.slope,
            law.measured.std_err,
            law.band,
            law.theta_p.upper_fraction,
            law.theta_p.lower_fraction,
            law.verdict
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flag_example() {
        let cli = Cli::try_parse_from([
            "fibrelay",
            "lyapunov",
            "--model",
            "deterministic:c=1",
            "--gain",
            "0.5",
            "--n",
            "1000",
        ])
        .unwrap();
        let CliCommand::Lyapunov(a) = cli.command else {
            panic!()
        };
        let cfg = a.resolve(Command::Lyapunov).unwrap();
        assert_eq!(cfg.nodes, 1000);
        assert_eq!(cfg.gain, crate::coeff::GainPolicy::Constant(0.5));
    }

    #[test]
    fn negative_gain_is_a_config_error() {
        let cli = Cli::try_parse_from([
            "fibrelay",
            "verify",
            "--model",
            "deterministic:c=1",
            "--gain",
            "-1",
        ])
        .unwrap();
        let CliCommand::Verify(a) = cli.command else {
            panic!()
        };
        let err = a.resolve(Command::Verify).unwrap_err();
        assert!(err.to_string().contains("--gain"), "{err}");
    }
}
