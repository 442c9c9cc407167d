//! `nsfstab`: run the solver, the scalar checks, the refinement study or
//! the steady solver, and report acceptance criteria.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use nsf_stability::error::Error;
use nsf_stability::harness::{
    convergence_study, default_scenario, parse_config, run_experiment, steady_command, verify_lemmas, RunConfig,
    RunReport,
};

#[derive(Parser, Debug)]
#[command(name = "nsfstab", version, about = "Navier-Stokes-Fourier stability harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a perturbation and check the functional decay criteria.
    Run(Common),
    /// Check the scalar inequalities and constants.
    VerifyLemmas(Common),
    /// Time-step and grid refinement study.
    Converge(Common),
    /// Solve the steady temperature problem.
    Steady(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration; `-` reads standard input. Defaults to the
    /// reference scenario.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for summary.json and any traces or snapshots.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print nothing but errors.
    #[arg(long)]
    quiet: bool,
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        None => default_scenario(),
        Some(p) if p.as_os_str() == "-" => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            parse_config(&text)?
        }
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)?
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.clone());
    }
    Ok(cfg)
}

fn write_summary(dir: Option<&Path>, report: &RunReport) {
    let Some(dir) = dir else { return };
    if let Err(e) =
        std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join("summary.json"), report.to_json()))
    {
        error!("writing summary: {e}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Run(c) => ("run", c),
        Command::VerifyLemmas(c) => ("verify-lemmas", c),
        Command::Converge(c) => ("converge", c),
        Command::Steady(c) => ("steady", c),
    };
    let level = if common.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let report = match load(common) {
        Err(e) => {
            let mut r = RunReport::new(name);
            r.set_error(&e);
            write_summary(common.out.as_deref(), &r);
            r
        }
        Ok(cfg) => {
            info!("{name}: {}x{} grid, seed {}", cfg.grid.nx, cfg.grid.ny, cfg.seed);
            match &cli.command {
                Command::Run(_) => run_experiment(&cfg).report,
                Command::Converge(_) => convergence_study(&cfg),
                Command::Steady(_) => steady_command(&cfg),
                Command::VerifyLemmas(_) => {
                    let pair = (cfg.exponents.m, cfg.exponents.n);
                    let r = verify_lemmas(cfg.seed, cfg.x_crit, pair);
                    write_summary(cfg.output.dir.as_deref(), &r);
                    r
                }
            }
        }
    };

    if let Some(e) = &report.error {
        error!("{} error ({}): {}", e.class, e.category, e.message);
    }
    if !common.quiet {
        for line in report.summary_lines() {
            println!("{line}");
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
