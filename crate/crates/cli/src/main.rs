use std::path::PathBuf;
use std::process::ExitCode;

use afflow_cli::acceptance::{format_table, parse_criterion};
use afflow_cli::config::{Scenario, ScenarioConfig};
use afflow_cli::run::{keyed_dir, run_scenario, Outcome, RunOptions};
use afflow_cli::CliError;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "afflow", version, about = "Affine normal flow scenarios and the acceptance suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON); repeat to run several scenarios.
    #[arg(long = "config", global = true)]
    configs: Vec<PathBuf>,
    /// Output directory; the AFFLOW_OUT environment variable takes precedence.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; above 1, node updates and independent scenarios run concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    /// Acceptance criterion by number or name; repeat or separate with commas.
    #[arg(long, global = true, value_delimiter = ',')]
    only: Vec<String>,
    /// Multiplier on acceptance tolerances; below 1 tightens every threshold.
    #[arg(long, global = true)]
    tol_scale: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Evolve an oracle's initial field and monitor the run.
    Flow,
    /// Affine frames at sampled nodes.
    Invariants,
    /// Discrete residual of a closed-form solution.
    VerifySoliton,
    /// A flow with cubic-form, speed or Pogorelov monitors.
    Estimates,
    /// Exhaustion of a noncompact body and the limit study.
    Exhaust,
    /// Quadric fit, affine sphere constant and Lie quadric.
    QuadricCheck,
    /// The acceptance suite.
    Acceptance,
}

impl Command {
    fn scenario(self) -> Scenario {
        match self {
            Command::Flow => Scenario::Flow,
            Command::Invariants => Scenario::Invariants,
            Command::VerifySoliton => Scenario::VerifySoliton,
            Command::Estimates => Scenario::Estimates,
            Command::Exhaust => Scenario::Exhaust,
            Command::QuadricCheck => Scenario::QuadricCheck,
            Command::Acceptance => Scenario::Acceptance,
        }
    }
}

fn fail(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

fn report(cfg: &ScenarioConfig, outcome: &Outcome, dir: &std::path::Path) {
    if cfg.scenario == Scenario::Acceptance {
        print!("{}", format_table(&outcome.rows));
    } else {
        for v in &outcome.verdicts {
            println!(
                "{} {}: {:.6e} | {} ({})",
                if v.pass { "PASS" } else { "FAIL" },
                v.monitor,
                v.measured,
                v.threshold,
                v.detail
            );
        }
    }
    println!("{}: {} -> {}", cfg.scenario.name(), if outcome.pass { "pass" } else { "fail" }, dir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = cli.common;
    let scenario = cli.command.scenario();
    if c.parallel == 0 {
        return ExitCode::from(fail(&CliError::ConfigInvalid("--parallel must be at least 1".into())) as u8);
    }
    if c.parallel > 1 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(c.parallel).build_global() {
            eprintln!("warning: thread pool already configured: {e}");
        }
    }
    let mut only = Vec::new();
    for s in &c.only {
        match parse_criterion(s) {
            Some(k) => only.push(k),
            None => {
                let e = CliError::ConfigInvalid(format!("unknown acceptance criterion {s:?}"));
                return ExitCode::from(fail(&e) as u8);
            }
        }
    }
    if scenario != Scenario::Acceptance && (!only.is_empty() || c.tol_scale.is_some()) {
        let e = CliError::ConfigInvalid("--only and --tol-scale apply to the acceptance subcommand".into());
        return ExitCode::from(fail(&e) as u8);
    }
    let out_root = std::env::var_os("AFFLOW_OUT").map(PathBuf::from).or(c.out);

    let mut jobs = Vec::new();
    if c.configs.is_empty() {
        if scenario != Scenario::Acceptance {
            let e = CliError::ConfigInvalid(format!("{} needs --config", scenario.name()));
            return ExitCode::from(fail(&e) as u8);
        }
        let cfg = ScenarioConfig::acceptance();
        let dir = out_root.clone().unwrap_or_else(|| cfg.output_dir.clone());
        jobs.push((cfg, dir));
    }
    for path in &c.configs {
        let cfg = match ScenarioConfig::load(path) {
            Ok(cfg) => cfg,
            Err(e) => return ExitCode::from(fail(&e) as u8),
        };
        if cfg.scenario != scenario {
            let e = CliError::ConfigInvalid(format!(
                "{} holds a {} scenario, not {}",
                path.display(),
                cfg.scenario.name(),
                scenario.name()
            ));
            return ExitCode::from(fail(&e) as u8);
        }
        let dir = match &out_root {
            Some(root) if c.configs.len() > 1 => keyed_dir(root, path, &cfg),
            Some(root) => root.clone(),
            None => cfg.output_dir.clone(),
        };
        jobs.push((cfg, dir));
    }

    let opts = |dir: &PathBuf| RunOptions {
        out_dir: dir.clone(),
        parallel: c.parallel > 1,
        tol_scale: c.tol_scale,
        only: only.clone(),
    };
    let results: Vec<Result<Outcome, CliError>> = if c.parallel > 1 && jobs.len() > 1 {
        jobs.par_iter().map(|(cfg, dir)| run_scenario(cfg, &opts(dir))).collect()
    } else {
        jobs.iter().map(|(cfg, dir)| run_scenario(cfg, &opts(dir))).collect()
    };

    let mut code = 0;
    for ((cfg, dir), res) in jobs.iter().zip(&results) {
        let c = match res {
            Ok(outcome) => {
                report(cfg, outcome, dir);
                outcome.exit_code()
            }
            Err(e) => fail(e),
        };
        // a config error outranks an abort, which outranks a failed monitor
        code = match (code, c) {
            (2, _) | (_, 2) => 2,
            (3, _) | (_, 3) => 3,
            (a, b) => a.max(b),
        };
    }
    ExitCode::from(code as u8)
}
