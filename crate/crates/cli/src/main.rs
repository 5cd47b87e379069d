use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use memlab::exp::{self, ExperimentConfig, ExperimentKind, Fault, RunReport};

/// Memorization and CMI experiments on the hypercube.
#[derive(Parser, Debug)]
#[command(name = "memlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (flat `key = value` file).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.path`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every grid point of a config.
    Run(Common),
    /// Run a grid of at least three points and fit log-log slopes.
    Sweep(Common),
    /// Run the lemma property suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Deliberately break a check (negative control).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Summarize a results CSV.
    Report {
        /// CSV to read; defaults to --out.
        path: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure classes with their exit codes.
enum Outcome {
    Pass,
    AcceptanceFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::AcceptanceFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Run(c) => experiment(&c, false),
        Command::Sweep(c) => experiment(&c, true),
        Command::Verify { common, inject_fault } => verify(&common, inject_fault.as_deref()),
        Command::Report { path, common } => report(path.or(common.out).context("report needs a CSV path")?),
    }
}

fn threads(c: &Common) -> Result<()> {
    if let Some(n) = c.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("building the worker pool")?;
    }
    Ok(())
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let path = c.config.as_ref().context("--config is required")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output = Some(out.display().to_string());
    }
    Ok(cfg)
}

fn finish(report: &RunReport, out: Option<&Path>, quiet: bool) -> Result<Outcome> {
    if let Some(path) = out {
        exp::write_csv_file(&report.rows, path).with_context(|| format!("writing {}", path.display()))?;
    }
    if !quiet {
        print!("{}", report.summary());
        if let Some(path) = out {
            println!("wrote {} rows to {}", report.rows.len(), path.display());
        }
    }
    Ok(if report.all_pass() { Outcome::Pass } else { Outcome::AcceptanceFailed })
}

fn experiment(c: &Common, sweep: bool) -> Result<Outcome> {
    let cfg = load(c)?;
    threads(c)?;
    let report = if sweep { exp::sweep(&cfg)? } else { exp::run(&cfg)? };
    finish(&report, cfg.output.as_deref().map(Path::new), c.quiet)
}

fn verify(c: &Common, fault: Option<&str>) -> Result<Outcome> {
    let mut cfg = match &c.config {
        Some(_) => load(c)?,
        None => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::LemmaVerify);
            cfg.seed = c.seed.unwrap_or(7);
            cfg.output = c.out.as_ref().map(|p| p.display().to_string());
            cfg
        }
    };
    cfg.experiment = ExperimentKind::LemmaVerify;
    let fault: Option<Fault> = fault.map(str::parse).transpose()?;
    threads(c)?;
    let suite = exp::verify(cfg.seed, fault)?;
    if !c.quiet {
        for check in &suite.checks {
            println!("{check}");
        }
    }
    let report = RunReport { experiment: cfg.experiment, rows: exp::verify_rows(&cfg, &suite), checks: Vec::new() };
    if let Some(path) = cfg.output.as_deref().map(Path::new) {
        exp::write_csv_file(&report.rows, path).with_context(|| format!("writing {}", path.display()))?;
    }
    if !suite.all_pass() {
        for check in suite.failures() {
            eprintln!("violated invariant: {}", check.name);
        }
        return Ok(Outcome::AcceptanceFailed);
    }
    Ok(Outcome::Pass)
}

fn report(path: PathBuf) -> Result<Outcome> {
    let rows = exp::read_csv_file(&path).with_context(|| format!("reading {}", path.display()))?;
    print!("{}", exp::report(&rows));
    Ok(Outcome::Pass)
}
