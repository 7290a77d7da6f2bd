use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delearn_core::config::{preset, preset_names, preset_source, ExperimentConfig, ExperimentKind};
use delearn_core::{experiment, verify, Error};

mod plot;

#[derive(Parser)]
#[command(name = "delearn", version, about = "Parameter learning under deficient excitation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset, a config file or the verification suites.
    Run(RunArgs),
    /// List presets and verification suites.
    List,
    /// Print a preset as a config file.
    Show { name: String },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Preset name, or `verify`.
    target: Option<String>,
    #[arg(long, conflicts_with_all = ["target", "preset"])]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "target")]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated time in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Integrator step in seconds.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    no_svg: bool,
    /// Restrict `verify` to the named suites.
    #[arg(long = "suite")]
    suites: Vec<String>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Verification(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() || matches!(e, Error::Io(_)) {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::List => {
            list();
            Ok(())
        }
        Command::Show { name } => show(&name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Verification(n)) => {
            eprintln!("{n} verification suite(s) failed");
            ExitCode::from(4)
        }
    }
}

fn list() {
    println!("presets:");
    for name in preset_names() {
        println!("  {name}");
    }
    println!("verification suites (run verify):");
    for name in verify::suite_names() {
        println!("  {name}");
    }
}

fn show(name: &str) -> Result<(), Failure> {
    match preset_source(name) {
        Some(text) => print!("{text}"),
        None => print!("{}", preset(name)?.to_toml()?),
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let name = args.target.as_deref().or(args.preset.as_deref());
    let mut cfg = match (&args.config, name) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some("verify")) => return run_verify(&args.suites),
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Failure::Config("give a preset name, --preset or --config".into())),
    };
    if cfg.kind == ExperimentKind::Verify {
        return run_verify(&args.suites);
    }
    cfg.apply_overrides(args.seed, args.horizon, args.step)?;

    let out = experiment::run(&cfg)?;
    fs::create_dir_all(&args.out_dir).map_err(Error::from)?;
    let csv_path = args.out_dir.join(format!("{}.csv", cfg.name));
    let selected = out.selected(&cfg)?;
    write(&csv_path, selected.to_csv_string())?;

    println!("{}: {} rows, {} steps of {} s", cfg.name, selected.len(), cfg.integrator.config().steps()?, cfg.integrator.step);
    println!("  csv  {}", csv_path.display());
    if !args.no_svg {
        let plot_columns = if cfg.output.plot.is_empty() {
            selected.names().to_vec()
        } else {
            cfg.output.plot.clone()
        };
        let svg_path = args.out_dir.join(format!("{}.svg", cfg.name));
        let title = if cfg.description.is_empty() { cfg.name.clone() } else { cfg.description.clone() };
        write(&svg_path, plot::render(&title, &out.series.select(&plot_columns)?))?;
        println!("  svg  {}", svg_path.display());
    }
    print!("{}", out.summary);
    Ok(())
}

fn run_verify(suites: &[String]) -> Result<(), Failure> {
    let reports = verify::run_suites(suites)?;
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!("{status}  {:<24} {:>7.2} s", r.suite, r.elapsed.as_secs_f64());
        if let Some(e) = &r.error {
            println!("      error: {e}");
        }
        for c in r.checks.iter().filter(|c| !c.passed) {
            println!("      {}: {}", c.name, c.detail);
        }
        if !r.passed() {
            failed += 1;
        }
    }
    println!("{} of {} suites passed", reports.len() - failed, reports.len());
    if failed > 0 {
        Err(Failure::Verification(failed))
    } else {
        Ok(())
    }
}

fn write(path: &Path, contents: String) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}
