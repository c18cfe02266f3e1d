use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use randomhar::experiment::{self, ExperimentConfig};
use randomhar::metrics::EvalReport;

/// Sensor-bagged activity recognition ensembles with learned member selection.
#[derive(Parser)]
#[command(name = "randomhar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the config's synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Run repeated cross-validation and write a report.
    Run(RunArgs),
    /// Summarise reports and test methods against each other.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the synthetic generator seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `runs/<config name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// Report files, or run directories containing report.json.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Print the comparison as JSON.
    #[arg(long)]
    json: bool,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("invalid config {}", path.display()))
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.data.synthetic_seed = seed;
    }
    let d = experiment::generate(&cfg, &args.out)?;
    println!(
        "wrote {} samples x {} channels, {} subjects, to {}",
        d.len(),
        d.num_channels(),
        d.subjects().last().map_or(0, |s| s + 1),
        args.out.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| experiment::default_out_dir(&args.config));
    let report = experiment::run(&cfg, &out, args.jobs)
        .with_context(|| format!("run failed; partial results in {}", out.display()))?;
    let reports = [("run".to_string(), report)];
    print!("{}", experiment::compare(&reports)?);
    println!("\nreport written to {}", out.join(experiment::REPORT_FILE).display());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &args.reports {
        let file = if path.is_dir() {
            path.join(experiment::REPORT_FILE)
        } else {
            path.clone()
        };
        let report = EvalReport::load(&file).with_context(|| format!("cannot read report {}", file.display()))?;
        let label = if path.is_dir() { path.as_path() } else { path.parent().unwrap_or(path) }
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.display().to_string());
        reports.push((label, report));
    }
    let labels: Vec<&String> = reports.iter().map(|(l, _)| l).collect();
    if (1..labels.len()).any(|i| labels[..i].contains(&labels[i])) {
        for (i, (label, _)) in reports.iter_mut().enumerate() {
            *label = format!("{i}:{label}");
        }
    }
    let comparison = experiment::compare(&reports)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&comparison)?);
    } else {
        print!("{comparison}");
    }
    Ok(())
}

/// The error chain on one line, skipping causes whose text an outer
/// message already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg = format!("{msg}: {text}");
        }
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
