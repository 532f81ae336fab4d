use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anosov_lab::lab::{self, ExperimentKind, LabConfig, RunReport, Selection, Status};
use anosov_lab::LabError;

/// Numerical laboratory for Anosov endomorphisms of the 2-torus.
#[derive(Parser)]
#[command(name = "anosov-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for intra-experiment parallelism; 0 picks a default.
    #[arg(long)]
    threads: Option<usize>,
    /// Runs only the named experiment.
    #[arg(long)]
    experiment: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs every experiment of the config in order.
    Run(RunArgs),
    /// Cone-field hyperbolicity certificate.
    Certify(RunArgs),
    /// Periodic-orbit and Birkhoff exponents.
    Exponents(RunArgs),
    /// Conjugacy residuals and bounds.
    Conjugacy(RunArgs),
    /// Periodic data, Livshitz obstruction and Hölder regularity of the conjugacy.
    Rigidity(RunArgs),
    /// Disintegration of volume along unstable leaves in foliated boxes.
    Ubd(RunArgs),
    /// Leaf growth and pushed leaf measures in the fundamental strip.
    Strip(RunArgs),
    /// Merges run summaries into one JSON document.
    Report {
        /// `summary.json` files of earlier runs.
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Writes `report.json` here instead of printing it.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn run(args: RunArgs, kind: Option<ExperimentKind>) -> Result<u8, LabError> {
    let mut config = LabConfig::load(&args.config)?;
    if let Some(d) = args.out_dir {
        config.out_dir = d;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(t) = args.threads {
        config.threads = t;
    }
    let selection = Selection {
        kind,
        name: args.experiment,
    };
    let report = lab::run_with_threads(&config, &selection)?;
    for e in &report.experiments {
        let status = match e.status {
            Status::Ok => "ok",
            Status::Failed => "FAILED",
        };
        println!("{:<24} {:<10} {status:<7} {:>8.2}s", e.name, e.kind.as_str(), e.wall_time_s);
        if let Some(err) = &e.error {
            eprintln!("  {}: {err}", e.name);
        }
    }
    let failed = report.failed();
    if !failed.is_empty() {
        eprintln!("failed experiments: {}", failed.join(", "));
    }
    println!("summary: {}", config.out_dir.join(lab::SUMMARY_FILE).display());
    Ok(report.exit_code())
}

fn report(summaries: &[PathBuf], out_dir: Option<PathBuf>) -> Result<u8, LabError> {
    let reports = summaries.iter().map(|p| RunReport::load(p)).collect::<Result<Vec<_>, _>>()?;
    let doc = serde_json::to_string_pretty(&lab::merge_reports(&reports))? + "\n";
    match out_dir {
        Some(d) => {
            std::fs::create_dir_all(&d)?;
            let path = d.join("report.json");
            std::fs::write(&path, doc)?;
            println!("report: {}", path.display());
        }
        None => print!("{doc}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a, None),
        Command::Certify(a) => run(a, Some(ExperimentKind::Certify)),
        Command::Exponents(a) => run(a, Some(ExperimentKind::Exponents)),
        Command::Conjugacy(a) => run(a, Some(ExperimentKind::Conjugacy)),
        Command::Rigidity(a) => run(a, Some(ExperimentKind::Rigidity)),
        Command::Ubd(a) => run(a, Some(ExperimentKind::Ubd)),
        Command::Strip(a) => run(a, Some(ExperimentKind::Strip)),
        Command::Report { summaries, out_dir } => report(&summaries, out_dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(lab::exit_code(&e))
        }
    }
}
