use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use germlab_cli::document::GermDocument;
use germlab_cli::pipeline::{
    apply_overrides, run_classify, run_verify, write_classify_outputs, write_verify_outputs,
    Experiment,
};

/// Classification and numerical verification of semi-hyperbolic
/// holomorphic germs of (C^n, 0).
#[derive(Parser)]
#[command(name = "germlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a germ document: normal form of the first coordinate,
    /// case (i)/(ii) with invariants, and the conjugator witness.
    Classify {
        /// germ document (JSON)
        file: PathBuf,
        /// override the truncation degree N
        #[arg(long)]
        degree: Option<u32>,
        /// override the root-of-unity search bound
        #[arg(long)]
        qmax: Option<u32>,
        /// override the numerical tolerance
        #[arg(long)]
        tol: Option<f64>,
        /// override the RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// output directory for report.json / report.txt
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a verification experiment and write its report and CSV data.
    Verify {
        /// germ document (JSON)
        file: PathBuf,
        /// which construction to verify
        #[arg(long)]
        experiment: ExperimentArg,
        /// grid resolution for sampled maps
        #[arg(long)]
        grid: Option<usize>,
        /// bump radius eta
        #[arg(long)]
        eta: Option<f64>,
        /// override the truncation degree N
        #[arg(long)]
        degree: Option<u32>,
        /// override the numerical tolerance
        #[arg(long)]
        tol: Option<f64>,
        /// override the RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Sector,
    Splitting,
    Bundle,
    Center,
}

impl From<ExperimentArg> for Experiment {
    fn from(value: ExperimentArg) -> Self {
        match value {
            ExperimentArg::Sector => Experiment::Sector,
            ExperimentArg::Splitting => Experiment::Splitting,
            ExperimentArg::Bundle => Experiment::Bundle,
            ExperimentArg::Center => Experiment::Center,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, germlab_cli::CliError> {
    match cli.command {
        Command::Classify { file, degree, qmax, tol, seed, out } => {
            let mut doc = GermDocument::load(&file)?;
            apply_overrides(&mut doc, degree, qmax, tol, seed, None, None);
            let outcome = run_classify(&doc)?;
            write_classify_outputs(&outcome, &out)?;
            print!("{}", outcome.report.render_text());
            println!("reports written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { file, experiment, grid, eta, degree, tol, seed, out } => {
            let mut doc = GermDocument::load(&file)?;
            apply_overrides(&mut doc, degree, None, tol, seed, grid, eta);
            let report = run_verify(&doc, experiment.into(), &out)?;
            write_verify_outputs(&report, &out)?;
            print!("{}", report.render_text());
            if report.passed {
                Ok(ExitCode::SUCCESS)
            } else {
                // a failed experiment is a numerical-failure exit
                Ok(ExitCode::from(5))
            }
        }
    }
}
