use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use bhdimer::fockspace::DEFAULT_CUTOFF;
use bhdimer_cli::*;
use clap::{Args, Parser, Subcommand};

/// Driven-dissipative Bose-Hubbard dimer: scans, fits and point reports.
#[derive(Parser)]
#[command(name = "bhdimer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Model {
    /// Hopping strength
    #[arg(long = "J", default_value_t = 2.5, allow_hyphen_values = true)]
    j: f64,
    /// Detuning of the pump from the bare cavity
    #[arg(long, default_value_t = -1.5, allow_hyphen_values = true)]
    delta: f64,
    /// Loss rate
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// On-site interaction
    #[arg(long = "U", default_value_t = 1.0)]
    u: f64,
}

impl Model {
    fn args(&self) -> ModelArgs {
        ModelArgs { j: self.j, delta: self.delta, gamma: self.gamma, u: self.u }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the rescaled drive sqrt(U) F / gamma^(3/2) and write one record per point
    Scan {
        #[command(flatten)]
        model: Model,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long = "uf-min")]
        uf_min: f64,
        #[arg(long = "uf-max")]
        uf_max: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Fock cutoff per site (fock method only)
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
        #[arg(long = "tol-kernel", default_value_t = DEFAULT_TOL_KERNEL)]
        tol_kernel: f64,
        #[arg(long, value_enum, default_value_t = BranchChoice::Auto)]
        branch: BranchChoice,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file; standard output if omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0: one per core)
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Fit a power law near one bifurcation of a scan file
    Fit {
        input: PathBuf,
        #[arg(long, value_enum)]
        observable: Observable,
        #[arg(long, value_enum)]
        side: Side,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report every observable and solver diagnostic at one drive
    Point {
        #[command(flatten)]
        model: Model,
        #[arg(long, value_enum)]
        method: Method,
        /// Rescaled drive sqrt(U) F / gamma^(3/2)
        #[arg(long)]
        uf: f64,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
        #[arg(long = "tol-kernel", default_value_t = DEFAULT_TOL_KERNEL)]
        tol_kernel: f64,
        #[arg(long, value_enum, default_value_t = BranchChoice::Auto)]
        branch: BranchChoice,
    },
}

fn sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scan { model, method, uf_min, uf_max, steps, cutoff, tol_kernel, branch, format, out, threads } => {
            let config = ScanConfig {
                method,
                uf_min,
                uf_max,
                steps,
                model: model.args(),
                cutoff,
                format,
                tol_kernel,
                branch,
                threads,
            };
            let rows = run_scan(&config)?;
            let mut w = sink(&out)?;
            write_scan(&config, &rows, &mut w)?;
            w.flush()?;
        }
        Command::Fit { input, observable, side, out } => {
            let table = read_scan(&input)?;
            let report = run_fit(&table, observable, side)?;
            let mut w = sink(&out)?;
            w.write_all(report.render().as_bytes())?;
            w.flush()?;
        }
        Command::Point { model, method, uf, cutoff, tol_kernel, branch } => {
            let report = run_point(&model.args(), uf, method, cutoff, tol_kernel, branch)?;
            print!("{}", report.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
