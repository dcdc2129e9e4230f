mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "lagraph", version, about = "Discrete Lagrangian systems on graphs")]
struct Cli {
    /// Accept vertices of degree < 2 (reported as warnings).
    #[arg(long, global = true)]
    allow_ends: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Closed,
    Boundary,
    Homology,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Analytic,
    Fd,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a system file.
    Validate { file: PathBuf },
    /// Put every term in tree-like form and write the paths back as annotations.
    Normalize {
        file: PathBuf,
        /// Output file; the normalized system goes to stderr otherwise.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve the Euler-Lagrange equations by Newton's method.
    Solve {
        file: PathBuf,
        /// Initial configuration; defaults to the first one in the file, else zero.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        /// Tikhonov shift for singular Hessians.
        #[arg(long)]
        ridge: Option<f64>,
    },
    /// Check closedness, the boundary identity and the cycle property of the form.
    Verify {
        file: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [CheckKind::Closed, CheckKind::Boundary, CheckKind::Homology])]
        checks: Vec<CheckKind>,
        #[arg(long, value_enum, default_value_t = Mode::Analytic)]
        mode: Mode,
        #[arg(long, default_value_t = 1e-4)]
        fd_step: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        config: Option<String>,
        /// Tikhonov shift for the Newton solve behind the cycle checks.
        #[arg(long)]
        ridge: Option<f64>,
    },
    /// Wronskian chains of the tangent solutions at a configuration.
    Wronskian {
        file: PathBuf,
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Scattering matrix of a scalar nearest-neighbour system with tails.
    Scatter {
        file: PathBuf,
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ends = cli.allow_ends;
    let outcome = match cli.command {
        Command::Validate { file } => commands::validate(&file, ends),
        Command::Normalize { file, output } => commands::normalize(&file, ends, output.as_deref()),
        Command::Solve {
            file,
            config,
            tol,
            max_iter,
            ridge,
        } => commands::solve(&file, ends, config.as_deref(), tol, max_iter, ridge),
        Command::Verify {
            file,
            checks,
            mode,
            fd_step,
            tol,
            config,
            ridge,
        } => commands::verify(
            &file,
            ends,
            &commands::VerifyOptions {
                checks,
                mode,
                fd_step,
                tol,
                config,
                ridge,
            },
        ),
        Command::Wronskian { file, config, tol } => commands::wronskian(&file, ends, &config, tol),
        Command::Scatter { file, k, tol } => commands::scatter(&file, ends, k, tol),
    };
    match outcome {
        Ok(recorder) => {
            let failed = recorder.failed();
            let report = recorder.finish();
            eprint!("{}", report.summary());
            println!("{}", report.to_json());
            if failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
