//! `conformal`: fit surfaces, lay out arrays, sweep, compare and optimize.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

#[derive(Parser)]
#[command(name = "conformal", version, about = "Conformal phased array synthesis and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the quintic surface to `x,y,z` samples (meters) and write surface.json.
    Fit {
        /// Sample CSV with header `x,y,z`.
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Place the elements and write their positions, normals and frames.
    Layout(Common),
    /// Full-sphere pattern and principal cuts at one steer.
    Pattern(Common),
    /// Directivity and SLL over a steering grid.
    Sweep(Common),
    /// Sweep several arrays over the same grid and tabulate them.
    Compare(Common),
    /// SLL-minimizing amplitudes at one steer.
    Optimize(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sphere sampling step in degrees (overrides `sphere_step_deg`).
    #[arg(long)]
    step: Option<f64>,
    /// Reject elements outside the surface domain.
    #[arg(long)]
    strict_domain: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            step: self.step,
            strict_domain: self.strict_domain,
        }
    }
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct AppError {
    pub code: u8,
    pub message: String,
}

impl AppError {
    pub const INPUT: u8 = 1;
    pub const NUMERICAL: u8 = 2;
    pub const INFEASIBLE: u8 = 3;

    pub fn input(message: impl Into<String>) -> Self {
        AppError {
            code: Self::INPUT,
            message: message.into(),
        }
    }

    pub fn config(problems: Vec<String>) -> Self {
        let mut message = String::from("invalid configuration:");
        for p in problems {
            message.push_str("\n  ");
            message.push_str(&p);
        }
        AppError::input(message)
    }
}

impl From<conformal_array::Error> for AppError {
    fn from(e: conformal_array::Error) -> Self {
        use conformal_array::Error as E;
        let code = match e {
            E::RankDeficient(_) | E::ZeroPower | E::Degenerate(_) => AppError::NUMERICAL,
            E::Infeasible { .. } => AppError::INFEASIBLE,
            _ => AppError::INPUT,
        };
        AppError {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(AppError::INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Fit { samples, out } => commands::fit(samples, out.as_deref()),
        Command::Layout(c) => commands::layout(&c.config, &c.overrides()),
        Command::Pattern(c) => commands::pattern(&c.config, &c.overrides()),
        Command::Sweep(c) => commands::sweep(&c.config, &c.overrides()),
        Command::Compare(c) => commands::compare(&c.config, &c.overrides()),
        Command::Optimize(c) => commands::optimize(&c.config, &c.overrides()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
