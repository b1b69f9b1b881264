use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ifcf_core::commands::{self, OracleArgs};
use ifcf_core::config::RunConfig;
use ifcf_core::curvature::KstarSampler;
use ifcf_core::diagnostics::DiagnosticsConfig;
use ifcf_core::io;
use ifcf_core::{Error, Result};

/// Inverse F-curvature flow of spacelike graphs in ARW spacetimes.
#[derive(Parser)]
#[command(name = "ifcf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow for a TOML config and write its trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trace directory; overrides output.directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the constant-graph closed form as CSV (t, u, u_tilde, F).
    Oracle {
        #[arg(long, allow_hyphen_values = true)]
        u0: f64,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        omega: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
    },
    /// Build the transition curve of a trace and check its derivative matching.
    Transition {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        c3_constant: f64,
    },
    /// Sample the (K*) inequality of a curvature function.
    CheckCurvature {
        /// `mean` or `gauss_root`
        kind: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Fit decay rates and write the diagnostics of a trace.
    Report {
        #[arg(long)]
        trace: PathBuf,
        /// Run config whose [diagnostics] section to use.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate { config, out } => {
            let (summary, _) = commands::simulate(&config, out.as_deref())?;
            io::to_json_string(&summary)
        }
        Command::Oracle { u0, t_max, dt, n, omega, m } => {
            let samples = commands::oracle_samples(&OracleArgs { u0, t_max, dt, n, omega, m })?;
            let mut buf = Vec::new();
            io::write_oracle_csv(&mut buf, &samples)?;
            Ok(String::from_utf8(buf).expect("csv is utf-8"))
        }
        Command::Transition { trace, c3_constant } => {
            io::to_json_string(&commands::transition(&trace, c3_constant)?)
        }
        Command::CheckCurvature { kind, n, samples, seed } => {
            let sampler = KstarSampler {
                samples,
                seed,
                ..KstarSampler::default()
            };
            io::to_json_string(&commands::check_curvature(&kind, n, &sampler)?)
        }
        Command::Report { trace, config } => {
            let diag = match config {
                Some(path) => RunConfig::load(&path)?.diagnostics,
                None => DiagnosticsConfig::default(),
            };
            io::to_json_string(&commands::report(&trace, &diag)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
