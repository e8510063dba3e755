//! Command-line front end. Every command reads a JSON [`RunConfig`] and writes CSV files
//! into an output directory.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_design, cmd_forward, cmd_inverse, cmd_noise_study, cmd_verify};
pub use config::{DataSource, InverseMethod, NoiseModel, RunConfig};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ecfm-oed", version, about = "Experimental design with Fisher and constraint-force criteria for 1D bar problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// FEM solution of the configured case next to the exact solution.
    Forward,
    /// Estimate the model parameter from measurements.
    Inverse {
        #[arg(long, value_enum)]
        method: Option<InverseMethod>,
        /// CSV file with a `value` column; noiseless analytic data when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sweep both criteria over one measurement position and optimize the design.
    Design {
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Spread of the standard estimator under measurement noise at three designs.
    NoiseStudy {
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Compare FEM constraint forces and criteria against the closed forms.
    Verify,
}

/// Maps an error to the process exit code.
pub fn exit_code(error: &Error) -> i32 {
    if error.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    match &cli.command {
        Command::Inverse { method, data } => {
            if let Some(m) = method {
                config.inverse.method = *m;
            }
            if let Some(path) = data {
                config.inverse.data = DataSource::File { path: path.clone() };
            }
        }
        Command::Design { resolution } => {
            if resolution.is_some() {
                config.sweep.resolution = *resolution;
            }
        }
        Command::NoiseStudy { sigma, trials } => {
            if let Some(s) = sigma {
                config.noise.sigma = *s;
            }
            if let Some(t) = trials {
                config.noise.trials = *t;
            }
        }
        Command::Forward | Command::Verify => {}
    }
    config.validate()?;
    Ok(config)
}

/// Runs one command and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = load_config(cli)?;
    let out = config.output.clone();
    let files: &[&str] = match &cli.command {
        Command::Forward => {
            cmd_forward(&config, &out)?;
            &[commands::FORWARD_FILE]
        }
        Command::Inverse { .. } => {
            cmd_inverse(&config, config.inverse.method, &config.inverse.data, &out)?;
            &[commands::INVERSE_FILE]
        }
        Command::Design { .. } => {
            cmd_design(&config, &out)?;
            &[commands::SWEEP_FILE, commands::REPORT_FILE]
        }
        Command::NoiseStudy { .. } => {
            cmd_noise_study(&config, config.noise.model()?, config.noise.trials, &out)?;
            &[commands::NOISE_FILE, commands::NOISE_SUMMARY_FILE]
        }
        Command::Verify => {
            cmd_verify(&config, &out)?;
            &[commands::VERIFY_FILE]
        }
    };
    Ok(commands::written_files(&out, files))
}
