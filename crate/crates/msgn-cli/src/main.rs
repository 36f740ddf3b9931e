use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};

use msgn_cli::commands;

#[derive(Parser)]
#[command(
    name = "msgn",
    version,
    about = "Workbench for the 1D modified Serre-Green-Naghdi system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate an initial-value problem; writes series.csv, snapshots/ and manifest.json.
    Simulate {
        config: PathBuf,
        /// Override output.dir from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Tabulate model vs exact phase speeds; optionally measure them from short runs.
    Dispersion {
        config: PathBuf,
        /// Override output.dir from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print the a-priori depth and velocity bounds for a given energy as JSON.
    Bounds {
        /// Total energy of the data.
        #[arg(long)]
        energy: f64,
        #[arg(long, default_value_t = 9.81)]
        g: f64,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        #[arg(long, default_value_t = 2.0 / 15.0)]
        beta: f64,
    },
    /// Run the gradient blow-up experiment with characteristic tracing.
    Blowup {
        config: PathBuf,
        /// Override output.dir from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { config, out_dir } => {
            commands::cmd_simulate(&config, out_dir.as_deref())
        }
        Command::Dispersion { config, out_dir } => {
            commands::cmd_dispersion(&config, out_dir.as_deref())
        }
        Command::Bounds {
            energy,
            g,
            hbar,
            beta,
        } => commands::cmd_bounds(energy, g, hbar, beta),
        Command::Blowup { config, out_dir } => commands::cmd_blowup(&config, out_dir.as_deref()),
    };
    process::exit(code);
}
