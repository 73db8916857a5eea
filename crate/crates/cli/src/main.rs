use clap::{Parser, Subcommand};
use rmpc_cli::commands::{self, CmdError};
use rmpc_core::sim_engine::ControllerChoice;
use std::path::PathBuf;

/// Robust lateral MPC synthesis, closed-loop simulation, and the
/// four-controller benchmark.
#[derive(Parser)]
#[command(name = "rmpc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_controller(s: &str) -> Result<ControllerChoice, String> {
    ControllerChoice::parse(s).ok_or_else(|| {
        format!("unknown controller '{s}' (expected proposed | offset-offline | online | offline-no-am)")
    })
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an offline gain lookup table for a scenario's vehicle.
    Synthesize {
        #[arg(long)]
        scenario: PathBuf,
        /// Output table file (flat text, RMPCLUT1 format).
        #[arg(long)]
        out: PathBuf,
        /// Override the stiffness uncertainty ratio.
        #[arg(long)]
        kappa: Option<f64>,
        /// Build the 4-state table (steering angle as input).
        #[arg(long)]
        no_am: bool,
        /// Number of nested ellipsoids.
        #[arg(long, default_value_t = 30)]
        entries: usize,
        /// Seed shrink ratio between entries.
        #[arg(long, default_value_t = 0.85)]
        shrink: f64,
    },
    /// Run one closed-loop simulation and write the CSV log.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Controller (defaults to the scenario's own selection).
        #[arg(long, value_parser = parse_controller)]
        controller: Option<ControllerChoice>,
        /// Lookup-table file for the table-based controllers.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        kappa: Option<f64>,
        /// Replace the adhesion profile by a constant.
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Run controllers across the three bundled scenarios.
    Benchmark {
        /// Run all four controllers.
        #[arg(long)]
        all: bool,
        /// Explicit controller list (repeatable) when --all is not set.
        #[arg(long, value_parser = parse_controller)]
        controller: Vec<ControllerChoice>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Run the scenario/controller grid sequentially.
        #[arg(long)]
        serial: bool,
        #[arg(long, default_value_t = 30)]
        entries: usize,
    },
    /// Run the trajectory planner once with every obstacle announced.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the potential field as CSV and an SVG heatmap.
    PotentialMap {
        #[arg(long)]
        scenario: PathBuf,
        /// Longitudinal grid resolution (lateral is half of it).
        #[arg(long, default_value_t = 200)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled scenario files into a directory.
    EmitScenarios {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Synthesize {
            scenario,
            out,
            kappa,
            no_am,
            entries,
            shrink,
        } => commands::synthesize(&scenario, &out, kappa, no_am, entries, shrink),
        Command::Simulate {
            scenario,
            controller,
            table,
            out,
            kappa,
            mu,
        } => commands::simulate(&scenario, controller, table.as_deref(), &out, kappa, mu),
        Command::Benchmark {
            all,
            controller,
            out,
            seed,
            mu,
            kappa,
            serial,
            entries,
        } => {
            let controllers = if all || controller.is_empty() {
                ControllerChoice::ALL.to_vec()
            } else {
                controller
            };
            commands::benchmark(&out, controllers, seed, mu, kappa, serial, entries)
        }
        Command::Plan { scenario, out } => commands::plan(&scenario, &out),
        Command::PotentialMap { scenario, res, out } => {
            commands::potential_map(&scenario, res, &out)
        }
        Command::EmitScenarios { out } => {
            let paths = commands::emit_fixtures(&out)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
