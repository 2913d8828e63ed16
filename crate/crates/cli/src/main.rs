use anyhow::Result;
use clap::{Parser, Subcommand};
use ishmm_cli::commands::{fit, generate};
use ishmm_cli::config::Overrides;
use ishmm_cli::experiments::{run, Experiment};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ishmm", version, about = "Infinite structured hidden semi-Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a series and its hidden path.
    Generate {
        #[command(flatten)]
        overrides: Overrides,
        /// Number of observations.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Sample the posterior given a series.
    Fit {
        #[command(flatten)]
        overrides: Overrides,
        /// Series file, one observation per row.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run a bundled experiment end to end.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { overrides, length } => {
            let mut cfg = overrides.resolve()?;
            if let Some(n) = length {
                cfg.length = n;
            }
            let g = generate(&cfg)?;
            let segs = g.path.segments();
            println!(
                "generated {} observations: {} segments over {} states -> {}",
                g.y.len(),
                segs.len(),
                g.path.occupied_states().len(),
                g.series.display()
            );
        }
        Command::Fit { overrides, input } => {
            let mut cfg = overrides.resolve()?;
            if input.is_some() {
                cfg.input = input;
            }
            let f = fit(&cfg)?;
            println!("{} samples from {} observations", f.output.samples.len(), f.len);
            if let Some(d) = &f.diagnostics {
                if let Some((k, p)) = ishmm::diagnostics::mode(&d.state_counts) {
                    println!("modal occupied states: {k} ({:.0}% of samples)", 100.0 * p);
                }
            }
        }
        Command::Experiment { name, overrides } => {
            let results = run(name, &overrides)?;
            println!("{}", serde_json::to_string_pretty(&results)?);
        }
    }
    Ok(())
}
