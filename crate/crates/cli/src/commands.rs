//! The `generate` and `fit` commands.

use crate::config::{EmissionKind, RunConfig};
use crate::output::{write_diagnostics, write_json, write_samples, Summary};
use crate::series::{read_series, write_path, write_series, write_text};
use anyhow::{bail, Context, Result};
use ishmm::diagnostics::Diagnostics;
use ishmm::gibbs::{run_chain, RunOutput};
use ishmm::model::prior_generate;
use ishmm::path::LatentPath;
use ishmm::prob::RngStream;
use std::path::{Path, PathBuf};

pub fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output.clone().context("no output directory; pass --out or set `output`")?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub struct Generated {
    pub path: LatentPath,
    pub y: Vec<f64>,
    pub series: PathBuf,
}

/// Draws a series of `cfg.length` observations, from the fixed truth model
/// when one is configured and from the prior otherwise, and writes
/// `series.csv`, `truth.csv` and `config.echo`.
pub fn generate(cfg: &RunConfig) -> Result<Generated> {
    if cfg.length == 0 {
        bail!("invalid parameter: series length must be at least 1");
    }
    let dir = output_dir(cfg)?;
    let mut rng = RngStream::new(cfg.seed);
    let (path, y) = if cfg.is_fixed() {
        cfg.fixed_model()?.generate(cfg.length, &mut rng)?
    } else {
        let (_, path, y) = prior_generate::<f64>(&cfg.model()?, cfg.length, 0, &mut rng)?;
        (path, y)
    };
    let series = dir.join("series.csv");
    write_series(&series, &y)?;
    write_path(&dir.join("truth.csv"), &path)?;
    write_text(&dir.join("config.echo"), &cfg.echo()?)?;
    Ok(Generated { path, y, series })
}

pub struct Fit {
    pub output: RunOutput,
    pub diagnostics: Option<Diagnostics>,
    pub len: usize,
}

pub fn load_input(cfg: &RunConfig) -> Result<Vec<f64>> {
    let input = cfg.input.as_deref().context("no input series; pass --input or set `input`")?;
    read_series(input, cfg.emission == EmissionKind::Poisson)
}

/// Runs one chain on the configured input and writes `samples.jsonl`,
/// `diagnostics/*.csv`, `summary.json` and `config.echo`.
pub fn fit(cfg: &RunConfig) -> Result<Fit> {
    let y = load_input(cfg)?;
    fit_series(cfg, &y)
}

pub fn fit_series(cfg: &RunConfig, y: &[f64]) -> Result<Fit> {
    let dir = output_dir(cfg)?;
    write_text(&dir.join("config.echo"), &cfg.echo()?)?;
    let output = run_chain::<f64>(&cfg.model()?, y, &cfg.run_options(), |_, _| {})?;
    write_samples(&dir.join("samples.jsonl"), &output.samples)?;
    let diagnostics = if output.samples.is_empty() { None } else { Some(Diagnostics::compute(&output.samples, y.len(), cfg.t_star)?) };
    if let Some(d) = &diagnostics {
        write_diagnostics(&dir.join("diagnostics"), d, &output.trace)?;
    }
    write_json(&dir.join("summary.json"), &Summary::new(&output, diagnostics.clone()))?;
    Ok(Fit { output, diagnostics, len: y.len() })
}

/// Copies `cfg` with the output directory moved to `dir`.
pub fn with_output(cfg: &RunConfig, dir: &Path) -> RunConfig {
    RunConfig { output: Some(dir.to_path_buf()), ..cfg.clone() }
}
