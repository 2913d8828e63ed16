//! Bundled experiments. Each writes its generated data, the full fit
//! output and a `results.json` summarizing the quantities it is judged on.

use crate::commands::{fit_series, generate, output_dir, with_output, Fit};
use crate::config::{DurationKind, Overrides, RunConfig, TopologyKind};
use crate::output::{trace_autocorrelation, write_json};
use crate::series::{parse_series, write_text};
use anyhow::{bail, Context, Result};
use ishmm::diagnostics::{mode, Diagnostics, Interval};
use ishmm::gibbs::map_sample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    IedSynth,
    IlrSynth,
    Coal,
    MorseSynth,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::IedSynth => "ied-synth",
            Self::IlrSynth => "ilr-synth",
            Self::Coal => "coal",
            Self::MorseSynth => "morse-synth",
        }
    }

    /// The bundled configuration text.
    pub fn config_text(self) -> &'static str {
        match self {
            Self::IedSynth => include_str!("../configs/ied-synth.toml"),
            Self::IlrSynth => include_str!("../configs/ilr-synth.toml"),
            Self::Coal => include_str!("../configs/coal.toml"),
            Self::MorseSynth => include_str!("../configs/morse-synth.toml"),
        }
    }

    pub fn config(self) -> Result<RunConfig> {
        RunConfig::parse(self.config_text())
    }
}

pub const COAL_CSV: &str = include_str!("../data/coal.csv");
pub const COAL_SHA256: &str = "7b276ead94b59fb225b4b4ffd1ded464ea4ca45b293cb00d1d47cfd7ef92c3ee";
pub const COAL_FIRST_YEAR: usize = 1851;

/// Yearly coal-mining disaster counts, after checking the file checksum.
pub fn coal_data() -> Result<Vec<f64>> {
    let digest: String = Sha256::digest(COAL_CSV.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    if digest != COAL_SHA256 {
        bail!("coal data checksum mismatch: {digest}");
    }
    parse_series(COAL_CSV.as_bytes(), true)
}

/// A true state and the posterior of the inferred state matched to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatch {
    pub true_mean: f64,
    pub true_duration: Option<f64>,
    pub id: u64,
    pub mean: Interval,
    pub duration: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResults {
    pub samples: usize,
    pub state_counts: BTreeMap<usize, usize>,
    pub modal_states: (usize, f64),
    pub changepoint_counts: BTreeMap<usize, usize>,
    pub modal_changepoints: (usize, f64),
    /// Autocorrelation of the fixed-time emission-mean and duration traces.
    pub mean_acf: Vec<f64>,
    pub duration_acf: Vec<f64>,
}

impl FitResults {
    fn new(d: &Diagnostics) -> Result<Self> {
        let (mean_acf, duration_acf) = trace_autocorrelation(d)?;
        Ok(Self {
            samples: d.loglik.len(),
            state_counts: d.state_counts.clone(),
            modal_states: mode(&d.state_counts).context("empty histogram")?,
            changepoint_counts: d.changepoint_counts.clone(),
            modal_changepoints: mode(&d.changepoint_counts).context("empty histogram")?,
            mean_acf,
            duration_acf,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticResults {
    pub fit: FitResults,
    /// One entry per true state, in the order the truth lists them.
    pub matches: Vec<StateMatch>,
    /// Matched states of the MAP sample in path order, for left-to-right fits.
    pub map_path: Vec<StateMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalResults {
    pub fit: FitResults,
    pub first_year: usize,
    pub changepoint_locations: Vec<usize>,
    /// Share of samples with between one and five change-points.
    pub mass_one_to_five: f64,
    /// Years after the first at the two highest histogram peaks.
    pub peaks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseResults {
    pub duration_model: FitResults,
    pub markov_model: FitResults,
}

fn diagnostics(fit: &Fit) -> Result<&Diagnostics> {
    fit.diagnostics.as_ref().context("the experiment needs at least one sample")
}

/// Posterior of the state with birth id `id`.
fn summary_of(d: &Diagnostics, id: u64, true_mean: f64, true_duration: Option<f64>) -> Result<StateMatch> {
    let s = d.states.iter().find(|s| s.id == id).context("matched state has no summary")?;
    Ok(StateMatch { true_mean, true_duration, id, mean: s.emission_mean, duration: s.duration_mean })
}

/// Matches every true state to the occupied MAP state with the closest
/// emission mean.
fn match_states(fit: &Fit, cfg: &RunConfig) -> Result<Vec<StateMatch>> {
    let d = diagnostics(fit)?;
    let map = map_sample(&fit.output.samples)?;
    let occupied: Vec<usize> = map.path().occupied_states();
    cfg.truth_means
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let k = *occupied
                .iter()
                .min_by(|&&a, &&b| (map.theta[a].mean() - m).abs().total_cmp(&(map.theta[b].mean() - m).abs()))
                .context("MAP sample has no states")?;
            summary_of(d, map.ids[k], m, cfg.truth_durations.get(i).copied())
        })
        .collect()
}

/// States of the MAP sample in the order the path visits them.
fn map_path(fit: &Fit, cfg: &RunConfig) -> Result<Vec<StateMatch>> {
    let d = diagnostics(fit)?;
    let map = map_sample(&fit.output.samples)?;
    map.segments
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let truth = cfg.truth_means.get(i).copied().unwrap_or(f64::NAN);
            summary_of(d, map.ids[g.state], truth, cfg.truth_durations.get(i).copied())
        })
        .collect()
}

/// Local maxima of `hist`, highest first, each more than `gap` steps away
/// from every higher one already chosen.
pub fn histogram_peaks(hist: &[usize], gap: usize, n: usize) -> Vec<usize> {
    let mut maxima: Vec<usize> = (0..hist.len())
        .filter(|&t| hist[t] > 0 && (t == 0 || hist[t] > hist[t - 1]) && (t + 1 == hist.len() || hist[t] >= hist[t + 1]))
        .collect();
    maxima.sort_by(|&a, &b| hist[b].cmp(&hist[a]).then(a.cmp(&b)));
    let mut peaks: Vec<usize> = Vec::new();
    for t in maxima {
        if peaks.iter().all(|&p| p.abs_diff(t) > gap) {
            peaks.push(t);
        }
        if peaks.len() == n {
            break;
        }
    }
    peaks
}

/// Runs `exp` into `cfg.output` and writes `results.json`.
pub fn run(exp: Experiment, overrides: &Overrides) -> Result<serde_json::Value> {
    let mut cfg = exp.config()?;
    if let Some(p) = &overrides.config {
        cfg = RunConfig::load(p)?;
    }
    overrides.apply(&mut cfg)?;
    if cfg.output.is_none() {
        cfg.output = Some(Path::new("runs").join(exp.name()));
    }
    let dir = output_dir(&cfg)?;
    let results = match exp {
        Experiment::IedSynth | Experiment::IlrSynth => {
            let g = generate(&cfg)?;
            cfg.input = Some(g.series);
            let fit = fit_series(&cfg, &g.y)?;
            let r = SyntheticResults {
                fit: FitResults::new(diagnostics(&fit)?)?,
                matches: match_states(&fit, &cfg)?,
                map_path: if cfg.topology == TopologyKind::LeftToRight { map_path(&fit, &cfg)? } else { Vec::new() },
            };
            serde_json::to_value(r)?
        }
        Experiment::Coal => {
            let y = coal_data()?;
            let data = dir.join("coal.csv");
            write_text(&data, COAL_CSV)?;
            cfg.input = Some(data);
            let fit = fit_series(&cfg, &y)?;
            let d = diagnostics(&fit)?;
            let n = d.loglik.len() as f64;
            let r = CoalResults {
                fit: FitResults::new(d)?,
                first_year: COAL_FIRST_YEAR,
                changepoint_locations: d.changepoint_locations.clone(),
                mass_one_to_five: d.changepoint_counts.range(1..=5).map(|(_, &c)| c).sum::<usize>() as f64 / n,
                peaks: histogram_peaks(&d.changepoint_locations, 8, 2),
            };
            serde_json::to_value(r)?
        }
        Experiment::MorseSynth => {
            let g = generate(&cfg)?;
            cfg.input = Some(g.series);
            let markov = RunConfig { topology: TopologyKind::Full, duration: DurationKind::DeltaZero, ..with_output(&cfg, &dir.join("markov")) };
            let durations = with_output(&cfg, &dir.join("duration"));
            let (a, b) = std::thread::scope(|s| {
                let a = s.spawn(|| fit_series(&durations, &g.y));
                let b = s.spawn(|| fit_series(&markov, &g.y));
                (a.join().expect("fit thread"), b.join().expect("fit thread"))
            });
            let r = MorseResults { duration_model: FitResults::new(diagnostics(&a?)?)?, markov_model: FitResults::new(diagnostics(&b?)?)? };
            serde_json::to_value(r)?
        }
    };
    write_text(&dir.join("config.echo"), &cfg.echo()?)?;
    write_json(&dir.join("results.json"), &results)?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coal_file_matches_checksum() {
        let y = coal_data().unwrap();
        assert_eq!(y.len(), 112);
        assert_eq!(y.iter().sum::<f64>(), 191.0);
    }

    #[test]
    fn bundled_configs_parse() {
        for e in [Experiment::IedSynth, Experiment::IlrSynth, Experiment::Coal, Experiment::MorseSynth] {
            let cfg = e.config().unwrap();
            if e != Experiment::Coal {
                cfg.fixed_model().unwrap();
            }
        }
    }

    #[test]
    fn peaks_are_separated() {
        let h = [0, 1, 5, 4, 6, 0, 0, 0, 0, 0, 0, 0, 3, 2, 0];
        assert_eq!(histogram_peaks(&h, 7, 2), vec![4, 12]);
        assert_eq!(histogram_peaks(&h, 8, 2), vec![4]);
        assert_eq!(histogram_peaks(&h, 1, 3), vec![4, 2, 12]);
        assert!(histogram_peaks(&[0, 0], 8, 2).is_empty());
    }
}
