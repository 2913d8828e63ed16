//! Persisted run output: the sample stream, diagnostics tables and the
//! summary document.

use anyhow::{bail, Context, Result};
use ishmm::diagnostics::{autocorrelation, mode, Diagnostics};
use ishmm::families::{DurationParams, EmissionParams};
use ishmm::gibbs::{map_sample, ChainSample, MoveStats, RunOutput};
use ishmm::path::Segment;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// One run of the path: `len` steps in `state`, entered with remaining
/// duration `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub state: usize,
    pub len: usize,
    pub duration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: u64,
    pub emission: EmissionParams,
    pub duration: DurationParams,
    pub weight: f64,
    pub mass: f64,
    pub transitions: Vec<f64>,
}

/// One line of `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub schema_version: u32,
    pub sweep: usize,
    pub path: Vec<Run>,
    pub states: Vec<StateRecord>,
    pub alpha0: f64,
    pub alpha1: f64,
    pub loglik: f64,
}

impl From<&ChainSample> for SampleRecord {
    fn from(s: &ChainSample) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            sweep: s.sweep,
            path: s.segments.iter().map(|g| Run { state: g.state, len: g.len, duration: g.duration }).collect(),
            states: (0..s.ids.len())
                .map(|k| StateRecord {
                    id: s.ids[k],
                    emission: s.theta[k],
                    duration: s.lambda[k],
                    weight: s.weights[k],
                    mass: s.masses[k],
                    transitions: s.pi[k].clone(),
                })
                .collect(),
            alpha0: s.alpha0,
            alpha1: s.alpha1,
            loglik: s.loglik,
        }
    }
}

impl SampleRecord {
    pub fn into_sample(self) -> Result<ChainSample> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema version {}", self.schema_version);
        }
        let mut start = 0;
        let segments = self
            .path
            .iter()
            .map(|r| {
                let g = Segment { state: r.state, start, len: r.len, duration: r.duration };
                start += r.len;
                g
            })
            .collect();
        Ok(ChainSample {
            sweep: self.sweep,
            segments,
            theta: self.states.iter().map(|s| s.emission).collect(),
            lambda: self.states.iter().map(|s| s.duration).collect(),
            ids: self.states.iter().map(|s| s.id).collect(),
            weights: self.states.iter().map(|s| s.weight).collect(),
            masses: self.states.iter().map(|s| s.mass).collect(),
            pi: self.states.into_iter().map(|s| s.transitions).collect(),
            alpha0: self.alpha0,
            alpha1: self.alpha1,
            loglik: self.loglik,
        })
    }
}

pub fn write_samples(path: &Path, samples: &[ChainSample]) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for s in samples {
        serde_json::to_writer(&mut w, &SampleRecord::from(s))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<ChainSample>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        out.push(rec.into_sample()?);
    }
    Ok(out)
}

/// Largest lag reported in the autocorrelation table.
pub const MAX_LAG: usize = 100;

/// Autocorrelations of the fixed-time traces, up to `MAX_LAG` or as far as
/// the traces allow.
pub fn trace_autocorrelation(d: &Diagnostics) -> Result<(Vec<f64>, Vec<f64>)> {
    let lag = MAX_LAG.min(d.mean_trace.len().saturating_sub(1));
    Ok((autocorrelation(&d.mean_trace, lag)?, autocorrelation(&d.duration_trace, lag)?))
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>> {
    let p = dir.join(name);
    csv::Writer::from_path(&p).with_context(|| format!("creating {}", p.display()))
}

fn write_hist(dir: &Path, name: &str, key: &str, hist: &BTreeMap<usize, usize>) -> Result<()> {
    let mut w = csv_writer(dir, name)?;
    w.write_record([key, "samples"])?;
    for (k, n) in hist {
        w.write_record([k.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV per figure: traces, autocorrelations, histograms and per-state
/// summaries. `sweeps` is the joint log-likelihood of every sweep,
/// burn-in included.
pub fn write_diagnostics(dir: &Path, d: &Diagnostics, sweeps: &[f64]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = csv_writer(dir, "loglik.csv")?;
    w.write_record(["sweep", "loglik"])?;
    for (i, x) in sweeps.iter().enumerate() {
        w.write_record([(i + 1).to_string(), x.to_string()])?;
    }
    w.flush()?;

    let mut w = csv_writer(dir, "fixed_time.csv")?;
    w.write_record(["sample", "emission_mean", "duration_mean"])?;
    for (i, (m, r)) in d.mean_trace.iter().zip(&d.duration_trace).enumerate() {
        w.write_record([i.to_string(), m.to_string(), r.to_string()])?;
    }
    w.flush()?;

    let (am, ar) = trace_autocorrelation(d)?;
    let mut w = csv_writer(dir, "autocorrelation.csv")?;
    w.write_record(["lag", "emission_mean", "duration_mean"])?;
    for (lag, (m, r)) in am.iter().zip(&ar).enumerate() {
        w.write_record([lag.to_string(), m.to_string(), r.to_string()])?;
    }
    w.flush()?;

    write_hist(dir, "state_counts.csv", "states", &d.state_counts)?;
    write_hist(dir, "changepoint_counts.csv", "changepoints", &d.changepoint_counts)?;

    let mut w = csv_writer(dir, "changepoint_locations.csv")?;
    w.write_record(["t", "samples"])?;
    for (t, n) in d.changepoint_locations.iter().enumerate() {
        w.write_record([t.to_string(), n.to_string()])?;
    }
    w.flush()?;

    let mut w = csv_writer(dir, "states.csv")?;
    w.write_record(["id", "samples", "mean", "mean_lo", "mean_hi", "duration", "duration_lo", "duration_hi"])?;
    for s in &d.states {
        let (e, r) = (s.emission_mean, s.duration_mean);
        w.write_record(
            [s.id as f64, s.samples as f64, e.mean, e.lo, e.hi, r.mean, r.lo, r.hi].iter().map(|x| x.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub samples: usize,
    pub modal_states: Option<(usize, f64)>,
    pub modal_changepoints: Option<(usize, f64)>,
    pub map_sweep: Option<usize>,
    pub map_loglik: Option<f64>,
    pub moves: MoveStats,
    pub diagnostics: Option<Diagnostics>,
}

impl Summary {
    pub fn new(out: &RunOutput, diagnostics: Option<Diagnostics>) -> Self {
        let map = map_sample(&out.samples).ok();
        Self {
            schema_version: SCHEMA_VERSION,
            samples: out.samples.len(),
            modal_states: diagnostics.as_ref().and_then(|d| mode(&d.state_counts)),
            modal_changepoints: diagnostics.as_ref().and_then(|d| mode(&d.changepoint_counts)),
            map_sweep: map.map(|m| m.sweep),
            map_loglik: map.map(|m| m.loglik),
            moves: out.stats,
            diagnostics,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
