//! Run configuration: a flat key-value file mirroring [`RunConfig`].

use anyhow::{bail, Context, Result};
use ishmm::families::{BetaPrior, DurationFamily, DurationParams, EmissionFamily, EmissionParams};
use ishmm::gibbs::RunOptions;
use ishmm::model::{Concentration, FixedModel, ModelConfig};
use ishmm::prob::{GammaPrior, NigParams};
use ishmm::topology::Topology;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Ied,
    LeftToRight,
    Full,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionKind {
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DurationKind {
    Poisson,
    DelayedGeometric,
    Geometric,
    DeltaZero,
}

/// Every setting of a run. Unset keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub topology: TopologyKind,
    /// State count for the finite topology.
    pub states: usize,

    pub emission: EmissionKind,
    /// Normal-inverse-gamma prior of Gaussian emissions.
    pub mu0: f64,
    pub nu0: f64,
    pub nig_alpha: f64,
    pub nig_beta: f64,
    /// Known emission variance; only the mean is sampled when set.
    pub variance: Option<f64>,
    /// Gamma prior of Poisson emission rates.
    pub rate_shape: f64,
    pub rate_scale: f64,

    pub duration: DurationKind,
    /// Gamma prior of Poisson duration rates.
    pub duration_shape: f64,
    pub duration_scale: f64,
    /// Beta prior of geometric success probabilities.
    pub q_a: f64,
    pub q_b: f64,
    /// Largest delay of the delayed geometric family.
    pub delay_max: usize,
    /// Truncation of remaining durations.
    pub duration_max: Option<usize>,

    pub c: f64,
    pub d: f64,
    pub alpha0: f64,
    pub alpha0_resample: bool,
    pub alpha0_shape: f64,
    pub alpha0_scale: f64,
    pub alpha1: f64,
    pub alpha1_resample: bool,
    pub alpha1_shape: f64,
    pub alpha1_scale: f64,
    pub temperature: f64,
    pub stick_step: f64,

    pub burn: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub init_segments: usize,
    /// Time index of the fixed-time parameter traces; half the length when unset.
    pub t_star: Option<usize>,

    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,

    /// Series length for `generate`.
    pub length: usize,
    /// Fixed-parameter generation. With `truth_means` set, data come from a
    /// finite model with these parameters instead of the prior.
    pub truth_means: Vec<f64>,
    pub truth_variances: Vec<f64>,
    /// Poisson duration rates, or geometric success probabilities.
    pub truth_durations: Vec<f64>,
    pub truth_delays: Vec<usize>,
    /// Row-major transition matrix; uniform over allowed targets when empty.
    pub truth_transitions: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            topology: TopologyKind::Ied,
            states: 2,
            emission: EmissionKind::Gaussian,
            mu0: 0.0,
            nu0: 0.25,
            nig_alpha: 1.0,
            nig_beta: 1.0,
            variance: None,
            rate_shape: 1.0,
            rate_scale: 1.0,
            duration: DurationKind::Poisson,
            duration_shape: 1.0,
            duration_scale: 1000.0,
            q_a: 1.0,
            q_b: 1.0,
            delay_max: 30,
            duration_max: None,
            c: 1.0,
            d: 0.0,
            alpha0: 1.0,
            alpha0_resample: true,
            alpha0_shape: 1.0,
            alpha0_scale: 1.0,
            alpha1: 1.0,
            alpha1_resample: true,
            alpha1_shape: 1.0,
            alpha1_scale: 1.0,
            temperature: 3.0,
            stick_step: 1.0,
            burn: 100,
            samples: 1000,
            thin: 1,
            seed: 0,
            init_segments: 10,
            t_star: None,
            input: None,
            output: None,
            length: 500,
            truth_means: Vec::new(),
            truth_variances: Vec::new(),
            truth_durations: Vec::new(),
            truth_delays: Vec::new(),
            truth_transitions: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Text that parses back to this configuration.
    pub fn echo(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?.validate()?;
        if self.thin == 0 {
            bail!("thin must be at least 1");
        }
        if self.is_fixed() {
            self.fixed_model()?.validate()?;
        }
        Ok(())
    }

    pub fn topology(&self) -> Topology {
        match self.topology {
            TopologyKind::Ied => Topology::Ied,
            TopologyKind::LeftToRight => Topology::LeftToRight,
            TopologyKind::Full => Topology::Full,
            TopologyKind::Finite => Topology::Finite(self.states),
        }
    }

    pub fn emission_family(&self) -> Result<EmissionFamily> {
        Ok(match self.emission {
            EmissionKind::Gaussian => EmissionFamily::Gaussian {
                prior: NigParams::new(self.mu0, self.nu0, self.nig_alpha, self.nig_beta)?,
                fixed_variance: self.variance,
            },
            EmissionKind::Poisson => EmissionFamily::Poisson { prior: GammaPrior::new(self.rate_shape, self.rate_scale)? },
        })
    }

    pub fn duration_family(&self) -> Result<DurationFamily> {
        let q_prior = BetaPrior { a: self.q_a, b: self.q_b };
        let max = self.duration_max;
        Ok(match self.duration {
            DurationKind::Poisson => DurationFamily::Poisson { prior: GammaPrior::new(self.duration_shape, self.duration_scale)?, max },
            DurationKind::DelayedGeometric => DurationFamily::DelayedGeometric { dmax: self.delay_max, q_prior, max },
            DurationKind::Geometric => DurationFamily::Geometric { q_prior, max },
            DurationKind::DeltaZero => DurationFamily::DeltaZero,
        })
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let conc = |value, resample, shape, scale| -> Result<Concentration> {
            Ok(Concentration { value, resample, prior: GammaPrior::new(shape, scale)?, ..Concentration::default() })
        };
        Ok(ModelConfig {
            topology: self.topology(),
            emission: self.emission_family()?,
            duration: self.duration_family()?,
            c: self.c,
            d: self.d,
            alpha0: conc(self.alpha0, self.alpha0_resample, self.alpha0_shape, self.alpha0_scale)?,
            alpha1: conc(self.alpha1, self.alpha1_resample, self.alpha1_shape, self.alpha1_scale)?,
            temperature: self.temperature,
            stick_step: self.stick_step,
        })
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions { burn: self.burn, samples: self.samples, thin: self.thin, seed: self.seed, n_init: self.init_segments }
    }

    pub fn is_fixed(&self) -> bool {
        !self.truth_means.is_empty()
    }

    /// The ground-truth model of fixed-parameter generation. Unless given,
    /// transitions are uniform over the targets the topology allows, the
    /// first state is uniform (left-to-right starts in the first state),
    /// and the last left-to-right state is absorbing.
    pub fn fixed_model(&self) -> Result<FixedModel> {
        let k = self.truth_means.len();
        if k == 0 {
            bail!("fixed-parameter generation needs truth_means");
        }
        let lr = self.topology == TopologyKind::LeftToRight;
        let per_state = |name: &str, n: usize| -> Result<()> {
            if n != k && !(lr && n + 1 == k && name == "truth_durations") {
                bail!("{name} has {n} entries, expected {k}");
            }
            Ok(())
        };
        let variances = if self.truth_variances.is_empty() { vec![1.0; k] } else { self.truth_variances.clone() };
        per_state("truth_variances", variances.len())?;
        per_state("truth_durations", self.truth_durations.len())?;
        let theta = (0..k)
            .map(|i| match self.emission {
                EmissionKind::Gaussian => EmissionParams::Gaussian { mean: self.truth_means[i], var: variances[i] },
                EmissionKind::Poisson => EmissionParams::Poisson { rate: self.truth_means[i] },
            })
            .collect();
        let delays = if self.truth_delays.is_empty() { vec![0; k] } else { self.truth_delays.clone() };
        per_state("truth_delays", delays.len())?;
        let lambda = (0..k)
            .map(|i| {
                // The absorbing last state of a left-to-right truth needs no duration.
                let x = self.truth_durations.get(i).copied().unwrap_or(1.0);
                match self.duration {
                    DurationKind::Poisson => DurationParams::Poisson { rate: x },
                    DurationKind::Geometric => DurationParams::Geometric { q: x, delay: 0 },
                    DurationKind::DelayedGeometric => DurationParams::Geometric { q: x, delay: delays[i] },
                    DurationKind::DeltaZero => DurationParams::DeltaZero,
                }
            })
            .collect();
        let pi: Vec<Vec<f64>> = if self.truth_transitions.is_empty() {
            (0..k)
                .map(|i| {
                    let allowed: Vec<bool> = (0..k)
                        .map(|j| match self.topology {
                            TopologyKind::Ied => i != j,
                            TopologyKind::LeftToRight => j == i + 1,
                            TopologyKind::Full | TopologyKind::Finite => true,
                        })
                        .collect();
                    let n = allowed.iter().filter(|&&a| a).count();
                    allowed.iter().map(|&a| if a { 1.0 / n as f64 } else { 0.0 }).collect()
                })
                .collect()
        } else {
            if self.truth_transitions.len() != k * k {
                bail!("truth_transitions has {} entries, expected {}", self.truth_transitions.len(), k * k);
            }
            self.truth_transitions.chunks(k).map(|r| r.to_vec()).collect()
        };
        let initial = if lr { (0..k).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect() } else { vec![1.0 / k as f64; k] };
        let model = FixedModel { initial, pi, theta, lambda, duration: self.duration_family()? };
        model.validate()?;
        Ok(model)
    }
}

/// Command-line values that replace configured ones.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Run configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_enum)]
    pub topology: Option<TopologyKind>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(x) = self.seed {
            cfg.seed = x;
        }
        if let Some(x) = &self.out {
            cfg.output = Some(x.clone());
        }
        if let Some(x) = self.burn {
            cfg.burn = x;
        }
        if let Some(x) = self.samples {
            cfg.samples = x;
        }
        if let Some(x) = self.thin {
            cfg.thin = x;
        }
        if let Some(x) = self.temperature {
            cfg.temperature = x;
        }
        if let Some(x) = self.topology {
            cfg.topology = x;
        }
        cfg.validate()
    }

    /// The configured file with overrides applied, or defaults.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}
