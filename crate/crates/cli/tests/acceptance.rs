//! End-to-end acceptance checks A1-A8. Prints one line per criterion and
//! exits non-zero if a hard criterion fails. A8 only warns.

use ishmm::families::{DurationFamily, DurationParams, EmissionFamily, EmissionParams};
use ishmm::geweke::{geweke_test, GewekeOptions};
use ishmm::gibbs::{run_chain, Chain, RunOptions};
use ishmm::model::{prior_generate, Concentration, ModelConfig, ModelState};
use ishmm::prob::{GammaPrior, NigParams, RngStream};
use ishmm::topology::Topology;
use ishmm::transition::{sample_pi, CountMatrix};
use ishmm_cli::experiments::{CoalResults, MorseResults, SyntheticResults};
use std::collections::HashMap;
use std::path::Path;
use std::process::Command;

enum Verdict {
    Pass,
    Fail,
    Warn,
}

struct Outcome {
    id: &'static str,
    verdict: Verdict,
    detail: String,
}

fn outcome(id: &'static str, ok: bool, soft: bool, detail: String) -> Outcome {
    let verdict = match (ok, soft) {
        (true, _) => Verdict::Pass,
        (false, true) => Verdict::Warn,
        (false, false) => Verdict::Fail,
    };
    Outcome { id, verdict, detail }
}

fn experiment<T: serde::de::DeserializeOwned>(name: &str, root: &Path) -> Result<T, String> {
    let out = root.join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_ishmm"))
        .args(["experiment", name, "--out"])
        .arg(&out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| format!("could not start ishmm: {e}"))?;
    if !status.success() {
        return Err(format!("`ishmm experiment {name}` exited with {status}"));
    }
    let text = std::fs::read_to_string(out.join("results.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn gaussian() -> EmissionFamily {
    EmissionFamily::Gaussian { prior: NigParams::new(0.0, 0.25, 1.0, 1.0).unwrap(), fixed_variance: None }
}

// A1 and A8 share one run.
fn a1_a8(root: &Path) -> Vec<Outcome> {
    let r: SyntheticResults = match experiment("ied-synth", root) {
        Ok(r) => r,
        Err(e) => return vec![outcome("A1", false, false, e.clone()), outcome("A8", false, true, e)],
    };
    let (modal, mass) = r.fit.modal_states;
    let mut misses = Vec::new();
    for m in &r.matches {
        if !m.mean.contains(m.true_mean) {
            misses.push(format!("mean {} outside [{:.3}, {:.3}]", m.true_mean, m.mean.lo, m.mean.hi));
        }
        let d = m.true_duration.unwrap_or(f64::NAN);
        if !m.duration.contains(d) {
            misses.push(format!("rate {d} outside [{:.3}, {:.3}]", m.duration.lo, m.duration.hi));
        }
    }
    let ok = modal == 4 && mass >= 0.5 && misses.is_empty();
    let a1 = outcome(
        "A1",
        ok,
        false,
        format!(
            "modal states {modal} (need 4) with mass {mass:.3} (need >= 0.5); intervals: {}",
            if misses.is_empty() { "all 8 contain the truth".to_string() } else { misses.join("; ") }
        ),
    );
    let lag = r.fit.mean_acf.iter().take(51).position(|&x| x < 0.2);
    let a8 = outcome(
        "A8",
        lag.is_some(),
        true,
        match lag {
            Some(l) => format!("fixed-time mean autocorrelation below 0.2 at lag {l} (need <= 50)"),
            None => "fixed-time mean autocorrelation stays >= 0.2 through lag 50".to_string(),
        },
    );
    vec![a1, a8]
}

fn a2(root: &Path) -> Outcome {
    let r: SyntheticResults = match experiment("ilr-synth", root) {
        Ok(r) => r,
        Err(e) => return outcome("A2", false, false, e),
    };
    let (modal, mass) = r.fit.modal_changepoints;
    let vars: Vec<f64> = r.map_path.iter().map(|m| m.duration.var).collect();
    let last_largest = vars.split_last().is_some_and(|(l, rest)| !rest.is_empty() && rest.iter().all(|v| l > v));
    outcome(
        "A2",
        modal == 4 && mass >= 0.5 && last_largest,
        false,
        format!(
            "modal change-points {modal} (need 4) with mass {mass:.3} (need >= 0.5); rate variances along the MAP path {:?} (last must be largest)",
            vars.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>()
        ),
    )
}

fn a3(root: &Path) -> Outcome {
    let r: CoalResults = match experiment("coal", root) {
        Ok(r) => r,
        Err(e) => return outcome("A3", false, false, e),
    };
    let (modal, mass) = r.fit.modal_changepoints;
    let near = |target: usize| r.peaks.iter().any(|&p| p.abs_diff(target) <= 8);
    let ok = modal == 2 && r.mass_one_to_five >= 0.95 && r.peaks.len() == 2 && near(40) && near(100);
    outcome(
        "A3",
        ok,
        false,
        format!(
            "modal change-points {modal} (need 2, mass {mass:.3}); mass on 1..5 {:.3} (need >= 0.95); peaks at years {:?} after {} (need within 8 of 40 and 100)",
            r.mass_one_to_five, r.peaks, r.first_year
        ),
    )
}

fn a4(root: &Path) -> Outcome {
    let r: MorseResults = match experiment("morse-synth", root) {
        Ok(r) => r,
        Err(e) => return outcome("A4", false, false, e),
    };
    let (kd, md) = r.duration_model.modal_states;
    let (km, mm) = r.markov_model.modal_states;
    outcome(
        "A4",
        kd == 3 && md >= 0.5 && km == 2 && mm >= 0.5,
        false,
        format!("duration model: modal {kd} states, mass {md:.3} (need 3, >= 0.5); Markov model: modal {km}, mass {mm:.3} (need 2, >= 0.5)"),
    )
}

/// Path posterior of a two-state model with frozen parameters: the beam
/// sampler's path updates against exhaustive enumeration.
fn a5() -> Outcome {
    const MAX: usize = 5;
    const SWEEPS: usize = 100_000;
    let y = [-1.2, -0.7, 0.4, 1.3, 0.8, -0.2, -1.1, 0.6];
    let mut config = ModelConfig::new(
        Topology::Finite(2),
        gaussian(),
        DurationFamily::Poisson { prior: GammaPrior::new(2.0, 1.0).unwrap(), max: Some(MAX) },
    );
    config.temperature = 3.0;
    let means = [-1.0, 1.0];
    let rates = [1.5, 2.5];
    let pi = [[0.3, 0.7], [0.6, 0.4]];
    let initial = [0.45, 0.55];
    let mut chain = Chain::<f64>::new(config, y.to_vec(), 2, 5).expect("chain");
    for k in 0..2 {
        chain.state.theta[k] = EmissionParams::Gaussian { mean: means[k], var: 1.0 };
        chain.state.lambda[k] = DurationParams::Poisson { rate: rates[k] };
        chain.state.pi.rows[k].tracked = pi[k].to_vec();
        chain.state.weights.beta.root.tracked[k] = initial[k];
    }

    // Independent oracle: truncated Poisson durations and normal densities.
    let ln_dur = |k: usize, r: usize| {
        let ln_p = |j: usize| j as f64 * rates[k].ln() - rates[k] - (1..=j).map(|i| (i as f64).ln()).sum::<f64>();
        let norm: f64 = (0..=MAX).map(|j| ln_p(j).exp()).sum();
        ln_p(r) - norm.ln()
    };
    let ln_emit = |k: usize, v: f64| -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (v - means[k]).powi(2);
    let mut exact: HashMap<Vec<(usize, usize)>, f64> = HashMap::new();
    fn walk(
        t: usize,
        path: &mut Vec<(usize, usize)>,
        lw: f64,
        out: &mut HashMap<Vec<(usize, usize)>, f64>,
        step: &dyn Fn(usize, Option<(usize, usize)>, (usize, usize)) -> f64,
    ) {
        if t == 8 {
            out.insert(path.clone(), lw);
            return;
        }
        let prev = path.last().copied();
        let next: Vec<(usize, usize)> = match prev {
            Some((s, r)) if r > 0 => vec![(s, r - 1)],
            _ => (0..2).flat_map(|s| (0..=MAX).map(move |r| (s, r))).collect(),
        };
        for z in next {
            let w = step(t, prev, z);
            path.push(z);
            walk(t + 1, path, lw + w, out, step);
            path.pop();
        }
    }
    let step = |t: usize, prev: Option<(usize, usize)>, z: (usize, usize)| {
        let trans = match prev {
            None => initial[z.0].ln() + ln_dur(z.0, z.1),
            Some((_, r)) if r > 0 => 0.0,
            Some((s, _)) => pi[s][z.0].ln() + ln_dur(z.0, z.1),
        };
        trans + ln_emit(z.0, y[t])
    };
    walk(0, &mut Vec::new(), 0.0, &mut exact, &step);
    let top = exact.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = exact.values().map(|l| (l - top).exp()).sum();

    let mut counts: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    for _ in 0..SWEEPS {
        if let Err(e) = chain.update_path() {
            return outcome("A5", false, false, format!("path update failed: {e}"));
        }
        let key: Vec<(usize, usize)> = chain.path.z.iter().map(|z| (z.s, z.r)).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    let probs: Vec<(Vec<(usize, usize)>, f64)> = exact.iter().map(|(k, lw)| (k.clone(), (lw - top).exp() / total)).collect();
    let outside = counts.keys().filter(|k| !exact.contains_key(*k)).count();
    let tv_full = total_variation(&probs, &counts, SWEEPS);

    // Same comparison on the state sequences alone.
    let states = |k: &[(usize, usize)]| k.iter().map(|z| (z.0, 0)).collect::<Vec<_>>();
    let mut marginal: HashMap<Vec<(usize, usize)>, f64> = HashMap::new();
    for (k, p) in &probs {
        *marginal.entry(states(k)).or_insert(0.0) += p;
    }
    let mut seq_counts: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    for (k, n) in &counts {
        *seq_counts.entry(states(k)).or_insert(0) += n;
    }
    let marginal: Vec<_> = marginal.into_iter().collect();
    let tv_seq = total_variation(&marginal, &seq_counts, SWEEPS);

    // Distance an independent sample of the same size reaches from the exact
    // posterior over full paths.
    let mut rng = RngStream::new(6);
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for (_, p) in &probs {
        acc += p;
        cdf.push(acc);
    }
    let mut iid: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    for _ in 0..SWEEPS {
        let u = rng.uniform_open() * acc;
        let i = cdf.partition_point(|&c| c < u).min(probs.len() - 1);
        *iid.entry(probs[i].0.clone()).or_insert(0) += 1;
    }
    let tv_iid = total_variation(&probs, &iid, SWEEPS);

    outcome(
        "A5",
        tv_seq < 0.03 && outside == 0,
        false,
        format!(
            "total variation over {} state sequences {tv_seq:.4} after {SWEEPS} sweeps (need < 0.03); {outside} impossible paths visited; \
             over {} (state, countdown) paths {tv_full:.4}, where an independent exact sample of the same size reaches {tv_iid:.4}",
            marginal.len(),
            probs.len()
        ),
    )
}

fn total_variation(exact: &[(Vec<(usize, usize)>, f64)], counts: &HashMap<Vec<(usize, usize)>, usize>, n: usize) -> f64 {
    0.5 * exact.iter().map(|(k, p)| (p - counts.get(k).copied().unwrap_or(0) as f64 / n as f64).abs()).sum::<f64>()
}

fn a6() -> Outcome {
    let mut config = ModelConfig::new(
        Topology::Ied,
        EmissionFamily::Gaussian { prior: NigParams::new(0.0, 1.0, 3.0, 2.0).unwrap(), fixed_variance: None },
        DurationFamily::Poisson { prior: GammaPrior::new(2.0, 1.0).unwrap(), max: Some(3) },
    );
    config.alpha0 = Concentration::fixed(2.0);
    config.alpha1 = Concentration::fixed(3.0);
    config.temperature = 2.0;
    let opts = GewekeOptions { len: 5, marginal: 20_000, chains: 2_000, steps: 30, seed: 21 };
    match geweke_test::<f64>(&config, &opts) {
        Ok(stats) => {
            let passing = stats.iter().filter(|s| s.p > 0.01).count();
            let frac = passing as f64 / stats.len() as f64;
            let worst = stats.iter().min_by(|a, b| a.p.total_cmp(&b.p)).unwrap();
            outcome(
                "A6",
                frac >= 0.95,
                false,
                format!("{passing} of {} statistics with p > 0.01 (need >= 95%); smallest p {:.4} ({})", stats.len(), worst.p, worst.name),
            )
        }
        Err(e) => outcome("A6", false, false, e.to_string()),
    }
}

fn a7() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // (i) Markov durations never leave a nonzero countdown.
    let markov = ModelConfig::new(Topology::Full, gaussian(), DurationFamily::DeltaZero);
    let mut rng = RngStream::new(31);
    let (_, path, y) = prior_generate::<f64>(&markov, 100, 0, &mut rng).expect("prior draw");
    let opts = RunOptions { burn: 50, samples: 200, thin: 1, seed: 32, n_init: 4 };
    let run = run_chain::<f64>(&markov, &y, &opts, |_, _| {}).expect("chain");
    let nonzero = path.z.iter().filter(|z| z.r > 0).count()
        + run.samples.iter().flat_map(|s| &s.segments).filter(|g| g.duration > 0 || g.len != 1).count();
    ok &= nonzero == 0;
    notes.push(format!("(i) {nonzero} nonzero countdowns"));

    // (ii) Rows of a finite full model against Dirichlet(alpha1 beta) moments,
    // with the base rows held fixed.
    let mut finite = ModelConfig::new(Topology::Finite(4), gaussian(), DurationFamily::DeltaZero);
    let alpha1 = 2.5;
    finite.alpha1 = Concentration::fixed(alpha1);
    let state = ModelState::<f64>::sample_prior(&finite, 4, &mut rng).expect("prior state");
    let beta = &state.weights.beta.rows;
    let draws = 100_000;
    let mut sum = vec![vec![0.0; 4]; 4];
    let mut sq = vec![vec![0.0; 4]; 4];
    for _ in 0..draws {
        let pi = sample_pi(beta, alpha1, &CountMatrix::zeros(4), &mut rng).expect("rows");
        for (m, row) in pi.rows.iter().enumerate() {
            for (k, &p) in row.tracked.iter().enumerate() {
                sum[m][k] += p;
                sq[m][k] += p * p;
            }
        }
    }
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for m in 0..4 {
        for k in 0..4 {
            let b = beta[m].tracked[k];
            let var = b * (1.0 - b) / (alpha1 + 1.0);
            let mean = sum[m][k] / draws as f64;
            let emp_var = sq[m][k] / draws as f64 - mean * mean;
            worst_mean = worst_mean.max((mean - b).abs() / (var / draws as f64).sqrt());
            if b > 0.01 {
                worst_var = worst_var.max((emp_var / var - 1.0).abs());
            }
        }
    }
    let ii = worst_mean < 5.0 && worst_var < 0.05;
    ok &= ii;
    notes.push(format!("(ii) largest mean error {worst_mean:.2} standard errors (< 5), largest relative variance error {worst_var:.3} (< 0.05)"));

    // (iii) Normalized masses approach the stick weights as alpha0 grows.
    let mut spread = Vec::new();
    for a0 in [1e2, 1e3, 1e4] {
        let mut cfg = ModelConfig::new(Topology::Ied, gaussian(), DurationFamily::DeltaZero);
        cfg.alpha0 = Concentration::fixed(a0);
        let mut sq = 0.0;
        let mut n = 0;
        for _ in 0..5_000 {
            let s = ModelState::<f64>::sample_prior(&cfg, 3, &mut rng).expect("prior state");
            let total: f64 = s.weights.ln_masses.flat().iter().map(|l| l.exp()).sum();
            for (lg, w) in s.weights.ln_masses.tracked.iter().zip(&s.weights.sticks.w.tracked) {
                sq += (lg.exp() / total - w).powi(2);
                n += 1;
            }
        }
        spread.push(sq / n as f64);
    }
    let iii = spread.windows(2).all(|w| w[1] < w[0]);
    ok &= iii;
    notes.push(format!("(iii) mean squared gap for alpha0 = 1e2, 1e3, 1e4: {:.2e}, {:.2e}, {:.2e} (must decrease)", spread[0], spread[1], spread[2]));
    outcome("A7", ok, false, notes.join("; "))
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let root = root.path();
    let mut results: Vec<Outcome> = std::thread::scope(|s| {
        let h1 = s.spawn(|| a1_a8(root));
        let h2 = s.spawn(|| a2(root));
        let h3 = s.spawn(|| a3(root));
        let h4 = s.spawn(|| a4(root));
        let h5 = s.spawn(a5);
        let h6 = s.spawn(a6);
        let h7 = s.spawn(a7);
        let mut v = h1.join().expect("A1");
        v.extend([h2, h3, h4, h5, h6, h7].into_iter().map(|h| h.join().expect("criterion thread")));
        v
    });
    results.sort_by_key(|o| o.id);
    let mut failed = 0;
    for o in &results {
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Warn => "WARN",
        };
        println!("{} {tag}: {}", o.id, o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
