//! Gamma-process masses over partition cells and the dependent base
//! distributions they induce.
//!
//! Every cell `R` of the partition carries a mass
//! `gamma_R ~ Gamma(alpha0 * w_R, 1)`, where `w_R` is the total stick weight
//! of the states in `R`. The base distribution of state `m` is the
//! normalization of the masses of the cells it can reach; the initial-state
//! distribution normalizes over every cell.
//!
//! Cells with zero stick weight are allowed (gaps between consecutive
//! left-to-right states); their mass is exactly zero and they never receive
//! probability.
//!
//! Masses are stored as logarithms. A cell with stick weight `w` has shape
//! `alpha0 * w`, and at shapes near `1e-3` the mass itself is below the
//! smallest positive `f64` much of the time.

use crate::error::{consistency_err, param_err, Result};
use crate::prob::density::ln_gamma_fn;
use crate::prob::sticks::{ln_py_fractions, py_fraction_params, validate_py};
use crate::prob::{ln_beta_split, ln_gamma_unit, sample_beta_split, standard_normal, stick_breaking_py, RngStream};
use crate::real::{log_sum_exp, Real};
use crate::topology::{Layout, Topology};
use crate::transition::{check_row, sample_pi_row, CellRow, CountMatrix, TransitionMatrix};
use serde::{Deserialize, Serialize};

/// Log gamma-process mass per partition cell; `-inf` for empty cells.
pub type LnMasses = CellRow<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickWeights<T> {
    pub w: CellRow<T>,
    pub c: f64,
    pub d: f64,
}

impl<T: Real> StickWeights<T> {
    /// Prior draw for a layout. Infinite topologies put the unbroken
    /// remainder on the unbounded residual cell; finite ones close the stick
    /// at the last state.
    pub fn sample_prior(layout: &Layout, c: f64, d: f64, rng: &mut RngStream) -> Result<Self> {
        validate_py(c, d)?;
        let m = layout.n_tracked;
        let mut w = CellRow::zeros(layout);
        if m > 0 {
            let sticks = stick_breaking_py(c, d, m, rng)?;
            for (x, s) in w.tracked.iter_mut().zip(&sticks) {
                *x = T::of(*s);
            }
        }
        let used: f64 = w.tracked.iter().map(|x| x.f64()).sum();
        let rest = (1.0 - used).max(0.0);
        match layout.topology {
            Topology::Finite(_) => {
                if let Some(last) = w.tracked.last_mut() {
                    *last = *last + T::of(rest);
                }
            }
            Topology::Ied | Topology::Full => w.residual[0] = T::of(rest),
            Topology::LeftToRight => w.residual[m] = T::of(rest),
        }
        Ok(Self { w, c, d })
    }

    pub fn total(&self) -> T {
        self.w.total()
    }

    /// Stick fractions of the tracked states in index order.
    fn fractions(&self) -> Vec<f64> {
        let mut remaining = 1.0f64;
        self.w
            .tracked
            .iter()
            .map(|x| {
                let v = (x.f64() / remaining).clamp(0.0, 1.0);
                remaining -= x.f64();
                v
            })
            .collect()
    }

    /// Rebuilds tracked weights from fractions, rescaling residual cells to
    /// keep their relative proportions.
    fn set_fractions(&mut self, v: &[f64], finite: bool) {
        let mut remaining = 1.0f64;
        for (i, &f) in v.iter().enumerate() {
            let x = if finite && i + 1 == v.len() { remaining } else { f * remaining };
            self.w.tracked[i] = T::of(x);
            remaining -= x;
        }
        let old: f64 = self.w.residual.iter().map(|x| x.f64()).sum();
        if old > 0.0 {
            let k = remaining.max(0.0) / old;
            for x in &mut self.w.residual {
                *x = T::of(x.f64() * k);
            }
        }
    }

    /// Log prior density of the tracked fractions. Finite and left-to-right
    /// topologies track every state up to the last one in index order, so
    /// the stick-breaking density applies directly. For the others the
    /// tracked states are exactly those a path occupies, so their weights
    /// follow the symmetric intensity
    /// `prod_i w_i^(-1-d) * w_rest^(c + n d - 1)`, which in fraction
    /// coordinates is the stick-breaking density divided by `prod_i v_i`.
    fn ln_prior(&self, topology: Topology) -> f64 {
        let v = self.fractions();
        match topology {
            Topology::Finite(_) => ln_py_fractions(self.c, self.d, &v[..v.len().saturating_sub(1)]),
            Topology::LeftToRight => ln_py_fractions(self.c, self.d, &v),
            Topology::Ied | Topology::Full => ln_py_fractions(self.c, self.d, &v) - v.iter().map(|x| x.ln()).sum::<f64>(),
        }
    }
}

/// Normalized masses per restricting set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRows<T> {
    pub rows: Vec<CellRow<T>>,
    /// Initial-state distribution: every cell, normalized.
    pub root: CellRow<T>,
}

impl<T: Real> BetaRows<T> {
    pub fn check(&self, layout: &Layout, tol: f64) -> Result<()> {
        check_row(&self.root, layout, None, tol).map_err(|e| consistency_err!("beta root: {e}"))?;
        for (m, row) in self.rows.iter().enumerate() {
            check_row(row, layout, Some(m), tol).map_err(|e| consistency_err!("beta row {m}: {e}"))?;
        }
        Ok(())
    }
}

/// Log of a `Gamma(shape, 1 / rate)` draw, `-inf` when the shape is zero.
fn ln_gamma_or_empty(shape: f64, rate: f64, rng: &mut RngStream) -> f64 {
    if shape <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_gamma_unit(shape, rng) - rate.ln()
}

/// Independent prior draw of one mass per cell.
pub fn sample_gamma_prior<T: Real>(sticks: &StickWeights<T>, alpha0: f64, rng: &mut RngStream) -> Result<LnMasses> {
    if !(alpha0 > 0.0) {
        return Err(param_err!("alpha0 must be positive, got {alpha0}"));
    }
    let tracked = sticks.w.tracked.iter().map(|x| ln_gamma_or_empty(alpha0 * x.f64(), 1.0, rng)).collect();
    let residual = sticks.w.residual.iter().map(|x| ln_gamma_or_empty(alpha0 * x.f64(), 1.0, rng)).collect();
    Ok(CellRow { tracked, residual })
}

/// Log masses with the cells unreachable from `from` emptied.
fn reachable(ln_masses: &LnMasses, layout: &Layout, from: Option<usize>) -> LnMasses {
    let mut row = ln_masses.clone();
    if let Some(m) = from {
        for (k, x) in row.tracked.iter_mut().enumerate() {
            if !layout.tracked_reachable(m, k) {
                *x = f64::NEG_INFINITY;
            }
        }
        for (r, x) in row.residual.iter_mut().enumerate() {
            if !layout.residual_reachable(m, r) {
                *x = f64::NEG_INFINITY;
            }
        }
    }
    row
}

fn normalize_row<T: Real>(ln_masses: &LnMasses, layout: &Layout, from: Option<usize>) -> CellRow<T> {
    let row = reachable(ln_masses, layout, from);
    let total = log_sum_exp(&row.flat());
    // Reachable cells keep a positive entry after narrowing.
    let f = |x: &f64| {
        if *x == f64::NEG_INFINITY || total == f64::NEG_INFINITY {
            T::zero()
        } else {
            T::of((x - total).exp()).max(T::tiny())
        }
    };
    CellRow { tracked: row.tracked.iter().map(f).collect(), residual: row.residual.iter().map(f).collect() }
}

/// Normalizes the masses over each restricting set.
pub fn compute_beta<T: Real>(ln_masses: &LnMasses, layout: &Layout) -> BetaRows<T> {
    BetaRows {
        rows: (0..layout.n_tracked).map(|m| normalize_row(ln_masses, layout, Some(m))).collect(),
        root: normalize_row(ln_masses, layout, None),
    }
}

/// Tables per restaurant (tracked rows) and the initial-state draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts {
    pub rows: Vec<Vec<u64>>,
    /// The first state is a direct draw from the initial distribution and
    /// counts as one table there.
    pub root: Vec<u64>,
}

impl TableCounts {
    pub fn row_total(&self, m: usize) -> u64 {
        self.rows[m].iter().sum()
    }

    /// Tables serving state `k` across all restaurants including the root.
    pub fn column_total(&self, k: usize) -> u64 {
        self.rows.iter().map(|r| r[k]).sum::<u64>() + self.root[k]
    }
}

/// Seats `n` customers one at a time; each opens a new table with
/// probability `a / (a + j)` where `j` customers are already seated.
pub fn sample_tables(n: u64, a: f64, rng: &mut RngStream) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut tables = 1;
    for j in 1..n {
        if rng.uniform_open() < a / (a + j as f64) {
            tables += 1;
        }
    }
    tables
}

pub fn sample_table_counts<T: Real>(
    counts: &CountMatrix,
    alpha1: f64,
    beta: &BetaRows<T>,
    rng: &mut RngStream,
) -> Result<TableCounts> {
    let n = beta.rows.len();
    if counts.counts.len() != n {
        return Err(consistency_err!("count matrix has {} rows, beta has {n}", counts.counts.len()));
    }
    let mut rows = vec![vec![0u64; n]; n];
    for m in 0..n {
        for k in 0..n {
            let c = counts.counts[m][k];
            if c == 0 {
                continue;
            }
            let b = beta.rows[m].tracked[k].f64();
            if b <= 0.0 {
                return Err(consistency_err!("{c} transitions {m}->{k} where the base weight is zero"));
            }
            rows[m][k] = sample_tables(c, alpha1 * b, rng);
        }
    }
    let mut root = vec![0u64; n];
    if let Some(s) = counts.initial {
        root[s] = 1;
    }
    Ok(TableCounts { rows, root })
}

/// Log of the mass reachable from restaurant `from` (`None` = root).
fn ln_reachable_mass(ln_masses: &LnMasses, layout: &Layout, from: Option<usize>) -> f64 {
    log_sum_exp(&reachable(ln_masses, layout, from).flat())
}

/// Auxiliary rates of the mass conditional. Draws
/// `L_j ~ Gamma(l_j., 1 / sum_{R in A_j} gamma_R)` for every restaurant and
/// returns `1 + sum_{j : R in A_j} L_j` per cell.
pub fn sample_rates(tables: &TableCounts, ln_masses: &LnMasses, layout: &Layout, rng: &mut RngStream) -> CellRow<f64> {
    let n = layout.n_tracked;
    // Keep every rate below finite overflow when a row's reachable mass is
    // near zero.
    let ln_cap = (f64::MAX / (n as f64 + 2.0)).ln();
    let aux_draw = |l: u64, from: Option<usize>, rng: &mut RngStream| {
        if l == 0 {
            0.0
        } else {
            (ln_gamma_unit(l as f64, rng) - ln_reachable_mass(ln_masses, layout, from)).min(ln_cap).exp()
        }
    };
    let aux: Vec<f64> = (0..n).map(|m| aux_draw(tables.row_total(m), Some(m), rng)).collect();
    let aux_root = aux_draw(tables.root.iter().sum(), None, rng);
    CellRow {
        tracked: (0..n).map(|k| 1.0 + aux_root + (0..n).filter(|&j| layout.tracked_reachable(j, k)).map(|j| aux[j]).sum::<f64>()).collect(),
        residual: (0..layout.n_residual())
            .map(|r| 1.0 + aux_root + (0..n).filter(|&j| layout.residual_reachable(j, r)).map(|j| aux[j]).sum::<f64>())
            .collect(),
    }
}

/// Tables serving each cell; residual cells serve none.
fn cell_tables(tables: &TableCounts, layout: &Layout) -> CellRow<f64> {
    CellRow {
        tracked: (0..layout.n_tracked).map(|k| tables.column_total(k) as f64).collect(),
        residual: vec![0.0; layout.n_residual()],
    }
}

/// `gamma_R ~ Gamma(alpha0 w_R + l_.R, 1 / rate_R)`.
pub fn sample_masses<T: Real>(
    tables: &TableCounts,
    sticks: &StickWeights<T>,
    rates: &CellRow<f64>,
    layout: &Layout,
    alpha0: f64,
    rng: &mut RngStream,
) -> LnMasses {
    let l = cell_tables(tables, layout).flat();
    let rates = rates.flat();
    let draws: Vec<f64> =
        sticks.w.flat().iter().enumerate().map(|(i, w)| ln_gamma_or_empty(alpha0 * w.f64() + l[i], rates[i], rng)).collect();
    CellRow::from_flat(&draws, layout.n_tracked)
}

/// One scan of the auxiliary-variable Gibbs sampler for the masses.
pub fn gibbs_gamma<T: Real>(
    tables: &TableCounts,
    sticks: &StickWeights<T>,
    ln_masses: &LnMasses,
    layout: &Layout,
    alpha0: f64,
    rng: &mut RngStream,
) -> Result<LnMasses> {
    let rates = sample_rates(tables, ln_masses, layout, rng);
    Ok(sample_masses(tables, sticks, &rates, layout, alpha0, rng))
}

/// Log likelihood of the sticks and `alpha0` given tables and rates, with
/// the masses integrated out:
/// `sum_R ln Gamma(alpha0 w_R + l_.R) - ln Gamma(alpha0 w_R) - alpha0 w_R ln rate_R`.
pub fn ln_sticks_given_tables<T: Real>(
    sticks: &StickWeights<T>,
    tables: &TableCounts,
    rates: &CellRow<f64>,
    layout: &Layout,
    alpha0: f64,
) -> f64 {
    let l = cell_tables(tables, layout);
    sticks
        .w
        .flat()
        .iter()
        .zip(l.flat())
        .zip(rates.flat())
        .filter(|((w, _), _)| w.f64() > 0.0)
        .map(|((w, l), rate)| {
            let a = alpha0 * w.f64();
            ln_gamma_fn(a + l) - ln_gamma_fn(a) - a * rate.ln()
        })
        .sum()
}

/// `sum_R ln Gamma(gamma_R; alpha0 w_R, 1)` over cells with positive weight.
pub fn ln_masses_given_sticks<T: Real>(ln_masses: &LnMasses, sticks: &StickWeights<T>, alpha0: f64) -> f64 {
    ln_masses
        .flat()
        .iter()
        .zip(sticks.w.flat())
        .filter(|(_, w)| w.f64() > 0.0)
        .map(|(&lg, w)| {
            let a = alpha0 * w.f64();
            (a - 1.0) * lg - lg.exp() - ln_gamma_fn(a)
        })
        .sum()
}

/// Per-coordinate random-walk Metropolis-Hastings on the logits of the
/// tracked stick fractions, targeting the prior of the tracked weights times
/// `ln_lik`. Returns the number of accepted moves.
pub fn mh_sticks<T: Real>(
    sticks: &mut StickWeights<T>,
    layout: &Layout,
    step: f64,
    rng: &mut RngStream,
    ln_lik: impl Fn(&StickWeights<T>) -> f64,
) -> usize {
    let finite = layout.topology.is_finite();
    let n_free = if finite { layout.n_tracked.saturating_sub(1) } else { layout.n_tracked };
    let target = |s: &StickWeights<T>| s.ln_prior(layout.topology) + ln_lik(s);
    let mut current = target(sticks);
    let mut accepted = 0;
    for i in 0..n_free {
        let mut v = sticks.fractions();
        let old = v[i];
        if !(old > 0.0 && old < 1.0) {
            continue;
        }
        let logit = (old / (1.0 - old)).ln() + step * standard_normal(rng);
        let new = 1.0 / (1.0 + (-logit).exp());
        if !(new > 0.0 && new < 1.0) {
            continue;
        }
        v[i] = new;
        let mut proposal = sticks.clone();
        proposal.set_fractions(&v, finite);
        let proposed = target(&proposal);
        let log_jacobian = (new * (1.0 - new)).ln() - (old * (1.0 - old)).ln();
        let log_ratio = proposed - current + log_jacobian;
        if log_ratio.is_finite() && rng.uniform_open().ln() < log_ratio {
            *sticks = proposal;
            current = proposed;
            accepted += 1;
        }
    }
    accepted
}

/// Weight-side state of the model: layout, sticks, masses and their
/// normalized rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SngpState<T> {
    pub topology: Topology,
    pub sticks: StickWeights<T>,
    pub ln_masses: LnMasses,
    pub beta: BetaRows<T>,
}

impl<T: Real> SngpState<T> {
    pub fn layout(&self) -> Layout {
        Layout::new(self.topology, self.sticks.w.tracked.len())
    }

    /// Ancestral draw of sticks, masses and rows for `n_tracked` states.
    pub fn sample_prior(topology: Topology, n_tracked: usize, c: f64, d: f64, alpha0: f64, rng: &mut RngStream) -> Result<Self> {
        topology.validate()?;
        let n = match topology {
            Topology::Finite(k) => k,
            _ => n_tracked,
        };
        let layout = Layout::new(topology, n);
        let sticks = StickWeights::sample_prior(&layout, c, d, rng)?;
        let ln_masses = sample_gamma_prior(&sticks, alpha0, rng)?;
        let beta = compute_beta(&ln_masses, &layout);
        Ok(Self { topology, sticks, ln_masses, beta })
    }

    pub fn refresh_beta(&mut self) {
        self.beta = compute_beta(&self.ln_masses, &self.layout());
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let layout = self.layout();
        let sum = self.sticks.total().f64();
        if (sum - 1.0).abs() > tol {
            return Err(consistency_err!("stick weights sum to {sum}"));
        }
        if self.ln_masses.tracked.len() != layout.n_tracked || self.ln_masses.residual.len() != layout.n_residual() {
            return Err(consistency_err!("mass vector shape does not match layout"));
        }
        self.beta.check(&layout, tol)
    }
}

/// Splits a new tracked state off residual cell `cell`.
///
/// The stick weight is split first with the next stick-breaking fraction,
/// then the gamma mass with the matching beta split, then every transition
/// row's residual entry with `Beta(alpha1 beta_mM, alpha1 beta_m+)`. Existing
/// tracked entries of `beta` and `pi` are left untouched. Returns the index
/// of the new state; for left-to-right layouts indices at or above it shift
/// up by one.
pub fn instantiate_state<T: Real>(
    weights: &mut SngpState<T>,
    pi: &mut TransitionMatrix<T>,
    alpha0: f64,
    alpha1: f64,
    cell: usize,
    rng: &mut RngStream,
) -> Result<usize> {
    let layout = weights.layout();
    if cell >= layout.n_residual() {
        return Err(param_err!("no residual cell {cell} in a layout with {} residual cells", layout.n_residual()));
    }
    let w_cell = weights.sticks.w.residual[cell].f64();
    let lg_cell = weights.ln_masses.residual[cell];
    if !(w_cell > 0.0) || lg_cell == f64::NEG_INFINITY {
        return Err(consistency_err!("residual cell {cell} has no mass to split"));
    }
    let n = layout.n_tracked;
    let at = layout.insertion_index(cell);

    let (a, b) = py_fraction_params(weights.sticks.c, weights.sticks.d, n + 1);
    let (v, v_rest) = sample_beta_split(a, b, rng)?;
    let w_new = (v * w_cell).max(f64::MIN_POSITIVE);
    let w_rest = (v_rest * w_cell).max(f64::MIN_POSITIVE);

    let (ln_share, ln_share_rest) = ln_beta_split(alpha0 * w_new, alpha0 * w_rest, rng)?;
    let (share, share_rest) = (ln_share.exp(), ln_share_rest.exp());

    let split = |row: &mut CellRow<T>, new_part: T, rest: T| split_cell(row, layout.topology, at, cell, new_part, rest, T::zero());
    split(&mut weights.sticks.w, T::of(w_new), T::of(w_rest));
    split_cell(&mut weights.ln_masses, layout.topology, at, cell, lg_cell + ln_share, lg_cell + ln_share_rest, f64::NEG_INFINITY);

    let beta_parts: Vec<(T, T)> = weights
        .beta
        .rows
        .iter()
        .map(|row| {
            let old = row.residual[cell];
            (old * T::of(share), old * T::of(share_rest))
        })
        .collect();
    for (row, &(new_part, rest)) in weights.beta.rows.iter_mut().zip(&beta_parts) {
        split(row, new_part, rest);
    }
    let root_old = weights.beta.root.residual[cell];
    split(&mut weights.beta.root, root_old * T::of(share), root_old * T::of(share_rest));

    for (row, &(b_new, b_rest)) in pi.rows.iter_mut().zip(&beta_parts) {
        let old = row.residual[cell];
        // A Dirichlet parameter that underflows gives its side no mass.
        let (a, b) = (alpha1 * b_new.f64(), alpha1 * b_rest.f64());
        let (part, rest) = if !(old > T::zero()) || !(a > 0.0) {
            (T::zero(), T::one())
        } else if !(b > 0.0) {
            (T::one(), T::zero())
        } else {
            let (x, y) = sample_beta_split(a, b, rng)?;
            (T::of(x), T::of(y))
        };
        split(row, old * part, old * rest);
    }

    let new_layout = weights.layout();
    let new_beta_row = normalize_row(&weights.ln_masses, &new_layout, Some(at));
    let counts = vec![0u64; new_layout.n_tracked];
    let new_pi_row = sample_pi_row(&new_beta_row, alpha1, &counts, rng)?;
    weights.beta.rows.insert(at, new_beta_row);
    pi.rows.insert(at, new_pi_row);
    Ok(at)
}

/// Moves the part of residual cell `cell` given to a new state at `at` into
/// the tracked entries. `empty` fills an emptied left-to-right gap.
fn split_cell<U: Copy>(row: &mut CellRow<U>, topology: Topology, at: usize, cell: usize, new_part: U, rest: U, empty: U) {
    match topology {
        Topology::LeftToRight => {
            row.tracked.insert(at, new_part);
            row.residual[cell] = empty;
            row.residual.insert(cell + 1, rest);
        }
        _ => {
            row.tracked.push(new_part);
            row.residual[cell] = rest;
        }
    }
}

/// Merges tracked state `j` back into its residual cell, adding its stick
/// weight, mass and every row's probability to that cell. Exactly reverses
/// [`instantiate_state`].
pub fn prune_state<T: Real>(weights: &mut SngpState<T>, pi: &mut TransitionMatrix<T>, j: usize) -> Result<()> {
    let layout = weights.layout();
    if layout.topology.is_finite() {
        return Err(param_err!("finite layouts have no residual cell to merge into"));
    }
    if j >= layout.n_tracked {
        return Err(param_err!("cannot prune untracked state {j}"));
    }
    let target = layout.merge_target(j);
    let lr = layout.topology == Topology::LeftToRight;
    let merge = |row: &mut CellRow<T>| merge_cell(row, lr, j, target, |a, b| a + b);
    merge(&mut weights.sticks.w);
    merge_cell(&mut weights.ln_masses, lr, j, target, |a, b| log_sum_exp(&[a, b]));
    weights.beta.rows.remove(j);
    weights.beta.rows.iter_mut().for_each(merge);
    merge(&mut weights.beta.root);
    pi.rows.remove(j);
    pi.rows.iter_mut().for_each(merge);
    Ok(())
}

fn merge_cell<U: Copy>(row: &mut CellRow<U>, lr: bool, j: usize, target: usize, add: impl Fn(U, U) -> U) {
    let x = row.tracked.remove(j);
    if lr {
        let above = row.residual.remove(j + 1);
        row.residual[target] = add(add(row.residual[target], x), above);
    } else {
        row.residual[target] = add(row.residual[target], x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::sample_gamma;
    use crate::stats::{ks_one_sample, mean_and_var};
    use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

    fn unit_masses(layout: &Layout) -> LnMasses {
        CellRow::zeros(layout)
    }

    fn ln_row(g: CellRow<f64>) -> LnMasses {
        CellRow { tracked: g.tracked.iter().map(|x| x.ln()).collect(), residual: g.residual.iter().map(|x| x.ln()).collect() }
    }

    fn assert_row(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15), "{a:?} vs {b:?}");
    }

    #[test]
    fn ied_beta_excludes_self() {
        let layout = Layout::new(Topology::Ied, 2);
        let b: BetaRows<f64> = compute_beta(&unit_masses(&layout), &layout);
        assert_eq!(b.rows[0].tracked, vec![0.0, 0.5]);
        assert_eq!(b.rows[0].residual, vec![0.5]);
        assert_eq!(b.rows[1].tracked[1], 0.0);
        b.check(&layout, 1e-12).unwrap();
    }

    #[test]
    fn left_to_right_beta() {
        let layout = Layout::new(Topology::LeftToRight, 2);
        let mut g = unit_masses(&layout);
        g.residual[0] = f64::NEG_INFINITY; // no head gap when the first tracked id is 1
        let b = compute_beta(&g, &layout);
        let third = 1.0 / 3.0;
        assert_row(&b.rows[0].tracked, &[0.0, third]);
        assert_row(&b.rows[0].residual, &[0.0, third, third]);
        assert_row(&b.rows[1].tracked, &[0.0, 0.0]);
        assert_row(&b.rows[1].residual, &[0.0, 0.0, 1.0]);
        b.check(&layout, 1e-12).unwrap();
    }

    #[test]
    fn prior_mass_means() {
        let layout = Layout::new(Topology::Ied, 3);
        let sticks = StickWeights::<f64> { w: CellRow { tracked: vec![0.5, 0.2, 0.1], residual: vec![0.2] }, c: 1.0, d: 0.0 };
        let mut rng = RngStream::new(1);
        let n = 100_000;
        let mut draws = vec![Vec::with_capacity(n); 4];
        let mut union = Vec::with_capacity(n);
        for _ in 0..n {
            let g = sample_gamma_prior(&sticks, 3.0, &mut rng).unwrap();
            assert_eq!(g.flat().len(), layout.n_cells());
            for (d, x) in draws.iter_mut().zip(g.flat()) {
                d.push(x.exp());
            }
            union.push(g.tracked[1].exp() + g.tracked[2].exp() + g.residual[0].exp());
        }
        for (d, w) in draws.iter().zip(sticks.w.flat()) {
            let (m, v) = mean_and_var(d);
            let a = 3.0 * w;
            assert!((m - a).abs() < 3.0 * (v / n as f64).sqrt() + 1e-9, "mean {m} vs {a}");
        }
        let dist = GammaDist::new(3.0 * 0.5, 1.0).unwrap();
        let p = ks_one_sample(&union[..20_000], |x| dist.cdf(x));
        assert!(p > 0.01, "additivity KS p={p}");
    }

    #[test]
    fn left_to_right_prior_cell_count() {
        let mut rng = RngStream::new(2);
        let s = SngpState::<f64>::sample_prior(Topology::LeftToRight, 4, 1.0, 0.0, 2.0, &mut rng).unwrap();
        assert_eq!(s.ln_masses.tracked.len(), 4);
        assert_eq!(s.ln_masses.residual.len(), 5);
        // Only the tail gap carries weight at the prior draw.
        assert!(s.ln_masses.residual[..4].iter().all(|&x| x == f64::NEG_INFINITY));
        s.check(1e-12).unwrap();
    }

    #[test]
    fn table_count_edge_cases() {
        let mut rng = RngStream::new(3);
        assert_eq!(sample_tables(0, 1.0, &mut rng), 0);
        for _ in 0..100 {
            assert_eq!(sample_tables(1, 0.01, &mut rng), 1);
        }
    }

    #[test]
    fn table_count_distribution() {
        let mut rng = RngStream::new(4);
        let n = 100_000;
        let mut hist = [0usize; 4];
        for _ in 0..n {
            hist[sample_tables(3, 1.0, &mut rng) as usize] += 1;
        }
        for (l, p) in [(1, 1.0 / 3.0), (2, 0.5), (3, 1.0 / 6.0)] {
            let f = hist[l] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() < 3.0 * se + 1e-9, "P(l={l}) = {f}, expected {p}");
        }
    }

    #[test]
    fn counts_against_zero_base_weight() {
        let layout = Layout::new(Topology::Ied, 2);
        let beta: BetaRows<f64> = compute_beta(&unit_masses(&layout), &layout);
        let mut c = CountMatrix::zeros(2);
        c.counts[0][0] = 1;
        let mut rng = RngStream::new(5);
        assert!(sample_table_counts(&c, 1.0, &beta, &mut rng).is_err());
        c.counts[0][0] = 0;
        c.counts[0][1] = 4;
        c.initial = Some(1);
        let t = sample_table_counts(&c, 1.0, &beta, &mut rng).unwrap();
        assert!((1..=4).contains(&t.rows[0][1]));
        assert_eq!(t.root, vec![0, 1]);
        assert_eq!(t.column_total(1), t.rows[0][1] + 1);
    }

    #[test]
    fn auxiliary_conditional_moments() {
        // l = 5 at one restaurant whose reachable masses sum to 2.
        let layout = Layout::new(Topology::Ied, 2);
        let masses = ln_row(CellRow { tracked: vec![1.0, 1.5], residual: vec![0.5] });
        let n = 100_000;
        let mut rng = RngStream::new(6);
        let draws: Vec<f64> = (0..n).map(|_| sample_gamma(5.0, (-ln_reachable_mass(&masses, &layout, Some(0))).exp(), &mut rng).unwrap()).collect();
        let (m, v) = mean_and_var(&draws);
        assert!((m - 2.5).abs() < 3.0 * (1.25 / n as f64).sqrt());
        assert!((v - 1.25).abs() < 0.05);
    }

    #[test]
    fn gamma_posterior_shape() {
        // One tracked IED state, l_.1 = 3 (including the root), w1 = 0.5,
        // alpha0 = 2: shape 4. Only the root restaurant reaches state 0, so
        // with root tables fixed the rate is 1 + L_root.
        let layout = Layout::new(Topology::Ied, 1);
        let sticks = StickWeights::<f64> { w: CellRow { tracked: vec![0.5], residual: vec![0.5] }, c: 1.0, d: 0.0 };
        let masses = CellRow { tracked: vec![0.0], residual: vec![0.0] };
        let tables = TableCounts { rows: vec![vec![0]], root: vec![3] };
        let mut rng = RngStream::new(7);
        let n = 100_000;
        let mut ratio = Vec::with_capacity(n);
        for _ in 0..n {
            let g = gibbs_gamma(&tables, &sticks, &masses, &layout, 2.0, &mut rng).unwrap();
            ratio.push(g.tracked[0].exp());
        }
        // Mixed over L_root ~ Gamma(3, 1/2): E[gamma] = 4 E[1/(1+L)].
        let mut aux_rng = RngStream::new(8);
        let e_inv: f64 = (0..n).map(|_| 1.0 / (1.0 + sample_gamma(3.0, 0.5, &mut aux_rng).unwrap())).sum::<f64>() / n as f64;
        let (m, v) = mean_and_var(&ratio);
        assert!((m - 4.0 * e_inv).abs() < 4.0 * (v / n as f64).sqrt(), "mean {m} vs {}", 4.0 * e_inv);
    }

    #[test]
    fn gibbs_preserves_prior_without_data() {
        for topology in [Topology::Ied, Topology::LeftToRight] {
            let layout = Layout::new(topology, 3);
            let mut rng = RngStream::new(9);
            let sticks = StickWeights::<f64>::sample_prior(&layout, 1.0, 0.0, &mut rng).unwrap();
            let tables = TableCounts { rows: vec![vec![0; 3]; 3], root: vec![0; 3] };
            let mut g = sample_gamma_prior(&sticks, 2.0, &mut rng).unwrap();
            let n = 20_000;
            let mut chain = Vec::with_capacity(n);
            for _ in 0..n {
                g = gibbs_gamma(&tables, &sticks, &g, &layout, 2.0, &mut rng).unwrap();
                chain.push(g.tracked[0].exp());
            }
            let dist = GammaDist::new(2.0 * sticks.w.tracked[0], 1.0).unwrap();
            let p = ks_one_sample(&chain, |x| dist.cdf(x));
            assert!(p > 0.01, "{topology:?} KS p={p}");
        }
    }

    #[test]
    fn stick_mh_targets_prior_without_masses_signal() {
        // With masses resampled from their prior after each MH scan, finite
        // sticks must stay at their stick-breaking prior: v1 ~ Beta(1, c).
        let layout = Layout::new(Topology::Finite(3), 3);
        let mut rng = RngStream::new(10);
        let mut sticks = StickWeights::<f64>::sample_prior(&layout, 2.0, 0.0, &mut rng).unwrap();
        let n = 20_000;
        let mut v1 = Vec::with_capacity(n);
        for _ in 0..n {
            let g = sample_gamma_prior(&sticks, 1.5, &mut rng).unwrap();
            mh_sticks(&mut sticks, &layout, 1.0, &mut rng, |s| ln_masses_given_sticks(&g, s, 1.5));
            v1.push(sticks.w.tracked[0]);
            assert!((sticks.total() - 1.0).abs() < 1e-12);
        }
        let (m, _) = mean_and_var(&v1);
        assert!((m - 1.0 / 3.0).abs() < 0.02, "mean v1 {m}");
    }

    #[test]
    fn collapsed_stick_likelihood_matches_integral() {
        // One IED state with two tables and rates (2.5, 1.5): integrate each
        // cell's gamma density against gamma^l e^{-gamma (rate - 1)}.
        let layout = Layout::new(Topology::Ied, 1);
        let tables = TableCounts { rows: vec![vec![0]], root: vec![2] };
        let rates = CellRow { tracked: vec![2.5], residual: vec![1.5] };
        let alpha0 = 1.7;
        let integral = |a: f64, l: f64, rate: f64| {
            // Substitute gamma = e^x.
            let n = 200_000;
            let (lo, hi) = (-60.0, 6.0);
            let h = (hi - lo) / n as f64;
            let f = |x: f64| ((a + l) * x - x.exp() * rate - crate::prob::density::ln_gamma_fn(a)).exp();
            (1..n).map(|i| f(lo + i as f64 * h)).sum::<f64>() * h
        };
        let oracle = |w: f64| integral(alpha0 * w, 2.0, 2.5).ln() + integral(alpha0 * (1.0 - w), 0.0, 1.5).ln();
        let lik = |w: f64| {
            let s = StickWeights::<f64> { w: CellRow { tracked: vec![w], residual: vec![1.0 - w] }, c: 1.0, d: 0.0 };
            ln_sticks_given_tables(&s, &tables, &rates, &layout, alpha0)
        };
        let d_oracle = oracle(0.3) - oracle(0.8);
        let d_lik = lik(0.3) - lik(0.8);
        assert!((d_oracle - d_lik).abs() < 1e-6, "{d_oracle} vs {d_lik}");
    }

    #[test]
    fn infinite_stick_prior_is_symmetric_intensity() {
        let (c, d) = (1.5, 0.3);
        let lp = |tracked: Vec<f64>| {
            let rest = 1.0 - tracked.iter().sum::<f64>();
            StickWeights::<f64> { w: CellRow { tracked, residual: vec![rest] }, c, d }.ln_prior(Topology::Ied)
        };
        // Density in weight coordinates: drop the fraction-to-weight Jacobian.
        let lw = |w: &[f64]| {
            let mut left = 1.0;
            let mut jac = 0.0;
            for x in w {
                jac += f64::ln(left);
                left -= x;
            }
            lp(w.to_vec()) - jac
        };
        let oracle = |w: &[f64]| {
            let rest = 1.0 - w.iter().sum::<f64>();
            w.iter().map(|x| (-1.0 - d) * x.ln()).sum::<f64>() + (c + w.len() as f64 * d - 1.0) * rest.ln()
        };
        let a = [0.4, 0.25, 0.1];
        let b = [0.1, 0.05, 0.6];
        assert!(((lw(&a) - lw(&b)) - (oracle(&a) - oracle(&b))).abs() < 1e-10);
        // Order of the tracked states does not matter.
        assert!((lw(&[0.4, 0.25, 0.1]) - lw(&[0.1, 0.4, 0.25])).abs() < 1e-10);
    }

    #[test]
    fn finite_sticks_close_the_stick() {
        let mut rng = RngStream::new(11);
        let s = SngpState::<f64>::sample_prior(Topology::Finite(3), 0, 1.0, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(s.sticks.w.tracked.len(), 3);
        assert!(s.sticks.w.residual.is_empty());
        s.check(1e-12).unwrap();
    }

    fn prior_pi(s: &SngpState<f64>, rng: &mut RngStream) -> TransitionMatrix<f64> {
        let counts = CountMatrix::zeros(s.beta.rows.len());
        crate::transition::sample_pi(&s.beta.rows, 2.0, &counts, rng).unwrap()
    }

    #[test]
    fn instantiation_conserves_mass_and_keeps_entries() {
        for topology in [Topology::Ied, Topology::LeftToRight, Topology::Full] {
            let mut rng = RngStream::new(12);
            let mut s = SngpState::<f64>::sample_prior(topology, 2, 1.0, 0.0, 3.0, &mut rng).unwrap();
            let mut pi = prior_pi(&s, &mut rng);
            let cell = s.layout().n_residual() - 1;
            let before = (s.clone(), pi.clone());
            let at = instantiate_state(&mut s, &mut pi, 3.0, 2.0, cell, &mut rng).unwrap();
            let layout = s.layout();
            assert_eq!(layout.n_tracked, 3);
            s.check(1e-12).unwrap();
            pi.check(&layout, 1e-12).unwrap();
            let old_layout = before.0.layout();
            let total_old = log_sum_exp(&before.0.ln_masses.flat());
            assert!((log_sum_exp(&s.ln_masses.flat()) - total_old).abs() <= 1e-12);
            for m in 0..2 {
                let nm = layout.shift_after_insert(m, at);
                for k in 0..2 {
                    let nk = layout.shift_after_insert(k, at);
                    assert_eq!(pi.rows[nm].tracked[nk], before.1.rows[m].tracked[k]);
                    assert_eq!(s.beta.rows[nm].tracked[nk], before.0.beta.rows[m].tracked[k]);
                }
                let res_old = before.1.rows[m].residual[cell];
                let res_new: f64 = pi.rows[nm].tracked[at] + pi.rows[nm].residual_total() - before.1.rows[m].residual_total() + res_old;
                assert!((res_new - res_old).abs() < 1e-12 || old_layout.residual_reachable(m, cell));
            }
        }
    }

    #[test]
    fn prune_reverses_instantiation() {
        for topology in [Topology::Ied, Topology::LeftToRight] {
            let mut rng = RngStream::new(13);
            let s0 = SngpState::<f64>::sample_prior(topology, 3, 1.0, 0.0, 3.0, &mut rng).unwrap();
            let pi0 = prior_pi(&s0, &mut rng);
            let (mut s, mut pi) = (s0.clone(), pi0.clone());
            let cell = s.layout().n_residual() - 1;
            let at = instantiate_state(&mut s, &mut pi, 3.0, 2.0, cell, &mut rng).unwrap();
            prune_state(&mut s, &mut pi, at).unwrap();
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x == y || (x - y).abs() < 1e-12);
            assert!(close(&s.ln_masses.flat(), &s0.ln_masses.flat()));
            assert!(close(&s.sticks.w.flat(), &s0.sticks.w.flat()));
            for (a, b) in pi.rows.iter().zip(&pi0.rows) {
                assert!(close(&a.flat(), &b.flat()));
            }
            s.check(1e-12).unwrap();
            pi.check(&s.layout(), 1e-12).unwrap();
        }
    }

    #[test]
    fn prune_interior_left_to_right_state() {
        let mut rng = RngStream::new(14);
        let mut s = SngpState::<f64>::sample_prior(Topology::LeftToRight, 3, 1.0, 0.0, 3.0, &mut rng).unwrap();
        let mut pi = prior_pi(&s, &mut rng);
        prune_state(&mut s, &mut pi, 1).unwrap();
        let layout = s.layout();
        assert_eq!(layout.n_tracked, 2);
        s.refresh_beta();
        s.check(1e-12).unwrap();
        pi.check(&layout, 1e-12).unwrap();
        assert!(s.ln_masses.residual[1] > f64::NEG_INFINITY);
    }

    #[test]
    fn finite_layouts_cannot_grow_or_shrink() {
        let mut rng = RngStream::new(15);
        let mut s = SngpState::<f64>::sample_prior(Topology::Finite(2), 0, 1.0, 0.0, 1.0, &mut rng).unwrap();
        let mut pi = prior_pi(&s, &mut rng);
        assert!(instantiate_state(&mut s, &mut pi, 1.0, 1.0, 0, &mut rng).is_err());
        assert!(prune_state(&mut s, &mut pi, 0).is_err());
    }
}
