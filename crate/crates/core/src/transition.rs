//! Finite-plus-residual representation of the infinite transition matrix.

use crate::error::{consistency_err, Result};
use crate::path::LatentPath;
use crate::prob::{sample_dirichlet, RngStream};
use crate::real::Real;
use crate::topology::Layout;
use serde::{Deserialize, Serialize};

/// A distribution over the cells of a partition: one entry per tracked
/// state followed by one per residual cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow<T> {
    pub tracked: Vec<T>,
    pub residual: Vec<T>,
}

impl<T: Real> CellRow<T> {
    pub fn zeros(layout: &Layout) -> Self {
        Self { tracked: vec![T::zero(); layout.n_tracked], residual: vec![T::zero(); layout.n_residual()] }
    }

    pub fn total(&self) -> T {
        self.tracked.iter().chain(&self.residual).copied().sum()
    }

    pub fn flat(&self) -> Vec<T> {
        self.tracked.iter().chain(&self.residual).copied().collect()
    }

    pub fn from_flat(v: &[T], n_tracked: usize) -> Self {
        Self { tracked: v[..n_tracked].to_vec(), residual: v[n_tracked..].to_vec() }
    }

    pub fn residual_total(&self) -> T {
        self.residual.iter().copied().sum()
    }

    pub fn scale(&mut self, k: T) {
        self.tracked.iter_mut().chain(self.residual.iter_mut()).for_each(|x| *x = *x * k);
    }
}

/// Transition rows `pi_m` over tracked targets plus residual mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix<T> {
    pub rows: Vec<CellRow<T>>,
}

impl<T: Real> TransitionMatrix<T> {
    pub fn n_tracked(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, m: usize, k: usize) -> T {
        self.rows[m].tracked[k]
    }

    /// Largest residual entry over all rows, with its `(row, cell)`.
    pub fn max_residual(&self) -> Option<(usize, usize, T)> {
        let mut best: Option<(usize, usize, T)> = None;
        for (m, row) in self.rows.iter().enumerate() {
            for (r, &x) in row.residual.iter().enumerate() {
                if best.is_none_or(|(_, _, b)| x > b) {
                    best = Some((m, r, x));
                }
            }
        }
        best
    }

    /// Checks row sums and structural zeros against `layout`.
    pub fn check(&self, layout: &Layout, tol: f64) -> Result<()> {
        if self.rows.len() != layout.n_tracked {
            return Err(consistency_err!("pi has {} rows for {} tracked states", self.rows.len(), layout.n_tracked));
        }
        for (m, row) in self.rows.iter().enumerate() {
            check_row(row, layout, Some(m), tol).map_err(|e| consistency_err!("pi row {m}: {e}"))?;
        }
        Ok(())
    }
}

/// Validates one distribution over cells; `from = None` is the initial-state row.
pub(crate) fn check_row<T: Real>(row: &CellRow<T>, layout: &Layout, from: Option<usize>, tol: f64) -> Result<()> {
    if row.tracked.len() != layout.n_tracked || row.residual.len() != layout.n_residual() {
        return Err(consistency_err!("row shape does not match layout"));
    }
    let sum = row.total().f64();
    if (sum - 1.0).abs() > tol {
        return Err(consistency_err!("row sums to {sum}"));
    }
    if let Some(m) = from {
        for (k, &x) in row.tracked.iter().enumerate() {
            if !layout.tracked_reachable(m, k) && x != T::zero() {
                return Err(consistency_err!("nonzero entry to unreachable state {k}"));
            }
        }
        for (r, &x) in row.residual.iter().enumerate() {
            if !layout.residual_reachable(m, r) && x != T::zero() {
                return Err(consistency_err!("nonzero entry to unreachable residual {r}"));
            }
        }
    }
    Ok(())
}

/// Observed transitions between tracked states at segment boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountMatrix {
    pub counts: Vec<Vec<u64>>,
    /// State of the first observation, drawn from the initial distribution.
    pub initial: Option<usize>,
}

impl CountMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { counts: vec![vec![0; n]; n], initial: None }
    }

    pub fn row_total(&self, m: usize) -> u64 {
        self.counts[m].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Counts one transition per segment boundary after the first observation.
pub fn count_transitions(path: &LatentPath, n_tracked: usize) -> Result<CountMatrix> {
    path.validate()?;
    let mut c = CountMatrix::zeros(n_tracked);
    for t in 0..path.len() {
        let s = path.z[t].s;
        if s >= n_tracked {
            return Err(consistency_err!("path visits untracked state {s} at t={t}"));
        }
        if t == 0 {
            c.initial = Some(s);
        } else if path.z[t - 1].r == 0 {
            c.counts[path.z[t - 1].s][s] += 1;
        }
    }
    Ok(c)
}

/// Draws every row from `Dirichlet(C_m + alpha1 * beta_m)` over tracked
/// targets and residual cells. Residual cells never carry counts.
pub fn sample_pi<T: Real>(
    beta_rows: &[CellRow<T>],
    alpha1: f64,
    counts: &CountMatrix,
    rng: &mut RngStream,
) -> Result<TransitionMatrix<T>> {
    let n = beta_rows.len();
    if counts.counts.len() != n {
        return Err(consistency_err!("count matrix has {} rows, beta has {n}", counts.counts.len()));
    }
    let mut rows = Vec::with_capacity(n);
    for (m, beta) in beta_rows.iter().enumerate() {
        rows.push(sample_pi_row(beta, alpha1, &counts.counts[m], rng).map_err(|e| consistency_err!("row {m}: {e}"))?);
    }
    Ok(TransitionMatrix { rows })
}

pub fn sample_pi_row<T: Real>(beta: &CellRow<T>, alpha1: f64, counts: &[u64], rng: &mut RngStream) -> Result<CellRow<T>> {
    let mut conc: Vec<f64> = Vec::with_capacity(beta.tracked.len() + beta.residual.len());
    for (k, &b) in beta.tracked.iter().enumerate() {
        let c = counts.get(k).copied().unwrap_or(0);
        if c > 0 && b <= T::zero() {
            return Err(consistency_err!("{c} transitions into state {k} with zero base weight"));
        }
        conc.push(c as f64 + alpha1 * b.f64());
    }
    conc.extend(beta.residual.iter().map(|b| alpha1 * b.f64()));
    let p = sample_dirichlet(&conc, rng)?;
    Ok(CellRow::from_flat(&p.into_iter().map(T::of).collect::<Vec<_>>(), beta.tracked.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Topology;

    fn row(tracked: Vec<f64>, residual: Vec<f64>) -> CellRow<f64> {
        CellRow { tracked, residual }
    }

    #[test]
    fn single_segment_has_no_transitions() {
        let p = LatentPath::from_parts(&[0, 0, 0], &[2, 1, 0]);
        let c = count_transitions(&p, 2).unwrap();
        assert_eq!(c.total(), 0);
        assert_eq!(c.initial, Some(0));
    }

    #[test]
    fn hand_traced_counts() {
        // states (1,1,2,2,2,1) shifted to 0-based.
        let p = LatentPath::from_parts(&[0, 0, 1, 1, 1, 0], &[1, 0, 2, 1, 0, 0]);
        let c = count_transitions(&p, 2).unwrap();
        assert_eq!(c.counts, vec![vec![0, 1], vec![1, 0]]);
        assert!(count_transitions(&LatentPath::from_parts(&[0, 1], &[1, 0]), 2).is_err());
        assert!(count_transitions(&LatentPath::from_parts(&[0, 3], &[0, 0]), 2).is_err());
    }

    fn one_row() -> CountMatrix {
        CountMatrix { counts: vec![vec![0; 3]], initial: None }
    }

    #[test]
    fn prior_mean_matches_beta() {
        let beta = vec![row(vec![0.0, 0.3, 0.2], vec![0.5])];
        let mut rng = RngStream::new(1);
        let n = 100_000;
        let mut acc = [0.0; 4];
        for _ in 0..n {
            let pi = sample_pi(&beta, 2.0, &one_row(), &mut rng).unwrap();
            let flat = pi.rows[0].flat();
            assert_eq!(flat[0], 0.0);
            for (a, x) in acc.iter_mut().zip(&flat) {
                *a += x;
            }
        }
        for (k, b) in [0.0, 0.3, 0.2, 0.5].iter().enumerate() {
            let sd = (b * (1.0 - b) / 3.0f64).sqrt();
            assert!((acc[k] / n as f64 - b).abs() <= 3.0 * sd / (n as f64).sqrt() + 1e-15, "entry {k}");
        }
    }

    #[test]
    fn huge_concentration_pins_pi_to_beta() {
        let beta = vec![row(vec![0.0, 0.3, 0.2], vec![0.5])];
        let mut rng = RngStream::new(2);
        for _ in 0..1000 {
            let pi = sample_pi(&beta, 1e6, &one_row(), &mut rng).unwrap();
            let diff = pi.rows[0].flat().iter().zip([0.0, 0.3, 0.2, 0.5]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 0.01);
        }
    }

    #[test]
    fn counts_on_structural_zero_are_rejected() {
        let beta = vec![row(vec![0.0, 1.0], vec![0.0]), row(vec![1.0, 0.0], vec![0.0])];
        let mut c = CountMatrix::zeros(2);
        c.counts[0][0] = 1;
        assert!(sample_pi(&beta, 1.0, &c, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn check_catches_structural_violations() {
        let layout = Layout::new(Topology::Ied, 2);
        let good = TransitionMatrix { rows: vec![row(vec![0.0, 0.5], vec![0.5]), row(vec![0.4, 0.0], vec![0.6])] };
        good.check(&layout, 1e-12).unwrap();
        let bad = TransitionMatrix { rows: vec![row(vec![0.1, 0.4], vec![0.5]), row(vec![0.4, 0.0], vec![0.6])] };
        assert!(bad.check(&layout, 1e-12).is_err());
    }
}
