//! Restricting sets and partitions of the state space.
//!
//! Two views are provided. [`reachable`] and [`partition`] work on abstract
//! state ids in `{1, 2, 3, ...}` and are the reference definition. The
//! sampler itself uses [`Layout`], a compact index form: tracked states are
//! numbered `0..M` and residual cells `0..R`. For `LeftToRight` the tracked
//! index order is the left-to-right order and residual `r` is the gap
//! immediately before tracked state `r` (residual `M` is the unbounded tail),
//! so a new state can always be inserted into a gap without renumbering ids
//! in the unbounded integer space.

use crate::error::{param_err, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "states")]
pub enum Topology {
    /// No self transitions: `V_m = N \ {m}`.
    Ied,
    /// Only transitions to later states: `V_m = {m+1, m+2, ...}`.
    LeftToRight,
    /// Every transition allowed: `V_m = N`.
    Full,
    /// `K` states, every transition allowed.
    Finite(usize),
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        match self {
            Topology::Finite(0) => Err(param_err!("finite topology needs at least one state")),
            _ => Ok(()),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Topology::Finite(_))
    }

    pub fn allows_self_transition(&self) -> bool {
        matches!(self, Topology::Full | Topology::Finite(_))
    }
}

/// Whether state `k` is in the restricting set of state `m`.
pub fn reachable(topology: Topology, m: u64, k: u64) -> Result<bool> {
    match topology {
        Topology::Ied => Ok(m != k),
        Topology::LeftToRight => Ok(k > m),
        Topology::Full => Ok(true),
        Topology::Finite(n) => {
            if m as usize >= n || k as usize >= n {
                return Err(param_err!("state id out of range for {n} states: ({m}, {k})"));
            }
            Ok(true)
        }
    }
}

/// Sorted, duplicate-free set of explicitly instantiated state ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackedSet(Vec<u64>);

impl TrackedSet {
    pub fn new(mut ids: Vec<u64>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }

    pub fn ids(&self) -> &[u64] {
        &self.0
    }

    pub fn contains(&self, id: u64) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    /// Smallest tracked id strictly above `m`.
    pub fn next_after(&self, m: u64) -> Option<u64> {
        self.0.iter().copied().find(|&x| x > m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualOwner {
    /// Every untracked id.
    Global,
    /// Untracked ids between a tracked id and the next tracked id.
    After(u64),
    /// Untracked ids below the smallest tracked id.
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionCell {
    Singleton(u64),
    Residual(ResidualOwner),
}

impl PartitionCell {
    pub fn contains(&self, id: u64, tracked: &TrackedSet) -> bool {
        match *self {
            PartitionCell::Singleton(m) => id == m,
            PartitionCell::Residual(ResidualOwner::Global) => !tracked.contains(id),
            PartitionCell::Residual(ResidualOwner::After(m)) => {
                id > m && tracked.next_after(m).is_none_or(|next| id < next)
            }
            PartitionCell::Residual(ResidualOwner::Head) => tracked.ids().first().is_some_and(|&f| id < f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub cells: Vec<PartitionCell>,
    /// For each tracked id (in sorted order), indices into `cells` whose union is its restricting set.
    pub restricting: Vec<Vec<usize>>,
}

/// Partition of the id space for a tracked set.
///
/// Ids start at 1; the `LeftToRight` head cell is emitted only when the
/// smallest tracked id is above 1. For `Finite(K)` the tracked set must be
/// the full `{0, ..., K-1}`.
pub fn partition(topology: Topology, tracked: &TrackedSet) -> Result<Partition> {
    if tracked.ids().is_empty() {
        return Err(param_err!("partition needs a nonempty tracked set"));
    }
    let mut cells: Vec<PartitionCell> = tracked.ids().iter().map(|&m| PartitionCell::Singleton(m)).collect();
    match topology {
        Topology::Ied | Topology::Full => cells.push(PartitionCell::Residual(ResidualOwner::Global)),
        Topology::LeftToRight => {
            if tracked.ids()[0] > 1 {
                cells.push(PartitionCell::Residual(ResidualOwner::Head));
            }
            cells.extend(tracked.ids().iter().map(|&m| PartitionCell::Residual(ResidualOwner::After(m))));
        }
        Topology::Finite(k) => {
            if tracked.ids() != (0..k as u64).collect::<Vec<_>>() {
                return Err(param_err!("finite topology tracks exactly its {k} states"));
            }
        }
    }
    let restricting = tracked
        .ids()
        .iter()
        .map(|&m| {
            cells
                .iter()
                .enumerate()
                .filter(|(_, c)| match **c {
                    PartitionCell::Singleton(k) => reachable(topology, m, k).unwrap_or(false),
                    PartitionCell::Residual(ResidualOwner::Global) => true,
                    PartitionCell::Residual(ResidualOwner::After(k)) => k >= m,
                    PartitionCell::Residual(ResidualOwner::Head) => false,
                })
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(Partition { cells, restricting })
}

/// Index-space view of a partition with `n_tracked` tracked states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub topology: Topology,
    pub n_tracked: usize,
}

impl Layout {
    pub fn new(topology: Topology, n_tracked: usize) -> Self {
        Self { topology, n_tracked }
    }

    pub fn n_residual(&self) -> usize {
        match self.topology {
            Topology::Ied | Topology::Full => 1,
            Topology::LeftToRight => self.n_tracked + 1,
            Topology::Finite(_) => 0,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_tracked + self.n_residual()
    }

    /// Tracked `k` reachable from tracked `m`.
    pub fn tracked_reachable(&self, m: usize, k: usize) -> bool {
        match self.topology {
            Topology::Ied => m != k,
            Topology::LeftToRight => k > m,
            Topology::Full | Topology::Finite(_) => true,
        }
    }

    /// Residual cell `r` reachable from tracked `m`.
    pub fn residual_reachable(&self, m: usize, r: usize) -> bool {
        match self.topology {
            Topology::Ied | Topology::Full => true,
            Topology::LeftToRight => r > m,
            Topology::Finite(_) => false,
        }
    }

    /// Index the next instantiated state takes when split off residual `r`.
    pub fn insertion_index(&self, r: usize) -> usize {
        match self.topology {
            Topology::LeftToRight => r,
            _ => self.n_tracked,
        }
    }

    /// Index of a previously tracked state after a new one was inserted at `at`.
    pub fn shift_after_insert(&self, idx: usize, at: usize) -> usize {
        if idx >= at {
            idx + 1
        } else {
            idx
        }
    }

    /// Residual cell a pruned tracked state `j` is merged into.
    pub fn merge_target(&self, j: usize) -> usize {
        match self.topology {
            Topology::LeftToRight => j,
            _ => 0,
        }
    }
}
