//! Latent `(state, remaining duration)` paths and their segment view.
//!
//! Countdown convention: a segment that starts with remaining duration `r`
//! lasts `r + 1` observations; `r` decrements by one each step and the state
//! may change only after a step where it reached zero.

use crate::error::{consistency_err, Result};
use serde::{Deserialize, Serialize};

/// `z_t = (s_t, r_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FullState {
    pub s: usize,
    pub r: usize,
}

impl FullState {
    pub fn new(s: usize, r: usize) -> Self {
        Self { s, r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub state: usize,
    pub start: usize,
    pub len: usize,
    /// Remaining-duration draw at the segment start.
    pub duration: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatentPath {
    pub z: Vec<FullState>,
}

impl LatentPath {
    pub fn new(z: Vec<FullState>) -> Self {
        Self { z }
    }

    pub fn from_parts(states: &[usize], remaining: &[usize]) -> Self {
        Self { z: states.iter().zip(remaining).map(|(&s, &r)| FullState::new(s, r)).collect() }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.z.iter().map(|z| z.s)
    }

    /// Checks the countdown dynamics.
    pub fn validate(&self) -> Result<()> {
        for t in 1..self.z.len() {
            let (prev, cur) = (self.z[t - 1], self.z[t]);
            if prev.r > 0 && (cur.s != prev.s || cur.r + 1 != prev.r) {
                return Err(consistency_err!("countdown broken at t={t}: {prev:?} -> {cur:?}"));
            }
        }
        Ok(())
    }

    /// Whether `t` starts a segment (`t == 0` or `r_{t-1} == 0`).
    pub fn is_boundary(&self, t: usize) -> bool {
        t == 0 || self.z[t - 1].r == 0
    }

    pub fn segments(&self) -> Vec<Segment> {
        let mut out: Vec<Segment> = Vec::new();
        for (t, z) in self.z.iter().enumerate() {
            if self.is_boundary(t) {
                out.push(Segment { state: z.s, start: t, len: 1, duration: z.r });
            } else if let Some(last) = out.last_mut() {
                last.len += 1;
            }
        }
        out
    }

    /// Inverse of [`segments`](Self::segments). The last segment may be
    /// cut short by the end of the sequence, in which case it ends with `r > 0`.
    pub fn from_segments(segments: &[Segment]) -> Self {
        let mut z = Vec::new();
        for seg in segments {
            for i in 0..seg.len {
                z.push(FullState::new(seg.state, seg.duration - i));
            }
        }
        Self { z }
    }

    /// Segment start times after the first, i.e. change-points.
    pub fn changepoints(&self) -> Vec<usize> {
        (1..self.z.len()).filter(|&t| self.is_boundary(t)).collect()
    }

    /// Distinct states visited, sorted.
    pub fn occupied_states(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.states().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn relabel(&mut self, map: impl Fn(usize) -> usize) {
        for z in &mut self.z {
            z.s = map(z.s);
        }
    }
}
