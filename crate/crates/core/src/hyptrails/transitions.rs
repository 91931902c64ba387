//! Sparse first-order transition counting over the abstracted state space.

use std::collections::BTreeMap;

use crate::corpus::Corpus;
use crate::error::Result;

use super::StateSpace;

/// Sparse |K| x |K| matrix of transition counts with cached row totals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionCounts {
    rows: Vec<BTreeMap<u32, u64>>,
    row_totals: Vec<u64>,
}

impl TransitionCounts {
    pub fn new(n_states: usize) -> Self {
        Self { rows: vec![BTreeMap::new(); n_states], row_totals: vec![0; n_states] }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn add(&mut self, from: u32, to: u32, count: u64) {
        *self.rows[from as usize].entry(to).or_default() += count;
        self.row_totals[from as usize] += count;
    }

    pub fn get(&self, from: u32, to: u32) -> u64 {
        self.rows[from as usize].get(&to).copied().unwrap_or(0)
    }

    /// Nonzero cells of one row in ascending column order.
    pub fn row(&self, from: u32) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.rows[from as usize].iter().map(|(&y, &c)| (y, c))
    }

    pub fn row_total(&self, from: u32) -> u64 {
        self.row_totals[from as usize]
    }

    pub fn total(&self) -> u64 {
        self.row_totals.iter().sum()
    }

    /// Applies a state relabeling: entry (x, y) moves to (perm[x], perm[y]).
    pub fn permuted(&self, perm: &[u32]) -> TransitionCounts {
        let mut out = TransitionCounts::new(self.n_states());
        for x in 0..self.n_states() as u32 {
            for (y, c) in self.row(x) {
                out.add(perm[x as usize], perm[y as usize], c);
            }
        }
        out
    }
}

/// Counts every adjacent pair within each session; sessions never chain
/// across users.
pub fn count_transitions(corpus: &Corpus, states: &StateSpace) -> Result<TransitionCounts> {
    let mut counts = TransitionCounts::new(states.len());
    for session in &corpus.sessions {
        for pair in session.events.windows(2) {
            let from = states.state_of(corpus, &pair[0])?;
            let to = states.state_of(corpus, &pair[1])?;
            counts.add(from, to, 1);
        }
    }
    Ok(counts)
}
