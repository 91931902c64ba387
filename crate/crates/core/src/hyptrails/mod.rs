//! Bayesian comparison of hypotheses about non-item -> item transitions.
//!
//! Sessions are abstracted to a state space of attribute-combination groups
//! (one group per distinct item combination, one per distinct page
//! combination). First-order transition counts over these states are scored
//! against row-stochastic hypothesis matrices via the Dirichlet-multinomial
//! marginal likelihood, where a belief factor `k` converts hypothesis rows
//! into pseudo-counts.

mod evidence;
mod hypothesis;
mod transitions;

pub use evidence::{compare_sweep, evidence, sweep_csv, SweepRow, DEFAULT_K_SWEEP};
pub use hypothesis::{build_hypothesis, Hypothesis, HypothesisKind};
pub use transitions::{count_transitions, TransitionCounts};

use std::collections::HashMap;

use crate::corpus::{Corpus, InteractionKind};
use crate::error::{Error, Result};

/// Group kind of a state: all items with one attribute combination, or all
/// pages with one attribute combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateKind {
    ItemGroup,
    PageGroup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub kind: StateKind,
    /// Sorted attribute ids.
    pub attrs: Box<[u32]>,
}

/// The state space: item groups first, then page groups, each ordered by
/// their attribute-set encoding.
#[derive(Debug, Clone, Default)]
pub struct StateSpace {
    pub states: Vec<State>,
    index: HashMap<(StateKind, Box<[u32]>), u32>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn lookup(&self, kind: StateKind, attrs: &[u32]) -> Option<u32> {
        self.index.get(&(kind, attrs.to_vec().into_boxed_slice())).copied()
    }

    /// Maps an interaction to its state id.
    pub fn state_of(&self, corpus: &Corpus, event: &crate::corpus::Interaction) -> Result<u32> {
        let kind = match event.kind {
            InteractionKind::Item => StateKind::ItemGroup,
            InteractionKind::NonItem => StateKind::PageGroup,
        };
        self.lookup(kind, &event.attrs).ok_or_else(|| Error::NoAttributes {
            id: corpus.entity_name(event.entity).to_string(),
        })
    }

    /// For a page-group state, the id of the item group with the same
    /// attribute combination, if one exists.
    pub fn matching_item_group(&self, state: u32) -> Option<u32> {
        let s = &self.states[state as usize];
        match s.kind {
            StateKind::PageGroup => self.lookup(StateKind::ItemGroup, &s.attrs),
            StateKind::ItemGroup => None,
        }
    }
}

/// Aggregates every interaction into a state keyed by (kind, attribute
/// combination). Every interaction must carry at least one attribute.
pub fn build_state_space(corpus: &Corpus) -> Result<StateSpace> {
    let mut keys: Vec<(StateKind, Box<[u32]>)> = Vec::new();
    let mut seen: HashMap<(StateKind, Box<[u32]>), ()> = HashMap::new();
    for s in &corpus.sessions {
        for e in &s.events {
            if e.attrs.is_empty() {
                return Err(Error::NoAttributes {
                    id: corpus.entity_name(e.entity).to_string(),
                });
            }
            let kind = match e.kind {
                InteractionKind::Item => StateKind::ItemGroup,
                InteractionKind::NonItem => StateKind::PageGroup,
            };
            let key = (kind, e.attrs.clone());
            if seen.insert(key.clone(), ()).is_none() {
                keys.push(key);
            }
        }
    }
    keys.sort();
    let index: HashMap<(StateKind, Box<[u32]>), u32> = keys
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, k)| (k, i as u32))
        .collect();
    let states = keys
        .into_iter()
        .map(|(kind, attrs)| State { kind, attrs })
        .collect();
    Ok(StateSpace { states, index })
}
