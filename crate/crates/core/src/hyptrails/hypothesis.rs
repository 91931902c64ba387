//! The four transition hypotheses, stored as sparse row-stochastic matrices
//! (a per-row background value plus explicit overrides).

use std::collections::BTreeMap;

use super::{StateKind, StateSpace, TransitionCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HypothesisKind {
    /// All transitions equally likely.
    Uniform,
    /// Pages transition only to the item group sharing their attribute
    /// combination; item rows stay uniform.
    Structural,
    /// Normalized sum of the uniform and structural hypotheses.
    Mixed,
    /// Row-normalized observed counts; the upper bound.
    Data,
}

impl HypothesisKind {
    pub fn label(&self) -> &'static str {
        match self {
            HypothesisKind::Uniform => "uniform",
            HypothesisKind::Structural => "structural",
            HypothesisKind::Mixed => "mixed",
            HypothesisKind::Data => "data",
        }
    }
}

#[derive(Debug, Clone)]
struct HypRow {
    background: f64,
    overrides: BTreeMap<u32, f64>,
}

/// A row-stochastic hypothesis matrix over the state space.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub kind: HypothesisKind,
    rows: Vec<HypRow>,
}

impl Hypothesis {
    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn prob(&self, from: u32, to: u32) -> f64 {
        let row = &self.rows[from as usize];
        row.overrides.get(&to).copied().unwrap_or(row.background)
    }

    /// Exact row sum using the sparse structure.
    pub fn row_sum(&self, from: u32) -> f64 {
        let row = &self.rows[from as usize];
        let n_bg = self.rows.len() - row.overrides.len();
        row.background * n_bg as f64 + row.overrides.values().sum::<f64>()
    }

    /// Applies a state relabeling consistently to rows and columns.
    pub fn permuted(&self, perm: &[u32]) -> Hypothesis {
        let mut rows: Vec<HypRow> = vec![
            HypRow { background: 0.0, overrides: BTreeMap::new() };
            self.rows.len()
        ];
        for (x, row) in self.rows.iter().enumerate() {
            let new = &mut rows[perm[x] as usize];
            new.background = row.background;
            new.overrides =
                row.overrides.iter().map(|(&y, &p)| (perm[y as usize], p)).collect();
        }
        Hypothesis { kind: self.kind, rows }
    }
}

/// Builds one of the four hypothesis matrices. `counts` is required for (and
/// only used by) the data hypothesis. Degenerate rows (a page combination
/// with no matching item group, or a data row with no outgoing transitions)
/// fall back to the uniform row so every row stays stochastic.
pub fn build_hypothesis(
    states: &StateSpace,
    kind: HypothesisKind,
    counts: Option<&TransitionCounts>,
) -> Hypothesis {
    assert_eq!(
        kind == HypothesisKind::Data,
        counts.is_some(),
        "counts must be supplied exactly when building the data hypothesis"
    );
    let n = states.len();
    let uniform = || HypRow { background: 1.0 / n as f64, overrides: BTreeMap::new() };
    let rows: Vec<HypRow> = match kind {
        HypothesisKind::Uniform => (0..n).map(|_| uniform()).collect(),
        HypothesisKind::Structural => (0..n as u32)
            .map(|x| match states.states[x as usize].kind {
                StateKind::ItemGroup => uniform(),
                StateKind::PageGroup => match states.matching_item_group(x) {
                    Some(y) => HypRow {
                        background: 0.0,
                        overrides: BTreeMap::from([(y, 1.0)]),
                    },
                    None => uniform(),
                },
            })
            .collect(),
        HypothesisKind::Mixed => (0..n as u32)
            .map(|x| match states.states[x as usize].kind {
                StateKind::ItemGroup => uniform(),
                StateKind::PageGroup => match states.matching_item_group(x) {
                    Some(y) => HypRow {
                        background: 1.0 / (1.0 + n as f64),
                        overrides: BTreeMap::from([(y, 2.0 / (1.0 + n as f64))]),
                    },
                    None => uniform(),
                },
            })
            .collect(),
        HypothesisKind::Data => {
            let counts = counts.unwrap();
            (0..n as u32)
                .map(|x| {
                    let total = counts.row_total(x);
                    if total == 0 {
                        uniform()
                    } else {
                        HypRow {
                            background: 0.0,
                            overrides: counts
                                .row(x)
                                .map(|(y, c)| (y, c as f64 / total as f64))
                                .collect(),
                        }
                    }
                })
                .collect()
        }
    };
    Hypothesis { kind, rows }
}
