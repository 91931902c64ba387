//! Dirichlet-multinomial log-evidence of observed transitions under a
//! hypothesis, with pseudo-counts elicited as `alpha = k * H + 1`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

use super::{Hypothesis, HypothesisKind, TransitionCounts};

/// Belief factors used by the default sweep: 0 plus powers of ten up to 1e6.
pub const DEFAULT_K_SWEEP: [f64; 8] =
    [0.0, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6];

/// Compensated (Neumaier) accumulator; keeps long evidence sums reproducible
/// to well below 1e-9.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Log marginal likelihood of `counts` under `hypothesis` with belief `k`.
///
/// With `alpha_xy = k * H_xy + 1` and `A_x = k * rowsum(H_x) + |K|`, each row
/// contributes `lnG(A_x) - lnG(A_x + N_x) + sum_{y: n_xy > 0} (lnG(alpha_xy +
/// n_xy) - lnG(alpha_xy))`. Only nonzero-count cells are visited; the
/// all-ones part of the prior enters through the closed-form `A_x`.
pub fn evidence(counts: &TransitionCounts, hypothesis: &Hypothesis, k: f64) -> Result<f64> {
    if k < 0.0 {
        return Err(Error::NegativeBelief(k));
    }
    assert_eq!(
        counts.n_states(),
        hypothesis.n_states(),
        "counts and hypothesis must share a state space"
    );
    let n_states = counts.n_states() as f64;
    let mut acc = CompensatedSum::default();
    for x in 0..counts.n_states() as u32 {
        let row_total = counts.row_total(x);
        if row_total == 0 {
            continue;
        }
        let a_x = k * hypothesis.row_sum(x) + n_states;
        acc.add(ln_gamma(a_x) - ln_gamma(a_x + row_total as f64));
        for (y, c) in counts.row(x) {
            let alpha = k * hypothesis.prob(x, y) + 1.0;
            acc.add(ln_gamma(alpha + c as f64) - ln_gamma(alpha));
        }
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub hypothesis: HypothesisKind,
    pub k: f64,
    pub log_evidence: f64,
}

/// Evaluates the full hypotheses x belief cross product, sorted by `(k,
/// hypothesis)`.
pub fn compare_sweep(
    counts: &TransitionCounts,
    hypotheses: &[Hypothesis],
    k_values: &[f64],
) -> Result<Vec<SweepRow>> {
    assert!(!hypotheses.is_empty() && !k_values.is_empty(), "nothing to sweep");
    let mut rows = Vec::with_capacity(hypotheses.len() * k_values.len());
    for &k in k_values {
        for h in hypotheses {
            rows.push(SweepRow {
                hypothesis: h.kind,
                k,
                log_evidence: evidence(counts, h, k)?,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.k.partial_cmp(&b.k).unwrap().then_with(|| a.hypothesis.cmp(&b.hypothesis))
    });
    Ok(rows)
}

/// Renders sweep rows as `hypothesis,k,log_evidence` CSV.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("hypothesis,k,log_evidence\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.hypothesis.label(),
            row.k,
            row.log_evidence
        ));
    }
    out
}
