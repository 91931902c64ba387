//! Corpus summary statistics (observed counts, not table capacities).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_pages: usize,
    pub n_attrs: usize,
    /// Distinct non-item attribute combinations.
    pub n_cpids: usize,
    pub n_item_interactions: usize,
    pub n_page_interactions: usize,
    /// Item interactions per session.
    pub avg_len_items: f64,
    /// All interactions per session.
    pub avg_len_all: f64,
}

impl CorpusStats {
    pub fn csv_header() -> &'static str {
        "n_users,n_items,n_pages,n_attrs,n_cpids,n_item_interactions,n_page_interactions,avg_len_items,avg_len_all"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n_users,
            self.n_items,
            self.n_pages,
            self.n_attrs,
            self.n_cpids,
            self.n_item_interactions,
            self.n_page_interactions,
            self.avg_len_items,
            self.avg_len_all
        )
    }
}

/// Counts users, distinct entities, attributes and interactions as observed
/// in the corpus events. Averages are per session; an empty corpus yields all
/// zeros.
pub fn stats(corpus: &Corpus) -> CorpusStats {
    let mut users = HashSet::new();
    let mut items = HashSet::new();
    let mut pages = HashSet::new();
    let mut attrs = HashSet::new();
    let mut cpids: HashSet<&[u32]> = HashSet::new();
    let mut n_item_inter = 0usize;
    let mut n_page_inter = 0usize;
    for s in &corpus.sessions {
        users.insert(s.user_id.as_str());
        for e in &s.events {
            for &a in e.attrs.iter() {
                attrs.insert(a);
            }
            if e.is_item() {
                n_item_inter += 1;
                items.insert(e.entity);
            } else {
                n_page_inter += 1;
                pages.insert(e.entity);
                cpids.insert(&e.attrs);
            }
        }
    }
    let n_sessions = corpus.sessions.len();
    let denom = n_sessions.max(1) as f64;
    CorpusStats {
        n_users: users.len(),
        n_items: items.len(),
        n_pages: pages.len(),
        n_attrs: attrs.len(),
        n_cpids: cpids.len(),
        n_item_interactions: n_item_inter,
        n_page_interactions: n_page_inter,
        avg_len_items: if n_sessions == 0 { 0.0 } else { n_item_inter as f64 / denom },
        avg_len_all: if n_sessions == 0 {
            0.0
        } else {
            (n_item_inter + n_page_inter) as f64 / denom
        },
    }
}
