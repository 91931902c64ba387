//! The corpus cleaning pipeline: consecutive-duplicate merging, minimum
//! occurrence filtering, item-final truncation and session length bounds.

use serde::{Deserialize, Serialize};

use super::Corpus;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Merge runs of the same entity into one interaction (first timestamp
    /// kept).
    pub dedupe: bool,
    /// Entities seen fewer than this many times corpus-wide are removed.
    pub min_occurrence: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Truncate trailing non-item interactions so sessions end with an item.
    pub end_with_item: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            dedupe: true,
            min_occurrence: 5,
            min_len: 2,
            max_len: 200,
            end_with_item: true,
        }
    }
}

/// Applies the cleaning filters in order: dedupe, minimum occurrence,
/// end-with-item, length bounds. Occurrence counts are taken once, on the
/// deduplicated corpus, with no cascaded re-counting; removal can create new
/// adjacent duplicates, which are merged again so the no-consecutive-repeat
/// invariant holds on the output. Over-long sessions keep their most recent
/// `max_len` events. May return an empty corpus.
pub fn preprocess(corpus: &Corpus, cfg: &PreprocessConfig) -> Corpus {
    assert!(cfg.min_occurrence >= 1, "min_occurrence must be >= 1");
    assert!(cfg.min_len >= 1, "min_len must be >= 1");
    assert!(cfg.max_len >= cfg.min_len, "max_len must be >= min_len");

    let mut out = corpus.clone();

    if cfg.dedupe {
        for s in &mut out.sessions {
            s.events.dedup_by(|next, first| next.entity == first.entity);
        }
    }

    if cfg.min_occurrence > 1 {
        let mut counts = vec![0usize; out.entities.len()];
        for s in &out.sessions {
            for e in &s.events {
                counts[e.entity as usize] += 1;
            }
        }
        for s in &mut out.sessions {
            s.events.retain(|e| counts[e.entity as usize] >= cfg.min_occurrence);
            if cfg.dedupe {
                s.events.dedup_by(|next, first| next.entity == first.entity);
            }
        }
    }

    if cfg.end_with_item {
        for s in &mut out.sessions {
            while s.events.last().is_some_and(|e| !e.is_item()) {
                s.events.pop();
            }
        }
    }

    for s in &mut out.sessions {
        if s.events.len() > cfg.max_len {
            s.events.drain(..s.events.len() - cfg.max_len);
        }
    }
    out.sessions.retain(|s| s.events.len() >= cfg.min_len && s.events.len() <= cfg.max_len);

    out.compact();
    out
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig {
            dedupe: true,
            min_occurrence: 1,
            min_len: 1,
            max_len: 100,
            end_with_item: false,
        }
    }

    #[test]
    fn consecutive_duplicates_merge_keeping_first_timestamp() {
        let c = corpus_of(vec![(
            "u",
            vec![
                ev("item", "v1", &[], 0),
                ev("item", "v1", &[], 1),
                ev("page", "p1", &["a"], 2),
                ev("item", "v2", &[], 3),
            ],
        )]);
        let out = preprocess(&c, &cfg());
        assert_eq!(names(&out, 0), vec!["v1", "p1", "v2"]);
        assert_eq!(out.sessions[0].events[0].timestamp, 0);
    }

    #[test]
    fn trailing_non_items_are_truncated() {
        let c = corpus_of(vec![(
            "u",
            vec![ev("item", "v1", &[], 0), ev("page", "p1", &["a"], 1)],
        )]);
        let out = preprocess(&c, &PreprocessConfig { end_with_item: true, ..cfg() });
        assert_eq!(names(&out, 0), vec!["v1"]);
    }

    #[test]
    fn rare_entities_are_removed_everywhere() {
        // v9 occurs 4 times across the corpus, below the threshold of 5;
        // v1 occurs 6 times and stays.
        let mut sessions = Vec::new();
        for i in 0..4 {
            sessions.push((
                "u",
                vec![ev("item", "v9", &[], 2 * i), ev("item", "v1", &[], 2 * i + 1)],
            ));
        }
        sessions.push(("u5", vec![ev("item", "v1", &[], 0), ev("item", "v1", &[], 1)]));
        let c = corpus_of(sessions);
        let out = preprocess(
            &c,
            &PreprocessConfig { dedupe: false, min_occurrence: 5, ..cfg() },
        );
        for s in &out.sessions {
            for e in &s.events {
                assert_eq!(out.entity_name(e.entity), "v1");
            }
        }
        assert_eq!(out.item_ids(), vec!["v1"]);
    }

    #[test]
    fn removal_cannot_leave_consecutive_duplicates() {
        // p occurs once; removing it makes the two v1 events adjacent, which
        // must merge again.
        let mut sessions = vec![(
            "u0",
            vec![
                ev("item", "v1", &[], 0),
                ev("page", "p", &["a"], 1),
                ev("item", "v1", &[], 2),
            ],
        )];
        for i in 0..4 {
            sessions.push(("ux", vec![ev("item", "v1", &[], i)]));
        }
        let c = corpus_of(sessions);
        let out = preprocess(&c, &PreprocessConfig { min_occurrence: 2, ..cfg() });
        assert_eq!(names(&out, 0), vec!["v1"]);
    }

    #[test]
    fn long_sessions_keep_most_recent_events() {
        let c = corpus_of(vec![(
            "u",
            (0..6).map(|i| ev("item", &format!("v{i}"), &[], i as i64)).collect(),
        )]);
        let out = preprocess(&c, &PreprocessConfig { max_len: 3, ..cfg() });
        assert_eq!(names(&out, 0), vec!["v3", "v4", "v5"]);
    }

    #[test]
    fn short_sessions_are_dropped() {
        let c = corpus_of(vec![
            ("u1", vec![ev("item", "v1", &[], 0)]),
            ("u2", vec![ev("item", "v1", &[], 0), ev("item", "v2", &[], 1)]),
        ]);
        let out = preprocess(&c, &PreprocessConfig { min_len: 2, ..cfg() });
        assert_eq!(out.n_sessions(), 1);
        assert_eq!(out.sessions[0].user_id, "u2");
    }

    #[test]
    fn empty_result_is_fine() {
        let c = corpus_of(vec![("u", vec![ev("page", "p", &["a"], 0)])]);
        let out = preprocess(&c, &PreprocessConfig { end_with_item: true, ..cfg() });
        assert_eq!(out.n_sessions(), 0);
    }
}
