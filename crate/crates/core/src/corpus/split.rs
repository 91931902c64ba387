//! Train/validation/test partitioning, either over users (seeded shuffle) or
//! over sessions ordered by time.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::Corpus;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitStrategy {
    /// Users shuffled with the run seed, then partitioned by the floor rule.
    ByUser { frac_train: f64, frac_valid: f64 },
    /// Sessions sorted by last-event timestamp (ties by user id), earliest
    /// sessions go to train.
    ByTime { frac_train: f64, frac_valid: f64 },
}

#[derive(Debug, Clone)]
pub struct SplitCorpora {
    pub train: Corpus,
    pub valid: Corpus,
    pub test: Corpus,
}

/// Partitions the corpus into disjoint train/valid/test corpora whose
/// sessions together are exactly the input sessions. The attribute vocabulary
/// and entity table are shared unchanged by all three parts, so interned ids
/// stay valid across them.
pub fn split(corpus: Corpus, strategy: SplitStrategy, seed: u64) -> Result<SplitCorpora> {
    if corpus.sessions.is_empty() {
        return Err(Error::EmptyCorpus("cannot split"));
    }
    let (frac_train, frac_valid) = match strategy {
        SplitStrategy::ByUser { frac_train, frac_valid }
        | SplitStrategy::ByTime { frac_train, frac_valid } => (frac_train, frac_valid),
    };
    assert!(frac_train > 0.0 && frac_valid > 0.0, "fractions must be positive");
    assert!(frac_train + frac_valid < 1.0, "fractions must sum below 1");

    // 0 = train, 1 = valid, 2 = test per session.
    let assignment: Vec<u8> = match strategy {
        SplitStrategy::ByUser { .. } => {
            let mut users: Vec<&str> =
                corpus.sessions.iter().map(|s| s.user_id.as_str()).collect();
            users.sort_unstable();
            users.dedup();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            users.shuffle(&mut rng);
            let n = users.len();
            let n_train = (frac_train * n as f64).floor() as usize;
            let n_valid = (frac_valid * n as f64).floor() as usize;
            let part_of: HashMap<&str, u8> = users
                .iter()
                .enumerate()
                .map(|(i, &u)| {
                    let p = if i < n_train {
                        0
                    } else if i < n_train + n_valid {
                        1
                    } else {
                        2
                    };
                    (u, p)
                })
                .collect();
            corpus.sessions.iter().map(|s| part_of[s.user_id.as_str()]).collect()
        }
        SplitStrategy::ByTime { .. } => {
            let mut order: Vec<usize> = (0..corpus.sessions.len()).collect();
            order.sort_by(|&a, &b| {
                let sa = &corpus.sessions[a];
                let sb = &corpus.sessions[b];
                let ta = sa.events.last().map(|e| e.timestamp);
                let tb = sb.events.last().map(|e| e.timestamp);
                ta.cmp(&tb).then_with(|| sa.user_id.cmp(&sb.user_id))
            });
            let n = order.len();
            let n_train = (frac_train * n as f64).floor() as usize;
            let n_valid = (frac_valid * n as f64).floor() as usize;
            let mut assignment = vec![0u8; n];
            for (rank, &idx) in order.iter().enumerate() {
                assignment[idx] = if rank < n_train {
                    0
                } else if rank < n_train + n_valid {
                    1
                } else {
                    2
                };
            }
            assignment
        }
    };

    let shell = Corpus {
        sessions: Vec::new(),
        attribute_vocab: corpus.attribute_vocab.clone(),
        entities: corpus.entities.clone(),
        dense_dim: corpus.dense_dim,
    };
    let mut parts = [shell.clone(), shell.clone(), shell];
    for (session, part) in corpus.sessions.into_iter().zip(assignment) {
        parts[part as usize].sessions.push(session);
    }
    let [train, valid, test] = parts;
    Ok(SplitCorpora { train, valid, test })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    fn ten_sessions() -> Corpus {
        corpus_of(
            (0..10)
                .map(|i| ("u", vec![ev("item", &format!("v{i}"), &[], i as i64)]))
                .enumerate()
                .map(|(i, (_, evs))| (Box::leak(format!("u{i}").into_boxed_str()) as &str, evs))
                .collect(),
        )
    }

    #[test]
    fn by_time_uses_floor_rule() {
        let c = ten_sessions();
        let parts =
            split(c, SplitStrategy::ByTime { frac_train: 0.7, frac_valid: 0.15 }, 0).unwrap();
        assert_eq!(parts.train.n_sessions(), 7);
        assert_eq!(parts.valid.n_sessions(), 1);
        assert_eq!(parts.test.n_sessions(), 2);
        // Earliest sessions land in train.
        assert!(parts.train.sessions.iter().all(|s| s.events[0].timestamp < 7));
    }

    #[test]
    fn by_user_uses_floor_rule() {
        let c = ten_sessions();
        let parts =
            split(c, SplitStrategy::ByUser { frac_train: 0.8, frac_valid: 0.1 }, 42).unwrap();
        assert_eq!(parts.train.n_sessions(), 8);
        assert_eq!(parts.valid.n_sessions(), 1);
        assert_eq!(parts.test.n_sessions(), 1);
    }

    #[test]
    fn same_seed_gives_identical_partitions() {
        let strategy = SplitStrategy::ByUser { frac_train: 0.5, frac_valid: 0.2 };
        let a = split(ten_sessions(), strategy, 7).unwrap();
        let b = split(ten_sessions(), strategy, 7).unwrap();
        let users = |c: &Corpus| c.sessions.iter().map(|s| s.user_id.clone()).collect::<Vec<_>>();
        assert_eq!(users(&a.train), users(&b.train));
        assert_eq!(users(&a.valid), users(&b.valid));
        assert_eq!(users(&a.test), users(&b.test));
    }

    #[test]
    fn partitions_are_disjoint_and_cover_input() {
        let c = ten_sessions();
        let all_users: Vec<String> = c.sessions.iter().map(|s| s.user_id.clone()).collect();
        let parts =
            split(c, SplitStrategy::ByUser { frac_train: 0.6, frac_valid: 0.2 }, 3).unwrap();
        let mut seen: Vec<String> = [&parts.train, &parts.valid, &parts.test]
            .iter()
            .flat_map(|c| c.sessions.iter().map(|s| s.user_id.clone()))
            .collect();
        seen.sort();
        let mut expected = all_users;
        expected.sort();
        assert_eq!(seen, expected);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let c = corpus_of(vec![]);
        let err =
            split(c, SplitStrategy::ByTime { frac_train: 0.7, frac_valid: 0.15 }, 0).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus(_)));
    }
}
