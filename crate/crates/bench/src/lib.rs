//! Shared fixtures for the benchmark targets.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pagerec_core::corpus::Corpus;
use pagerec_core::synthgen::{synthesize, RatingRow, RatingsTable, SynthVariant};

/// Category-page corpus in the generator's output shape: `n_users` sessions
/// of `len` items, each preceded by its genre page.
pub fn bench_corpus(n_users: usize, n_items: usize, len: usize, seed: u64) -> Corpus {
    let genres: BTreeMap<String, Vec<String>> = (0..n_items)
        .map(|i| (format!("m{i}"), vec![format!("genre:g{}", i % 10)]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_users * len);
    for u in 0..n_users {
        for t in 0..len {
            rows.push(RatingRow {
                user_id: format!("u{u}"),
                item_id: format!("m{}", rng.random_range(0..n_items)),
                timestamp: t as i64,
            });
        }
    }
    let table = RatingsTable::new(rows, genres).unwrap();
    synthesize(&table, SynthVariant::Prev, seed).unwrap()
}
