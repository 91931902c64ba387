//! Generation of genre-enriched session datasets from a ratings log: before
//! (some of) a user's item interactions, a synthetic non-item page announcing
//! the item's genre combination is inserted. Three variants cover a clean
//! signal, a condensed signal and controlled noise.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AttributeVocab, Corpus, EntityTable, Interaction, InteractionKind, Session};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RatingRow {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

/// A ratings log plus per-item genre metadata.
#[derive(Debug, Clone)]
pub struct RatingsTable {
    pub rows: Vec<RatingRow>,
    /// item id -> genre attribute tokens (non-empty)
    pub item_genres: BTreeMap<String, Vec<String>>,
}

impl RatingsTable {
    pub fn new(
        rows: Vec<RatingRow>,
        item_genres: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        for row in &rows {
            match item_genres.get(&row.item_id) {
                None => return Err(Error::UnknownRatedItem { id: row.item_id.clone() }),
                Some(g) if g.is_empty() => {
                    return Err(Error::UnknownRatedItem { id: row.item_id.clone() })
                }
                _ => {}
            }
        }
        Ok(Self { rows, item_genres })
    }
}

/// Which pages get inserted, and whether their genre sets are scrambled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthVariant {
    /// A page before every item interaction.
    Prev,
    /// A page only before the first item and wherever the genre combination
    /// changes from the previous item.
    Group,
    /// Like `Prev`, then the genre sets of a `ratio` fraction of pages are
    /// permuted uniformly at random (fixed points allowed).
    Random(f64),
}

/// Loads a ratings CSV (`userId,movieId,rating,timestamp`; the rating column
/// is ignored) and a metadata CSV (`movieId,title,genres` with `|`-separated
/// genres). Each genre name becomes the attribute token `genre:<name>`.
pub fn load_ratings(
    ratings_path: impl AsRef<Path>,
    metadata_path: impl AsRef<Path>,
) -> Result<RatingsTable> {
    let meta_path = metadata_path.as_ref();
    let mut item_genres = BTreeMap::new();
    let mut meta = csv::Reader::from_path(meta_path)?;
    for record in meta.records() {
        let record = record?;
        let movie = record.get(0).unwrap_or_default().to_string();
        let genres_field = record.get(2).ok_or_else(|| Error::BadInput {
            path: meta_path.display().to_string(),
            message: format!("metadata row for `{movie}` has no genres column"),
        })?;
        let genres: Vec<String> = genres_field
            .split('|')
            .filter(|g| !g.is_empty())
            .map(|g| format!("genre:{g}"))
            .collect();
        if genres.is_empty() {
            return Err(Error::BadInput {
                path: meta_path.display().to_string(),
                message: format!("movie `{movie}` has an empty genre field"),
            });
        }
        item_genres.insert(movie, genres);
    }

    let rat_path = ratings_path.as_ref();
    let mut rows = Vec::new();
    let mut ratings = csv::Reader::from_path(rat_path)?;
    for record in ratings.records() {
        let record = record?;
        let parse = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::BadInput {
                path: rat_path.display().to_string(),
                message: format!("short row: {record:?}"),
            })
        };
        let user_id = parse(0)?.to_string();
        let item_id = parse(1)?.to_string();
        let timestamp: i64 = parse(3)?.parse().map_err(|_| Error::BadInput {
            path: rat_path.display().to_string(),
            message: format!("bad timestamp in row {record:?}"),
        })?;
        rows.push(RatingRow { user_id, item_id, timestamp });
    }
    RatingsTable::new(rows, item_genres)
}

/// Builds one session per user with synthetic genre pages inserted per
/// `variant`. Inserted pages share their item's timestamp but are ordered
/// strictly before it; page ids encode the (post-shuffle) genre combination.
/// The output is byte-identical for identical `(ratings, variant, seed)`.
pub fn synthesize(ratings: &RatingsTable, variant: SynthVariant, seed: u64) -> Result<Corpus> {
    if ratings.rows.is_empty() {
        return Err(Error::EmptyCorpus("ratings table is empty"));
    }
    if let SynthVariant::Random(x) = variant {
        assert!((0.0..=1.0).contains(&x), "shuffle ratio must be in [0, 1]");
    }

    // Attribute ids are assigned over the sorted distinct genre tokens so the
    // vocabulary does not depend on rating order.
    let mut attribute_vocab = AttributeVocab::new();
    {
        let mut tokens: Vec<&str> = ratings
            .item_genres
            .values()
            .flat_map(|g| g.iter().map(String::as_str))
            .collect();
        tokens.sort_unstable();
        tokens.dedup();
        for t in tokens {
            attribute_vocab.intern(t);
        }
    }
    let genre_ids: BTreeMap<&str, Box<[u32]>> = ratings
        .item_genres
        .iter()
        .map(|(item, genres)| {
            let mut ids: Vec<u32> = genres
                .iter()
                .map(|g| attribute_vocab.lookup(g).expect("interned above"))
                .collect();
            ids.sort_unstable();
            ids.dedup();
            (item.as_str(), ids.into_boxed_slice())
        })
        .collect();

    let mut per_user: BTreeMap<&str, Vec<&RatingRow>> = BTreeMap::new();
    for row in &ratings.rows {
        per_user.entry(&row.user_id).or_default().push(row);
    }
    for rows in per_user.values_mut() {
        rows.sort_by(|a, b| {
            a.timestamp.cmp(&b.timestamp).then_with(|| a.item_id.cmp(&b.item_id))
        });
    }

    // Page slots before shuffling: (user order index, item index) plus the
    // genre set the page will carry.
    struct PageSlot<'a> {
        session: usize,
        item_idx: usize,
        genres: &'a [u32],
    }
    let mut slots: Vec<PageSlot> = Vec::new();
    let users: Vec<(&str, &Vec<&RatingRow>)> = per_user.iter().map(|(u, r)| (*u, r)).collect();
    for (si, (_, rows)) in users.iter().enumerate() {
        for (ii, row) in rows.iter().enumerate() {
            let genres = &genre_ids[row.item_id.as_str()];
            let insert = match variant {
                SynthVariant::Prev | SynthVariant::Random(_) => true,
                SynthVariant::Group => {
                    ii == 0 || genre_ids[rows[ii - 1].item_id.as_str()] != *genres
                }
            };
            if insert {
                slots.push(PageSlot { session: si, item_idx: ii, genres });
            }
        }
    }

    if let SynthVariant::Random(x) = variant {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_selected = (x * slots.len() as f64).floor() as usize;
        let mut selected = rand::seq::index::sample(&mut rng, slots.len(), n_selected).into_vec();
        selected.sort_unstable();
        let mut sets: Vec<&[u32]> = selected.iter().map(|&i| slots[i].genres).collect();
        sets.shuffle(&mut rng);
        for (&slot, set) in selected.iter().zip(sets) {
            slots[slot].genres = set;
        }
    }

    // Assemble sessions; entities interned in generation order.
    let mut entities = EntityTable::new();
    let mut page_of_set: BTreeMap<&[u32], u32> = BTreeMap::new();
    let mut sessions: Vec<Session> = users
        .iter()
        .map(|(user, _)| Session { user_id: user.to_string(), events: Vec::new() })
        .collect();
    let mut slot_iter = slots.iter().peekable();
    for (si, (_, rows)) in users.iter().enumerate() {
        for (ii, row) in rows.iter().enumerate() {
            if let Some(slot) = slot_iter.peek() {
                if slot.session == si && slot.item_idx == ii {
                    let genres = slot.genres;
                    let page_entity = match page_of_set.get(genres) {
                        Some(&e) => e,
                        None => {
                            let name = format!(
                                "lp:{}",
                                genres
                                    .iter()
                                    .map(|&g| attribute_vocab.token(g))
                                    .collect::<Vec<_>>()
                                    .join("|")
                            );
                            let e = entities.intern(&name, InteractionKind::NonItem)?;
                            page_of_set.insert(genres, e);
                            e
                        }
                    };
                    sessions[si].events.push(Interaction {
                        kind: InteractionKind::NonItem,
                        entity: page_entity,
                        attrs: genres.to_vec().into_boxed_slice(),
                        dense_vec: None,
                        list_items: None,
                        timestamp: row.timestamp,
                    });
                    slot_iter.next();
                }
            }
            let item_entity = entities.intern(&row.item_id, InteractionKind::Item)?;
            sessions[si].events.push(Interaction {
                kind: InteractionKind::Item,
                entity: item_entity,
                attrs: genre_ids[row.item_id.as_str()].clone(),
                dense_vec: None,
                list_items: None,
                timestamp: row.timestamp,
            });
        }
    }

    Ok(Corpus { sessions, attribute_vocab, entities, dense_dim: None })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageStats {
    pub pages_per_session: f64,
    pub avg_genres_per_page: f64,
}

/// Means over all non-item events. The corpus must contain pages.
pub fn page_stats(corpus: &Corpus) -> PageStats {
    let mut n_pages = 0usize;
    let mut n_genres = 0usize;
    for s in &corpus.sessions {
        for e in &s.events {
            if !e.is_item() {
                n_pages += 1;
                n_genres += e.attrs.len();
            }
        }
    }
    assert!(n_pages > 0, "page_stats needs a corpus with pages");
    PageStats {
        pages_per_session: n_pages as f64 / corpus.sessions.len() as f64,
        avg_genres_per_page: n_genres as f64 / n_pages as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::InteractionKind;

    fn movie_table(history: &[(&str, &str)]) -> RatingsTable {
        // history: (movie, pipe-separated genres) in chronological order
        let genres: BTreeMap<String, Vec<String>> = history
            .iter()
            .map(|(m, g)| {
                (m.to_string(), g.split('|').map(|x| format!("genre:{x}")).collect())
            })
            .collect();
        let rows = history
            .iter()
            .enumerate()
            .map(|(i, (m, _))| RatingRow {
                user_id: "u1".into(),
                item_id: m.to_string(),
                timestamp: i as i64,
            })
            .collect();
        RatingsTable::new(rows, genres).unwrap()
    }

    fn event_summary(c: &Corpus) -> Vec<(String, Vec<String>)> {
        c.sessions[0]
            .events
            .iter()
            .map(|e| {
                (
                    c.entity_name(e.entity).to_string(),
                    e.attrs.iter().map(|&a| c.attribute_vocab.token(a).to_string()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn prev_inserts_a_genre_page_before_every_movie() {
        let t = movie_table(&[
            ("Alien", "Horror|Sci-Fi"),
            ("Jaws", "Action|Horror"),
            ("Shrek", "Adventure|Children"),
        ]);
        let c = synthesize(&t, SynthVariant::Prev, 0).unwrap();
        let names: Vec<String> = event_summary(&c).into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            vec![
                "lp:genre:Horror|genre:Sci-Fi",
                "Alien",
                "lp:genre:Action|genre:Horror",
                "Jaws",
                "lp:genre:Adventure|genre:Children",
                "Shrek",
            ]
        );
        // page shares the movie's timestamp and sits before it
        let events = &c.sessions[0].events;
        assert_eq!(events[0].timestamp, events[1].timestamp);
    }

    #[test]
    fn group_skips_pages_when_genres_repeat() {
        let t = movie_table(&[
            ("The Thing", "Horror|Sci-Fi"),
            ("Alien", "Horror|Sci-Fi"),
            ("Jaws", "Action|Horror"),
        ]);
        let c = synthesize(&t, SynthVariant::Group, 0).unwrap();
        let names: Vec<String> = event_summary(&c).into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            vec![
                "lp:genre:Horror|genre:Sci-Fi",
                "The Thing",
                "Alien",
                "lp:genre:Action|genre:Horror",
                "Jaws",
            ]
        );
    }

    #[test]
    fn random_zero_equals_prev_for_any_seed() {
        let t = movie_table(&[
            ("Alien", "Horror|Sci-Fi"),
            ("Jaws", "Action|Horror"),
            ("Shrek", "Adventure|Children"),
        ]);
        let prev = synthesize(&t, SynthVariant::Prev, 0).unwrap();
        for seed in [0, 17, 99] {
            let rnd = synthesize(&t, SynthVariant::Random(0.0), seed).unwrap();
            assert_eq!(event_summary(&prev), event_summary(&rnd));
        }
    }

    fn many_user_table(n_users: usize, n_movies: usize) -> RatingsTable {
        let genres: BTreeMap<String, Vec<String>> = (0..n_movies)
            .map(|m| (format!("m{m}"), vec![format!("genre:g{}", m % 7)]))
            .collect();
        let mut rows = Vec::new();
        for u in 0..n_users {
            for t in 0..10 {
                rows.push(RatingRow {
                    user_id: format!("u{u}"),
                    item_id: format!("m{}", (u * 3 + t * 5) % n_movies),
                    timestamp: t as i64,
                });
            }
        }
        RatingsTable::new(rows, genres).unwrap()
    }

    #[test]
    fn random_shuffle_preserves_the_genre_multiset() {
        let t = many_user_table(20, 30);
        let prev = synthesize(&t, SynthVariant::Prev, 0).unwrap();
        let rnd = synthesize(&t, SynthVariant::Random(0.5), 123).unwrap();
        let multiset = |c: &Corpus| {
            let mut sets: Vec<Vec<String>> = c
                .sessions
                .iter()
                .flat_map(|s| s.events.iter())
                .filter(|e| !e.is_item())
                .map(|e| {
                    e.attrs.iter().map(|&a| c.attribute_vocab.token(a).to_string()).collect()
                })
                .collect();
            sets.sort();
            sets
        };
        assert_eq!(multiset(&prev), multiset(&rnd));
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let t = many_user_table(10, 20);
        let a = synthesize(&t, SynthVariant::Random(0.7), 42).unwrap();
        let b = synthesize(&t, SynthVariant::Random(0.7), 42).unwrap();
        for (sa, sb) in a.sessions.iter().zip(&b.sessions) {
            assert_eq!(sa, sb);
        }
        let c = synthesize(&t, SynthVariant::Random(0.7), 43).unwrap();
        assert!(a.sessions.iter().zip(&c.sessions).any(|(x, y)| x != y));
    }

    #[test]
    fn prev_has_one_page_per_item_and_pages_strip_back_to_items() {
        let t = many_user_table(20, 30);
        for variant in [SynthVariant::Prev, SynthVariant::Group] {
            let c = synthesize(&t, variant, 0).unwrap();
            for s in &c.sessions {
                let items: Vec<u32> =
                    s.events.iter().filter(|e| e.is_item()).map(|e| e.entity).collect();
                let pages = s.events.iter().filter(|e| !e.is_item()).count();
                assert_eq!(items.len(), 10);
                if variant == SynthVariant::Prev {
                    assert_eq!(pages, items.len());
                } else {
                    assert!(pages <= items.len());
                }
                // page-then-item interleaving preserves the base sequence
                let recovered: Vec<&str> = s
                    .events
                    .iter()
                    .filter(|e| e.is_item())
                    .map(|e| c.entity_name(e.entity))
                    .collect();
                let expected: Vec<&str> =
                    items.iter().map(|&e| c.entity_name(e)).collect();
                assert_eq!(recovered, expected);
            }
        }
    }

    #[test]
    fn page_stats_hand_example() {
        let t = movie_table(&[("Alien", "Horror|Sci-Fi")]);
        let c = synthesize(&t, SynthVariant::Prev, 0).unwrap();
        let ps = page_stats(&c);
        assert_eq!(ps.pages_per_session, 1.0);
        assert_eq!(ps.avg_genres_per_page, 2.0);
    }

    #[test]
    fn unknown_rated_movie_is_an_error() {
        let err = RatingsTable::new(
            vec![RatingRow { user_id: "u".into(), item_id: "m1".into(), timestamp: 0 }],
            BTreeMap::new(),
        )
        .unwrap_err();
        match err {
            Error::UnknownRatedItem { id } => assert_eq!(id, "m1"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn pages_and_items_carry_matching_kinds() {
        let t = many_user_table(5, 10);
        let c = synthesize(&t, SynthVariant::Prev, 0).unwrap();
        for s in &c.sessions {
            for e in &s.events {
                assert_eq!(c.entities.kind(e.entity), e.kind);
                if !e.is_item() {
                    assert_eq!(e.kind, InteractionKind::NonItem);
                }
            }
        }
    }
}
