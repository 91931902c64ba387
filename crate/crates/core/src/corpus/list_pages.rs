//! Deriving content features for list pages (e.g. search result pages) from
//! the items they display.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{Corpus, InteractionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListPageMode {
    /// Replace the page with its first listed item (the page becomes an item
    /// interaction; consecutive duplicates are merged again afterwards).
    FirstItemProxy,
    /// Page attributes become the catalog attributes of the first listed
    /// item.
    FirstItemAttributes,
    /// Page attributes become the `k` most frequent catalog attributes over
    /// all listed items, ties broken by ascending attribute id.
    TopKFrequentAttributes(usize),
}

/// Rewrites every list page (an event with `list_items` present) according to
/// `mode`, using `catalog` to resolve item attributes. Catalog attribute
/// tokens not yet in the corpus vocabulary are interned in encounter order.
/// Pages without a `list_items` field are left untouched.
pub fn derive_list_page_features(
    corpus: &Corpus,
    catalog: &BTreeMap<String, Vec<String>>,
    mode: ListPageMode,
) -> Result<Corpus> {
    let mut out = corpus.clone();

    // an item's catalog attrs as sorted, deduped vocabulary ids
    let attrs_of = |out: &mut Corpus, item: u32| -> Result<Vec<u32>> {
        let name = out.entities.name(item).to_string();
        let tokens = catalog.get(&name).ok_or_else(|| Error::UnknownListItem {
            page: String::new(),
            item: name.clone(),
        })?;
        let mut ids: Vec<u32> =
            tokens.iter().map(|t| out.attribute_vocab.intern(t)).collect();
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    };

    for si in 0..out.sessions.len() {
        for ei in 0..out.sessions[si].events.len() {
            let (entity, items) = {
                let e = &out.sessions[si].events[ei];
                if e.kind != InteractionKind::NonItem || e.list_items.is_none() {
                    continue;
                }
                (e.entity, e.list_items.clone().unwrap())
            };
            if items.is_empty() {
                return Err(Error::EmptyListPage {
                    id: out.entities.name(entity).to_string(),
                });
            }
            let page_name = out.entities.name(entity).to_string();
            let with_page = |mut err: Error| {
                if let Error::UnknownListItem { page, .. } = &mut err {
                    *page = page_name.clone();
                }
                err
            };
            match mode {
                ListPageMode::FirstItemAttributes => {
                    let attrs = attrs_of(&mut out, items[0]).map_err(with_page)?;
                    out.sessions[si].events[ei].attrs = attrs.into_boxed_slice();
                }
                ListPageMode::TopKFrequentAttributes(k) => {
                    let mut freq: BTreeMap<u32, usize> = BTreeMap::new();
                    for &it in items.iter() {
                        for a in attrs_of(&mut out, it).map_err(with_page)? {
                            *freq.entry(a).or_default() += 1;
                        }
                    }
                    // sort by frequency desc, then ascending attribute id
                    let mut ranked: Vec<(u32, usize)> = freq.into_iter().collect();
                    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                    let mut attrs: Vec<u32> =
                        ranked.into_iter().take(k).map(|(a, _)| a).collect();
                    attrs.sort_unstable();
                    out.sessions[si].events[ei].attrs = attrs.into_boxed_slice();
                }
                ListPageMode::FirstItemProxy => {
                    let attrs = attrs_of(&mut out, items[0]).map_err(with_page)?;
                    let e = &mut out.sessions[si].events[ei];
                    e.kind = InteractionKind::Item;
                    e.entity = items[0];
                    e.attrs = attrs.into_boxed_slice();
                    e.list_items = None;
                    e.dense_vec = None;
                }
            }
        }
    }

    if mode == ListPageMode::FirstItemProxy {
        for s in &mut out.sessions {
            s.events.dedup_by(|next, first| next.entity == first.entity);
        }
    }
    out.compact();
    Ok(out)
}
