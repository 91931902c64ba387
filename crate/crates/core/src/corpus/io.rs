//! JSON Lines ingestion and serialization. One session per line:
//! `{"user": "...", "events": [{"t": 3, "kind": "item", "id": "v1", ...}]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Corpus, CorpusBuilder, InteractionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawKind {
    Item,
    Page,
}

/// Wire form of one interaction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInteraction {
    pub t: i64,
    pub kind: RawKind,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list_items: Option<Vec<String>>,
}

/// Wire form of one session (one JSONL line).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSession {
    pub user: String,
    pub events: Vec<RawInteraction>,
}

/// Streams a JSON Lines session file into a corpus. Empty lines are skipped;
/// any parse or consistency failure reports the offending line number.
pub fn load_sessions(path: impl AsRef<Path>, dense_dim: Option<usize>) -> Result<Corpus> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut builder = CorpusBuilder::new(dense_dim);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSession = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: idx + 1,
            message: e.to_string(),
        })?;
        builder.push_raw(raw).map_err(|e| match e {
            Error::MalformedLine { .. } => e,
            other => Error::MalformedLine { line: idx + 1, message: other.to_string() },
        })?;
    }
    Ok(builder.finish())
}

/// Writes a corpus back out as JSON Lines in the ingestion schema.
pub fn write_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    for session in &corpus.sessions {
        let raw = to_raw(corpus, session);
        serde_json::to_writer(&mut w, &raw).map_err(|e| Error::Msg(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn to_raw(corpus: &Corpus, session: &super::Session) -> RawSession {
    RawSession {
        user: session.user_id.clone(),
        events: session
            .events
            .iter()
            .map(|e| RawInteraction {
                t: e.timestamp,
                kind: match e.kind {
                    InteractionKind::Item => RawKind::Item,
                    InteractionKind::NonItem => RawKind::Page,
                },
                id: corpus.entity_name(e.entity).to_string(),
                attrs: if e.attrs.is_empty() {
                    None
                } else {
                    Some(
                        e.attrs
                            .iter()
                            .map(|&a| corpus.attribute_vocab.token(a).to_string())
                            .collect(),
                    )
                },
                vec: e.dense_vec.as_ref().map(|v| v.to_vec()),
                list_items: e.list_items.as_ref().map(|items| {
                    items.iter().map(|&i| corpus.entity_name(i).to_string()).collect()
                }),
            })
            .collect(),
    }
}
