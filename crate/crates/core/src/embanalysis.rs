//! Item-embedding similarity analysis: normalized item-to-item cosine
//! matrices, mean-absolute-difference divergence between models, a random
//! embedding baseline and TSV export for external visualization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seqmodel::{ModelParams, Vocab};

/// Symmetric item-to-item similarity matrix. Off-diagonal entries are
/// min-max normalized to `[0, 1]`; the diagonal is excluded from
/// normalization and from divergence averaging.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub item_ids: Vec<String>,
    s: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[[i, j]]
    }
}

/// Cosine similarities between embedding rows, min-max normalized over the
/// off-diagonal entries. Rows must have nonzero norm. When all off-diagonal
/// cosines are equal the normalized entries are all zero.
pub fn cosine_matrix(rows: &Array2<f64>, item_ids: Vec<String>) -> Result<SimilarityMatrix> {
    assert_eq!(rows.nrows(), item_ids.len(), "one id per embedding row");
    let n = rows.nrows();
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let norm = rows.row(i).dot(&rows.row(i)).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormEmbedding { id: item_ids[i].clone() });
        }
        norms[i] = norm;
    }
    let mut s = Array2::zeros((n, n));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        s[[i, i]] = 1.0;
        for j in i + 1..n {
            let c = rows.row(i).dot(&rows.row(j)) / (norms[i] * norms[j]);
            s[[i, j]] = c;
            s[[j, i]] = c;
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    if n > 1 {
        let span = hi - lo;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s[[i, j]] = if span > 0.0 { (s[[i, j]] - lo) / span } else { 0.0 };
                }
            }
        }
    }
    Ok(SimilarityMatrix { item_ids, s })
}

/// Similarity matrix of a trained model's item embeddings (`[PAD]` and page
/// tokens excluded).
pub fn model_similarity(params: &ModelParams, vocab: &Vocab) -> Result<SimilarityMatrix> {
    let item_tokens = vocab.item_token_ids();
    let d = params.dims.d;
    let mut rows = Array2::zeros((item_tokens.len(), d));
    let mut ids = Vec::with_capacity(item_tokens.len());
    for (r, &t) in item_tokens.iter().enumerate() {
        rows.row_mut(r).assign(&params.e_v.row(t as usize));
        ids.push(vocab.token(t).to_string());
    }
    cosine_matrix(&rows, ids)
}

/// Mean absolute difference over off-diagonal entries. Requires identical
/// item orderings.
pub fn divergence(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<f64> {
    if a.item_ids != b.item_ids {
        return Err(Error::OrderingMismatch);
    }
    let n = a.n_items();
    if n < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += (a.s[[i, j]] - b.s[[i, j]]).abs();
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// Reference point: the similarity structure of an embedding drawn i.i.d.
/// standard normal from `seed`.
pub fn random_baseline(item_ids: Vec<String>, d: usize, seed: u64) -> Result<SimilarityMatrix> {
    assert!(item_ids.len() >= 2, "need at least two items");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = Array2::from_shape_fn((item_ids.len(), d), |_| {
        StandardNormal.sample(&mut rng)
    });
    cosine_matrix(&rows, item_ids)
}

/// Writes every vocabulary token's embedding row as TSV
/// (`token_id\ttoken\tis_item\tv0..v{d-1}`). Values use the shortest
/// representation that parses back to the same `f64`.
pub fn export_embeddings(
    params: &ModelParams,
    vocab: &Vocab,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    let d = params.dims.d;
    write!(w, "token_id\ttoken\tis_item")?;
    for i in 0..d {
        write!(w, "\tv{i}")?;
    }
    writeln!(w)?;
    for t in 0..vocab.len() as u32 {
        write!(w, "{}\t{}\t{}", t, vocab.token(t), vocab.is_item(t))?;
        for v in params.e_v.row(t as usize) {
            write!(w, "\t{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Pairwise divergence table in CSV form, labels as header and row keys.
pub fn divergence_table_csv(
    labels: &[String],
    matrices: &[SimilarityMatrix],
) -> Result<String> {
    assert_eq!(labels.len(), matrices.len());
    let mut out = String::from("model");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(l);
        for j in 0..labels.len() {
            out.push(',');
            out.push_str(&format!("{}", divergence(&matrices[i], &matrices[j])?));
        }
        out.push('\n');
    }
    Ok(out)
}
