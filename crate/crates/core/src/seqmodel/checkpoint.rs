//! Binary model checkpoints: a JSON header (config, strategy, vocabulary,
//! attribute tokens, tensor manifest) followed by raw little-endian `f64`
//! tensor data in declared row-major order. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{ModelDims, ModelParams, TrainConfig};
use super::{ReprStrategy, Vocab};

const MAGIC: &[u8; 8] = b"PGRCKPT1";

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    strategy: ReprStrategy,
    vocab: Vocab,
    attr_tokens: Vec<String>,
    dims: ModelDims,
    tensors: Vec<TensorMeta>,
}

/// Everything needed to evaluate or analyze a trained model.
#[derive(Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocab,
    pub strategy: ReprStrategy,
    pub config: TrainConfig,
    /// The attribute vocabulary the model's multi-hot channel is indexed by.
    pub attr_tokens: Vec<String>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    vocab: &Vocab,
    strategy: ReprStrategy,
    config: &TrainConfig,
    attr_tokens: &[String],
) -> Result<()> {
    let mut tensors = Vec::new();
    params.visit(&mut |name, _, shape| {
        tensors.push(TensorMeta { name: name.to_string(), shape: shape.to_vec() });
    });
    let header = Header {
        config: *config,
        strategy,
        vocab: vocab.clone(),
        attr_tokens: attr_tokens.to_vec(),
        dims: params.dims,
        tensors,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    let mut io_err = None;
    params.visit(&mut |_, data, _| {
        if io_err.is_some() {
            return;
        }
        for x in data {
            if let Err(e) = w.write_all(&x.to_le_bytes()) {
                io_err = Some(e);
                return;
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a model checkpoint".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json)?;
    let header: Header =
        serde_json::from_slice(&header_json).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut vocab = header.vocab;
    vocab.reindex();
    // allocate tensors by re-initializing, then overwrite every value
    let mut params = ModelParams::init(header.dims, header.config.backend, 0);
    let mut expected = header.tensors.iter();
    let mut read_err: Option<Error> = None;
    params.visit_mut(&mut |name, data| {
        if read_err.is_some() {
            return;
        }
        match expected.next() {
            Some(meta) if meta.name == name => {
                if meta.shape.iter().product::<usize>() != data.len() {
                    read_err = Some(Error::Checkpoint(format!(
                        "tensor `{name}` shape mismatch"
                    )));
                    return;
                }
                let mut buf = [0u8; 8];
                for slot in data.iter_mut() {
                    if let Err(e) = r.read_exact(&mut buf) {
                        read_err = Some(e.into());
                        return;
                    }
                    *slot = f64::from_le_bytes(buf);
                }
            }
            other => {
                read_err = Some(Error::Checkpoint(format!(
                    "tensor order mismatch: file has {:?}, model expects `{name}`",
                    other.map(|m| m.name.clone())
                )));
            }
        }
    });
    if let Some(e) = read_err {
        return Err(e);
    }
    Ok(Checkpoint {
        params,
        vocab,
        strategy: header.strategy,
        config: header.config,
        attr_tokens: header.attr_tokens,
    })
}
