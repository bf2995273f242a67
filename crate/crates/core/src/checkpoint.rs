//! Binary model container.
//!
//! Layout: the 4 bytes `GDD1`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header (config, both
//! vocabularies, parameter names and shapes in storage order), then every
//! parameter value as a little-endian `f64`, row-major, in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::{TagVocab, Vocab};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GDD1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    tags: TagVocab,
    params: Vec<ParamEntry>,
}

pub fn write_model(model: &Model, mut w: impl Write) -> Result<()> {
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        tags: model.tags.clone(),
        params: model
            .params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in model.params.iter() {
        for x in p.value.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint(format!("truncated file while reading {what}")))
}

pub fn read_model(mut r: impl Read) -> Result<Model> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic header")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic header {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let mut word = [0u8; 4];
    read_exact_or(&mut r, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let mut long = [0u8; 8];
    read_exact_or(&mut r, &mut long, "header length")?;
    let len = u64::from_le_bytes(long);
    if len > 1 << 32 {
        return Err(Error::Checkpoint(format!(
            "implausible header length {len}"
        )));
    }
    let mut json = vec![0u8; len as usize];
    read_exact_or(&mut r, &mut json, "header")?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;

    let mut model = Model::new(header.config, header.vocab, header.tags)
        .map_err(|e| Error::Checkpoint(format!("inconsistent header: {e}")))?;
    if header.params.len() != model.params.len() {
        return Err(Error::Checkpoint(format!(
            "header lists {} parameters but the config implies {}",
            header.params.len(),
            model.params.len()
        )));
    }
    for (i, entry) in header.params.iter().enumerate() {
        let expected = model.params.by_index(i);
        if entry.name != expected.name || entry.shape != expected.value.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {i} is {} {:?} but the config implies {} {:?}",
                entry.name,
                entry.shape,
                expected.name,
                expected.value.shape()
            )));
        }
        let mut bytes = vec![0u8; 8 * expected.value.len()];
        read_exact_or(&mut r, &mut bytes, &entry.name)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        model
            .params
            .set_value(i, Tensor::new(entry.shape.clone(), data)?)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint(
            "trailing bytes after parameter data".into(),
        ));
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<Model> {
    read_model(BufReader::new(File::open(path)?))
}
