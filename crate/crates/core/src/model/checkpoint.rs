//! Binary parameter containers.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic      b"RELVM\x01"
//! u32 len, header JSON      (kind, configuration, LSTM layout)
//! u32 len, vocabulary JSON
//! u32 array count
//! per array: u32 name len, name, u32 ndim, ndim x u64 dims, f64 data
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ReprConfig;
use super::params::ReprParams;
use crate::corpus::{EntityVocab, Vocabulary};
use crate::error::{Error, Result};
use crate::numeric::lstm::GATE_LAYOUT;
use crate::numeric::{Array, ParamSet, RngStream};

pub const MAGIC: &[u8; 6] = b"RELVM\x01";

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| bad("section too large"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(bad("truncated section"));
    }
    Ok(buf)
}

/// Writes a container holding `header`, `vocab` and the arrays of `params`.
pub fn write_container<W: Write, H: Serialize, V: Serialize, P: ParamSet>(
    w: &mut W,
    header: &H,
    vocab: &V,
    params: &P,
) -> Result<()> {
    w.write_all(MAGIC)?;
    for section in [serde_json::to_vec(header)?, serde_json::to_vec(vocab)?] {
        write_u32(w, section.len())?;
        w.write_all(&section)?;
    }
    let arrays = params.arrays();
    write_u32(w, arrays.len())?;
    for (name, a) in arrays {
        write_u32(w, name.len())?;
        w.write_all(name.as_bytes())?;
        write_u32(w, a.shape().len())?;
        for &d in a.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in a.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// A container as read from disk, before the arrays are bound to a model.
pub struct RawContainer<H, V> {
    pub header: H,
    pub vocab: V,
    pub arrays: Vec<(String, Array)>,
}

pub fn read_container<R: Read, H: DeserializeOwned, V: DeserializeOwned>(r: &mut R) -> Result<RawContainer<H, V>> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic number"));
    }
    let n = read_u32(r)?;
    let header = serde_json::from_slice(&read_bytes(r, n)?).map_err(|e| bad(format!("header: {e}")))?;
    let n = read_u32(r)?;
    let vocab = serde_json::from_slice(&read_bytes(r, n)?).map_err(|e| bad(format!("vocabulary: {e}")))?;
    let count = read_u32(r)?;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let n = read_u32(r)?;
        let name = String::from_utf8(read_bytes(r, n)?).map_err(|_| bad("array name is not UTF-8"))?;
        let ndim = read_u32(r)?;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated shape"))?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let len: usize = shape.iter().product();
        let bytes = read_bytes(r, len.checked_mul(8).ok_or_else(|| bad("array too large"))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let a = Array::from_vec(&shape, data).map_err(|e| bad(format!("array {name}: {e}")))?;
        arrays.push((name, a));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after the last array"));
    }
    Ok(RawContainer { header, vocab, arrays })
}

/// Copies `arrays` into `params`, requiring identical names, order and shapes.
pub fn assign_arrays<P: ParamSet>(params: &mut P, arrays: Vec<(String, Array)>) -> Result<()> {
    let mut slots = params.arrays_mut();
    if slots.len() != arrays.len() {
        return Err(bad(format!("expected {} arrays, found {}", slots.len(), arrays.len())));
    }
    for ((name, slot), (got, a)) in slots.iter_mut().zip(arrays) {
        if *name != got {
            return Err(bad(format!("expected array {name}, found {got}")));
        }
        if slot.shape() != a.shape() {
            return Err(bad(format!("array {name}: expected shape {:?}, found {:?}", slot.shape(), a.shape())));
        }
        **slot = a;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ReprHeader {
    kind: String,
    lstm_layout: String,
    config: ReprConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointVocab {
    pub tokens: Vocabulary,
    pub entities: EntityVocab,
}

/// A trained representation model with everything needed to reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ReprConfig,
    pub vocab: Vocabulary,
    pub entities: EntityVocab,
    pub params: ReprParams,
}

const REPR_KIND: &str = "repr";

impl Checkpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = ReprHeader {
            kind: REPR_KIND.into(),
            lstm_layout: GATE_LAYOUT.into(),
            config: self.config.clone(),
        };
        let vocab = CheckpointVocab {
            tokens: self.vocab.clone(),
            entities: self.entities.clone(),
        };
        write_container(w, &header, &vocab, &self.params)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let raw: RawContainer<ReprHeader, CheckpointVocab> = read_container(r)?;
        if raw.header.kind != REPR_KIND {
            return Err(bad(format!("expected a {REPR_KIND} checkpoint, found {}", raw.header.kind)));
        }
        if raw.header.lstm_layout != GATE_LAYOUT {
            return Err(bad(format!("unsupported LSTM layout {:?}", raw.header.lstm_layout)));
        }
        let config = raw.header.config;
        let mut params = ReprParams::new(
            &config,
            raw.vocab.tokens.len(),
            raw.vocab.entities.len().max(1),
            &mut RngStream::new(0, 0),
        )?;
        assign_arrays(&mut params, raw.arrays)?;
        Ok(Checkpoint {
            config,
            vocab: raw.vocab.tokens,
            entities: raw.vocab.entities,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// `(name, shape)` of every parameter array, in storage order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.params
            .arrays()
            .into_iter()
            .map(|(n, a)| (n, a.shape().to_vec()))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsHeader<H> {
    kind: String,
    config: H,
}

/// Saves a small parameter set (a classifier head) with its configuration.
pub fn save_params<H: Serialize, P: ParamSet>(path: &Path, kind: &str, config: &H, params: &P) -> Result<()> {
    let header = ParamsHeader {
        kind: kind.to_string(),
        config,
    };
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, &header, &(), params)?;
    w.flush()?;
    Ok(())
}

/// Reads a file written by `save_params`, checking its kind.
pub fn load_params<H: DeserializeOwned>(path: &Path, kind: &str) -> Result<(H, Vec<(String, Array)>)> {
    let raw: RawContainer<ParamsHeader<H>, ()> = read_container(&mut BufReader::new(File::open(path)?))?;
    if raw.header.kind != kind {
        return Err(bad(format!("expected a {kind} file, found {}", raw.header.kind)));
    }
    Ok((raw.header.config, raw.arrays))
}
