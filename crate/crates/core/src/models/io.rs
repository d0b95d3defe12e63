//! The `DPM1` model file: 4 magic bytes, a little-endian `u32` header
//! length, a JSON header, then every tensor as little-endian f64 in the
//! order the header lists them.

use super::{LayerSpec, Metadata, ModelGraph};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DPM1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    arch_string: String,
    seed: u64,
    training_history: Vec<String>,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// Serialises `model` into `out`.
pub fn write_model<W: Write>(model: &ModelGraph, mut out: W) -> Result<()> {
    let named = model.named_weights();
    let header = Header {
        version: FORMAT_VERSION,
        arch_string: model.arch_string(),
        seed: model.metadata.seed,
        training_history: model.metadata.training_history.clone(),
        input_shape: model.input_shape.clone(),
        layers: model.layers.clone(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::contract("model header exceeds 4 GiB"))?;
    out.write_all(MAGIC)?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::new();
    for (_, t) in &named {
        buf.clear();
        buf.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Parses a model from `input`.
pub fn read_model<R: Read>(mut input: R) -> Result<ModelGraph> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse(&bytes)
}

pub fn save_model(model: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelGraph> {
    parse(&std::fs::read(path)?)
}

fn take<'a>(bytes: &'a [u8], offset: usize, n: usize, what: &str) -> Result<&'a [u8]> {
    bytes
        .get(offset..offset + n)
        .ok_or_else(|| Error::format(offset as u64, format!("truncated {what}: need {n} bytes, {} left", bytes.len().saturating_sub(offset))))
}

fn parse(bytes: &[u8]) -> Result<ModelGraph> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"DPM1\"")));
    }
    let len = u32::from_le_bytes(take(bytes, 4, 4, "header length")?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(bytes, 8, len, "header")?)
        .map_err(|e| Error::format(8, format!("invalid header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::format(8, format!("unsupported version {}", header.version)));
    }
    let mut model = ModelGraph::with_default_params(header.input_shape, header.layers)
        .map_err(|e| Error::format(8, format!("invalid layer specs: {e}")))?;
    let expected: Vec<(String, Vec<usize>)> = model
        .named_weights()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let listed: Vec<(String, Vec<usize>)> = header.tensors.into_iter().map(|t| (t.name, t.shape)).collect();
    if listed != expected {
        return Err(Error::format(8, "tensor list does not match layer specs"));
    }
    let mut offset = 8 + len;
    for t in model.tensors_mut() {
        let n = t.numel() * 8;
        let raw = take(bytes, offset, n, "tensor data")?;
        for (dst, chunk) in t.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        offset += n;
    }
    if offset != bytes.len() {
        return Err(Error::format(offset as u64, format!("{} trailing bytes", bytes.len() - offset)));
    }
    if model.arch_string() != header.arch_string {
        return Err(Error::format(8, format!(
            "header arch_string {:?} disagrees with layers ({:?})",
            header.arch_string,
            model.arch_string()
        )));
    }
    model.metadata = Metadata {
        seed: header.seed,
        training_history: header.training_history,
    };
    Ok(model)
}
