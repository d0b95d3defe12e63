//! Per-channel feature maps as 8-bit binary PGM images.

use crate::error::{Error, Result};
use crate::models::{ForwardHooks, ModelGraph, Trainable};
use crate::pruning::RankingReport;
use crate::tensor::{Tape, Tensor};
use std::path::{Path, PathBuf};

/// Writes `pixels` (row-major, `width·height` bytes) as binary PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::dim(format!("{} pixels for a {width}x{height} image", pixels.len())));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a binary PGM with maxval 255, returning `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos as u64, "truncated PGM header"));
        }
        fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if fields[0].1 != "P5" {
        return Err(Error::format(0, format!("not a binary PGM: {:?}", fields[0].1)));
    }
    let num = |i: usize| -> Result<usize> {
        fields[i]
            .1
            .parse()
            .map_err(|_| Error::format(fields[i].0 as u64, format!("bad PGM number {:?}", fields[i].1)))
    };
    let (w, h, max) = (num(1)?, num(2)?, num(3)?);
    if max != 255 {
        return Err(Error::format(fields[3].0 as u64, format!("unsupported maxval {max}")));
    }
    pos += 1;
    let pixels = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| Error::format(pos as u64, "truncated PGM pixels"))?;
    Ok((w, h, pixels.to_vec()))
}

/// Min-max scales a map to 0..=255; a constant map becomes all zeros.
pub fn normalize_map(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// Writes one PGM per channel of prunable layer `layer` for a single
/// image, named `<rank>_ch<channel>.pgm` in ranking order (channel
/// order without a ranking). Maps are the layer's pre-activations.
pub fn export_feature_maps(
    model: &ModelGraph,
    image: &Tensor,
    layer: usize,
    ranking: Option<&RankingReport>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut shape = vec![1];
    shape.extend_from_slice(model.input_shape());
    let x = image.clone().reshape(&shape)?;
    let taps_at = model.tap_layers();
    let &last = taps_at
        .get(layer)
        .ok_or_else(|| Error::Index(format!("prunable layer {layer} of {}", taps_at.len())))?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, Trainable::Frozen);
    let xv = tape.constant(x);
    let mut taps = Vec::new();
    model.run_layers(
        &mut tape,
        &bound,
        xv,
        0..last + 1,
        &mut ForwardHooks {
            switches: None,
            taps: Some(&mut taps),
        },
    )?;
    let (_, v) = *taps.last().expect("tap recorded");
    let maps = tape.value(v);
    if maps.ndim() != 4 {
        return Err(Error::contract(format!(
            "prunable layer {layer} has no spatial output (shape {:?})",
            maps.shape()
        )));
    }
    let (c, h, w) = (maps.shape()[1], maps.shape()[2], maps.shape()[3]);
    let order: Vec<usize> = match ranking {
        Some(r) => {
            let l = r
                .per_layer
                .get(layer)
                .ok_or_else(|| Error::Index(format!("ranking has no layer {layer}")))?;
            if l.order.len() != c {
                return Err(Error::dim(format!("ranking covers {} channels, layer has {c}", l.order.len())));
            }
            l.order.clone()
        }
        None => (0..c).collect(),
    };
    std::fs::create_dir_all(out_dir)?;
    let width = c.to_string().len().max(3);
    order
        .iter()
        .enumerate()
        .map(|(rank, &ch)| {
            let path = out_dir.join(format!("{rank:0width$}_ch{ch:0width$}.pgm"));
            let pixels = normalize_map(&maps.data()[ch * h * w..(ch + 1) * h * w]);
            write_pgm(&path, w, h, &pixels)?;
            Ok(path)
        })
        .collect()
}
