//! MNIST in the IDX format: big-endian magic, big-endian `u32`
//! dimensions, then raw `u8` values.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::path::{Path, PathBuf};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset as u64, format!("truncated {what}")))
}

/// Parses an image file into `N×1×rows×cols` with pixels scaled to `[0,1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(0, format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::format(4, format!("degenerate image dimensions {n}x{rows}x{cols}")));
    }
    let len = n * rows * cols;
    let pixels = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::format(bytes.len() as u64, format!("truncated pixels: need {len} bytes after offset 16")))?;
    if bytes.len() != 16 + len {
        return Err(Error::format((16 + len) as u64, "trailing bytes after pixel data"));
    }
    Tensor::new(vec![n, 1, rows, cols], pixels.iter().map(|&p| p as f64 / 255.0).collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(0, format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4, "label count")? as usize;
    let labels = bytes
        .get(8..8 + n)
        .ok_or_else(|| Error::format(bytes.len() as u64, format!("truncated labels: need {n} bytes after offset 8")))?;
    if bytes.len() != 8 + n {
        return Err(Error::format((8 + n) as u64, "trailing bytes after label data"));
    }
    Ok(labels.iter().map(|&l| l as usize).collect())
}

/// Loads an image file and its label file.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| {
        std::fs::read(p).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
    };
    let images = parse_idx_images(&read(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read(labels_path.as_ref())?)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::format(
            4,
            format!("{} images but {} labels", images.shape()[0], labels.len()),
        ));
    }
    Dataset::new(images, labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Paths of the standard file names inside `dir`.
pub fn mnist_paths(dir: impl AsRef<Path>, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let dir = dir.as_ref();
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

pub fn load_mnist_split(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir, split);
    load_mnist_idx(images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(n: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = IMAGE_MAGIC.to_be_bytes().to_vec();
        for d in [n, 2, 2] {
            b.extend(d.to_be_bytes());
        }
        b.extend(pixels);
        b
    }

    #[test]
    fn parses_and_scales_pixels() {
        let t = parse_idx_images(&image_file(1, &[0, 255, 51, 102])).unwrap();
        assert_eq!(t.shape(), &[1, 1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn rejects_bad_files_with_offsets() {
        let mut bad = image_file(1, &[0; 4]);
        bad[3] = 0x01;
        assert!(matches!(parse_idx_images(&bad), Err(Error::Format { offset: 0, .. })));
        let short = image_file(2, &[0; 4]);
        assert!(matches!(parse_idx_images(&short), Err(Error::Format { offset: 20, .. })));
        assert!(matches!(parse_idx_images(&short[..10]), Err(Error::Format { offset: 8, .. })));
        let mut labels = LABEL_MAGIC.to_be_bytes().to_vec();
        labels.extend(3u32.to_be_bytes());
        labels.extend([1, 2, 3]);
        assert_eq!(parse_idx_labels(&labels).unwrap(), vec![1, 2, 3]);
        assert!(parse_idx_images(&labels).is_err());
    }

    #[test]
    fn count_mismatch_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, image_file(1, &[0; 4])).unwrap();
        let mut labels = LABEL_MAGIC.to_be_bytes().to_vec();
        labels.extend(2u32.to_be_bytes());
        labels.extend([1, 2]);
        std::fs::write(&lp, labels).unwrap();
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::Format { .. })));
    }
}
