//! The IDX binary format used by MNIST.

use std::fs;
use std::path::Path;

use cbc_core::Dataset;

use crate::error::{IoError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw `u8` images as stored in an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Reader<'a> {
    name: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, field: &str) -> Result<u32> {
        let end = self.pos + 4;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| IoError::format(self.name, field, "file ends inside the header"))?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn payload(&mut self, field: &str, len: usize) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < len {
            return Err(IoError::format(
                self.name,
                field,
                format!("truncated payload: expected {len} bytes, found {}", rest.len()),
            ));
        }
        if rest.len() > len {
            return Err(IoError::format(
                self.name,
                field,
                format!("{} trailing bytes after the payload", rest.len() - len),
            ));
        }
        Ok(rest)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let magic = self.u32("magic")?;
        if magic != expected {
            return Err(IoError::format(
                self.name,
                "magic",
                format!("expected {expected:#010x}, found {magic:#010x}"),
            ));
        }
        Ok(())
    }
}

pub fn parse_images(name: &str, bytes: &[u8]) -> Result<IdxImages> {
    let mut r = Reader { name, bytes, pos: 0 };
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let pixels = r.payload("pixels", count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_labels(name: &str, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { name, bytes, pos: 0 };
    r.magic(LABELS_MAGIC)?;
    let count = r.u32("label count")? as usize;
    Ok(r.payload("labels", count)?.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| IoError::file(path, e))
}

/// Builds a dataset from parsed images and labels, dividing pixels by 255.
pub fn to_dataset(name: &str, images: &IdxImages, labels: &[u8]) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(IoError::format(
            name,
            "count",
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let points = images.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels = labels.iter().map(|&l| l as usize).collect();
    Ok(Dataset::new(images.rows * images.cols, classes, points, labels)?)
}

/// Loads an image/label IDX pair.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_images(&ip.display().to_string(), &read(ip)?)?;
    let labels = parse_labels(&lp.display().to_string(), &read(lp)?)?;
    to_dataset(&ip.display().to_string(), &images, &labels)
}

/// Standard MNIST file names inside a directory; `train` selects the
/// training split, otherwise the test split.
pub fn mnist_paths(dir: &Path, train: bool) -> (std::path::PathBuf, std::path::PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}
