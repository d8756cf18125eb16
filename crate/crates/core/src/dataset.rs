//! IDX (MNIST) ingestion and PGM output.
//!
//! Only unsigned-byte IDX files are accepted: 1-D for labels
//! (magic `0x00000801`) and 3-D for images (magic `0x00000803`). Inputs that
//! start with the gzip signature `1f 8b` are inflated first.

use std::borrow::Cow;
use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::image::Image;

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_UBYTE: u8 = 0x08;

/// Images paired with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    images: Vec<Image>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, images: Vec<Image>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidSize(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
        })
    }

    /// Loads an images/labels IDX pair from disk.
    pub fn load(name: impl Into<String>, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let images = parse_idx_images(&read_file(images.as_ref())?)?;
        let labels = parse_idx_labels(&read_file(labels.as_ref())?)?;
        Self::new(name, images, labels.into_iter().map(usize::from).collect())
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Image, usize)> + '_ {
        self.images.iter().zip(self.labels.iter().copied())
    }

    /// Errors on the first label that is not below `classes`.
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
            None => Ok(()),
        }
    }

    /// Copy of `len` examples starting at `offset`, clamped to the dataset.
    pub fn slice(&self, offset: usize, len: usize) -> Self {
        let start = offset.min(self.len());
        let end = start.saturating_add(len).min(self.len());
        Self {
            name: self.name.clone(),
            images: self.images[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }
}

/// Loads an IDX image file without labels.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<Image>> {
    parse_idx_images(&read_file(path.as_ref())?)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Inflates gzip input, passes anything else through.
pub fn maybe_gunzip(bytes: &[u8]) -> Result<Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("bad gzip stream: {e}")))?;
        Ok(Cow::Owned(out))
    } else {
        Ok(Cow::Borrowed(bytes))
    }
}

struct IdxHeader<'a> {
    dims: Vec<usize>,
    payload: &'a [u8],
}

fn parse_idx_header(bytes: &[u8], expected_magic: u32) -> Result<IdxHeader<'_>> {
    if bytes.len() < 4 {
        return Err(Error::Length {
            expected: 4,
            actual: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(format!("bad IDX magic 0x{magic:08x}")));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(Error::Format(format!(
            "unsupported IDX type code 0x{:02x}; only unsigned byte (0x08) is accepted",
            bytes[2]
        )));
    }
    if magic != expected_magic {
        return Err(Error::Format(format!(
            "IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )));
    }
    let ndims = bytes[3] as usize;
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::Length {
            expected: header_len,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload_len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    let expected = header_len
        .checked_add(payload_len)
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(IdxHeader {
        dims,
        payload: &bytes[header_len..],
    })
}

/// Parses an IDX3 unsigned-byte image file (optionally gzip-compressed).
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    let bytes = maybe_gunzip(bytes)?;
    let header = parse_idx_header(&bytes, IDX_IMAGES_MAGIC)?;
    let [count, rows, cols] = header.dims[..] else {
        unreachable!("magic fixes three dimensions")
    };
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("image size {rows}x{cols}")));
    }
    let per_image = rows * cols;
    debug_assert_eq!(header.payload.len(), count * per_image);
    header
        .payload
        .chunks_exact(per_image)
        .map(|px| Image::new(cols, rows, px.to_vec()))
        .collect()
}

/// Parses an IDX1 unsigned-byte label file (optionally gzip-compressed).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let bytes = maybe_gunzip(bytes)?;
    let header = parse_idx_header(&bytes, IDX_LABELS_MAGIC)?;
    Ok(header.payload.to_vec())
}

/// Binary PGM (P5) with maxval 255.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn write_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Minimal P5 reader: whitespace-separated header, `#` comments, maxval ≤ 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(&bytes[start..pos]);
    }
    if fields[0] != b"P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let number = |f: &[u8]| -> Result<usize> {
        std::str::from_utf8(f)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad PGM header number".into()))
    };
    let (width, height, maxval) = (number(fields[1])?, number(fields[2])?, number(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or_default();
    let expected = width.saturating_mul(height);
    if raster.len() != expected {
        return Err(Error::Length {
            expected: pos + expected,
            actual: bytes.len(),
        });
    }
    Image::new(width, height, raster.to_vec())
}
