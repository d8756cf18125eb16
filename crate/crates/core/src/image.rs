use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row-major grayscale pixel grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidSize(format!("image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidSize(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Checks every pixel is below `levels`.
    pub fn check_levels(&self, levels: usize) -> Result<()> {
        match self.pixels.iter().enumerate().find(|(_, &p)| p as usize >= levels) {
            Some((index, &value)) => Err(Error::PixelOutOfRange { index, value, levels }),
            None => Ok(()),
        }
    }

    /// Per-pixel `|self - other|`, the "mutated pixels" rendering.
    pub fn abs_diff(&self, other: &Image) -> Result<Image> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| a.abs_diff(b))
            .collect();
        Image::new(self.width, self.height, pixels)
    }
}

/// JSON form: `{"width": W, "height": H, "pixels": "<base64 of W*H bytes>"}`.
#[derive(Serialize, Deserialize)]
struct ImageRepr {
    width: usize,
    height: usize,
    pixels: String,
}

impl Serialize for Image {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ImageRepr {
            width: self.width,
            height: self.height,
            pixels: base64::engine::general_purpose::STANDARD.encode(&self.pixels),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Image {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ImageRepr::deserialize(deserializer)?;
        let pixels = base64::engine::general_purpose::STANDARD
            .decode(repr.pixels)
            .map_err(serde::de::Error::custom)?;
        Image::new(repr.width, repr.height, pixels).map_err(serde::de::Error::custom)
    }
}
