//! Position-value HDC image classifier.
//!
//! Encoding binds a position hypervector with a gray-level hypervector for
//! every pixel, bundles all pixel vectors and bipolarizes the sum. Training
//! bundles encodings per class into an associative memory; prediction picks
//! the class reference with the largest cosine similarity.
//!
//! All randomness comes from named sub-streams of the model seed:
//!
//! | stream               | use                                        |
//! |----------------------|--------------------------------------------|
//! | `("pos", k)`         | position hypervector of pixel `k`          |
//! | `("val", v)`         | value hypervector of gray level `v`        |
//! | `("query-tie", 0)`   | tie-breaks when bipolarizing an encoding   |
//! | `("am-tie", c)`      | tie-breaks when bipolarizing class `c`     |
//!
//! Each bipolarization restarts its stream, so encodings and references are
//! pure functions of their inputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::AddAssign;
use std::path::Path;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hv::{Accumulator, Hypervector};
use crate::image::Image;
use crate::rng::RngStream;

pub const MODEL_MAGIC: &[u8; 4] = b"HDCM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Shape and seed of a model. Everything random is derived from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            dim: 10_000,
            width: 28,
            height: 28,
            levels: 256,
            classes: 10,
            seed: 42,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if self.width == 0 || self.height == 0 || self.levels == 0 || self.classes == 0 {
            return Err(Error::InvalidSize(format!(
                "width={} height={} levels={} classes={}",
                self.width, self.height, self.levels, self.classes
            )));
        }
        if self.levels > 256 {
            return Err(Error::InvalidSize(format!(
                "{} gray levels; pixels are bytes",
                self.levels
            )));
        }
        if self.dim > u32::MAX as usize
            || self.width > u32::MAX as usize
            || self.height > u32::MAX as usize
            || self.classes > u32::MAX as usize
        {
            return Err(Error::InvalidSize("model dimensions exceed u32".into()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Position and value item memories.
#[derive(Clone, Debug)]
pub struct ItemMemories {
    seed: u64,
    width: usize,
    height: usize,
    dim: usize,
    position: Vec<Hypervector>,
    value: Vec<Hypervector>,
    // Σ_k position[k], used by the encoder's background shortcut
    position_sum: Vec<i32>,
}

impl ItemMemories {
    pub fn build(seed: u64, width: usize, height: usize, levels: usize, dim: usize) -> Result<Self> {
        if width == 0 || height == 0 || levels == 0 {
            return Err(Error::InvalidSize(format!(
                "width={width} height={height} levels={levels}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if levels > 256 {
            return Err(Error::InvalidSize(format!("{levels} gray levels; pixels are bytes")));
        }
        let position: Vec<_> = (0..width * height)
            .into_par_iter()
            .map(|k| Hypervector::random(&mut RngStream::derive(seed, "pos", k as u64), dim))
            .collect::<Result<_>>()?;
        let value: Vec<_> = (0..levels)
            .into_par_iter()
            .map(|v| Hypervector::random(&mut RngStream::derive(seed, "val", v as u64), dim))
            .collect::<Result<_>>()?;
        let mut position_sum = vec![0i32; dim];
        for p in &position {
            for (s, &x) in position_sum.iter_mut().zip(p.as_slice()) {
                *s += x as i32;
            }
        }
        Ok(Self {
            seed,
            width,
            height,
            dim,
            position,
            value,
            position_sum,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.value.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self) -> &[Hypervector] {
        &self.position
    }

    pub fn value(&self) -> &[Hypervector] {
        &self.value
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::InvalidSize(format!(
                "image is {}x{}, model expects {}x{}",
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        img.check_levels(self.levels())
    }

    /// Exact bundle of `position[k] ⊛ value[img[k]]` over all pixels.
    pub fn accumulate(&self, img: &Image) -> Result<Accumulator> {
        self.check_image(img)?;
        let sums = if img.len() <= i16::MAX as usize {
            self.sum_pixels::<i16>(img).into_iter().map(i32::from).collect()
        } else {
            self.sum_pixels::<i32>(img)
        };
        Accumulator::from_elements(sums)
    }

    /// Encodes `img` and bipolarizes it with `rng` breaking ties.
    pub fn encode_image<R: RngCore + ?Sized>(&self, img: &Image, rng: &mut R) -> Result<Hypervector> {
        self.check_image(img)?;
        let elements = if img.len() <= i16::MAX as usize {
            sign_with_ties(&self.sum_pixels::<i16>(img), rng)
        } else {
            sign_with_ties(&self.sum_pixels::<i32>(img), rng)
        };
        Ok(Hypervector::from_elements_unchecked(elements))
    }

    // Pixels holding the most frequent value m contribute value[m] ⊛ position[k];
    // their total is value[m] ⊛ (Σ_k position[k] - Σ_{k: img[k] != m} position[k]).
    // So sum = value[m] ⊛ S + Σ_{img[k] != m} position[k] ⊛ (value[img[k]] - value[m]),
    // touching only the pixels that differ from the mode. Every prefix of that
    // sum is itself a sum of W*H terms of ±1, so it fits in i16 when W*H does.
    fn sum_pixels<T>(&self, img: &Image) -> Vec<T>
    where
        T: Copy + Default + AddAssign + From<i8> + TryFrom<i32>,
    {
        let mut histogram = [0usize; 256];
        for &p in img.pixels() {
            histogram[p as usize] += 1;
        }
        let mode = (0..256)
            .max_by_key(|&v| (histogram[v], std::cmp::Reverse(v)))
            .unwrap_or(0);
        let base = self.value[mode].as_slice();

        let mut acc: Vec<T> = self
            .position_sum
            .iter()
            .zip(base)
            .map(|(&s, &m)| T::try_from(s * m as i32).unwrap_or_default())
            .collect();
        for (k, &p) in img.pixels().iter().enumerate() {
            if p as usize == mode {
                continue;
            }
            let pos = self.position[k].as_slice();
            let val = self.value[p as usize].as_slice();
            for (((a, &x), &v), &m) in acc.iter_mut().zip(pos).zip(val).zip(base) {
                *a += T::from(x * (v - m));
            }
        }
        acc
    }
}

fn sign_with_ties<T, R>(sums: &[T], rng: &mut R) -> Vec<i8>
where
    T: Copy + Default + PartialOrd,
    R: RngCore + ?Sized,
{
    let zero = T::default();
    sums.iter()
        .map(|&s| {
            if s < zero {
                -1
            } else if s > zero || rng.random::<bool>() {
                1
            } else {
                -1
            }
        })
        .collect()
}

/// One associative-memory row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMemory {
    pub accumulator: Accumulator,
    /// `None` until the class has seen at least one example.
    pub reference: Option<Hypervector>,
    pub trained_count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssociativeMemory {
    classes: Vec<ClassMemory>,
}

impl AssociativeMemory {
    fn new(classes: usize, dim: usize) -> Result<Self> {
        let empty = ClassMemory {
            accumulator: Accumulator::zeros(dim)?,
            reference: None,
            trained_count: 0,
        };
        Ok(Self {
            classes: vec![empty; classes],
        })
    }

    pub fn classes(&self) -> &[ClassMemory] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn reference(&self, class: usize) -> Option<&Hypervector> {
        self.classes.get(class).and_then(|c| c.reference.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// One entry per class; `None` for classes without a reference.
    pub similarities: Vec<Option<f64>>,
}

impl Prediction {
    pub fn similarity(&self, class: usize) -> Option<f64> {
        self.similarities.get(class).copied().flatten()
    }
}

#[derive(Clone, Debug)]
pub struct HdcModel {
    spec: ModelSpec,
    memories: ItemMemories,
    am: AssociativeMemory,
    query_tie: RngStream,
}

impl HdcModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let memories = ItemMemories::build(spec.seed, spec.width, spec.height, spec.levels, spec.dim)?;
        Ok(Self {
            am: AssociativeMemory::new(spec.classes, spec.dim)?,
            query_tie: RngStream::named(spec.seed, "query-tie"),
            memories,
            spec,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn levels(&self) -> usize {
        self.spec.levels
    }

    pub fn memories(&self) -> &ItemMemories {
        &self.memories
    }

    pub fn associative_memory(&self) -> &AssociativeMemory {
        &self.am
    }

    pub fn is_trained(&self) -> bool {
        self.am.classes.iter().any(|c| c.trained_count > 0)
    }

    pub fn is_class_trained(&self, class: usize) -> bool {
        self.am.reference(class).is_some()
    }

    /// Query encoding: the same encoder as training, tie stream restarted per call.
    pub fn encode(&self, img: &Image) -> Result<Hypervector> {
        self.memories.encode_image(img, &mut self.query_tie.clone())
    }

    /// Adds one epoch of examples to the class accumulators and refreshes the
    /// references of every class that received data.
    pub fn train<'a, I>(&mut self, examples: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a Image, usize)>,
    {
        let examples: Vec<(&Image, usize)> = examples.into_iter().collect();
        if examples.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        self.accumulate_weighted(&examples, 1)
    }

    /// Adds `weight * encode(img)` to the accumulator of each example's label
    /// and re-bipolarizes the touched references. An empty list is a no-op.
    pub fn retrain<'a, I>(&mut self, examples: I, weight: i32) -> Result<()>
    where
        I: IntoIterator<Item = (&'a Image, usize)>,
    {
        if !self.is_trained() {
            return Err(Error::NoTrainedClasses);
        }
        let examples: Vec<(&Image, usize)> = examples.into_iter().collect();
        if examples.is_empty() {
            return Ok(());
        }
        self.accumulate_weighted(&examples, weight)
    }

    fn accumulate_weighted(&mut self, examples: &[(&Image, usize)], weight: i32) -> Result<()> {
        let classes = self.spec.classes;
        for &(img, label) in examples {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
            self.memories.check_image(img)?;
        }
        let dim = self.spec.dim;
        let per_class = examples
            .par_iter()
            .try_fold(
                || (vec![vec![0i32; dim]; classes], vec![0u64; classes]),
                |(mut sums, mut counts), &(img, label)| -> Result<_> {
                    let hv = self.encode(img)?;
                    for (s, &v) in sums[label].iter_mut().zip(hv.as_slice()) {
                        *s += v as i32;
                    }
                    counts[label] += 1;
                    Ok((sums, counts))
                },
            )
            .try_reduce(
                || (vec![vec![0i32; dim]; classes], vec![0u64; classes]),
                |(mut a, mut ac), (b, bc)| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        for (p, &q) in x.iter_mut().zip(y) {
                            *p += q;
                        }
                    }
                    for (x, y) in ac.iter_mut().zip(&bc) {
                        *x += y;
                    }
                    Ok((a, ac))
                },
            )?;
        let (sums, counts) = per_class;
        for (class, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
            if count == 0 {
                continue;
            }
            let entry = &mut self.am.classes[class];
            for (a, s) in entry.accumulator.elements_mut().iter_mut().zip(sum) {
                *a += weight * s;
            }
            entry.trained_count += count;
            entry.reference = Some(
                entry
                    .accumulator
                    .bipolarize(&mut reference_stream(self.spec.seed, class)),
            );
        }
        Ok(())
    }

    pub fn predict(&self, img: &Image) -> Result<Prediction> {
        let query = self.encode(img)?;
        self.predict_encoded(&query)
    }

    /// Cosine argmax over trained classes; ties go to the lowest class index.
    pub fn predict_encoded(&self, query: &Hypervector) -> Result<Prediction> {
        if query.dim() != self.spec.dim {
            return Err(Error::DimensionMismatch {
                left: query.dim(),
                right: self.spec.dim,
            });
        }
        let similarities: Vec<Option<f64>> = self
            .am
            .classes
            .iter()
            .map(|c| c.reference.as_ref().map(|r| query.cosine(r)).transpose())
            .collect::<Result<_>>()?;
        let mut best: Option<(usize, f64)> = None;
        for (class, sim) in similarities.iter().enumerate() {
            if let Some(s) = *sim {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((class, s));
                }
            }
        }
        let (label, _) = best.ok_or(Error::NoTrainedClasses)?;
        Ok(Prediction { label, similarities })
    }

    /// Fraction of `images` whose prediction equals the paired label.
    pub fn accuracy(&self, images: &[Image], labels: &[usize]) -> Result<f64> {
        if images.len() != labels.len() {
            return Err(Error::InvalidSize(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if images.is_empty() {
            return Err(Error::EmptyInput("evaluation set"));
        }
        let correct = images
            .par_iter()
            .zip(labels)
            .map(|(img, &label)| self.predict(img).map(|p| (p.label == label) as usize))
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        Ok(correct as f64 / images.len() as f64)
    }

    /// Writes the model file.
    ///
    /// Layout (all integers little-endian):
    ///
    /// | offset | size      | field                                   |
    /// |--------|-----------|-----------------------------------------|
    /// | 0      | 4         | magic `HDCM`                            |
    /// | 4      | 4         | format version (u32, currently 1)       |
    /// | 8      | 4         | D (u32)                                 |
    /// | 12     | 4         | W (u32)                                 |
    /// | 16     | 4         | H (u32)                                 |
    /// | 20     | 4         | L (u32)                                 |
    /// | 24     | 4         | C (u32)                                 |
    /// | 28     | 8         | master seed (u64)                       |
    /// | 36     | 8·C       | trained count per class (u64)           |
    /// | …      | 4·C·D     | accumulators, class-major (i32)         |
    /// | …      | C·D       | references, class-major (i8; 0 = none)  |
    ///
    /// Item memories are not stored; they are regenerated from the seed.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        let mut buf = Vec::with_capacity(36 + s.classes * (8 + 5 * s.dim));
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        for v in [s.dim, s.width, s.height, s.levels, s.classes] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&s.seed.to_le_bytes());
        for c in &self.am.classes {
            buf.extend_from_slice(&c.trained_count.to_le_bytes());
        }
        for c in &self.am.classes {
            for &v in c.accumulator.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for c in &self.am.classes {
            match &c.reference {
                Some(r) => buf.extend(r.as_slice().iter().map(|&v| v as u8)),
                None => buf.extend(std::iter::repeat_n(0u8, s.dim)),
            }
        }
        w.write_all(&buf).map_err(|e| Error::io("<model writer>", e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {version}")));
        }
        let spec = ModelSpec {
            dim: r.u32()? as usize,
            width: r.u32()? as usize,
            height: r.u32()? as usize,
            levels: r.u32()? as usize,
            classes: r.u32()? as usize,
            seed: r.u64()?,
        };
        spec.validate()
            .map_err(|e| Error::Format(format!("bad model header: {e}")))?;
        let expected = 36usize.saturating_add(
            spec.classes
                .saturating_mul(spec.dim.saturating_mul(5).saturating_add(8)),
        );
        if bytes.len() != expected {
            return Err(Error::Length {
                expected,
                actual: bytes.len(),
            });
        }
        let counts: Vec<u64> = (0..spec.classes).map(|_| r.u64()).collect::<Result<_>>()?;
        let mut accumulators = Vec::with_capacity(spec.classes);
        for _ in 0..spec.classes {
            let raw = r.take(4 * spec.dim)?;
            let elements = raw
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            accumulators.push(Accumulator::from_elements(elements)?);
        }
        let mut model = Self::new(spec)?;
        for (class, (acc, count)) in accumulators.into_iter().zip(counts).enumerate() {
            let raw = r.take(spec.dim)?;
            let reference = if count == 0 {
                if raw.iter().any(|&b| b != 0) {
                    return Err(Error::Format(format!("untrained class {class} has a reference")));
                }
                None
            } else {
                let stored = Hypervector::from_elements(raw.iter().map(|&b| b as i8).collect())
                    .map_err(|e| Error::Format(format!("class {class} reference: {e}")))?;
                if stored != acc.bipolarize(&mut reference_stream(spec.seed, class)) {
                    return Err(Error::Format(format!(
                        "class {class} reference does not match its accumulator"
                    )));
                }
                Some(stored)
            };
            model.am.classes[class] = ClassMemory {
                accumulator: acc,
                reference,
                trained_count: count,
            };
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .map(BufReader::new)
            .and_then(|mut r| r.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn reference_stream(seed: u64, class: usize) -> RngStream {
    RngStream::derive(seed, "am-tie", class as u64)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Length {
                expected: self.pos.saturating_add(n),
                actual: self.bytes.len(),
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
