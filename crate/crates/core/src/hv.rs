//! Bipolar hypervector algebra.
//!
//! A [`Hypervector`] stores one signed byte per component, always `-1` or `+1`.
//! Bundling produces an [`Accumulator`] of exact `i32` sums, which
//! [`Accumulator::bipolarize`] maps back to a hypervector.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Hypervector {
    elements: Vec<i8>,
}

impl Hypervector {
    /// Wraps `elements` after checking that every component is `-1` or `+1`.
    pub fn from_elements(elements: Vec<i8>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some((index, &value)) = elements.iter().enumerate().find(|(_, &v)| v != 1 && v != -1) {
            return Err(Error::NotBipolar { index, value });
        }
        Ok(Self { elements })
    }

    pub(crate) fn from_elements_unchecked(elements: Vec<i8>) -> Self {
        debug_assert!(elements.iter().all(|&v| v == 1 || v == -1));
        Self { elements }
    }

    /// The all-ones vector, identity element of [`Hypervector::bind`].
    pub fn ones(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { elements: vec![1; dim] })
    }

    /// Draws `dim` i.i.d. components, each `+1` or `-1` with probability 1/2.
    ///
    /// Components are taken from successive `next_u64` words, least
    /// significant bit first; a set bit maps to `+1`.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let mut elements = Vec::with_capacity(dim);
        while elements.len() < dim {
            let word = rng.next_u64();
            let take = (dim - elements.len()).min(64);
            elements.extend((0..take).map(|bit| if (word >> bit) & 1 == 1 { 1 } else { -1 }));
        }
        Ok(Self { elements })
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<i8> {
        self.elements
    }

    pub fn negate(&self) -> Self {
        Self {
            elements: self.elements.iter().map(|&v| -v).collect(),
        }
    }

    /// Element-wise product. The result is pseudo-orthogonal to both operands.
    pub fn bind(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            elements: self
                .elements
                .iter()
                .zip(&other.elements)
                .map(|(&a, &b)| a * b)
                .collect(),
        })
    }

    /// Cyclic shift: `result[(i + k) mod D] = self[i]`.
    pub fn permute(&self, k: usize) -> Self {
        let d = self.dim();
        let mut elements = self.elements.clone();
        elements.rotate_right(k % d);
        Self { elements }
    }

    pub fn dot(&self, other: &Self) -> Result<i64> {
        check_dims(self.dim(), other.dim())?;
        Ok(dot_i8(&self.elements, &other.elements))
    }

    /// Same value as [`cosine`], using `‖v‖² = D` for bipolar vectors.
    pub fn cosine(&self, other: &Self) -> Result<f64> {
        let dot = self.dot(other)?;
        let d = self.dim() as f64;
        Ok((dot as f64 / (d * d).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Pre-bipolarization sum of hypervectors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Accumulator {
    elements: Vec<i32>,
}

impl Accumulator {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { elements: vec![0; dim] })
    }

    pub fn from_elements(elements: Vec<i32>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { elements })
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<i32> {
        self.elements
    }

    pub(crate) fn elements_mut(&mut self) -> &mut [i32] {
        &mut self.elements
    }

    /// `self += weight * hv`.
    pub fn add_scaled(&mut self, hv: &Hypervector, weight: i32) -> Result<()> {
        check_dims(self.dim(), hv.dim())?;
        for (acc, &v) in self.elements.iter_mut().zip(hv.as_slice()) {
            *acc += weight * v as i32;
        }
        Ok(())
    }

    pub fn add(&mut self, hv: &Hypervector) -> Result<()> {
        self.add_scaled(hv, 1)
    }

    pub fn merge(&mut self, other: &Accumulator) -> Result<()> {
        check_dims(self.dim(), other.dim())?;
        for (a, &b) in self.elements.iter_mut().zip(&other.elements) {
            *a += b;
        }
        Ok(())
    }

    /// Sign function with random tie-breaking.
    ///
    /// Negative sums map to `-1`, positive sums to `+1`. Each zero draws one
    /// boolean from `rng`, in index order, so the stream is consumed only
    /// where ties occur.
    pub fn bipolarize<R: RngCore + ?Sized>(&self, rng: &mut R) -> Hypervector {
        let elements = self
            .elements
            .iter()
            .map(|&v| match v {
                v if v < 0 => -1,
                v if v > 0 => 1,
                _ => {
                    if rng.random::<bool>() {
                        1
                    } else {
                        -1
                    }
                }
            })
            .collect();
        Hypervector::from_elements_unchecked(elements)
    }

    pub fn cosine(&self, other: &Hypervector) -> Result<f64> {
        cosine(&self.elements, other.as_slice())
    }
}

/// Exact element-wise sum of a nonempty list of equal-dimension hypervectors.
pub fn bundle(vs: &[Hypervector]) -> Result<Accumulator> {
    let first = vs.first().ok_or(Error::EmptyBundle)?;
    let mut acc = Accumulator::zeros(first.dim())?;
    for v in vs {
        acc.add(v)?;
    }
    Ok(acc)
}

/// `a·b / (‖a‖‖b‖)` over any pair of integer component slices.
///
/// Zero-norm operands are rejected; the caller decides what that means.
pub fn cosine<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Copy + Into<i64>,
    B: Copy + Into<i64>,
{
    check_dims(a.len(), b.len())?;
    let (mut dot, mut na, mut nb) = (0i64, 0i64, 0i64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0 || nb == 0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot as f64 / (na as f64 * nb as f64).sqrt()).clamp(-1.0, 1.0))
}

pub(crate) fn dot_i8(a: &[i8], b: &[i8]) -> i64 {
    // chunked so the inner sum stays in i32 and vectorizes
    a.chunks(4096)
        .zip(b.chunks(4096))
        .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| p as i32 * q as i32).sum::<i32>() as i64)
        .sum()
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}
