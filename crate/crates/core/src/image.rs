//! Scalar frames, frame sequences and flow fields.
//!
//! Pixels are addressed as `(i, j)` with `i` the horizontal index in
//! `0..width` and `j` the vertical index in `0..height`. Storage is row-major,
//! so pixel `(i, j)` lives at `j * width + i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::dim(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite pixel at index {p}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self { width, height, data: vec![value; width * height] }
    }

    /// Builds an image from `f(i, j)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j));
            }
        }
        Self { width, height, data }
    }

    /// Wraps data produced by internal kernels; only the length is checked.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let w = self.width;
        self.data[j * w + i] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn check_same_dims(&self, other: &Image, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dim(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Two or more frames of identical size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSequence {
    frames: Vec<Image>,
}

impl ImageSequence {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::dim(format!("sequence needs at least 2 frames, got {}", frames.len())));
        }
        let dims = frames[0].dims();
        if let Some(k) = frames.iter().position(|f| f.dims() != dims) {
            return Err(Error::dim(format!(
                "frame {k} is {}x{}, frame 0 is {}x{}",
                frames[k].width(),
                frames[k].height(),
                dims.0,
                dims.1
            )));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Image] {
        &mut self.frames
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn pixels_per_frame(&self) -> usize {
        self.frames[0].len()
    }

    /// All frames concatenated in frame order.
    pub fn stacked(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.data().iter().copied()).collect()
    }

    pub(crate) fn from_stacked(width: usize, height: usize, data: &[f64]) -> Self {
        let n = width * height;
        let frames = data
            .chunks_exact(n)
            .map(|c| Image::from_raw(width, height, c.to_vec()))
            .collect();
        Self { frames }
    }
}

/// Per-pixel displacement `(v1, v2)` in pixels, horizontal then vertical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub v1: Image,
    pub v2: Image,
}

impl FlowField {
    pub fn new(v1: Image, v2: Image) -> Result<Self> {
        v1.check_same_dims(&v2, "flow components")?;
        Ok(Self { v1, v2 })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { v1: Image::zeros(width, height), v2: Image::zeros(width, height) }
    }

    pub fn constant(width: usize, height: usize, d1: f64, d2: f64) -> Self {
        Self { v1: Image::filled(width, height, d1), v2: Image::filled(width, height, d2) }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        Self {
            v1: Image::from_fn(width, height, |i, j| f(i, j).0),
            v2: Image::from_fn(width, height, |i, j| f(i, j).1),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.v1.dims()
    }

    pub fn max_abs(&self) -> f64 {
        self.v1.max_abs().max(self.v2.max_abs())
    }
}

/// The `n - 1` flows between consecutive frames of an `n`-frame sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSequence {
    fields: Vec<FlowField>,
}

impl FlowSequence {
    pub fn new(fields: Vec<FlowField>) -> Result<Self> {
        if let Some(first) = fields.first() {
            let dims = first.dims();
            if fields.iter().any(|f| f.dims() != dims) {
                return Err(Error::dim("flow fields differ in size"));
            }
        }
        Ok(Self { fields })
    }

    /// Zero flows for a sequence of `frames` frames.
    pub fn zeros(frames: usize, width: usize, height: usize) -> Self {
        Self { fields: (1..frames).map(|_| FlowField::zeros(width, height)).collect() }
    }

    pub fn fields(&self) -> &[FlowField] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<FlowField> {
        self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub(crate) fn check_matches(&self, seq: &ImageSequence) -> Result<()> {
        if self.fields.len() + 1 != seq.len() {
            return Err(Error::dim(format!(
                "{} flow fields for {} frames",
                self.fields.len(),
                seq.len()
            )));
        }
        if self.fields.iter().any(|f| f.dims() != seq.dims()) {
            return Err(Error::dim("flow and frame sizes differ"));
        }
        Ok(())
    }
}

/// Affine intensity map applied by [`normalize_sequence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub offset: f64,
}

impl Normalization {
    pub fn apply(&self, value: f64) -> f64 {
        (value - self.offset) / self.scale
    }

    pub fn invert(&self, value: f64) -> f64 {
        value * self.scale + self.offset
    }

    pub fn denormalize(&self, seq: &ImageSequence) -> ImageSequence {
        ImageSequence {
            frames: seq.frames.iter().map(|f| f.map(|v| self.invert(v))).collect(),
        }
    }
}

/// Maps the global intensity range of `seq` onto `[0, 1]`.
///
/// A constant sequence maps to zeros with `scale = 1` and `offset` equal to
/// the constant.
pub fn normalize_sequence(seq: &ImageSequence) -> (ImageSequence, Normalization) {
    let (lo, hi) = seq
        .frames
        .iter()
        .flat_map(|f| f.data().iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = if hi > lo { hi - lo } else { 1.0 };
    let norm = Normalization { scale, offset: lo };
    let frames = seq.frames.iter().map(|f| f.map(|v| norm.apply(v))).collect();
    (ImageSequence { frames }, norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_of(values: &[&[f64]]) -> ImageSequence {
        ImageSequence::new(
            values
                .iter()
                .map(|v| Image::new(v.len(), 1, v.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(0, 2, vec![]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
        assert!(ImageSequence::new(vec![Image::zeros(2, 2)]).is_err());
        assert!(ImageSequence::new(vec![Image::zeros(2, 2), Image::zeros(3, 2)]).is_err());
        assert!(FlowField::new(Image::zeros(2, 2), Image::zeros(2, 3)).is_err());
    }

    #[test]
    fn row_major_indexing() {
        let im = Image::from_fn(3, 2, |i, j| (10 * j + i) as f64);
        assert_eq!(im.data(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(im.get(2, 1), 12.0);
    }

    #[test]
    fn normalize_byte_range() {
        let all: Vec<f64> = (0..=255).map(f64::from).collect();
        let seq = seq_of(&[&all[..128], &all[128..]]);
        let (n, p) = normalize_sequence(&seq);
        assert_eq!(p.scale, 255.0);
        assert_eq!(p.offset, 0.0);
        assert_eq!(n.frames()[0].data()[0], 0.0);
        assert_eq!(n.frames()[1].data()[127], 1.0);
    }

    #[test]
    fn normalize_constant_sequence() {
        let seq = seq_of(&[&[7.0, 7.0], &[7.0, 7.0]]);
        let (n, p) = normalize_sequence(&seq);
        assert_eq!(p, Normalization { scale: 1.0, offset: 7.0 });
        assert!(n.stacked().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_negative_range() {
        let seq = seq_of(&[&[-1.0], &[3.0]]);
        let (n, p) = normalize_sequence(&seq);
        assert_eq!(n.stacked(), vec![0.0, 1.0]);
        assert_eq!((p.scale, p.offset), (4.0, -1.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn denormalize_inverts(values in proptest::collection::vec(-1e3f64..1e3, 8)) {
                let seq = seq_of(&[&values[..4], &values[4..]]);
                let (n, p) = normalize_sequence(&seq);
                let back = p.denormalize(&n);
                for (a, b) in back.stacked().iter().zip(seq.stacked()) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }
}
