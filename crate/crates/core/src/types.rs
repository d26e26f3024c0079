//! Domain types shared across the pipeline.
//!
//! Coordinates are `(x, y)` = (column, row) with the origin at the top-left;
//! every raster is stored row-major.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class identifier as stored in 8-bit label maps.
pub type ClassId = u8;

/// Class 0 is background and is never refined as an object.
pub const BACKGROUND: ClassId = 0;

/// Default "unlabeled" class.
pub const DEFAULT_IGNORE: ClassId = 255;

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(format!(
            "{width}x{height}: both sides must be at least 1"
        )));
    }
    Ok(())
}

fn check_len(what: &str, len: usize, expected: usize) -> Result<()> {
    if len != expected {
        return Err(Error::InvalidDimensions(format!(
            "{what} has {len} elements, expected {expected}"
        )));
    }
    Ok(())
}

/// 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        check_len("image data", data.len(), width * height * 3)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies the pixels inside `region` (inclusive bounds) into a new image.
    pub fn crop(&self, region: &BoxPrompt) -> Result<Image> {
        region.check_within(self.width, self.height)?;
        let (w, h) = (region.width(), region.height());
        let mut data = Vec::with_capacity(w * h * 3);
        for y in region.y_min..=region.y_max {
            let start = (y * self.width + region.x_min) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Image::new(w, h, data)
    }
}

/// Per-pixel class-ID raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<ClassId>,
    ignore_id: ClassId,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<ClassId>) -> Result<Self> {
        check_dims(width, height)?;
        check_len("label map", labels.len(), width * height)?;
        Ok(Self {
            width,
            height,
            labels,
            ignore_id: DEFAULT_IGNORE,
        })
    }

    pub fn filled(width: usize, height: usize, label: ClassId) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn with_ignore_id(mut self, ignore_id: ClassId) -> Self {
        self.ignore_id = ignore_id;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn ignore_id(&self) -> ClassId {
        self.ignore_id
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<ClassId> {
        self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: ClassId) {
        self.labels[y * self.width + x] = label;
    }

    pub fn is_ignored(&self, label: ClassId) -> bool {
        label == self.ignore_id
    }

    /// Checks every non-ignore label against `class_count`.
    pub fn validate(&self, class_count: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .find(|&&l| l != self.ignore_id && l as usize >= class_count)
        {
            Some(&label) => Err(Error::LabelOutOfRange { label, class_count }),
            None => Ok(()),
        }
    }

    /// Distinct non-background, non-ignore classes present in the map.
    pub fn foreground_classes(&self) -> BTreeSet<ClassId> {
        self.labels
            .iter()
            .copied()
            .filter(|&l| l != BACKGROUND && l != self.ignore_id)
            .collect()
    }

    pub fn mask_of(&self, class: ClassId) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == class).collect(),
        }
    }

    pub fn same_dims(&self, other: &LabelMap) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

/// Row-major boolean raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        check_len("mask", bits.len(), width * height)?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Filled axis-aligned rectangle (inclusive bounds).
    pub fn from_box(width: usize, height: usize, region: &BoxPrompt) -> Result<Self> {
        Self::from_fn(width, height, |x, y| region.contains(x, y))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixels as `(x, y)` in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Tight bounding box of the set pixels, `None` when empty.
    pub fn bbox(&self) -> Option<BoxPrompt> {
        let mut it = self.iter_set();
        let (x0, y0) = it.next()?;
        let (mut x_min, mut x_max, mut y_max) = (x0, x0, y0);
        for (x, y) in it {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_max = y;
        }
        Some(BoxPrompt {
            x_min,
            y_min: y0,
            x_max,
            y_max,
        })
    }

    pub fn same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.same_dims(other)?;
        Ok(self.zip_with(other, |a, b| a || b))
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.same_dims(other)?;
        Ok(self.zip_with(other, |a, b| a && b))
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Places this mask at `(offset_x, offset_y)` inside a larger empty canvas.
    pub fn translate_into(
        &self,
        canvas_width: usize,
        canvas_height: usize,
        offset_x: usize,
        offset_y: usize,
    ) -> Result<BinaryMask> {
        if offset_x + self.width > canvas_width || offset_y + self.height > canvas_height {
            return Err(Error::InvalidDimensions(format!(
                "{}x{} mask at ({offset_x}, {offset_y}) exceeds {canvas_width}x{canvas_height}",
                self.width, self.height
            )));
        }
        let mut out = BinaryMask::empty(canvas_width, canvas_height)?;
        for y in 0..self.height {
            let src = &self.bits[y * self.width..(y + 1) * self.width];
            let start = (offset_y + y) * canvas_width + offset_x;
            out.bits[start..start + self.width].copy_from_slice(src);
        }
        Ok(out)
    }
}

/// Image embedding: `rows × cols × channels` values, row-major, channel-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f32>,
    stride: f64,
    image_width: usize,
    image_height: usize,
}

impl FeatureMap {
    /// `stride` maps feature cells to image pixels; `image_width`/`image_height`
    /// are the dimensions of the embedded image.
    pub fn new(
        rows: usize,
        cols: usize,
        channels: usize,
        data: Vec<f32>,
        stride: f64,
        image_width: usize,
        image_height: usize,
    ) -> Result<Self> {
        check_dims(cols, rows)?;
        check_dims(image_width, image_height)?;
        if channels == 0 {
            return Err(Error::InvalidDimensions("feature map needs C >= 1".into()));
        }
        check_len("feature map", data.len(), rows * cols * channels)?;
        if !(stride.is_finite() && stride > 0.0) {
            return Err(Error::InvalidArgument(format!("stride {stride} must be > 0")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "feature map contains non-finite values".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            channels,
            data,
            stride,
            image_width,
            image_height,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.image_width, self.image_height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn vector(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.cols + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Feature cell containing image pixel `(x, y)`.
    pub fn cell_of_pixel(&self, x: usize, y: usize) -> (usize, usize) {
        let r = ((y as f64) / self.stride).floor() as usize;
        let c = ((x as f64) / self.stride).floor() as usize;
        (r.min(self.rows - 1), c.min(self.cols - 1))
    }
}

/// Coarse mask resampled onto the feature grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DownsampledMask {
    mask: BinaryMask,
}

impl DownsampledMask {
    pub fn rows(&self) -> usize {
        self.mask.height()
    }

    pub fn cols(&self) -> usize {
        self.mask.width()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask.get(col, row)
    }

    pub fn count(&self) -> usize {
        self.mask.count()
    }

    pub fn as_mask(&self) -> &BinaryMask {
        &self.mask
    }
}

/// Feature vectors of the cells selected by a [`DownsampledMask`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForegroundFeatureSet {
    channels: usize,
    data: Vec<f32>,
}

impl ForegroundFeatureSet {
    pub fn new(channels: usize, vectors: &[Vec<f32>]) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidDimensions("foreground set needs C >= 1".into()));
        }
        let mut data = Vec::with_capacity(vectors.len() * channels);
        for v in vectors {
            check_len("foreground vector", v.len(), channels)?;
            data.extend_from_slice(v);
        }
        Ok(Self { channels, data })
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.channels)
    }
}

/// Real-valued map over the feature grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(cols, rows)?;
        check_len("confidence map", values.len(), rows * cols)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "confidence map contains non-finite values".into(),
            ));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PointPrompt {
    pub x: usize,
    pub y: usize,
    pub polarity: Polarity,
}

impl PointPrompt {
    pub fn positive(x: usize, y: usize) -> Self {
        Self {
            x,
            y,
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(x: usize, y: usize) -> Self {
        Self {
            x,
            y,
            polarity: Polarity::Negative,
        }
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x >= width || self.y >= height {
            return Err(Error::InvalidArgument(format!(
                "point ({}, {}) outside {width}x{height}",
                self.x, self.y
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box with inclusive pixel bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoxPrompt {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min > x_max || y_min > y_max {
            return Err(Error::InvalidArgument(format!(
                "box ({x_min}, {y_min})-({x_max}, {y_max}) has inverted bounds"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Self::new(0, 0, width - 1, height - 1)
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x_max >= width || self.y_max >= height {
            return Err(Error::InvalidArgument(format!(
                "box ({}, {})-({}, {}) outside {width}x{height}",
                self.x_min, self.y_min, self.x_max, self.y_max
            )));
        }
        Ok(())
    }
}

/// Prompts for one decode call.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSet {
    pub points: Vec<PointPrompt>,
    pub box_prompt: Option<BoxPrompt>,
    pub mask_prompt: Option<BinaryMask>,
}

impl PromptSet {
    pub fn new(
        points: Vec<PointPrompt>,
        box_prompt: Option<BoxPrompt>,
        mask_prompt: Option<BinaryMask>,
    ) -> Result<Self> {
        if points.is_empty() && box_prompt.is_none() && mask_prompt.is_none() {
            return Err(Error::InvalidArgument("prompt set is empty".into()));
        }
        Ok(Self {
            points,
            box_prompt,
            mask_prompt,
        })
    }

    pub fn point(p: PointPrompt) -> Self {
        Self {
            points: vec![p],
            box_prompt: None,
            mask_prompt: None,
        }
    }
}

/// A decoded mask with its confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskProposal {
    pub mask: BinaryMask,
    pub score: f64,
}

impl MaskProposal {
    pub fn new(mask: BinaryMask, score: f64) -> Result<Self> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!(
                "proposal score {score} outside [0, 1]"
            )));
        }
        Ok(Self { mask, score })
    }
}

/// Regular point grid: `x = offset + i·spacing`, `y = offset + j·spacing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_side: usize,
    pub offset: f64,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(points_per_side: usize, offset: f64, spacing: f64) -> Result<Self> {
        if points_per_side == 0 {
            return Err(Error::InvalidArgument("points_per_side must be >= 1".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("spacing {spacing} must be > 0")));
        }
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(Error::InvalidArgument(format!("offset {offset} must be >= 0")));
        }
        Ok(Self {
            points_per_side,
            offset,
            spacing,
        })
    }

    /// Evenly spaced grid over `side` pixels: `spacing = side / N`, `offset = spacing / 2`.
    pub fn for_side(points_per_side: usize, side: usize) -> Result<Self> {
        if points_per_side == 0 {
            return Err(Error::InvalidArgument("points_per_side must be >= 1".into()));
        }
        let spacing = side as f64 / points_per_side as f64;
        Self::new(points_per_side, spacing / 2.0, spacing)
    }
}

/// Splits a label map into one mask per foreground class, ordered by class ID.
pub fn split_by_class(map: &LabelMap) -> Vec<(ClassId, BinaryMask)> {
    map.foreground_classes()
        .into_iter()
        .map(|c| (c, map.mask_of(c)))
        .collect()
}

/// Nearest-neighbour resample of `mask` onto a `rows × cols` grid.
///
/// Cell `(r, c)` samples source pixel `(⌊(2c+1)·W / 2cols⌋, ⌊(2r+1)·H / 2rows⌋)`,
/// i.e. the pixel under the cell centre.
pub fn downsample_mask(mask: &BinaryMask, rows: usize, cols: usize) -> Result<DownsampledMask> {
    check_dims(cols, rows)?;
    let (w, h) = mask.dims();
    let src_x: Vec<usize> = (0..cols)
        .map(|c| ((2 * c + 1) * w / (2 * cols)).min(w - 1))
        .collect();
    let mask = BinaryMask::from_fn(cols, rows, |c, r| {
        let sy = ((2 * r + 1) * h / (2 * rows)).min(h - 1);
        mask.get(src_x[c], sy)
    })?;
    Ok(DownsampledMask { mask })
}

/// Gathers the feature vectors of every set cell of `mask`, in row-major order.
pub fn crop_foreground(
    features: &FeatureMap,
    mask: &DownsampledMask,
) -> Result<ForegroundFeatureSet> {
    if (mask.rows(), mask.cols()) != (features.rows(), features.cols()) {
        return Err(Error::DimensionMismatch {
            expected: (features.cols(), features.rows()),
            found: (mask.cols(), mask.rows()),
        });
    }
    let c = features.channels();
    let mut data = Vec::with_capacity(mask.count() * c);
    for (col, row) in mask.as_mask().iter_set() {
        data.extend_from_slice(features.vector(row, col));
    }
    Ok(ForegroundFeatureSet { channels: c, data })
}
