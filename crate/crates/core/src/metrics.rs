//! Segmentation quality metrics and report deltas.
//!
//! Conventions: ground-truth ignore pixels are never scored; a predicted
//! ignore label is scored as background. Foreground means any label other
//! than background and ignore.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskops::boundary_band;
use crate::types::{BinaryMask, ClassId, LabelMap, BACKGROUND};

pub const DEFAULT_BAND_FRACTION: f64 = 0.02;
pub const DEFAULT_BETA_SQ: f64 = 0.3;

/// Rows are ground truth, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Result<Self> {
        if class_count == 0 || class_count > 256 {
            return Err(Error::InvalidArgument(format!(
                "class count {class_count} outside 1..=256"
            )));
        }
        Ok(Self {
            class_count,
            counts: vec![0; class_count * class_count],
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.class_count + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count).map(|c| self.get(c, c)).sum()
    }

    fn bump(&mut self, gt: usize, pred: usize) {
        self.counts[gt * self.class_count + pred] += 1;
    }

    /// Accumulates one image, scoring only pixels where `region` is set.
    pub fn add_image(
        &mut self,
        pred: &LabelMap,
        gt: &LabelMap,
        region: Option<&BinaryMask>,
    ) -> Result<()> {
        pred.same_dims(gt)?;
        let c = self.class_count;
        let check = |label: ClassId| -> Result<()> {
            if (label as usize) < c {
                Ok(())
            } else {
                Err(Error::LabelOutOfRange {
                    label,
                    class_count: c,
                })
            }
        };
        for (i, (&p, &g)) in pred.labels().iter().zip(gt.labels()).enumerate() {
            if gt.is_ignored(g) || region.is_some_and(|r| !r.bits()[i]) {
                continue;
            }
            check(g)?;
            let p = if pred.is_ignored(p) { BACKGROUND } else { p };
            check(p)?;
            self.bump(g as usize, p as usize);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.class_count != self.class_count {
            return Err(Error::InvalidArgument("confusion matrices differ in size".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

fn check_pairs(preds: &[LabelMap], gts: &[LabelMap]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }
    Ok(())
}

pub fn confusion(preds: &[LabelMap], gts: &[LabelMap], class_count: usize) -> Result<ConfusionMatrix> {
    check_pairs(preds, gts)?;
    let mut cm = ConfusionMatrix::new(class_count)?;
    for (p, g) in preds.iter().zip(gts) {
        cm.add_image(p, g, None)?;
    }
    Ok(cm)
}

/// Mean IoU over classes with a non-empty union, plus each class's IoU
/// (`None` where the union is empty).
pub fn miou(cm: &ConfusionMatrix) -> Result<(f64, Vec<Option<f64>>)> {
    let n = cm.class_count();
    let per_class: Vec<Option<f64>> = (0..n)
        .map(|c| {
            let tp = cm.get(c, c);
            let row: u64 = (0..n).map(|p| cm.get(c, p)).sum();
            let col: u64 = (0..n).map(|g| cm.get(g, c)).sum();
            let union = row + col - tp;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::NoScoredClasses);
    }
    Ok((scored.iter().sum::<f64>() / scored.len() as f64, per_class))
}

pub fn pixel_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::NoScoredPixels);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Band width for a `width × height` image: `max(1, round(fraction · diagonal))`.
pub fn band_px(width: usize, height: usize, band_fraction: f64) -> usize {
    let diag = ((width * width + height * height) as f64).sqrt();
    ((band_fraction * diag).round() as usize).max(1)
}

/// Pixels within the boundary band of some ground-truth class region.
pub fn boundary_region(gt: &LabelMap, band: usize) -> Result<BinaryMask> {
    let (w, h) = gt.dims();
    let mut region = BinaryMask::empty(w, h)?;
    let mut classes: Vec<ClassId> = gt.labels().to_vec();
    classes.sort_unstable();
    classes.dedup();
    for c in classes.into_iter().filter(|&c| !gt.is_ignored(c)) {
        region = region.union(&boundary_band(&gt.mask_of(c), band)?)?;
    }
    Ok(region)
}

/// Mean IoU restricted to the boundary bands of the ground truth.
pub fn boundary_miou(
    preds: &[LabelMap],
    gts: &[LabelMap],
    class_count: usize,
    band_fraction: f64,
) -> Result<f64> {
    if !(band_fraction.is_finite() && band_fraction > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "band fraction {band_fraction} must be > 0"
        )));
    }
    check_pairs(preds, gts)?;
    let mut cm = ConfusionMatrix::new(class_count)?;
    for (p, g) in preds.iter().zip(gts) {
        let (w, h) = g.dims();
        let region = boundary_region(g, band_px(w, h, band_fraction))?;
        cm.add_image(p, g, Some(&region))?;
    }
    Ok(miou(&cm)?.0)
}

/// Foreground class covering the most pixels (ties to the smaller ID).
pub fn dominant_class(map: &LabelMap) -> Option<ClassId> {
    let mut area = [0usize; 256];
    for &l in map.labels() {
        if l != BACKGROUND && !map.is_ignored(l) {
            area[l as usize] += 1;
        }
    }
    let mut best = None;
    for (c, &a) in area.iter().enumerate() {
        if a > 0 && best.map_or(true, |(_, b)| a > b) {
            best = Some((c as ClassId, a));
        }
    }
    best.map(|(c, _)| c)
}

/// Share of images whose dominant predicted class occurs in the ground truth.
pub fn image_accuracy(preds: &[LabelMap], gts: &[LabelMap]) -> Result<f64> {
    check_pairs(preds, gts)?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let correct = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| dominant_class(p).is_some_and(|c| g.foreground_classes().contains(&c)))
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Weighted F-measure of foreground against background from raw counts.
pub fn f_beta(tp: u64, fp: u64, fn_: u64, beta_sq: f64) -> f64 {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let denom = beta_sq * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta_sq) * precision * recall / denom
    }
}

/// Per-image foreground F-measure, averaged over images.
pub fn f_measure(preds: &[LabelMap], gts: &[LabelMap], beta_sq: f64) -> Result<f64> {
    if !(beta_sq.is_finite() && beta_sq > 0.0) {
        return Err(Error::InvalidArgument(format!("beta^2 {beta_sq} must be > 0")));
    }
    check_pairs(preds, gts)?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        p.same_dims(g)?;
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (&a, &b) in p.labels().iter().zip(g.labels()) {
            if g.is_ignored(b) {
                continue;
            }
            let pf = a != BACKGROUND && !p.is_ignored(a);
            let gf = b != BACKGROUND;
            match (pf, gf) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        sum += f_beta(tp, fp, fn_, beta_sq);
    }
    Ok(sum / preds.len() as f64)
}

/// Images per number of foreground categories: buckets 1, 2, 3, 4, 5 and >5.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub buckets: [usize; 6],
    /// Images with no foreground category at all.
    pub zero: usize,
}

impl fmt::Display for CategoryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<String> = self.buckets.iter().map(|n| n.to_string()).collect();
        write!(f, "{}", cells.join(" & "))
    }
}

pub fn category_stats(gts: &[LabelMap]) -> CategoryStats {
    let mut stats = CategoryStats::default();
    for g in gts {
        match g.foreground_classes().len() {
            0 => stats.zero += 1,
            n => stats.buckets[n.min(6) - 1] += 1,
        }
    }
    stats
}

/// Signed differences in percentage points, rounded to one decimal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub miou: f64,
    pub b_miou: f64,
    pub pixel_acc: f64,
    pub img_acc: f64,
    pub f_beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineDelta {
    pub baseline: String,
    pub deltas: MetricDeltas,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou: f64,
    pub b_miou: f64,
    pub pixel_acc: f64,
    pub img_acc: f64,
    pub f_beta: f64,
    pub per_class_iou: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<BaselineDelta>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub class_count: usize,
    pub band_fraction: f64,
    pub beta_sq: f64,
}

impl EvalOptions {
    pub fn new(class_count: usize) -> Self {
        Self {
            class_count,
            band_fraction: DEFAULT_BAND_FRACTION,
            beta_sq: DEFAULT_BETA_SQ,
        }
    }
}

pub fn evaluate(preds: &[LabelMap], gts: &[LabelMap], opts: &EvalOptions) -> Result<EvalReport> {
    let cm = confusion(preds, gts, opts.class_count)?;
    let (miou, per_class_iou) = miou(&cm)?;
    Ok(EvalReport {
        miou,
        b_miou: boundary_miou(preds, gts, opts.class_count, opts.band_fraction)?,
        pixel_acc: pixel_accuracy(&cm)?,
        img_acc: image_accuracy(preds, gts)?,
        f_beta: f_measure(preds, gts, opts.beta_sq)?,
        per_class_iou,
        deltas: None,
    })
}

/// `refined − baseline` for fractions in `[0, 1]`, in percentage points
/// rounded to one decimal.
pub fn delta_points(baseline: f64, refined: f64) -> f64 {
    let d = ((refined - baseline) * 1000.0).round() / 10.0;
    if d == 0.0 {
        0.0
    } else {
        d
    }
}

pub fn report_delta(baseline: &EvalReport, refined: &EvalReport) -> MetricDeltas {
    MetricDeltas {
        miou: delta_points(baseline.miou, refined.miou),
        b_miou: delta_points(baseline.b_miou, refined.b_miou),
        pixel_acc: delta_points(baseline.pixel_acc, refined.pixel_acc),
        img_acc: delta_points(baseline.img_acc, refined.img_acc),
        f_beta: delta_points(baseline.f_beta, refined.f_beta),
    }
}

/// Signed one-decimal rendering, e.g. `+6.6`.
pub fn format_delta(d: f64) -> String {
    let d = if d == 0.0 { 0.0 } else { d };
    format!("{d:+.1}")
}
