//! Local region optimizer: per-object prompt derivation and two-step
//! cascaded refinement.

use crate::error::{Error, Result};
use crate::maskops::{largest_component_containing, Connectivity};
use crate::segmenter::{DecodeRequest, SegmenterBackend};
use crate::types::{
    crop_foreground, downsample_mask, BinaryMask, BoxPrompt, ClassId, ConfidenceMap, FeatureMap,
    ForegroundFeatureSet, Image, MaskProposal, PointPrompt, PromptSet,
};

/// Prompts derived for one object.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectPrompts {
    pub p_pos: PointPrompt,
    pub p_neg: PointPrompt,
    pub box_prompt: BoxPrompt,
    pub confidence: ConfidenceMap,
    /// The confidence map was constant, so `p_pos == p_neg`; the negative
    /// point is left out of every decode.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementResult {
    pub class_id: ClassId,
    pub first_step: MaskProposal,
    pub final_mask: MaskProposal,
    /// Step one produced nothing usable and `final_mask` is the coarse mask.
    pub degraded: bool,
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Mean cosine similarity between every feature cell and the foreground
/// vectors. Zero-norm vectors are similar to nothing.
///
/// Because cosine similarity is linear in the unit-normalised foreground
/// vector, the mean over `n` vectors equals one dot product with their mean
/// direction, which keeps this `O(HWC + nC)`.
pub fn build_confidence_map(
    features: &FeatureMap,
    fg: &ForegroundFeatureSet,
) -> Result<ConfidenceMap> {
    if fg.count() == 0 {
        return Err(Error::EmptyForeground);
    }
    let c = features.channels();
    if fg.channels() != c {
        return Err(Error::InvalidArgument(format!(
            "foreground vectors have {} channels, features have {c}",
            fg.channels()
        )));
    }
    let mut mean_dir = vec![0f64; c];
    for v in fg.vectors() {
        let n = norm(v);
        if n > 0.0 {
            for (m, &x) in mean_dir.iter_mut().zip(v) {
                *m += x as f64 / n;
            }
        }
    }
    let count = fg.count() as f64;
    mean_dir.iter_mut().for_each(|m| *m /= count);

    let values = features
        .data()
        .chunks_exact(c)
        .map(|f| {
            let n = norm(f);
            if n == 0.0 {
                return 0.0;
            }
            let dot: f64 = f.iter().zip(&mean_dir).map(|(&x, &m)| x as f64 * m).sum();
            (dot / n).clamp(-1.0, 1.0)
        })
        .collect();
    ConfidenceMap::new(features.rows(), features.cols(), values)
}

/// Image pixel at the centre of feature cell `(row, col)`, clamped into the image.
pub fn cell_center(row: usize, col: usize, stride: f64, width: usize, height: usize) -> (usize, usize) {
    let x = (((col as f64) + 0.5) * stride).floor() as usize;
    let y = (((row as f64) + 0.5) * stride).floor() as usize;
    (x.min(width - 1), y.min(height - 1))
}

/// Row-major indices of the first maximum and first minimum.
pub fn arg_extrema(values: &[f64]) -> (usize, usize) {
    let (mut hi, mut lo) = (0, 0);
    for (i, &v) in values.iter().enumerate() {
        if v > values[hi] {
            hi = i;
        }
        if v < values[lo] {
            lo = i;
        }
    }
    (hi, lo)
}

/// `P_pos` at the arg-max cell and `P_neg` at the arg-min cell, in image
/// pixels. Ties go to the smallest row-major index.
pub fn select_points(
    conf: &ConfidenceMap,
    stride: f64,
    width: usize,
    height: usize,
) -> (PointPrompt, PointPrompt) {
    let (hi, lo) = arg_extrema(conf.values());
    let cols = conf.cols();
    let (px, py) = cell_center(hi / cols, hi % cols, stride, width, height);
    let (nx, ny) = cell_center(lo / cols, lo % cols, stride, width, height);
    (PointPrompt::positive(px, py), PointPrompt::negative(nx, ny))
}

/// Tight box around the largest 8-connected component of `coarse` holding `p_pos`.
pub fn select_box(coarse: &BinaryMask, p_pos: &PointPrompt) -> Result<BoxPrompt> {
    Ok(largest_component_containing(coarse, p_pos, Connectivity::Eight)?.bbox)
}

pub fn derive_prompts(features: &FeatureMap, coarse: &BinaryMask) -> Result<ObjectPrompts> {
    if coarse.dims() != features.image_dims() {
        return Err(Error::DimensionMismatch {
            expected: features.image_dims(),
            found: coarse.dims(),
        });
    }
    if coarse.is_empty() {
        return Err(Error::EmptyMask);
    }
    let small = downsample_mask(coarse, features.rows(), features.cols())?;
    let mut fg = crop_foreground(features, &small)?;
    if fg.count() == 0 {
        // object thinner than a feature cell: sample the cells its pixels fall in
        let mut cells: Vec<(usize, usize)> =
            coarse.iter_set().map(|(x, y)| features.cell_of_pixel(x, y)).collect();
        cells.sort_unstable();
        cells.dedup();
        let vectors: Vec<Vec<f32>> = cells.iter().map(|&(r, c)| features.vector(r, c).to_vec()).collect();
        fg = ForegroundFeatureSet::new(features.channels(), &vectors)?;
    }
    let confidence = build_confidence_map(features, &fg)?;
    let (w, h) = coarse.dims();
    let (p_pos, p_neg) = select_points(&confidence, features.stride(), w, h);
    let box_prompt = select_box(coarse, &p_pos)?;
    Ok(ObjectPrompts {
        degenerate: (p_pos.x, p_pos.y) == (p_neg.x, p_neg.y),
        p_pos,
        p_neg,
        box_prompt,
        confidence,
    })
}

/// Highest-scoring proposal; earlier proposals win ties.
fn best(proposals: Vec<MaskProposal>) -> Option<MaskProposal> {
    let mut best: Option<MaskProposal> = None;
    for p in proposals {
        if best.as_ref().map_or(true, |b| p.score > b.score) {
            best = Some(p);
        }
    }
    best
}

/// Two decodes: points + box, then points + the first mask's box + the
/// first mask itself as a dense prompt.
pub fn cascaded_refine(
    backend: &dyn SegmenterBackend,
    features: &FeatureMap,
    prompts: &ObjectPrompts,
    coarse: &BinaryMask,
    class_id: ClassId,
) -> Result<RefinementResult> {
    let mut points = vec![prompts.p_pos];
    if !prompts.degenerate {
        points.push(prompts.p_neg);
    }

    let step1 = PromptSet::new(points.clone(), Some(prompts.box_prompt), None)?;
    let first = best(backend.decode(&DecodeRequest::new(features, step1))?)
        .ok_or_else(|| Error::BackendFailure("decoder returned no proposals".into()))?;
    let Some(first_box) = first.mask.bbox() else {
        return Ok(RefinementResult {
            class_id,
            final_mask: MaskProposal::new(coarse.clone(), 0.0)?,
            first_step: first,
            degraded: true,
        });
    };

    let step2 = PromptSet::new(points, Some(first_box), Some(first.mask.clone()))?;
    let second = backend.decode(&DecodeRequest::new(features, step2))?;
    let final_mask = best(second.into_iter().filter(|p| !p.mask.is_empty()).collect())
        .ok_or(Error::EmptyProposal)?;
    Ok(RefinementResult {
        class_id,
        first_step: first,
        final_mask,
        degraded: false,
    })
}

/// Refines one object against precomputed image features.
pub fn refine_with_features(
    backend: &dyn SegmenterBackend,
    features: &FeatureMap,
    coarse: &BinaryMask,
    class_id: ClassId,
) -> Result<RefinementResult> {
    let prompts = derive_prompts(features, coarse)?;
    cascaded_refine(backend, features, &prompts, coarse, class_id)
}

pub fn refine_object(
    backend: &dyn SegmenterBackend,
    image: &Image,
    coarse: &BinaryMask,
    class_id: ClassId,
) -> Result<RefinementResult> {
    if coarse.dims() != image.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            found: coarse.dims(),
        });
    }
    if coarse.is_empty() {
        return Err(Error::EmptyMask);
    }
    let features = backend.embed(image)?;
    refine_with_features(backend, &features, coarse, class_id)
}
