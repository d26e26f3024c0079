//! End-to-end refinement of one image: per-object local refinement,
//! reassembly, then global proposals fused by category vote.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gro::{
    category_vote_fuse, generate_crop_boxes, image_wide_segment, GridPlan, DEFAULT_CROP_LAYERS,
    DEFAULT_MIN_SCORE, DEFAULT_NMS_IOU,
};
use crate::lro::refine_with_features;
use crate::segmenter::SegmenterBackend;
use crate::types::{split_by_class, BinaryMask, ClassId, Image, LabelMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub enable_lro: bool,
    pub enable_gro: bool,
    pub grid: GridPlan,
    pub crop_layers: usize,
    pub crop_overlap: f64,
    pub min_score: f64,
    pub nms_iou: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            enable_lro: true,
            enable_gro: true,
            grid: GridPlan::default(),
            crop_layers: DEFAULT_CROP_LAYERS,
            crop_overlap: 0.0,
            min_score: DEFAULT_MIN_SCORE,
            nms_iou: DEFAULT_NMS_IOU,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ObjectStatus {
    Refined { score: f64 },
    /// The first decode came back empty; the coarse mask was kept.
    Degraded,
    /// Refinement failed for this object only; the coarse mask was kept.
    Fallback { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectOutcome {
    pub class_id: ClassId,
    #[serde(flatten)]
    pub status: ObjectStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageOutcome {
    pub label_map: LabelMap,
    pub objects: Vec<ObjectOutcome>,
    /// Proposals kept by the global stage, when it ran.
    pub global_proposals: Option<usize>,
}

/// Pastes per-class masks onto a background canvas. Contested pixels go to
/// the higher score, then the lower class ID. Ignore pixels of `coarse`
/// are kept as they are.
pub fn reassemble(coarse: &LabelMap, finals: &[(ClassId, BinaryMask, f64)]) -> Result<LabelMap> {
    let (w, h) = coarse.dims();
    let src = coarse.labels();
    let mut labels: Vec<ClassId> = src
        .iter()
        .map(|&l| if coarse.is_ignored(l) { l } else { 0 })
        .collect();
    let mut owner: Vec<Option<(f64, ClassId)>> = vec![None; w * h];
    for (class, mask, score) in finals {
        if mask.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                found: mask.dims(),
            });
        }
        for (i, _) in mask.bits().iter().enumerate().filter(|(_, &b)| b) {
            if coarse.is_ignored(src[i]) {
                continue;
            }
            let wins = match owner[i] {
                None => true,
                Some((s, c)) => *score > s || (*score == s && *class < c),
            };
            if wins {
                owner[i] = Some((*score, *class));
                labels[i] = *class;
            }
        }
    }
    Ok(LabelMap::new(w, h, labels)?.with_ignore_id(coarse.ignore_id()))
}

/// Errors confined to one object; anything else fails the whole image.
fn object_local(e: &Error) -> bool {
    matches!(e, Error::NoObject | Error::EmptyProposal | Error::EmptyMask)
}

pub fn refine_image(
    backend: &dyn SegmenterBackend,
    image: &Image,
    coarse: &LabelMap,
    opts: &PipelineOptions,
) -> Result<ImageOutcome> {
    if image.dims() != coarse.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            found: coarse.dims(),
        });
    }
    let mut objects = Vec::new();
    let lro_map = if opts.enable_lro {
        let parts = split_by_class(coarse);
        let mut finals = Vec::with_capacity(parts.len());
        if !parts.is_empty() {
            let features = backend.embed(image)?;
            for (class, mask) in parts {
                match refine_with_features(backend, &features, &mask, class) {
                    Ok(r) => {
                        let status = if r.degraded {
                            ObjectStatus::Degraded
                        } else {
                            ObjectStatus::Refined {
                                score: r.final_mask.score,
                            }
                        };
                        objects.push(ObjectOutcome { class_id: class, status });
                        finals.push((class, r.final_mask.mask, r.final_mask.score));
                    }
                    Err(e) if object_local(&e) => {
                        log::debug!("class {class}: keeping coarse mask ({e})");
                        objects.push(ObjectOutcome {
                            class_id: class,
                            status: ObjectStatus::Fallback {
                                reason: e.to_string(),
                            },
                        });
                        finals.push((class, mask, 0.0));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        reassemble(coarse, &finals)?
    } else {
        coarse.clone()
    };

    if !opts.enable_gro {
        return Ok(ImageOutcome {
            label_map: lro_map,
            objects,
            global_proposals: None,
        });
    }
    let (w, h) = image.dims();
    let crops = generate_crop_boxes(w, h, opts.crop_layers, opts.crop_overlap)?;
    let global = image_wide_segment(backend, image, &opts.grid, &crops, opts.min_score, opts.nms_iou)?;
    let fused = category_vote_fuse(&global, &lro_map)?;
    Ok(ImageOutcome {
        label_map: fused,
        objects,
        global_proposals: Some(global.proposals.len()),
    })
}
