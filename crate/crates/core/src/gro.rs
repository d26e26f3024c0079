//! Global region optimizer: grid-prompted image-wide segmentation over crop
//! boxes, followed by category voting against a label map.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskops::nms_filter;
use crate::segmenter::{DecodeRequest, SegmenterBackend, DEFAULT_PROPOSALS};
use crate::types::{BoxPrompt, GridSpec, Image, LabelMap, MaskProposal, PointPrompt, PromptSet};

pub const DEFAULT_POINTS_PER_SIDE: usize = 32;
pub const DEFAULT_CROP_LAYERS: usize = 1;
pub const DEFAULT_MIN_SCORE: f64 = 0.8;
pub const DEFAULT_NMS_IOU: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub region: BoxPrompt,
    pub layer: usize,
    pub row: usize,
    pub col: usize,
}

/// How grid points are laid out inside each crop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPlan {
    /// `N` points per side spread evenly over each crop axis
    /// (`g = side / N`, `o = g / 2`).
    PerCrop(usize),
    /// The same explicit spec on both axes, in crop-local pixels; points
    /// falling outside a crop are skipped.
    Fixed(GridSpec),
    /// Explicit crop-local points, used as given.
    Points(Vec<(usize, usize)>),
}

impl Default for GridPlan {
    fn default() -> Self {
        GridPlan::PerCrop(DEFAULT_POINTS_PER_SIDE)
    }
}

/// Proposals kept after filtering and suppression, highest score first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlobalProposalSet {
    pub proposals: Vec<MaskProposal>,
}

fn grid_axis(spec: &GridSpec) -> Vec<usize> {
    (0..spec.points_per_side)
        .map(|i| (spec.offset + i as f64 * spec.spacing).round() as usize)
        .collect()
}

/// Grid points `(o + i·g, o + j·g)` rounded to the nearest pixel, `j` outer.
pub fn generate_grid(spec: &GridSpec) -> Vec<(usize, usize)> {
    generate_grid_xy(spec, spec)
}

/// Grid with independent column and row specs, for non-square regions.
pub fn generate_grid_xy(spec_x: &GridSpec, spec_y: &GridSpec) -> Vec<(usize, usize)> {
    let xs = grid_axis(spec_x);
    let ys = grid_axis(spec_y);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

/// Points of `plan` inside a `width × height` region, in row-major order.
pub fn plan_points(plan: &GridPlan, width: usize, height: usize) -> Result<Vec<(usize, usize)>> {
    let pts = match plan {
        GridPlan::PerCrop(n) => {
            generate_grid_xy(&GridSpec::for_side(*n, width)?, &GridSpec::for_side(*n, height)?)
        }
        GridPlan::Fixed(spec) => generate_grid(spec),
        GridPlan::Points(p) => p.clone(),
    };
    Ok(pts.into_iter().filter(|&(x, y)| x < width && y < height).collect())
}

fn tiles(side: usize, n: usize, overlap: f64) -> Vec<(usize, usize)> {
    let extent = ((side as f64 / n as f64) * (1.0 + overlap)).ceil() as usize;
    let extent = extent.clamp(1, side);
    (0..n)
        .map(|i| {
            let start = (i * side / n).min(side - extent);
            (start, start + extent - 1)
        })
        .collect()
}

/// Layer 0 is the full image; layer `k` tiles it `2^k × 2^k` with tiles of
/// side `⌈side / 2^k · (1 + overlap)⌉`, shifted back inside the image where
/// they would overhang. Ordered by (layer, row, col).
pub fn generate_crop_boxes(
    width: usize,
    height: usize,
    layers: usize,
    overlap: f64,
) -> Result<Vec<CropBox>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(format!("{width}x{height}")));
    }
    if layers == 0 {
        return Err(Error::InvalidArgument("crop layers must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!("crop overlap {overlap} outside [0, 1)")));
    }
    let mut out = Vec::new();
    for layer in 0..layers {
        let n = 1usize << layer;
        let xs = tiles(width, n, overlap);
        let ys = tiles(height, n, overlap);
        for (row, &(y0, y1)) in ys.iter().enumerate() {
            for (col, &(x0, x1)) in xs.iter().enumerate() {
                out.push(CropBox {
                    region: BoxPrompt::new(x0, y0, x1, y1)?,
                    layer,
                    row,
                    col,
                });
            }
        }
    }
    Ok(out)
}

/// Segments everything the backend finds at the grid points of every crop.
///
/// Each point is decoded alone as a positive prompt; points where the backend
/// finds no object are skipped. Empty masks and masks scoring below
/// `min_score` are dropped, then the pool (ordered by score, ties by crop
/// order, point index and proposal index) goes through greedy NMS.
pub fn image_wide_segment(
    backend: &dyn SegmenterBackend,
    image: &Image,
    plan: &GridPlan,
    crops: &[CropBox],
    min_score: f64,
    nms_iou: f64,
) -> Result<GlobalProposalSet> {
    if !(0.0..=1.0).contains(&nms_iou) {
        return Err(Error::InvalidArgument(format!("NMS threshold {nms_iou} outside [0, 1]")));
    }
    let (w, h) = image.dims();
    let mut pool = Vec::new();
    for crop in crops {
        crop.region.check_within(w, h)?;
        let sub = image.crop(&crop.region)?;
        let features = backend.embed(&sub)?;
        let (cw, ch) = sub.dims();
        for (x, y) in plan_points(plan, cw, ch)? {
            let req = DecodeRequest::new(&features, PromptSet::point(PointPrompt::positive(x, y)))
                .with_proposals(DEFAULT_PROPOSALS);
            let proposals = match backend.decode(&req) {
                Ok(p) => p,
                Err(Error::NoObject) => continue,
                Err(e) => return Err(e),
            };
            for p in proposals {
                if p.score < min_score || p.mask.is_empty() {
                    continue;
                }
                let mask = if (cw, ch) == (w, h) {
                    p.mask
                } else {
                    p.mask.translate_into(w, h, crop.region.x_min, crop.region.y_min)?
                };
                pool.push(MaskProposal { mask, score: p.score });
            }
        }
    }
    pool.sort_by(|a, b| b.score.total_cmp(&a.score));
    if nms_iou < 1.0 {
        // an exact duplicate of an earlier entry would be suppressed anyway
        let mut seen: HashSet<Vec<bool>> = HashSet::new();
        pool.retain(|p| seen.insert(p.mask.bits().to_vec()));
    }
    Ok(GlobalProposalSet {
        proposals: nms_filter(&pool, nms_iou)?,
    })
}

/// Majority-vote fusion of proposals onto `lro_map`.
///
/// Proposals are visited by descending score (ties keep input order). Each
/// one tallies the labels of `lro_map` under its pixels, skipping ignore
/// pixels, and the winning label (ties to the smaller ID) is written to every
/// pixel of the proposal not claimed by an earlier proposal. A proposal that
/// covers only ignore pixels claims nothing. Ignore pixels keep their label.
pub fn category_vote_fuse(global: &GlobalProposalSet, lro_map: &LabelMap) -> Result<LabelMap> {
    let (w, h) = lro_map.dims();
    for p in &global.proposals {
        if p.mask.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                found: p.mask.dims(),
            });
        }
    }
    let mut order: Vec<&MaskProposal> = global.proposals.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let src = lro_map.labels();
    let ignore = lro_map.ignore_id();
    let mut out = src.to_vec();
    let mut claimed = vec![false; w * h];
    let mut votes = [0usize; 256];
    for p in order {
        votes.fill(0);
        let bits = p.mask.bits();
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            if src[i] != ignore {
                votes[src[i] as usize] += 1;
            }
        }
        let mut winner = 0usize;
        for c in 1..256 {
            if votes[c] > votes[winner] {
                winner = c;
            }
        }
        if votes[winner] == 0 {
            continue;
        }
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            if !claimed[i] && src[i] != ignore {
                out[i] = winner as u8;
                claimed[i] = true;
            }
        }
    }
    Ok(LabelMap::new(w, h, out)?.with_ignore_id(ignore))
}
