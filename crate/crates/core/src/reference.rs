//! Slow, obviously-correct implementations used to cross-check the fast
//! paths. Nothing here is meant for production use.

use std::collections::BTreeMap;

use crate::maskops::Connectivity;
use crate::types::{BinaryMask, FeatureMap, LabelMap, MaskProposal};

/// Components as sorted pixel lists, found by recursive flood fill and
/// listed in order of their first pixel.
pub fn flood_fill_components(mask: &BinaryMask, conn: Connectivity) -> Vec<Vec<(usize, usize)>> {
    fn fill(
        mask: &BinaryMask,
        conn: Connectivity,
        seen: &mut [bool],
        x: usize,
        y: usize,
        out: &mut Vec<(usize, usize)>,
    ) {
        let (w, h) = mask.dims();
        if seen[y * w + x] || !mask.get(x, y) {
            return;
        }
        seen[y * w + x] = true;
        out.push((x, y));
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if (dx, dy) == (0, 0) || (conn == Connectivity::Four && dx != 0 && dy != 0) {
                    continue;
                }
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    fill(mask, conn, seen, nx as usize, ny as usize, out);
                }
            }
        }
    }
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) && !seen[y * w + x] {
                let mut c = Vec::new();
                fill(mask, conn, &mut seen, x, y, &mut c);
                c.sort_by_key(|&(x, y)| (y, x));
                comps.push(c);
            }
        }
    }
    comps
}

fn plain_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut i, mut u) = (0usize, 0usize);
    for (&p, &q) in a.bits().iter().zip(b.bits()) {
        i += (p && q) as usize;
        u += (p || q) as usize;
    }
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

/// Textbook greedy NMS with a full pairwise IoU at every step.
pub fn greedy_nms(proposals: &[MaskProposal], thr: f64) -> Vec<MaskProposal> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    // insertion sort: stable by construction
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && proposals[order[j - 1]].score < proposals[order[j]].score {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut kept: Vec<MaskProposal> = Vec::new();
    for i in order {
        let p = &proposals[i];
        if kept.iter().all(|k| plain_iou(&k.mask, &p.mask) <= thr) {
            kept.push(p.clone());
        }
    }
    kept
}

/// mIoU and pixel accuracy by per-class pixel loops over every image.
/// `None` where the metric is undefined.
pub fn loop_miou_pacc(preds: &[LabelMap], gts: &[LabelMap], class_count: usize) -> (Option<f64>, Option<f64>) {
    let pred_label = |p: &LabelMap, l: u8| if p.is_ignored(l) { 0 } else { l };
    let mut ious = Vec::new();
    for c in 0..class_count {
        let (mut inter, mut union) = (0u64, 0u64);
        for (p, g) in preds.iter().zip(gts) {
            for (&a, &b) in p.labels().iter().zip(g.labels()) {
                if g.is_ignored(b) {
                    continue;
                }
                let a = pred_label(p, a) as usize;
                let b = b as usize;
                inter += (a == c && b == c) as u64;
                union += (a == c || b == c) as u64;
            }
        }
        if union > 0 {
            ious.push(inter as f64 / union as f64);
        }
    }
    let (mut hit, mut total) = (0u64, 0u64);
    for (p, g) in preds.iter().zip(gts) {
        for (&a, &b) in p.labels().iter().zip(g.labels()) {
            if !g.is_ignored(b) {
                total += 1;
                hit += (pred_label(p, a) == b) as u64;
            }
        }
    }
    (
        (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64),
        (total > 0).then(|| hit as f64 / total as f64),
    )
}

/// Mean cosine similarity computed pair by pair in scalar loops.
pub fn brute_confidence(features: &FeatureMap, fg: &[Vec<f32>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(features.rows() * features.cols());
    for r in 0..features.rows() {
        for c in 0..features.cols() {
            let f = features.vector(r, c);
            let mut sum = 0.0;
            for l in fg {
                let (mut dot, mut nf, mut nl) = (0.0f64, 0.0f64, 0.0f64);
                for k in 0..f.len() {
                    dot += f[k] as f64 * l[k] as f64;
                    nf += (f[k] as f64).powi(2);
                    nl += (l[k] as f64).powi(2);
                }
                if nf > 0.0 && nl > 0.0 {
                    sum += dot / (nf.sqrt() * nl.sqrt());
                }
            }
            out.push(sum / fg.len() as f64);
        }
    }
    out
}

/// Label of each pixel after vote fusion, decided pixel by pixel: the first
/// proposal (by score, then input order) covering the pixel and casting a
/// vote assigns its majority label.
pub fn claim_simulator(proposals: &[MaskProposal], map: &LabelMap) -> Vec<u8> {
    let mut idx: Vec<usize> = (0..proposals.len()).collect();
    idx.sort_by(|&a, &b| {
        proposals[b]
            .score
            .partial_cmp(&proposals[a].score)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let winner = |i: usize| -> Option<u8> {
        let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
        for (x, y) in proposals[i].mask.iter_set() {
            let l = map.get(x, y);
            if !map.is_ignored(l) {
                *counts.entry(l).or_default() += 1;
            }
        }
        let top = *counts.values().max()?;
        counts.into_iter().find(|&(_, n)| n == top).map(|(l, _)| l)
    };
    let winners: Vec<(usize, Option<u8>)> = idx.iter().map(|&i| (i, winner(i))).collect();
    let (w, h) = map.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let own = map.get(x, y);
            if map.is_ignored(own) {
                out.push(own);
                continue;
            }
            let label = winners
                .iter()
                .find_map(|&(i, win)| win.filter(|_| proposals[i].mask.get(x, y)))
                .unwrap_or(own);
            out.push(label);
        }
    }
    out
}
