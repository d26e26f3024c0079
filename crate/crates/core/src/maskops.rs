//! Geometric mask algorithms: connected components, IoU, greedy NMS and
//! boundary bands.

use crate::error::{Error, Result};
use crate::types::{BinaryMask, BoxPrompt, MaskProposal, PointPrompt};

/// Which neighbours of a pixel count as connected to it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight neighbours.
    #[default]
    Eight,
}

/// One maximal connected region of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub id: usize,
    pub pixel_count: usize,
    pub mask: BinaryMask,
    pub bbox: BoxPrompt,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // slot 0 is the background label
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let next = self.parent[x as usize];
            self.parent[x as usize] = self.parent[next as usize];
            x = next;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling. Returns one label per pixel (0 = unset)
/// and the number of components; labels are numbered in raster order of
/// each component's first pixel.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> (Vec<u32>, usize) {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            if x > 0 && labels[i - 1] != 0 {
                neighbours[n] = labels[i - 1];
                n += 1;
            }
            if y > 0 {
                let up = i - w;
                if labels[up] != 0 {
                    neighbours[n] = labels[up];
                    n += 1;
                }
                if connectivity == Connectivity::Eight {
                    if x > 0 && labels[up - 1] != 0 {
                        neighbours[n] = labels[up - 1];
                        n += 1;
                    }
                    if x + 1 < w && labels[up + 1] != 0 {
                        neighbours[n] = labels[up + 1];
                        n += 1;
                    }
                }
            }
            if n == 0 {
                labels[i] = sets.make();
            } else {
                let first = neighbours[0];
                labels[i] = first;
                for &other in &neighbours[1..n] {
                    sets.union(first, other);
                }
            }
        }
    }

    // compact roots into 1..=count in order of first appearance
    let mut remap = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = sets.find(*l) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *l = remap[root];
    }
    (labels, count as usize)
}

/// All components of `mask`, largest first; equal sizes keep raster order of
/// their first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = mask.dims();
    let (labels, count) = label_components(mask, connectivity);
    if count == 0 {
        return Vec::new();
    }

    struct Acc {
        pixels: usize,
        x_min: usize,
        y_min: usize,
        x_max: usize,
        y_max: usize,
    }
    let mut acc: Vec<Acc> = (0..count)
        .map(|_| Acc {
            pixels: 0,
            x_min: usize::MAX,
            y_min: usize::MAX,
            x_max: 0,
            y_max: 0,
        })
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let a = &mut acc[l as usize - 1];
        a.pixels += 1;
        a.x_min = a.x_min.min(x);
        a.y_min = a.y_min.min(y);
        a.x_max = a.x_max.max(x);
        a.y_max = a.y_max.max(y);
    }

    // labels are already in first-pixel raster order, so a stable sort by size
    // gives the required tie-break
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| acc[b].pixels.cmp(&acc[a].pixels));

    order
        .into_iter()
        .enumerate()
        .map(|(id, idx)| {
            let label = idx as u32 + 1;
            let a = &acc[idx];
            let bits = labels.iter().map(|&l| l == label).collect();
            Component {
                id,
                pixel_count: a.pixels,
                mask: BinaryMask::new(w, h, bits).expect("dimensions come from a valid mask"),
                bbox: BoxPrompt {
                    x_min: a.x_min,
                    y_min: a.y_min,
                    x_max: a.x_max,
                    y_max: a.y_max,
                },
            }
        })
        .collect()
}

/// Largest component containing `point`; when the point falls on an unset
/// pixel the globally largest component is returned instead.
pub fn largest_component_containing(
    mask: &BinaryMask,
    point: &PointPrompt,
    connectivity: Connectivity,
) -> Result<Component> {
    point.check_within(mask.width(), mask.height())?;
    let mut components = connected_components(mask, connectivity);
    if components.is_empty() {
        return Err(Error::EmptyMask);
    }
    let hit = components
        .iter()
        .position(|c| c.mask.get(point.x, point.y))
        .unwrap_or(0);
    Ok(components.swap_remove(hit))
}

/// Intersection over union. Two empty masks have IoU 1.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.bits().iter().zip(b.bits()) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

struct MaskStats {
    area: usize,
    bbox: Option<BoxPrompt>,
}

fn fast_iou(a: &BinaryMask, sa: &MaskStats, b: &BinaryMask, sb: &MaskStats) -> f64 {
    let (ba, bb) = match (sa.bbox, sb.bbox) {
        (None, None) => return 1.0,
        (Some(ba), Some(bb)) => (ba, bb),
        _ => return 0.0,
    };
    let x0 = ba.x_min.max(bb.x_min);
    let x1 = ba.x_max.min(bb.x_max);
    let y0 = ba.y_min.max(bb.y_min);
    let y1 = ba.y_max.min(bb.y_max);
    if x0 > x1 || y0 > y1 {
        return 0.0;
    }
    let w = a.width();
    let (pa, pb) = (a.bits(), b.bits());
    let mut inter = 0usize;
    for y in y0..=y1 {
        let row = y * w;
        inter += (x0..=x1).filter(|&x| pa[row + x] && pb[row + x]).count();
    }
    inter as f64 / (sa.area + sb.area - inter) as f64
}

/// Greedy non-maximum suppression.
///
/// Proposals are visited by descending score (equal scores keep input order);
/// a proposal survives iff its IoU with every survivor so far is at most
/// `iou_threshold`. Survivors are returned in visiting order.
pub fn nms_filter(proposals: &[MaskProposal], iou_threshold: f64) -> Result<Vec<MaskProposal>> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::InvalidArgument(format!(
            "NMS threshold {iou_threshold} outside [0, 1]"
        )));
    }
    if let Some(first) = proposals.first() {
        for p in &proposals[1..] {
            first.mask.same_dims(&p.mask)?;
        }
    }
    let stats: Vec<MaskStats> = proposals
        .iter()
        .map(|p| MaskStats {
            area: p.mask.count(),
            bbox: p.mask.bbox(),
        })
        .collect();
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| proposals[b].score.total_cmp(&proposals[a].score));

    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let candidate = &proposals[idx];
        let suppressed = kept.iter().any(|&k| {
            fast_iou(&candidate.mask, &stats[idx], &proposals[k].mask, &stats[k]) > iou_threshold
        });
        if !suppressed {
            kept.push(idx);
        }
    }
    Ok(kept.into_iter().map(|i| proposals[i].clone()).collect())
}

/// Sliding-window pass along one axis; `index(line, pos)` gives the flat
/// index. Dilation sets a pixel if any input within `radius` is set, erosion
/// if all are, with out-of-raster pixels counting as unset.
fn window_pass(
    src: &[bool],
    lines: usize,
    len: usize,
    index: impl Fn(usize, usize) -> usize,
    radius: usize,
    erode: bool,
) -> Vec<bool> {
    let mut out = vec![false; src.len()];
    let span = 2 * radius + 1;
    for line in 0..lines {
        // count of set pixels in [pos - radius, pos + radius] clipped to the line
        let mut count = 0usize;
        for k in 0..radius.min(len) {
            count += src[index(line, k)] as usize;
        }
        for pos in 0..len {
            if pos + radius < len {
                count += src[index(line, pos + radius)] as usize;
            }
            if pos > radius {
                count -= src[index(line, pos - radius - 1)] as usize;
            }
            out[index(line, pos)] = if erode {
                // out-of-raster pixels are unset, so a clipped window never passes
                pos >= radius && pos + radius < len && count == span
            } else {
                count > 0
            };
        }
    }
    out
}

fn separable(mask: &BinaryMask, radius: usize, erode: bool) -> BinaryMask {
    let (w, h) = mask.dims();
    let rows = window_pass(mask.bits(), h, w, |y, x| y * w + x, radius, erode);
    let bits = window_pass(&rows, w, h, |x, y| y * w + x, radius, erode);
    BinaryMask::new(w, h, bits).expect("dimensions come from a valid mask")
}

/// Chebyshev dilation: a pixel is set if any set pixel lies within `radius`.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    separable(mask, radius, false)
}

/// Chebyshev erosion; pixels outside the raster count as unset.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    separable(mask, radius, true)
}

/// Boundary pixels: set pixels with a 4-neighbour that is unset or outside
/// the raster.
pub fn boundary_pixels(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y)
            && (x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1))
    })
    .expect("dimensions come from a valid mask")
}

/// Inner band `band_px` pixels wide: set pixels of `mask` within Chebyshev
/// distance `band_px - 1` of a boundary pixel. A band of 1 is the boundary
/// itself.
pub fn boundary_band(mask: &BinaryMask, band_px: usize) -> Result<BinaryMask> {
    if band_px == 0 {
        return Err(Error::InvalidArgument("band_px must be >= 1".into()));
    }
    let near = dilate(&boundary_pixels(mask), band_px - 1);
    mask.intersection(&near)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(w: usize, h: usize, set: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| set.contains(&(x, y))).unwrap()
    }

    #[test]
    fn two_blobs_four_connected() {
        let m = mask_from(4, 4, &[(0, 0), (1, 0), (3, 3)]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc[0].pixel_count, 2);
        assert_eq!(cc[1].pixel_count, 1);
        assert_eq!(cc[0].bbox, BoxPrompt::new(0, 0, 1, 0).unwrap());
        assert_eq!(cc[1].id, 1);
    }

    #[test]
    fn diagonal_depends_on_connectivity() {
        let m = mask_from(3, 3, &[(0, 0), (1, 1), (2, 2)]);
        assert_eq!(connected_components(&m, Connectivity::Four).len(), 3);
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
    }

    #[test]
    fn u_shape_merges() {
        // both arms meet only at the bottom row
        let m = BinaryMask::from_fn(5, 4, |x, y| x == 0 || x == 4 || y == 3).unwrap();
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].pixel_count, 11);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::empty(4, 4).unwrap();
        assert!(connected_components(&m, Connectivity::Eight).is_empty());
        assert!(matches!(
            largest_component_containing(&m, &PointPrompt::positive(0, 0), Connectivity::Eight),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn equal_sizes_sorted_by_first_pixel() {
        let m = mask_from(5, 3, &[(4, 0), (0, 2), (2, 1)]);
        let cc = connected_components(&m, Connectivity::Four);
        let firsts: Vec<_> = cc.iter().map(|c| c.mask.iter_set().next().unwrap()).collect();
        assert_eq!(firsts, vec![(4, 0), (2, 1), (0, 2)]);
    }

    #[test]
    fn containing_component_and_fallback() {
        // 3-px component on the left, 5-px one on the right
        let m = mask_from(
            8,
            3,
            &[(0, 0), (0, 1), (0, 2), (4, 0), (5, 0), (6, 0), (7, 0), (7, 1)],
        );
        let c = largest_component_containing(&m, &PointPrompt::positive(0, 1), Connectivity::Eight)
            .unwrap();
        assert_eq!(c.pixel_count, 3);
        let c = largest_component_containing(&m, &PointPrompt::positive(2, 2), Connectivity::Eight)
            .unwrap();
        assert_eq!(c.pixel_count, 5);
    }

    #[test]
    fn iou_cases() {
        let a = BinaryMask::from_fn(4, 4, |x, y| x < 2 && y < 2).unwrap();
        let b = BinaryMask::from_fn(4, 4, |x, y| (1..3).contains(&x) && y < 2).unwrap();
        let far = BinaryMask::from_fn(4, 4, |x, y| x == 3 && y == 3).unwrap();
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &far).unwrap(), 0.0);
        assert!((mask_iou(&a, &b).unwrap() - 2.0 / 6.0).abs() < 1e-12);
        let e = BinaryMask::empty(4, 4).unwrap();
        assert_eq!(mask_iou(&e, &e).unwrap(), 1.0);
        assert!(mask_iou(&a, &BinaryMask::empty(3, 4).unwrap()).is_err());
    }

    #[test]
    fn nms_drops_duplicate() {
        let m = BinaryMask::from_fn(4, 4, |x, _| x < 2).unwrap();
        let props = vec![
            MaskProposal::new(m.clone(), 0.8).unwrap(),
            MaskProposal::new(m, 0.9).unwrap(),
        ];
        let kept = nms_filter(&props, 0.5).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn nms_keeps_disjoint() {
        let a = BinaryMask::from_fn(4, 4, |x, _| x < 2).unwrap();
        let b = a.complement();
        let props = vec![
            MaskProposal::new(a, 0.3).unwrap(),
            MaskProposal::new(b, 0.7).unwrap(),
        ];
        for t in [0.0, 0.5, 1.0] {
            let kept = nms_filter(&props, t).unwrap();
            assert_eq!(kept.len(), 2);
            assert_eq!(kept[0].score, 0.7);
        }
        assert!(nms_filter(&props, 1.5).is_err());
    }

    #[test]
    fn band_of_line_is_line() {
        let m = BinaryMask::from_fn(7, 5, |_, y| y == 2).unwrap();
        assert_eq!(boundary_band(&m, 1).unwrap(), m);
    }

    #[test]
    fn band_of_square_is_ring() {
        let m = BinaryMask::from_fn(9, 9, |x, y| (2..7).contains(&x) && (2..7).contains(&y))
            .unwrap();
        let band = boundary_band(&m, 1).unwrap();
        assert_eq!(band.count(), 16);
        assert!(!band.get(4, 4));
        assert!(!band.get(3, 3));
        assert!(band.get(2, 4));
    }

    #[test]
    fn band_of_empty_is_empty() {
        let m = BinaryMask::empty(6, 6).unwrap();
        assert!(boundary_band(&m, 2).unwrap().is_empty());
        assert!(boundary_band(&m, 0).is_err());
    }

    #[test]
    fn erosion_and_dilation() {
        let m = BinaryMask::from_fn(9, 9, |x, y| (2..7).contains(&x) && (2..7).contains(&y))
            .unwrap();
        assert_eq!(erode(&m, 1).count(), 9);
        assert_eq!(erode(&m, 2).count(), 1);
        assert_eq!(erode(&m, 3).count(), 0);
        assert_eq!(dilate(&m, 1).count(), 49);
        // full raster erodes at the border
        let full = BinaryMask::from_fn(5, 5, |_, _| true).unwrap();
        assert_eq!(erode(&full, 1).count(), 9);
    }

    fn random_mask() -> impl Strategy<Value = BinaryMask> {
        proptest::collection::vec(prop::bool::weighted(0.45), 20 * 20)
            .prop_map(|bits| BinaryMask::new(20, 20, bits).unwrap())
    }

    proptest! {
        #[test]
        fn components_partition_set_bits(m in random_mask(), four in any::<bool>()) {
            let conn = if four { Connectivity::Four } else { Connectivity::Eight };
            let cc = connected_components(&m, conn);
            let total: usize = cc.iter().map(|c| c.pixel_count).sum();
            prop_assert_eq!(total, m.count());
            for w in cc.windows(2) {
                prop_assert!(w[0].pixel_count >= w[1].pixel_count);
            }
            for c in &cc {
                prop_assert_eq!(c.mask.count(), c.pixel_count);
                prop_assert_eq!(Some(c.bbox), c.mask.bbox());
            }
        }

        #[test]
        fn iou_symmetric_and_reflexive(a in random_mask(), b in random_mask()) {
            prop_assert_eq!(mask_iou(&a, &b).unwrap(), mask_iou(&b, &a).unwrap());
            prop_assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn band_is_subset(m in random_mask(), d in 1usize..6) {
            let band = boundary_band(&m, d).unwrap();
            prop_assert!(band.iter_set().all(|(x, y)| m.get(x, y)));
        }

        #[test]
        fn nms_duplicate_of_kept_changes_nothing(
            masks in proptest::collection::vec(random_mask(), 1..6),
            scores in proptest::collection::vec(0.0f64..1.0, 6),
            thr in 0.0f64..0.99,
            pick in 0usize..6,
        ) {
            let props: Vec<_> = masks
                .into_iter()
                .zip(scores)
                .map(|(m, s)| MaskProposal::new(m, s).unwrap())
                .collect();
            let kept = nms_filter(&props, thr).unwrap();
            let dup = kept[pick % kept.len()].clone();
            let mut extended = props.clone();
            extended.push(dup);
            let kept2 = nms_filter(&extended, thr).unwrap();
            prop_assert_eq!(kept, kept2);
        }
    }

    fn brute_morph(m: &BinaryMask, r: usize, erode: bool) -> BinaryMask {
        let (w, h) = m.dims();
        let r = r as isize;
        BinaryMask::from_fn(w, h, |x, y| {
            let mut all = true;
            let mut any = false;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    let v = nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && m.get(nx as usize, ny as usize);
                    all &= v;
                    any |= v;
                }
            }
            if erode { all } else { any }
        })
        .unwrap()
    }

    proptest! {
        #[test]
        fn morphology_matches_window_scan(
            (w, h, bits) in (1usize..14, 1usize..14).prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(any::<bool>(), w * h))),
            r in 0usize..5,
        ) {
            let m = BinaryMask::new(w, h, bits).unwrap();
            prop_assert_eq!(dilate(&m, r), brute_morph(&m, r, false));
            prop_assert_eq!(erode(&m, r), brute_morph(&m, r, true));
        }
    }
}
