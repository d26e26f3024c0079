//! Seeded synthetic scenes: disjoint flat-coloured shapes, their ground
//! truth, and a corrupted copy of it to use as coarse input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskops::{dilate, erode};
use crate::segmenter::OracleScene;
use crate::types::{BinaryMask, ClassId, Image, LabelMap};

/// SplitMix64. Constants: increment `0x9E3779B97F4A7C15`, multipliers
/// `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`, shifts 30/27/31.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Disk,
    Rectangle,
    Blob,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub dilate_px: usize,
    pub erode_px: usize,
    pub boundary_noise_prob: f64,
    pub drop_fragment_prob: f64,
}

impl Corruption {
    pub fn is_identity(&self) -> bool {
        self.dilate_px == 0
            && self.erode_px == 0
            && self.boundary_noise_prob == 0.0
            && self.drop_fragment_prob == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub object_count: usize,
    pub shapes: Vec<ShapeKind>,
    #[serde(default)]
    pub corruption: Corruption,
}

impl SceneSpec {
    pub fn new(seed: u64, width: usize, height: usize, object_count: usize) -> Self {
        Self {
            seed,
            width,
            height,
            object_count,
            shapes: vec![ShapeKind::Disk, ShapeKind::Rectangle, ShapeKind::Blob],
            corruption: Corruption::default(),
        }
    }

    pub fn with_corruption(mut self, corruption: Corruption) -> Self {
        self.corruption = corruption;
        self
    }

    pub fn with_shapes(mut self, shapes: Vec<ShapeKind>) -> Self {
        self.shapes = shapes;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub image: Image,
    pub gt: LabelMap,
    pub coarse: LabelMap,
    pub oracle: OracleScene,
}

/// Placement attempts per object before giving up.
pub const MAX_ATTEMPTS: usize = 500;
/// Minimum background gap between objects, in pixels.
pub const SEPARATION_PX: usize = 2;

fn disk_mask(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        dx * dx + dy * dy <= r * r
    })
    .expect("canvas is valid")
}

fn draw_shape(rng: &mut SplitMix64, kind: ShapeKind, w: usize, h: usize, r: f64) -> BinaryMask {
    let margin = r + 1.0;
    let cx = rng.range_f64(margin, (w as f64 - margin).max(margin + 1e-9));
    let cy = rng.range_f64(margin, (h as f64 - margin).max(margin + 1e-9));
    match kind {
        ShapeKind::Disk => disk_mask(w, h, cx, cy, r),
        ShapeKind::Rectangle => {
            let hw = rng.range_f64(0.6, 1.0) * r;
            let hh = rng.range_f64(0.6, 1.0) * r;
            BinaryMask::from_fn(w, h, |x, y| {
                (x as f64 - cx).abs() <= hw && (y as f64 - cy).abs() <= hh
            })
            .expect("canvas is valid")
        }
        ShapeKind::Blob => {
            let core = 0.6 * r;
            let lobes: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    let angle = rng.range_f64(0.0, std::f64::consts::TAU);
                    let lr = rng.range_f64(0.3, 0.4) * r;
                    let dist = r - lr;
                    (cx + dist * angle.cos(), cy + dist * angle.sin(), lr)
                })
                .collect();
            BinaryMask::from_fn(w, h, |x, y| {
                let (px, py) = (x as f64, y as f64);
                let inside = |ox: f64, oy: f64, rr: f64| {
                    (px - ox).powi(2) + (py - oy).powi(2) <= rr * rr
                };
                inside(cx, cy, core) || lobes.iter().any(|&(ox, oy, lr)| {
                    // lobe joined to the core by its own disk plus a midpoint disk
                    inside(ox, oy, lr) || inside((ox + cx) / 2.0, (oy + cy) / 2.0, lr)
                })
            })
            .expect("canvas is valid")
        }
    }
}

/// Places `spec.object_count` disjoint objects; object `k` gets class `k`.
pub fn place_objects(spec: &SceneSpec, rng: &mut SplitMix64) -> Result<Vec<(ClassId, BinaryMask)>> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidDimensions(format!("{w}x{h}")));
    }
    if spec.object_count == 0 || spec.object_count > 254 {
        return Err(Error::InvalidArgument(format!(
            "object count {} outside 1..=254",
            spec.object_count
        )));
    }
    if spec.shapes.is_empty() {
        return Err(Error::InvalidArgument("no shape kinds to draw from".into()));
    }
    let side = w.min(h) as f64;
    let (r_lo, r_hi) = ((side / 10.0).max(1.0), (side / 6.0).max(1.5));
    let mut occupied = BinaryMask::empty(w, h)?;
    let mut objects = Vec::with_capacity(spec.object_count);
    for index in 0..spec.object_count {
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let kind = spec.shapes[rng.below(spec.shapes.len())];
            let r = rng.range_f64(r_lo, r_hi);
            let mask = draw_shape(rng, kind, w, h, r);
            if mask.is_empty() {
                continue;
            }
            let halo = dilate(&mask, SEPARATION_PX);
            if halo.bits().iter().zip(occupied.bits()).any(|(&a, &b)| a && b) {
                continue;
            }
            placed = Some(mask);
            break;
        }
        let mask = placed.ok_or(Error::PlacementFailure {
            index,
            attempts: MAX_ATTEMPTS,
        })?;
        occupied = occupied.union(&mask)?;
        objects.push(((index + 1) as ClassId, mask));
    }
    Ok(objects)
}

/// Pixels within Euclidean distance `radius` of `mask`.
pub fn euclidean_dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let r = radius as isize;
    let r2 = r * r;
    let mut out = mask.clone();
    for (x, y) in mask.iter_set() {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

/// Grows every object into nearby background by Euclidean distance; each
/// background pixel goes to its nearest object (ties to the smaller class).
fn grow_objects(gt: &LabelMap, radius: usize) -> Vec<ClassId> {
    let (w, h) = gt.dims();
    let src = gt.labels();
    let mut out = src.to_vec();
    let r = radius as isize;
    for y in 0..h {
        for x in 0..w {
            if src[y * w + x] != 0 {
                continue;
            }
            let mut best: Option<(isize, ClassId)> = None;
            for dy in -r..=r {
                for dx in -r..=r {
                    let d2 = dx * dx + dy * dy;
                    if d2 > r * r {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let c = src[ny as usize * w + nx as usize];
                    if c == 0 || gt.is_ignored(c) {
                        continue;
                    }
                    if best.map_or(true, |(bd, bc)| d2 < bd || (d2 == bd && c < bc)) {
                        best = Some((d2, c));
                    }
                }
            }
            if let Some((_, c)) = best {
                out[y * w + x] = c;
            }
        }
    }
    out
}

/// GT pixel closest to the object's centroid (first in row-major order on ties).
pub fn centroid_pixel(mask: &BinaryMask) -> Option<(usize, usize)> {
    let n = mask.count();
    if n == 0 {
        return None;
    }
    let (sx, sy) = mask
        .iter_set()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x as f64, b + y as f64));
    let (cx, cy) = (sx / n as f64, sy / n as f64);
    mask.iter_set().min_by(|&(ax, ay), &(bx, by)| {
        let da = (ax as f64 - cx).powi(2) + (ay as f64 - cy).powi(2);
        let db = (bx as f64 - cx).powi(2) + (by as f64 - cy).powi(2);
        da.total_cmp(&db)
    })
}

/// Applies `c` to `gt`: grow, shrink, boundary noise, fragment drop, then
/// make sure every object keeps at least one pixel.
pub fn corrupt(
    gt: &LabelMap,
    objects: &[(ClassId, BinaryMask)],
    c: &Corruption,
    rng: &mut SplitMix64,
) -> Result<LabelMap> {
    for p in [c.boundary_noise_prob, c.drop_fragment_prob] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
    }
    let (w, h) = gt.dims();
    let mut labels = if c.dilate_px > 0 {
        grow_objects(gt, c.dilate_px)
    } else {
        gt.labels().to_vec()
    };

    if c.erode_px > 0 {
        for (class, _) in objects {
            let current = BinaryMask::new(w, h, labels.iter().map(|l| l == class).collect())?;
            let kept = erode(&current, c.erode_px);
            for (i, (&was, &now)) in current.bits().iter().zip(kept.bits()).enumerate() {
                if was && !now {
                    labels[i] = 0;
                }
            }
        }
    }

    if c.boundary_noise_prob > 0.0 {
        // where each class may appear at all
        let allowed: Vec<(ClassId, BinaryMask)> = objects
            .iter()
            .map(|(k, m)| (*k, euclidean_dilate(m, c.dilate_px)))
            .collect();
        let may_take = |label: ClassId, x: usize, y: usize| {
            label == 0
                || allowed
                    .iter()
                    .any(|(k, m)| *k == label && m.get(x, y))
        };
        let snapshot = labels.clone();
        for y in 0..h {
            for x in 0..w {
                let own = snapshot[y * w + x];
                let mut differing = Vec::with_capacity(4);
                let mut consider = |nx: usize, ny: usize| {
                    let l = snapshot[ny * w + nx];
                    if l != own && !differing.contains(&l) {
                        differing.push(l);
                    }
                };
                if x > 0 {
                    consider(x - 1, y);
                }
                if x + 1 < w {
                    consider(x + 1, y);
                }
                if y > 0 {
                    consider(x, y - 1);
                }
                if y + 1 < h {
                    consider(x, y + 1);
                }
                if differing.is_empty() || !rng.chance(c.boundary_noise_prob) {
                    continue;
                }
                let pick = differing[rng.below(differing.len())];
                if may_take(pick, x, y) {
                    labels[y * w + x] = pick;
                }
            }
        }
    }

    if c.drop_fragment_prob > 0.0 {
        for (class, gt_mask) in objects {
            if !rng.chance(c.drop_fragment_prob) {
                continue;
            }
            let (cx, cy) = centroid_pixel(gt_mask).expect("objects are non-empty");
            for y in cy..h {
                for x in cx..w {
                    if labels[y * w + x] == *class {
                        labels[y * w + x] = 0;
                    }
                }
            }
        }
    }

    for (class, gt_mask) in objects {
        if !labels.contains(class) {
            let (x, y) = centroid_pixel(gt_mask).expect("objects are non-empty");
            labels[y * w + x] = *class;
        }
    }
    Ok(LabelMap::new(w, h, labels)?.with_ignore_id(gt.ignore_id()))
}

/// Deterministic scene for `spec`: rendered image, ground truth, corrupted
/// coarse map and the matching oracle scene.
pub fn generate_scene(spec: &SceneSpec) -> Result<SynthScene> {
    let mut rng = SplitMix64::new(spec.seed);
    let objects = place_objects(spec, &mut rng)?;
    let oracle = OracleScene::new(spec.width, spec.height, objects)?;
    let gt = oracle.label_map();
    let coarse = corrupt(&gt, &oracle.objects, &spec.corruption, &mut rng)?;
    Ok(SynthScene {
        image: oracle.image.clone(),
        gt,
        coarse,
        oracle,
    })
}

/// Specs for a numbered batch of scenes. Scene `i` uses seed `seed + i`
/// and an object count drawn from `min_objects..=max_objects`.
pub fn batch_specs(
    seed: u64,
    count: usize,
    width: usize,
    height: usize,
    min_objects: usize,
    max_objects: usize,
    corruption: Corruption,
) -> Result<Vec<SceneSpec>> {
    if min_objects == 0 || min_objects > max_objects {
        return Err(Error::InvalidArgument(format!(
            "object range {min_objects}..={max_objects} is empty or starts at 0"
        )));
    }
    let mut counts = SplitMix64::new(seed ^ 0x5EED_C0DE);
    Ok((0..count)
        .map(|i| {
            let n = min_objects + counts.below(max_objects - min_objects + 1);
            SceneSpec::new(seed.wrapping_add(i as u64), width, height, n).with_corruption(corruption)
        })
        .collect())
}
