//! Deterministic geometric stand-in for a promptable segmenter.
//!
//! Images are flat-coloured scenes whose colours come from [`palette_color`].
//! `embed` turns every feature cell into the one-hot vector of the class
//! under the cell centre, and `decode` reads object masks straight back out
//! of those vectors, so the whole backend is a pure function of its inputs.
//!
//! Decode rules, applied to the objects (foreground classes) of the embedding:
//! 1. objects containing a negative point are vetoed;
//! 2. the first positive point lying on a non-vetoed object selects it;
//! 3. otherwise the non-vetoed object with the highest IoU against the box
//!    prompt (then the mask prompt) is selected, if that IoU is positive;
//! 4. otherwise the request fails with [`Error::NoObject`].
//!
//! Proposal `k` is the selected mask eroded by `k` pixels, scored `1 - 0.1k`.

use crate::error::{Error, Result};
use crate::maskops::erode;
use crate::types::{BinaryMask, ClassId, FeatureMap, Image, LabelMap, MaskProposal, Polarity};

use super::{DecodeRequest, SegmenterBackend};

/// Colour used to render class `class` in synthetic scenes. The red channel
/// carries the class ID, which makes the palette injective.
pub fn palette_color(class: ClassId) -> [u8; 3] {
    let k = class as u32;
    [class, ((k * 73 + 40) % 256) as u8, ((k * 151 + 90) % 256) as u8]
}

/// Inverse of [`palette_color`]; colours outside the palette map to background.
pub fn class_of_color(rgb: [u8; 3]) -> ClassId {
    if palette_color(rgb[0]) == rgb {
        rgb[0]
    } else {
        0
    }
}

/// Score of the `k`-th proposal in the oracle's ladder.
pub fn ladder_score(k: usize) -> f64 {
    (1.0 - 0.1 * k as f64).max(0.0)
}

#[derive(Clone, Debug)]
pub struct MockOracle {
    num_classes: usize,
    stride: usize,
}

impl MockOracle {
    /// `num_classes` foreground classes (IDs `1..=num_classes`); embeddings
    /// carry `num_classes + 1` channels.
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn channels(&self) -> usize {
        self.num_classes + 1
    }

    fn class_at(&self, image: &Image, x: usize, y: usize) -> usize {
        let c = class_of_color(image.pixel(x, y)) as usize;
        if c > self.num_classes {
            0
        } else {
            c
        }
    }
}

/// Per-cell argmax of a feature map (lowest channel wins ties).
fn cell_labels(features: &FeatureMap) -> Vec<usize> {
    features
        .data()
        .chunks_exact(features.channels())
        .map(|v| {
            let mut best = 0;
            for (i, &x) in v.iter().enumerate() {
                if x > v[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Image-resolution label raster implied by a mock embedding.
fn pixel_labels(features: &FeatureMap) -> (usize, usize, Vec<usize>) {
    let cells = cell_labels(features);
    let (w, h) = features.image_dims();
    let cols = features.cols();
    let col_of: Vec<usize> = (0..w).map(|x| features.cell_of_pixel(x, 0).1).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &cells[features.cell_of_pixel(0, y).0 * cols..];
        out.extend(col_of.iter().map(|&c| row[c]));
    }
    (w, h, out)
}

impl SegmenterBackend for MockOracle {
    fn name(&self) -> &str {
        "mock-oracle"
    }

    fn max_concurrent_requests(&self) -> usize {
        usize::MAX
    }

    fn embed(&self, image: &Image) -> Result<FeatureMap> {
        let (w, h) = image.dims();
        let s = self.stride;
        let rows = h.div_ceil(s);
        let cols = w.div_ceil(s);
        let channels = self.channels();
        let mut data = vec![0f32; rows * cols * channels];
        for r in 0..rows {
            for c in 0..cols {
                let y = ((2 * r + 1) * s / 2).min(h - 1);
                let x = ((2 * c + 1) * s / 2).min(w - 1);
                data[(r * cols + c) * channels + self.class_at(image, x, y)] = 1.0;
            }
        }
        FeatureMap::new(rows, cols, channels, data, s as f64, w, h)
    }

    fn decode(&self, req: &DecodeRequest<'_>) -> Result<Vec<MaskProposal>> {
        req.validate()?;
        let (w, h, labels) = pixel_labels(req.features);
        let label_at = |x: usize, y: usize| labels[y * w + x];
        let prompts = &req.prompts;

        let vetoed: Vec<usize> = prompts
            .points
            .iter()
            .filter(|p| p.polarity == Polarity::Negative)
            .map(|p| label_at(p.x, p.y))
            .filter(|&c| c != 0)
            .collect();
        let allowed = |c: usize| c != 0 && !vetoed.contains(&c);

        let mut chosen = prompts
            .points
            .iter()
            .filter(|p| p.polarity == Polarity::Positive)
            .map(|p| label_at(p.x, p.y))
            .find(|&c| allowed(c));

        let region_match = |region: &dyn Fn(usize, usize) -> bool| -> Option<usize> {
            let channels = req.features.channels();
            let mut inter = vec![0usize; channels];
            let mut area = vec![0usize; channels];
            let mut region_area = 0usize;
            for y in 0..h {
                for x in 0..w {
                    let c = label_at(x, y);
                    area[c] += 1;
                    if region(x, y) {
                        region_area += 1;
                        inter[c] += 1;
                    }
                }
            }
            let mut best: Option<(usize, f64)> = None;
            for c in (1..channels).filter(|&c| allowed(c)) {
                if inter[c] == 0 {
                    continue;
                }
                let iou = inter[c] as f64 / (area[c] + region_area - inter[c]) as f64;
                if best.map_or(true, |(_, b)| iou > b) {
                    best = Some((c, iou));
                }
            }
            best.map(|(c, _)| c)
        };

        if chosen.is_none() {
            if let Some(b) = &prompts.box_prompt {
                chosen = region_match(&|x, y| b.contains(x, y));
            }
        }
        if chosen.is_none() {
            if let Some(m) = &prompts.mask_prompt {
                chosen = region_match(&|x, y| m.get(x, y));
            }
        }
        let class = chosen.ok_or(Error::NoObject)?;

        let bits = labels.iter().map(|&l| l == class).collect();
        let mask = BinaryMask::new(w, h, bits)?;
        (0..req.proposals_requested)
            .map(|k| MaskProposal::new(erode(&mask, k), ladder_score(k)))
            .collect()
    }
}

/// Ground-truth objects plus the image rendered from them.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleScene {
    pub objects: Vec<(ClassId, BinaryMask)>,
    pub image: Image,
}

impl OracleScene {
    /// Renders `objects` over a background of class 0. Masks must be pairwise
    /// disjoint, share the canvas size, and carry distinct non-zero classes.
    pub fn new(width: usize, height: usize, objects: Vec<(ClassId, BinaryMask)>) -> Result<Self> {
        let mut image = Image::filled(width, height, palette_color(0))?;
        let mut owner: Vec<Option<ClassId>> = vec![None; width * height];
        for (i, (class, mask)) in objects.iter().enumerate() {
            if *class == 0 || *class == crate::types::DEFAULT_IGNORE {
                return Err(Error::InvalidArgument(format!(
                    "object class {class} is reserved"
                )));
            }
            if objects[..i].iter().any(|(c, _)| c == class) {
                return Err(Error::InvalidArgument(format!("duplicate object class {class}")));
            }
            if mask.dims() != (width, height) {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    found: mask.dims(),
                });
            }
            for (x, y) in mask.iter_set() {
                let slot = &mut owner[y * width + x];
                if let Some(other) = slot {
                    return Err(Error::InvalidArgument(format!(
                        "objects {other} and {class} overlap at ({x}, {y})"
                    )));
                }
                *slot = Some(*class);
                image.set_pixel(x, y, palette_color(*class));
            }
        }
        Ok(Self { objects, image })
    }

    pub fn label_map(&self) -> LabelMap {
        let (w, h) = self.image.dims();
        let mut labels = vec![0; w * h];
        for (class, mask) in &self.objects {
            for (x, y) in mask.iter_set() {
                labels[y * w + x] = *class;
            }
        }
        LabelMap::new(w, h, labels).expect("scene dimensions are valid")
    }

    pub fn max_class(&self) -> usize {
        self.objects.iter().map(|(c, _)| *c as usize).max().unwrap_or(0)
    }

    /// Mock backend able to see every class of this scene.
    pub fn backend(&self) -> MockOracle {
        MockOracle::new(self.max_class())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BoxPrompt, PointPrompt, PromptSet};

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        })
        .unwrap()
    }

    fn two_object_scene() -> OracleScene {
        OracleScene::new(
            40,
            30,
            vec![
                (1, disk(40, 30, 10.0, 12.0, 6.0)),
                (2, BinaryMask::from_fn(40, 30, |x, y| (25..35).contains(&x) && (5..20).contains(&y)).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn palette_is_injective() {
        for a in 0..=255u8 {
            assert_eq!(class_of_color(palette_color(a)), a);
        }
        assert_eq!(class_of_color([3, 0, 0]), 0);
    }

    #[test]
    fn embed_is_one_hot() {
        let scene = two_object_scene();
        let oracle = scene.backend();
        let fm = oracle.embed(&scene.image).unwrap();
        assert_eq!(fm.channels(), 3);
        assert_eq!((fm.rows(), fm.cols()), (30, 40));
        assert_eq!(fm.vector(12, 10), &[0.0, 1.0, 0.0]);
        assert_eq!(fm.vector(10, 30), &[0.0, 0.0, 1.0]);
        assert_eq!(fm.vector(0, 0), &[1.0, 0.0, 0.0]);
        assert_eq!(fm, oracle.embed(&scene.image).unwrap());
    }

    #[test]
    fn positive_point_selects_object() {
        let scene = two_object_scene();
        let oracle = scene.backend();
        let fm = oracle.embed(&scene.image).unwrap();
        let req = DecodeRequest::new(&fm, PromptSet::point(PointPrompt::positive(10, 12)));
        let out = oracle.decode(&req).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].mask, scene.objects[0].1);
        assert_eq!(out[0].score, 1.0);
        assert!(out[1].score < out[0].score && out[2].score < out[1].score);
        assert!(out[1].mask.count() < out[0].mask.count());
    }

    #[test]
    fn box_rule_on_background_point() {
        let scene = two_object_scene();
        let oracle = scene.backend();
        let fm = oracle.embed(&scene.image).unwrap();
        let prompts = PromptSet::new(
            vec![PointPrompt::positive(0, 0)],
            Some(BoxPrompt::new(25, 5, 34, 19).unwrap()),
            None,
        )
        .unwrap();
        let out = oracle.decode(&DecodeRequest::new(&fm, prompts)).unwrap();
        assert_eq!(out[0].mask, scene.objects[1].1);
    }

    #[test]
    fn negative_point_vetoes() {
        let scene = two_object_scene();
        let oracle = scene.backend();
        let fm = oracle.embed(&scene.image).unwrap();
        let prompts = PromptSet::new(
            vec![PointPrompt::positive(10, 12), PointPrompt::negative(11, 12)],
            None,
            None,
        )
        .unwrap();
        assert!(matches!(
            oracle.decode(&DecodeRequest::new(&fm, prompts)),
            Err(Error::NoObject)
        ));
        let bg = PromptSet::point(PointPrompt::positive(0, 29));
        assert!(matches!(
            oracle.decode(&DecodeRequest::new(&fm, bg)),
            Err(Error::NoObject)
        ));
    }

    #[test]
    fn rejects_out_of_bounds_prompts() {
        let scene = two_object_scene();
        let oracle = scene.backend();
        let fm = oracle.embed(&scene.image).unwrap();
        let req = DecodeRequest::new(&fm, PromptSet::point(PointPrompt::positive(40, 0)));
        assert!(oracle.decode(&req).is_err());
        let req = DecodeRequest::new(&fm, PromptSet::point(PointPrompt::positive(1, 1)))
            .with_proposals(0);
        assert!(oracle.decode(&req).is_err());
    }

    #[test]
    fn strided_embedding_geometry() {
        let scene = two_object_scene();
        let oracle = scene.backend().with_stride(4);
        let fm = oracle.embed(&scene.image).unwrap();
        assert_eq!((fm.rows(), fm.cols()), (8, 10));
        assert_eq!(fm.image_dims(), (40, 30));
        let req = DecodeRequest::new(&fm, PromptSet::point(PointPrompt::positive(10, 12)));
        let out = oracle.decode(&req).unwrap();
        assert_eq!(out[0].mask.dims(), (40, 30));
        assert!(out[0].mask.get(10, 12));
    }

    #[test]
    fn scene_rejects_overlap_and_duplicates() {
        let a = disk(20, 20, 8.0, 8.0, 4.0);
        assert!(OracleScene::new(20, 20, vec![(1, a.clone()), (2, a.clone())]).is_err());
        let b = disk(20, 20, 16.0, 16.0, 2.0);
        assert!(OracleScene::new(20, 20, vec![(1, a.clone()), (1, b.clone())]).is_err());
        assert!(OracleScene::new(20, 20, vec![(0, a)]).is_err());
    }
}
