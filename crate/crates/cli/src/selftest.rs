//! Mock-oracle acceptance run: synthetic recovery, ablation ordering and
//! fast-path vs reference cross-checks.

use std::time::Instant;

use uosam_core::gro::{category_vote_fuse, GlobalProposalSet};
use uosam_core::lro::build_confidence_map;
use uosam_core::maskops::{connected_components, nms_filter, Connectivity};
use uosam_core::metrics::{confusion, delta_points, format_delta, miou, pixel_accuracy};
use uosam_core::reference::{brute_confidence, claim_simulator, flood_fill_components, greedy_nms, loop_miou_pacc};
use uosam_core::synth::{batch_specs, generate_scene, Corruption, SceneSpec, SplitMix64};
use uosam_core::{
    refine_image, BinaryMask, FeatureMap, ForegroundFeatureSet, LabelMap, MaskProposal, PipelineOptions,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelftestOptions {
    pub scenes: usize,
    pub instances: usize,
    pub seed: u64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            scenes: 50,
            instances: 200,
            seed: 0,
        }
    }
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn miou_of(preds: &[LabelMap], gts: &[LabelMap]) -> f64 {
    confusion(preds, gts, 256)
        .and_then(|cm| miou(&cm))
        .map(|(m, _)| m)
        .unwrap_or(f64::NAN)
}

fn corrupted() -> Corruption {
    Corruption {
        dilate_px: 3,
        boundary_noise_prob: 0.1,
        ..Default::default()
    }
}

fn refine_all(scenes: &[uosam_core::synth::SynthScene], opts: &PipelineOptions) -> Option<Vec<LabelMap>> {
    scenes
        .iter()
        .map(|s| {
            refine_image(&s.oracle.backend(), &s.image, &s.coarse, opts)
                .ok()
                .map(|o| o.label_map)
        })
        .collect()
}

fn recovery(o: &SelftestOptions) -> Vec<Check> {
    let specs = match batch_specs(o.seed, o.scenes, 128, 128, 1, 3, corrupted()) {
        Ok(s) => s,
        Err(e) => return vec![check("recovery", false, e.to_string())],
    };
    let started = Instant::now();
    let scenes: Result<Vec<_>, _> = specs.iter().map(generate_scene).collect();
    let scenes = match scenes {
        Ok(s) => s,
        Err(e) => return vec![check("recovery", false, e.to_string())],
    };
    let refined = refine_all(&scenes, &PipelineOptions::default());
    let elapsed = started.elapsed().as_secs_f64();
    let gts: Vec<_> = scenes.iter().map(|s| s.gt.clone()).collect();
    let coarse: Vec<_> = scenes.iter().map(|s| s.coarse.clone()).collect();
    let mut out = Vec::new();
    let (m_ref, m_coarse) = match &refined {
        Some(r) => (miou_of(r, &gts), miou_of(&coarse, &gts)),
        None => (f64::NAN, miou_of(&coarse, &gts)),
    };
    out.push(check(
        "exact recovery",
        m_ref == 1.0,
        format!("{} scenes, refined mIoU {m_ref:.6}", scenes.len()),
    ));
    out.push(check("runtime", elapsed < 30.0, format!("{elapsed:.2} s (limit 30 s)")));
    out.push(check(
        "improvement",
        m_ref >= m_coarse + 0.10,
        format!("coarse {m_coarse:.4} -> refined {m_ref:.4}"),
    ));

    let clean: Option<bool> = specs
        .iter()
        .map(|s| {
            let spec = s.clone().with_corruption(Corruption::default());
            let scene = generate_scene(&spec).ok()?;
            let out = refine_image(&scene.oracle.backend(), &scene.image, &scene.coarse, &PipelineOptions::default()).ok()?;
            Some(out.label_map == scene.gt)
        })
        .try_fold(true, |acc, ok| ok.map(|ok| acc && ok));
    out.push(check(
        "identity on clean input",
        clean == Some(true),
        format!("{} zero-corruption scenes", specs.len()),
    ));
    out
}

fn ablation(o: &SelftestOptions) -> Check {
    let n = o.scenes.clamp(1, 20);
    let scenes: Result<Vec<_>, _> = (0..n as u64)
        .map(|i| generate_scene(&SceneSpec::new(o.seed + 1000 + i, 128, 128, 3).with_corruption(corrupted())))
        .collect();
    let Ok(scenes) = scenes else {
        return check("ablation order", false, "scene generation failed".into());
    };
    let gts: Vec<_> = scenes.iter().map(|s| s.gt.clone()).collect();
    let coarse: Vec<_> = scenes.iter().map(|s| s.coarse.clone()).collect();
    let lro_only = PipelineOptions {
        enable_gro: false,
        ..Default::default()
    };
    let (Some(l), Some(lg)) = (refine_all(&scenes, &lro_only), refine_all(&scenes, &PipelineOptions::default())) else {
        return check("ablation order", false, "refinement failed".into());
    };
    let (b, l, lg) = (miou_of(&coarse, &gts), miou_of(&l, &gts), miou_of(&lg, &gts));
    check(
        "ablation order",
        b <= l && l <= lg,
        format!("baseline {b:.4} <= LRO {l:.4} <= LRO+GRO {lg:.4}"),
    )
}

fn random_mask(rng: &mut SplitMix64, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.chance(density)).expect("non-zero dims")
}

fn random_labels(rng: &mut SplitMix64, w: usize, h: usize, classes: usize) -> LabelMap {
    let labels = (0..w * h)
        .map(|_| if rng.chance(0.05) { 255 } else { rng.below(classes) as u8 })
        .collect();
    LabelMap::new(w, h, labels).expect("sized")
}

fn dims(rng: &mut SplitMix64) -> (usize, usize) {
    (1 + rng.below(12), 1 + rng.below(12))
}

fn equivalences(o: &SelftestOptions) -> Vec<Check> {
    let mut rng = SplitMix64::new(o.seed ^ 0xA5A5_5A5A);
    let n = o.instances;
    let mut cc_bad = 0;
    let mut nms_bad = 0;
    let mut metric_bad = 0;
    let mut conf_worst = 0f64;
    let mut fuse_bad = 0;
    for _ in 0..n {
        let (w, h) = dims(&mut rng);
        let density = rng.range_f64(0.1, 0.9);
        let mask = random_mask(&mut rng, w, h, density);
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let mut fast: Vec<Vec<(usize, usize)>> = connected_components(&mask, conn)
                .into_iter()
                .map(|c| {
                    let mut px: Vec<_> = c.mask.iter_set().collect();
                    px.sort_by_key(|&(x, y)| (y, x));
                    px
                })
                .collect();
            fast.sort();
            let mut slow = flood_fill_components(&mask, conn);
            slow.sort();
            cc_bad += (fast != slow) as usize;
        }

        let k = rng.below(8);
        let props: Vec<MaskProposal> = (0..k)
            .map(|_| {
                let score = rng.below(5) as f64 / 4.0;
                MaskProposal::new(random_mask(&mut rng, w, h, 0.5), score).expect("score in range")
            })
            .collect();
        let thr = rng.below(11) as f64 / 10.0;
        match nms_filter(&props, thr) {
            Ok(kept) => nms_bad += (kept != greedy_nms(&props, thr)) as usize,
            Err(_) => nms_bad += 1,
        }

        let classes = 1 + rng.below(5);
        let preds: Vec<_> = (0..2).map(|_| random_labels(&mut rng, w, h, classes)).collect();
        let gts: Vec<_> = (0..2).map(|_| random_labels(&mut rng, w, h, classes)).collect();
        let fast = confusion(&preds, &gts, classes).ok().map(|cm| {
            (miou(&cm).ok().map(|m| m.0), pixel_accuracy(&cm).ok())
        });
        metric_bad += (fast != Some(loop_miou_pacc(&preds, &gts, classes))) as usize;

        let (rows, cols, ch) = (1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(5));
        let data: Vec<f32> = (0..rows * cols * ch).map(|_| rng.range_f64(-2.0, 2.0) as f32).collect();
        let fm = FeatureMap::new(rows, cols, ch, data, 1.0, cols, rows).expect("valid features");
        let fg: Vec<Vec<f32>> = (0..1 + rng.below(6))
            .map(|_| (0..ch).map(|_| rng.range_f64(-2.0, 2.0) as f32).collect())
            .collect();
        match ForegroundFeatureSet::new(ch, &fg).and_then(|s| build_confidence_map(&fm, &s)) {
            Ok(map) => {
                for (a, b) in map.values().iter().zip(brute_confidence(&fm, &fg)) {
                    conf_worst = conf_worst.max((a - b).abs());
                }
            }
            Err(_) => conf_worst = f64::INFINITY,
        }

        let lro = random_labels(&mut rng, w, h, classes);
        let set = GlobalProposalSet { proposals: props };
        match category_vote_fuse(&set, &lro) {
            Ok(fused) => fuse_bad += (fused.labels() != claim_simulator(&set.proposals, &lro).as_slice()) as usize,
            Err(_) => fuse_bad += 1,
        }
    }
    vec![
        check("components vs flood fill", cc_bad == 0, format!("{n} instances, {cc_bad} mismatches")),
        check("nms vs greedy", nms_bad == 0, format!("{n} instances, {nms_bad} mismatches")),
        check("mIoU/pAcc vs loops", metric_bad == 0, format!("{n} instances, {metric_bad} mismatches")),
        check(
            "confidence map vs brute force",
            conf_worst <= 1e-6,
            format!("{n} instances, max |diff| {conf_worst:.2e}"),
        ),
        check("vote fusion vs claim simulator", fuse_bad == 0, format!("{n} instances, {fuse_bad} mismatches")),
    ]
}

/// Published baseline/refined pairs and the deltas they must print as.
pub const PUBLISHED_DELTAS: [(f64, f64, &str); 5] = [
    (29.2, 35.8, "+6.6"),
    (46.0, 48.2, "+2.2"),
    (50.0, 51.5, "+1.5"),
    (27.9, 29.0, "+1.1"),
    (32.4, 33.0, "+0.6"),
];

fn deltas() -> Check {
    let bad: Vec<String> = PUBLISHED_DELTAS
        .iter()
        .filter_map(|&(b, r, want)| {
            let got = format_delta(delta_points(b / 100.0, r / 100.0));
            (got != want).then(|| format!("{b}->{r} gave {got}"))
        })
        .collect();
    check(
        "published deltas",
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} pairs", PUBLISHED_DELTAS.len())
        } else {
            bad.join("; ")
        },
    )
}

pub fn run_selftest(o: &SelftestOptions) -> Vec<Check> {
    let mut checks = recovery(o);
    checks.push(ablation(o));
    checks.extend(equivalences(o));
    checks.push(deltas());
    checks
}
