//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any criterion fails.
//!
//! The oracles below are deliberately naive and share no code with the
//! library beyond the data types.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;
use std::path::Path;
use std::time::Instant;

use uosam_cli::commands::refine::run_refine;
use uosam_cli::commands::synth::{run_synth, SynthArgs};
use uosam_cli::config::PipelineConfig;
use uosam_cli::io::read_label_map;

use uosam_core::gro::{category_vote_fuse, generate_grid, GlobalProposalSet};
use uosam_core::lro::build_confidence_map;
use uosam_core::maskops::{connected_components, nms_filter, Connectivity};
use uosam_core::metrics::{
    confusion, evaluate, format_delta, miou, pixel_accuracy, report_delta, EvalOptions, EvalReport,
};
use uosam_core::segmenter::framing::{encode_frame, read_frame, FrameError};
use uosam_core::synth::{generate_scene, Corruption, SceneSpec, SplitMix64};
use uosam_core::{
    refine_image, BinaryMask, FeatureMap, ForegroundFeatureSet, GridSpec, LabelMap, MaskProposal,
    PipelineOptions,
};

const IGNORE: u8 = 255;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        name,
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- oracles

/// Per-class IoU and pixel accuracy by direct counting. Ground-truth ignore
/// pixels are skipped, predicted ignore pixels count as background.
fn oracle_miou_pacc(preds: &[LabelMap], gts: &[LabelMap]) -> (Option<f64>, Option<f64>) {
    let mut inter: BTreeMap<u8, u64> = BTreeMap::new();
    let mut union: BTreeMap<u8, u64> = BTreeMap::new();
    let (mut hit, mut total) = (0u64, 0u64);
    for (p, g) in preds.iter().zip(gts) {
        for i in 0..g.labels().len() {
            let gl = g.labels()[i];
            if gl == IGNORE {
                continue;
            }
            let pl = match p.labels()[i] {
                IGNORE => 0,
                l => l,
            };
            total += 1;
            if pl == gl {
                hit += 1;
                *inter.entry(gl).or_default() += 1;
                *union.entry(gl).or_default() += 1;
            } else {
                *union.entry(gl).or_default() += 1;
                *union.entry(pl).or_default() += 1;
            }
        }
    }
    let ious: Vec<f64> = union
        .iter()
        .map(|(c, &u)| *inter.get(c).unwrap_or(&0) as f64 / u as f64)
        .collect();
    (
        (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64),
        (total > 0).then(|| hit as f64 / total as f64),
    )
}

/// Components by breadth-first search, as sets of pixel sets.
fn oracle_components(mask: &BinaryMask, eight: bool) -> BTreeSet<BTreeSet<(usize, usize)>> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut out = BTreeSet::new();
    for start in 0..w * h {
        if seen[start] || !mask.bits()[start] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            comp.insert((x as usize, y as usize));
            for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)]
                .into_iter()
                .take(if eight { 8 } else { 4 })
            {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits()[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        out.insert(comp);
    }
    out
}

fn oracle_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let inter = a.bits().iter().zip(b.bits()).filter(|(p, q)| **p && **q).count();
    let union = a.bits().iter().zip(b.bits()).filter(|(p, q)| **p || **q).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Indices by descending score, ties in input order.
fn score_order(props: &[MaskProposal]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..props.len()).collect();
    idx.sort_by(|&a, &b| props[b].score.partial_cmp(&props[a].score).unwrap().then(a.cmp(&b)));
    idx
}

fn oracle_nms(props: &[MaskProposal], thr: f64) -> Vec<MaskProposal> {
    let mut kept: Vec<MaskProposal> = Vec::new();
    for i in score_order(props) {
        if kept.iter().all(|k| oracle_iou(&k.mask, &props[i].mask) <= thr) {
            kept.push(props[i].clone());
        }
    }
    kept
}

/// Mean of plain cosine similarities, zero-norm pairs contributing 0.
fn oracle_confidence(fm: &FeatureMap, fg: &[Vec<f32>]) -> Vec<f64> {
    let cos = |a: &[f32], b: &[f32]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    };
    let mut out = Vec::new();
    for r in 0..fm.rows() {
        for c in 0..fm.cols() {
            let v = fm.vector(r, c);
            out.push(fg.iter().map(|l| cos(v, l)).sum::<f64>() / fg.len() as f64);
        }
    }
    out
}

/// Pixel-by-pixel vote fusion: each non-ignore pixel takes the majority
/// label of the first proposal (by score) that covers it and has a vote.
fn oracle_fuse(props: &[MaskProposal], map: &LabelMap) -> Vec<u8> {
    let order = score_order(props);
    let vote = |i: usize| -> Option<u8> {
        let mut counts = [0usize; 256];
        for (x, y) in props[i].mask.iter_set() {
            let l = map.get(x, y);
            if l != IGNORE {
                counts[l as usize] += 1;
            }
        }
        let best = *counts.iter().max().unwrap();
        (best > 0).then(|| counts.iter().position(|&n| n == best).unwrap() as u8)
    };
    let votes: Vec<Option<u8>> = order.iter().map(|&i| vote(i)).collect();
    let (w, h) = map.dims();
    let mut out = map.labels().to_vec();
    for y in 0..h {
        for x in 0..w {
            if map.get(x, y) == IGNORE {
                continue;
            }
            for (k, &i) in order.iter().enumerate() {
                if let (true, Some(l)) = (props[i].mask.get(x, y), votes[k]) {
                    out[y * w + x] = l;
                    break;
                }
            }
        }
    }
    out
}

// -------------------------------------------------------------- fixtures

fn rand_mask(rng: &mut SplitMix64, w: usize, h: usize, p: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.chance(p)).unwrap()
}

fn rand_labels(rng: &mut SplitMix64, w: usize, h: usize, classes: usize, ignore_p: f64) -> LabelMap {
    let labels = (0..w * h)
        .map(|_| if rng.chance(ignore_p) { IGNORE } else { rng.below(classes) as u8 })
        .collect();
    LabelMap::new(w, h, labels).unwrap()
}

fn read_maps(dir: &Path, names: &[String], suffix: &str) -> Vec<LabelMap> {
    names
        .iter()
        .map(|n| read_label_map(&dir.join(format!("{n}{suffix}.png")), IGNORE).unwrap())
        .collect()
}

fn corrupted() -> Corruption {
    Corruption {
        dilate_px: 3,
        boundary_noise_prob: 0.1,
        ..Default::default()
    }
}

// ------------------------------------------------------------ criteria

/// Recovery, identity and improvement through the `refine` command.
fn recovery_and_improvement() -> Vec<Outcome> {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let out = root.path().join("out");
    let args = SynthArgs {
        seed: 2024,
        count: 50,
        width: 128,
        height: 128,
        min_objects: 1,
        max_objects: 3,
        corruption: corrupted(),
    };
    let manifest = run_synth(&args, &data).unwrap();
    let names: Vec<String> = manifest
        .entries
        .iter()
        .map(|e| e.image.trim_end_matches(".png").to_string())
        .collect();
    let object_counts: BTreeSet<usize> = read_maps(&data, &names, "_gt")
        .iter()
        .map(|g| g.foreground_classes().len())
        .collect();

    let cfg = PipelineConfig {
        backend: "mock".into(),
        workers: 1,
        ..Default::default()
    };
    let started = Instant::now();
    let summary = run_refine(&cfg, &data, &out).unwrap();
    let secs = started.elapsed().as_secs_f64();

    let gts = read_maps(&data, &names, "_gt");
    let coarse = read_maps(&data, &names, "_coarse");
    let refined = read_maps(&out, &names, "");
    let (m_ref, _) = oracle_miou_pacc(&refined, &gts);
    let (m_coarse, _) = oracle_miou_pacc(&coarse, &gts);
    let (m_ref, m_coarse) = (m_ref.unwrap(), m_coarse.unwrap());

    let clean_data = root.path().join("clean");
    let clean_out = root.path().join("clean_out");
    run_synth(
        &SynthArgs {
            corruption: Corruption::default(),
            ..args
        },
        &clean_data,
    )
    .unwrap();
    run_refine(&cfg, &clean_data, &clean_out).unwrap();
    let identical = read_maps(&clean_out, &names, "") == read_maps(&clean_data, &names, "_gt");

    vec![
        outcome(
            "oracle exact recovery",
            summary.all_ok() && m_ref == 1.0 && refined == gts,
            format!(
                "{} scenes 128x128, objects per scene {object_counts:?}, refined mIoU {m_ref:.6}",
                names.len()
            ),
        ),
        outcome(
            "zero corruption is identity",
            identical,
            format!("{} clean scenes reproduce ground truth exactly", names.len()),
        ),
        outcome("single-threaded runtime", secs < 30.0, format!("{secs:.2} s for 50 scenes (limit 30 s)")),
        outcome(
            "monotone improvement",
            m_ref >= m_coarse + 0.10,
            format!("coarse mIoU {m_coarse:.4} -> refined {m_ref:.4} (need +0.10)"),
        ),
    ]
}

fn ablation_order() -> Outcome {
    let scenes: Vec<_> = (0..20)
        .map(|i| generate_scene(&SceneSpec::new(7000 + i, 128, 128, 3).with_corruption(corrupted())).unwrap())
        .collect();
    let run = |lro: bool, gro: bool| -> f64 {
        let opts = PipelineOptions {
            enable_lro: lro,
            enable_gro: gro,
            ..Default::default()
        };
        let maps: Vec<LabelMap> = scenes
            .iter()
            .map(|s| refine_image(&s.oracle.backend(), &s.image, &s.coarse, &opts).unwrap().label_map)
            .collect();
        let gts: Vec<LabelMap> = scenes.iter().map(|s| s.gt.clone()).collect();
        oracle_miou_pacc(&maps, &gts).0.unwrap()
    };
    let (base, lro, gro, both) = (run(false, false), run(true, false), run(false, true), run(true, true));
    outcome(
        "ablation ordering",
        base <= lro && lro <= both && base <= gro && gro <= both,
        format!("3-object scenes: baseline {base:.4} <= LRO {lro:.4} <= LRO+GRO {both:.4}; GRO alone {gro:.4}"),
    )
}

fn equivalences() -> Vec<Outcome> {
    const N: usize = 250;
    let mut rng = SplitMix64::new(0xACCE_97);
    let dims = |rng: &mut SplitMix64| (1 + rng.below(16), 1 + rng.below(16));

    let mut bad = 0;
    for _ in 0..N {
        let (w, h) = dims(&mut rng);
        let p = rng.range_f64(0.1, 0.9);
        let m = rand_mask(&mut rng, w, h, p);
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let fast: BTreeSet<BTreeSet<(usize, usize)>> = connected_components(&m, conn)
                .iter()
                .map(|c| c.mask.iter_set().collect())
                .collect();
            bad += (fast != oracle_components(&m, eight)) as usize;
        }
    }
    let cc = outcome("components vs flood fill", bad == 0, format!("{N} masks x 2 connectivities, {bad} mismatches"));

    let mut bad = 0;
    for _ in 0..N {
        let (w, h) = dims(&mut rng);
        let props: Vec<MaskProposal> = (0..rng.below(10))
            .map(|_| {
                let p = rng.range_f64(0.0, 0.8);
                let m = rand_mask(&mut rng, w, h, p);
                MaskProposal::new(m, rng.below(6) as f64 / 5.0).unwrap()
            })
            .collect();
        let thr = rng.below(21) as f64 / 20.0;
        bad += (nms_filter(&props, thr).unwrap() != oracle_nms(&props, thr)) as usize;
    }
    let nms = outcome("nms vs greedy", bad == 0, format!("{N} proposal sets, {bad} mismatches"));

    let mut bad = 0;
    for _ in 0..N {
        let (w, h) = dims(&mut rng);
        let classes = 1 + rng.below(6);
        let n = 1 + rng.below(3);
        let preds: Vec<_> = (0..n).map(|_| rand_labels(&mut rng, w, h, classes, 0.05)).collect();
        let gts: Vec<_> = (0..n).map(|_| rand_labels(&mut rng, w, h, classes, 0.1)).collect();
        let cm = confusion(&preds, &gts, classes).unwrap();
        let fast = (miou(&cm).ok().map(|m| m.0), pixel_accuracy(&cm).ok());
        let slow = oracle_miou_pacc(&preds, &gts);
        let same = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => x == y,
            (None, None) => true,
            _ => false,
        };
        bad += !(same(fast.0, slow.0) && same(fast.1, slow.1)) as usize;
    }
    let metrics = outcome("mIoU/pAcc vs pixel loops", bad == 0, format!("{N} batches, {bad} mismatches"));

    let mut worst = 0f64;
    for _ in 0..N {
        let (rows, cols, ch) = (1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(8));
        let data: Vec<f32> = (0..rows * cols * ch)
            .map(|_| if rng.chance(0.1) { 0.0 } else { rng.range_f64(-3.0, 3.0) as f32 })
            .collect();
        let fm = FeatureMap::new(rows, cols, ch, data, 1.0, cols, rows).unwrap();
        let fg: Vec<Vec<f32>> = (0..1 + rng.below(10))
            .map(|_| (0..ch).map(|_| rng.range_f64(-3.0, 3.0) as f32).collect())
            .collect();
        let map = build_confidence_map(&fm, &ForegroundFeatureSet::new(ch, &fg).unwrap()).unwrap();
        for (a, b) in map.values().iter().zip(oracle_confidence(&fm, &fg)) {
            worst = worst.max((a - b).abs());
        }
    }
    let conf = outcome(
        "confidence map vs brute force",
        worst <= 1e-6,
        format!("{N} feature maps, max |diff| {worst:.3e} (tolerance 1e-6)"),
    );

    let mut bad = 0;
    for _ in 0..N {
        let (w, h) = dims(&mut rng);
        let props: Vec<MaskProposal> = (0..rng.below(8))
            .map(|_| {
                let p = rng.range_f64(0.05, 0.7);
                let m = rand_mask(&mut rng, w, h, p);
                MaskProposal::new(m, rng.below(4) as f64 / 3.0).unwrap()
            })
            .collect();
        let classes = 1 + rng.below(4);
        let map = rand_labels(&mut rng, w, h, classes, 0.15);
        let set = GlobalProposalSet { proposals: props };
        let fused = category_vote_fuse(&set, &map).unwrap();
        bad += (fused.labels() != oracle_fuse(&set.proposals, &map).as_slice()) as usize;
    }
    let fuse = outcome("vote fusion vs claim simulator", bad == 0, format!("{N} cases, {bad} mismatches"));

    vec![cc, nms, metrics, conf, fuse]
}

fn grid_exactness() -> Outcome {
    let mut rng = SplitMix64::new(10);
    let (mut cases, mut bad) = (0, 0);
    for n in 1..=16usize {
        for _ in 0..50 {
            // quarter-pixel offsets and spacings are exact in binary, so the
            // rounding rule is checked without representation error
            let a = rng.below(64);
            let b = 1 + rng.below(64);
            let spec = GridSpec::new(n, a as f64 / 4.0, b as f64 / 4.0).unwrap();
            let axis: Vec<usize> = (0..n).map(|i| (a + i * b + 2) / 4).collect();
            let want: Vec<(usize, usize)> = axis.iter().flat_map(|&y| axis.iter().map(move |&x| (x, y))).collect();
            cases += 1;
            bad += (generate_grid(&spec) != want) as usize;
        }
    }
    outcome("grid exactness", bad == 0, format!("N = 1..16, {cases} offset/spacing pairs, {bad} mismatches"))
}

fn published_deltas() -> Outcome {
    let report = |miou: f64| EvalReport {
        miou,
        b_miou: 0.0,
        pixel_acc: 0.0,
        img_acc: 0.0,
        f_beta: 0.0,
        per_class_iou: Vec::new(),
        deltas: None,
    };
    let pairs = [
        ("ImageNet-S", 29.2, 35.8, "+6.6"),
        ("VOC / MLP", 46.0, 48.2, "+2.2"),
        ("VOC / TR", 50.0, 51.5, "+1.5"),
        ("COCO-Stuff / MLP", 27.9, 29.0, "+1.1"),
        ("COCO-Stuff / TR", 32.4, 33.0, "+0.6"),
    ];
    let mut shown = Vec::new();
    let mut ok = true;
    for (label, b, r, want) in pairs {
        let got = format_delta(report_delta(&report(b / 100.0), &report(r / 100.0)).miou);
        ok &= got == want;
        shown.push(format!("{label} {b}->{r} = {got}"));
    }
    outcome("published deltas", ok, shown.join("; "))
}

fn metric_suite() -> Outcome {
    let mut rng = SplitMix64::new(77);
    let mut violations = Vec::new();
    const CASES: usize = 1000;
    for case in 0..CASES {
        let (w, h) = (1 + rng.below(16), 1 + rng.below(16));
        let classes = 1 + rng.below(6);
        let n = 1 + rng.below(3);
        let preds: Vec<_> = (0..n).map(|_| rand_labels(&mut rng, w, h, classes, 0.05)).collect();
        let mut gts: Vec<_> = (0..n).map(|_| rand_labels(&mut rng, w, h, classes, 0.1)).collect();
        // keep at least one scored pixel
        let first = rng.below(classes) as u8;
        gts[0].set(0, 0, first);
        let opts = EvalOptions::new(classes);
        let r = match evaluate(&preds, &gts, &opts) {
            Ok(r) => r,
            Err(e) => {
                violations.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if ![r.miou, r.b_miou, r.pixel_acc, r.img_acc, r.f_beta].into_iter().all(in_unit)
            || !r.per_class_iou.iter().flatten().all(|&v| in_unit(v))
        {
            violations.push(format!("case {case}: metric outside [0, 1]"));
        }

        // image order
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.below(i + 1));
        }
        let rp: Vec<_> = order.iter().map(|&i| preds[i].clone()).collect();
        let rg: Vec<_> = order.iter().map(|&i| gts[i].clone()).collect();
        let s = evaluate(&rp, &rg, &opts).unwrap();
        if s.miou != r.miou || s.pixel_acc != r.pixel_acc || s.per_class_iou != r.per_class_iou {
            violations.push(format!("case {case}: image order changed mIoU/pAcc"));
        }

        // consistent class relabelling
        let mut perm: Vec<u8> = (0..classes as u8).collect();
        for i in (1..classes).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        // a predicted ignore label scores as background, so it follows class 0
        let relabel = |m: &LabelMap, ignore_to: Option<u8>| {
            let labels = m
                .labels()
                .iter()
                .map(|&l| match l {
                    IGNORE => ignore_to.unwrap_or(IGNORE),
                    l => perm[l as usize],
                })
                .collect();
            LabelMap::new(w, h, labels).unwrap()
        };
        let pp: Vec<_> = preds.iter().map(|m| relabel(m, Some(perm[0]))).collect();
        let pg: Vec<_> = gts.iter().map(|m| relabel(m, None)).collect();
        let cm = confusion(&pp, &pg, classes).unwrap();
        let pm = miou(&cm).unwrap().0;
        let pa = pixel_accuracy(&cm).unwrap();
        if (pm - r.miou).abs() > 1e-12 || pa != r.pixel_acc {
            violations.push(format!("case {case}: class permutation changed mIoU/pAcc"));
        }

        // a band wider than the image covers every scored pixel
        let wide = evaluate(&preds, &gts, &EvalOptions { band_fraction: 2.0, ..opts }).unwrap();
        if wide.b_miou != wide.miou {
            violations.push(format!("case {case}: full band b-mIoU {} != mIoU {}", wide.b_miou, wide.miou));
        }

        // additivity
        let split = rng.below(n + 1);
        let whole = confusion(&preds, &gts, classes).unwrap();
        let mut left = confusion(&preds[..split], &gts[..split], classes).unwrap();
        left.merge(&confusion(&preds[split..], &gts[split..], classes).unwrap()).unwrap();
        let by_counts = (0..classes).all(|g| {
            (0..classes).all(|p| {
                let direct: u64 = preds
                    .iter()
                    .zip(&gts)
                    .map(|(pm, gm)| {
                        pm.labels()
                            .iter()
                            .zip(gm.labels())
                            .filter(|(&a, &b)| b != IGNORE && b as usize == g && (if a == IGNORE { 0 } else { a }) as usize == p)
                            .count() as u64
                    })
                    .sum();
                whole.get(g, p) == direct
            })
        });
        if left != whole || !by_counts {
            violations.push(format!("case {case}: confusion not additive"));
        }
    }
    let detail = if violations.is_empty() {
        format!("{CASES} randomized cases, 0 violations")
    } else {
        format!("{} violations, first: {}", violations.len(), violations[0])
    };
    outcome("metric bounds and invariances", violations.is_empty(), detail)
}

fn protocol() -> Outcome {
    let mut rng = SplitMix64::new(99);
    const CAP: usize = 4096;
    let (mut round_trip_bad, mut trunc_bad, mut over_bad) = (0, 0, 0);
    const PAYLOADS: usize = 10_000;
    for _ in 0..PAYLOADS {
        let len = if rng.chance(0.05) { 0 } else { rng.below(CAP + 1) };
        let payload: Vec<u8> = (0..len).map(|_| rng.next_u64() as u8).collect();
        let frame = encode_frame(&payload).unwrap();
        let ok = frame.len() == len + 4
            && frame[..4] == (len as u32).to_le_bytes()
            && read_frame(&mut Cursor::new(&frame), CAP).ok().as_deref() == Some(&payload[..]);
        round_trip_bad += !ok as usize;

        let cut = rng.below(frame.len());
        let truncated = matches!(
            read_frame(&mut Cursor::new(&frame[..cut]), CAP),
            Err(FrameError::Truncated { .. })
        );
        trunc_bad += !truncated as usize;

        if len > 0 {
            let mut cur = Cursor::new(&frame);
            let rejected = matches!(read_frame(&mut cur, len - 1), Err(FrameError::Oversize { .. }));
            // the payload must not be read once the header is refused
            over_bad += !(rejected && cur.position() == 4) as usize;
        }
    }
    outcome(
        "frame codec",
        round_trip_bad + trunc_bad + over_bad == 0,
        format!(
            "{PAYLOADS} payloads in-process: {round_trip_bad} round-trip, {trunc_bad} truncation, {over_bad} oversize failures"
        ),
    )
}

fn main() {
    let mut results = recovery_and_improvement();
    results.push(ablation_order());
    results.extend(equivalences());
    results.push(grid_exactness());
    results.push(published_deltas());
    results.push(metric_suite());
    results.push(protocol());

    for r in &results {
        println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} criteria, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
