//! `eval`: score predicted label maps against ground truth.

use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;

use uosam_core::metrics::{evaluate, format_delta, report_delta, BaselineDelta, EvalReport, MetricDeltas};
use uosam_core::LabelMap;

use crate::config::PipelineConfig;
use crate::dataset::{ground_truth_files, prediction_file, Manifest};
use crate::io::read_label_map;

/// Matched prediction and ground-truth maps, sorted by image name.
pub struct Pairs {
    pub names: Vec<String>,
    pub preds: Vec<LabelMap>,
    pub gts: Vec<LabelMap>,
}

pub fn load_pairs(cfg: &PipelineConfig, pred_dir: &Path, gt_dir: &Path) -> anyhow::Result<Pairs> {
    let gt_files = ground_truth_files(gt_dir)?;
    if gt_files.is_empty() {
        bail!("no ground-truth label maps in {}", gt_dir.display());
    }
    let unpaired: Vec<&str> = gt_files
        .keys()
        .filter(|n| prediction_file(pred_dir, n).is_none())
        .map(String::as_str)
        .collect();
    if !unpaired.is_empty() {
        bail!(
            "unpaired files: no prediction in {} for {}",
            pred_dir.display(),
            unpaired.join(", ")
        );
    }
    let mut pairs = Pairs {
        names: Vec::new(),
        preds: Vec::new(),
        gts: Vec::new(),
    };
    for (name, gt_path) in gt_files {
        let pred_path = prediction_file(pred_dir, &name).expect("checked above");
        let gt = read_label_map(&gt_path, cfg.ignore_id)?;
        let pred = read_label_map(&pred_path, cfg.ignore_id)?;
        pred.same_dims(&gt).with_context(|| format!("image {name}"))?;
        pairs.names.push(name);
        pairs.preds.push(pred);
        pairs.gts.push(gt);
    }
    Ok(pairs)
}

/// Explicit class count, else the manifest's, else one past the largest
/// non-ignore label seen in either set.
pub fn resolve_class_count(cfg: &PipelineConfig, gt_dir: &Path, pairs: &Pairs) -> anyhow::Result<usize> {
    if let Some(c) = cfg.class_count {
        return Ok(c);
    }
    if let Some(c) = Manifest::load(gt_dir)?.and_then(|m| m.class_count) {
        return Ok(c);
    }
    let max = pairs
        .preds
        .iter()
        .chain(&pairs.gts)
        .flat_map(|m| m.labels().iter().filter(|&&l| !m.is_ignored(l)))
        .max()
        .copied()
        .unwrap_or(0);
    Ok(max as usize + 1)
}

#[derive(Clone, Debug, Serialize)]
pub struct ImageLine<'a> {
    pub image: &'a str,
    #[serde(flatten)]
    pub report: EvalReport,
}

pub struct EvalRun {
    pub report: EvalReport,
    /// Per-image reports, present when requested.
    pub per_image: Vec<(String, EvalReport)>,
}

pub fn run_eval(
    cfg: &PipelineConfig,
    pred_dir: &Path,
    gt_dir: &Path,
    baseline: Option<&Path>,
    per_image: bool,
) -> anyhow::Result<EvalRun> {
    let pairs = load_pairs(cfg, pred_dir, gt_dir)?;
    let class_count = resolve_class_count(cfg, gt_dir, &pairs)?;
    let opts = cfg.eval_options(class_count);
    let mut report = evaluate(&pairs.preds, &pairs.gts, &opts)?;
    if let Some(b) = baseline {
        let base = if b.is_dir() {
            let bp = load_pairs(cfg, b, gt_dir)?;
            evaluate(&bp.preds, &bp.gts, &opts)?
        } else {
            load_report(b)?
        };
        report.deltas = Some(BaselineDelta {
            baseline: b.display().to_string(),
            deltas: report_delta(&base, &report),
        });
    }
    let mut lines = Vec::new();
    if per_image {
        for ((name, p), g) in pairs.names.iter().zip(&pairs.preds).zip(&pairs.gts) {
            let r = evaluate(std::slice::from_ref(p), std::slice::from_ref(g), &opts)?;
            lines.push((name.clone(), r));
        }
    }
    Ok(EvalRun {
        report,
        per_image: lines,
    })
}

pub fn load_report(path: &Path) -> anyhow::Result<EvalReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
}

/// One line per metric, e.g. `miou +6.6`.
pub fn delta_lines(d: &MetricDeltas) -> Vec<String> {
    [
        ("miou", d.miou),
        ("b_miou", d.b_miou),
        ("pixel_acc", d.pixel_acc),
        ("img_acc", d.img_acc),
        ("f_beta", d.f_beta),
    ]
    .iter()
    .map(|(k, v)| format!("{k} {}", format_delta(*v)))
    .collect()
}
