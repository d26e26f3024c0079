//! Dataset discovery: explicit `manifest.json` or name-matched PNG files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::io::is_label_png;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub coarse: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> anyhow::Result<Option<Self>> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let m = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(Some(m))
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// One image with its coarse map; paths may not exist yet.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub name: String,
    pub image: PathBuf,
    pub coarse: PathBuf,
    pub gt: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub class_count: Option<usize>,
    /// Sorted by name.
    pub samples: Vec<Sample>,
}

fn stem(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

fn png_stems(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path.file_stem().unwrap().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

const COARSE_SUFFIX: &str = "_coarse";
const GT_SUFFIX: &str = "_gt";

fn is_derived(stem: &str) -> bool {
    stem.ends_with(COARSE_SUFFIX) || stem.ends_with(GT_SUFFIX)
}

impl Dataset {
    /// Reads `manifest.json` in `dir`, or pairs `foo.png` with
    /// `foo_coarse.png` (and `foo_gt.png` when present).
    pub fn discover(dir: &Path) -> anyhow::Result<Self> {
        if let Some(m) = Manifest::load(dir)? {
            let mut samples: Vec<Sample> = m
                .entries
                .iter()
                .map(|e| Sample {
                    name: stem(&e.image),
                    image: dir.join(&e.image),
                    coarse: dir.join(&e.coarse),
                    gt: e.gt.as_ref().map(|g| dir.join(g)),
                })
                .collect();
            samples.sort_by(|a, b| a.name.cmp(&b.name));
            if let Some(w) = samples.windows(2).find(|w| w[0].name == w[1].name) {
                bail!("manifest lists image name {} twice", w[0].name);
            }
            return Ok(Self {
                class_count: m.class_count,
                samples,
            });
        }
        let stems = png_stems(dir)?;
        let samples = stems
            .iter()
            .filter(|s| !is_derived(s))
            .map(|s| {
                let gt = dir.join(format!("{s}{GT_SUFFIX}.png"));
                Sample {
                    name: s.clone(),
                    image: dir.join(format!("{s}.png")),
                    coarse: dir.join(format!("{s}{COARSE_SUFFIX}.png")),
                    gt: gt.exists().then_some(gt),
                }
            })
            .collect();
        Ok(Self {
            class_count: None,
            samples,
        })
    }
}

/// Ground-truth label maps of `dir` keyed by image name: manifest `gt`
/// entries, else `*_gt.png`, else every other `*.png`.
pub fn ground_truth_files(dir: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    if let Some(m) = Manifest::load(dir)? {
        let found: BTreeMap<_, _> = m
            .entries
            .iter()
            .filter_map(|e| e.gt.as_ref().map(|g| (stem(&e.image), dir.join(g))))
            .collect();
        if !found.is_empty() {
            return Ok(found);
        }
    }
    let stems = png_stems(dir)?;
    let gts: BTreeMap<_, _> = stems
        .iter()
        .filter_map(|s| s.strip_suffix(GT_SUFFIX).map(|n| (n.to_string(), dir.join(format!("{s}.png")))))
        .collect();
    if !gts.is_empty() {
        return Ok(gts);
    }
    Ok(stems
        .iter()
        .filter(|s| !s.ends_with(COARSE_SUFFIX))
        .map(|s| (s.clone(), dir.join(format!("{s}.png"))))
        .collect())
}

/// Prediction for `name` in `dir`: the first label-map PNG among
/// `name.png`, `name_pred.png` and `name_coarse.png`. RGB images are
/// skipped, so a raw dataset directory can stand in for its coarse maps.
pub fn prediction_file(dir: &Path, name: &str) -> Option<PathBuf> {
    ["", "_pred", COARSE_SUFFIX]
        .iter()
        .map(|suffix| dir.join(format!("{name}{suffix}.png")))
        .find(|p| is_label_png(p))
}
