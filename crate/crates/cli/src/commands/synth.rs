//! `synth`: write a seeded batch of synthetic scenes.

use std::path::Path;

use anyhow::Context;

use uosam_core::synth::{batch_specs, generate_scene, Corruption};

use crate::dataset::{Manifest, ManifestEntry};
use crate::io::{write_image, write_label_map};

#[derive(Clone, Debug)]
pub struct SynthArgs {
    pub seed: u64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub corruption: Corruption,
}

/// Writes `scene_NNN.png`, `scene_NNN_coarse.png`, `scene_NNN_gt.png` and a
/// manifest into `out`.
pub fn run_synth(args: &SynthArgs, out: &Path) -> anyhow::Result<Manifest> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let specs = batch_specs(
        args.seed,
        args.count,
        args.width,
        args.height,
        args.min_objects,
        args.max_objects,
        args.corruption,
    )?;
    let digits = args.count.saturating_sub(1).to_string().len().max(3);
    let mut manifest = Manifest {
        class_count: Some(args.max_objects + 1),
        entries: Vec::with_capacity(specs.len()),
    };
    for (i, spec) in specs.iter().enumerate() {
        let scene = generate_scene(spec).with_context(|| format!("scene {i} (seed {})", spec.seed))?;
        let name = format!("scene_{i:0digits$}");
        let entry = ManifestEntry {
            image: format!("{name}.png"),
            coarse: format!("{name}_coarse.png"),
            gt: Some(format!("{name}_gt.png")),
        };
        write_image(&out.join(&entry.image), &scene.image)?;
        write_label_map(&out.join(&entry.coarse), &scene.coarse)?;
        write_label_map(&out.join(entry.gt.as_ref().unwrap()), &scene.gt)?;
        manifest.entries.push(entry);
    }
    manifest.save(out)?;
    Ok(manifest)
}
