//! `stats`: categories-per-image histogram of a ground-truth directory.

use std::path::Path;

use uosam_core::metrics::{category_stats, CategoryStats};

use crate::dataset::ground_truth_files;
use crate::io::read_label_map;

pub const HEADER: &str = "categories & 1 & 2 & 3 & 4 & 5 & >5";

pub fn run_stats(dir: &Path, ignore_id: u8) -> anyhow::Result<CategoryStats> {
    let files = ground_truth_files(dir)?;
    if files.is_empty() {
        log::warn!("no label maps in {}", dir.display());
        return Ok(CategoryStats::default());
    }
    let maps = files
        .values()
        .map(|p| read_label_map(p, ignore_id))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(category_stats(&maps))
}

pub fn table_row(label: &str, stats: &CategoryStats) -> String {
    format!("{label} & {stats}")
}
