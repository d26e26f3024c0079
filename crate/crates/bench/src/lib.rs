//! Shared fixtures for the benchmarks.

use uosam_core::synth::{generate_scene, Corruption, SceneSpec, SplitMix64, SynthScene};
use uosam_core::{BinaryMask, MaskProposal};

/// A corrupted three-object scene of the given size.
pub fn scene(seed: u64, side: usize) -> SynthScene {
    let spec = SceneSpec::new(seed, side, side, 3).with_corruption(Corruption {
        dilate_px: 3,
        boundary_noise_prob: 0.1,
        ..Default::default()
    });
    generate_scene(&spec).expect("scene fits")
}

/// Random blobs: a sparse noise mask dilated into clumps.
pub fn noisy_mask(seed: u64, side: usize, density: f64) -> BinaryMask {
    let mut rng = SplitMix64::new(seed);
    let seeds = BinaryMask::from_fn(side, side, |_, _| rng.chance(density)).expect("non-zero side");
    uosam_core::maskops::dilate(&seeds, 2)
}

/// `n` proposals with overlapping random masks and descending scores.
pub fn proposals(seed: u64, side: usize, n: usize) -> Vec<MaskProposal> {
    (0..n)
        .map(|i| {
            let mask = noisy_mask(seed + i as u64, side, 0.01);
            MaskProposal::new(mask, 1.0 - i as f64 / (2 * n) as f64).expect("score in range")
        })
        .collect()
}
