use uosam_core::metrics::{confusion, miou};
use uosam_core::pipeline::ObjectStatus;
use uosam_core::segmenter::tensor_file::{read_features, write_features};
use uosam_core::synth::{generate_scene, Corruption, SceneSpec};
use uosam_core::{refine_image, PipelineOptions, SegmenterBackend};

fn miou_of(pred: &uosam_core::LabelMap, gt: &uosam_core::LabelMap) -> f64 {
    miou(&confusion(&[pred.clone()], &[gt.clone()], 256).unwrap()).unwrap().0
}

#[test]
fn erosion_and_fragment_loss_are_repaired() {
    let c = Corruption {
        erode_px: 2,
        drop_fragment_prob: 1.0,
        ..Default::default()
    };
    for seed in 20..24 {
        let s = generate_scene(&SceneSpec::new(seed, 96, 96, 2).with_corruption(c)).unwrap();
        let out = refine_image(&s.oracle.backend(), &s.image, &s.coarse, &PipelineOptions::default())
            .unwrap();
        assert_eq!(out.label_map, s.gt, "seed {seed}");
        assert!(out.objects.iter().all(|o| matches!(o.status, ObjectStatus::Refined { .. })));
    }
}

#[test]
fn each_stage_alone_never_hurts() {
    let c = Corruption {
        dilate_px: 3,
        boundary_noise_prob: 0.1,
        ..Default::default()
    };
    for seed in 0..4 {
        let s = generate_scene(&SceneSpec::new(seed, 96, 96, 3).with_corruption(c)).unwrap();
        let backend = s.oracle.backend();
        let base = miou_of(&s.coarse, &s.gt);
        let gro_only = PipelineOptions {
            enable_lro: false,
            ..Default::default()
        };
        let g = refine_image(&backend, &s.image, &s.coarse, &gro_only).unwrap();
        assert!(miou_of(&g.label_map, &s.gt) >= base);
    }
}

#[test]
fn strided_backend_still_lands_inside_objects() {
    let s = generate_scene(&SceneSpec::new(4, 128, 128, 2).with_corruption(Corruption {
        dilate_px: 2,
        ..Default::default()
    }))
    .unwrap();
    let backend = s.oracle.backend().with_stride(4);
    let opts = PipelineOptions {
        enable_gro: false,
        ..Default::default()
    };
    let out = refine_image(&backend, &s.image, &s.coarse, &opts).unwrap();
    assert!(miou_of(&out.label_map, &s.gt) > miou_of(&s.coarse, &s.gt));
}

#[test]
fn features_survive_a_tensor_file() {
    let s = generate_scene(&SceneSpec::new(2, 40, 30, 1)).unwrap();
    let fm = s.oracle.backend().with_stride(2).embed(&s.image).unwrap();
    let dir = std::env::temp_dir().join(format!("uoft-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("features.uoft");
    write_features(&mut std::fs::File::create(&path).unwrap(), &fm).unwrap();
    let back = read_features(&mut std::fs::File::open(&path).unwrap(), 2.0, 40, 30).unwrap();
    assert_eq!(back, fm);
    std::fs::remove_dir_all(dir).unwrap();
}
