use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgbench_core::camera::default_rig;
use surgbench_core::layout::{self, ObjectId};
use surgbench_core::perception::{
    build_observation, crop_by_segmentation, default_crop_ids, deproject, farthest_point_sample,
    ObservationSpace, PerceptionConfig, PixelMask,
};
use surgbench_core::render::{render, BACKGROUND};
use surgbench_core::{reset_task, TaskName, TaskSpec};

/// Recomputes every min-distance from scratch at each greedy step.
fn brute_force_fps(points: &[[f64; 3]], n: usize) -> Vec<usize> {
    let dist = |a: &[f64; 3], b: &[f64; 3]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };
    let mut chosen = vec![0];
    while chosen.len() < n {
        let mut best = None;
        let mut best_d = -1.0;
        for (j, p) in points.iter().enumerate() {
            if chosen.contains(&j) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| dist(p, &points[c]))
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = Some(j);
            }
        }
        chosen.push(best.unwrap());
    }
    chosen
}

#[test]
fn fps_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let m = rng.random_range(1..=8);
        let n = rng.random_range(1..=4usize.min(m));
        // Coarse integer grid makes distance ties common.
        let grid = rng.random_bool(0.5);
        let pts: Vec<[f64; 3]> = (0..m)
            .map(|_| {
                if grid {
                    [0, 1, 2].map(|_| f64::from(rng.random_range(0..3)))
                } else {
                    [0, 1, 2].map(|_| rng.random_range(-1.0..1.0))
                }
            })
            .collect();
        let got = farthest_point_sample(&pts, n).unwrap();
        assert_eq!(
            got.indices,
            brute_force_fps(&pts, n),
            "points {pts:?} n {n}"
        );
        assert!(!got.padded);
    }
}

#[test]
fn fps_greedy_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<[f64; 3]> = (0..300)
        .map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let sel = farthest_point_sample(&pts, 64).unwrap().indices;
    let d = |a: usize, b: usize| (0..3).map(|k| (pts[a][k] - pts[b][k]).powi(2)).sum::<f64>();
    for i in 1..sel.len() {
        let prior = &sel[..i];
        let min_to_prior = |j: usize| prior.iter().map(|&p| d(j, p)).fold(f64::INFINITY, f64::min);
        let best = (0..pts.len())
            .filter(|j| !prior.contains(j))
            .map(min_to_prior)
            .fold(0.0, f64::max);
        assert_eq!(min_to_prior(sel[i]), best);
    }
}

#[test]
fn deproject_project_round_trip_on_rendered_frames() {
    for task in TaskName::ALL {
        let spec = TaskSpec::default_for(task);
        let scene = reset_task(&spec, 2).unwrap();
        let rig = default_rig(&spec).unwrap();
        for cam in rig.cameras(&scene).unwrap() {
            let frame = render(&scene, &cam);
            let mask = PixelMask::from_fn(frame.width, frame.height, |_, _| true);
            let cloud = deproject(&frame, &cam, &mask).unwrap();
            let mut k = 0;
            for v in 0..frame.height {
                for u in 0..frame.width {
                    if frame.depth[frame.index(u, v)] <= 0.0 {
                        continue;
                    }
                    let px = cam.project(&cloud.points[k].into());
                    assert!((px.x - f64::from(u)).abs() <= 1e-6);
                    assert!((px.y - f64::from(v)).abs() <= 1e-6);
                    k += 1;
                }
            }
            assert_eq!(k, cloud.len());
        }
    }
}

#[test]
fn crop_contract_cases() {
    let spec = TaskSpec::default_for(TaskName::BlockTransfer);
    let scene = reset_task(&spec, 0).unwrap();
    let frame = render(&scene, &default_rig(&spec).unwrap().primary);
    // No needle in this scene.
    let none = crop_by_segmentation(&frame, &BTreeSet::from([layout::NEEDLE])).unwrap();
    assert_eq!(none.count(), 0);
    let all_ids: BTreeSet<ObjectId> = frame
        .seg
        .iter()
        .filter(|s| **s != BACKGROUND)
        .map(|s| ObjectId(*s))
        .collect();
    let union = crop_by_segmentation(&frame, &all_ids).unwrap();
    for v in 0..frame.height {
        for u in 0..frame.width {
            assert_eq!(union.get(u, v), frame.seg[frame.index(u, v)] != BACKGROUND);
        }
    }
    assert!(crop_by_segmentation(&frame, &BTreeSet::new()).is_err());
}

#[test]
fn needle_lift_cloud_excludes_table() {
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let scene = reset_task(&spec, 9).unwrap();
    let cam = default_rig(&spec).unwrap().primary;
    let frame = render(&scene, &cam);
    let ids = default_crop_ids(TaskName::NeedleLift, 1);
    let cloud = deproject(&frame, &cam, &crop_by_segmentation(&frame, &ids).unwrap()).unwrap();
    assert!(cloud.source_ids.contains(&layout::NEEDLE.0));
    for id in &cloud.source_ids {
        assert!(ids.contains(&ObjectId(*id)), "unexpected id {id}");
    }
}

#[test]
fn crop_soundness_over_rendered_frames() {
    let mut count = 0;
    for seed in 0..20 {
        for task in TaskName::ALL {
            let spec = TaskSpec::default_for(task);
            let scene = reset_task(&spec, seed).unwrap();
            let rig = default_rig(&spec).unwrap().with_resolution(64);
            let frame = render(&scene, &rig.primary);
            let ids = default_crop_ids(task, spec.num_arms);
            let mask = crop_by_segmentation(&frame, &ids).unwrap();
            for v in 0..frame.height {
                for u in 0..frame.width {
                    if mask.get(u, v) {
                        assert!(ids.contains(&ObjectId(frame.seg[frame.index(u, v)])));
                    }
                }
            }
            count += 1;
        }
    }
    assert_eq!(count, 100);
}

#[test]
fn observation_spaces_match_definitions() {
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let scene = reset_task(&spec, 1).unwrap();
    let rig = default_rig(&spec).unwrap().with_resolution(64);
    let cfg = PerceptionConfig::default();
    let single = build_observation(&scene, &rig, ObservationSpace::SingleCamera, &cfg).unwrap();
    assert_eq!(single.images.len(), 1);
    assert!(single.cloud.is_none());
    let multi = build_observation(&scene, &rig, ObservationSpace::MultiCamera, &cfg).unwrap();
    assert_eq!(multi.images.len(), 1 + rig.wrist.len());
    let pc = build_observation(&scene, &rig, ObservationSpace::PointCloud, &cfg).unwrap();
    assert!(pc.images.is_empty());
    assert_eq!(pc.cloud.as_ref().unwrap().len(), 512);
    assert_eq!(single.proprio, multi.proprio);
    assert_eq!(single.proprio, pc.proprio);

    let mut no_wrist = rig.clone();
    no_wrist.wrist.clear();
    assert!(build_observation(&scene, &no_wrist, ObservationSpace::MultiCamera, &cfg).is_err());
}
