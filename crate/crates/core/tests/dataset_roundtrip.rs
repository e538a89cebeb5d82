use std::fs;

use surgbench_core::camera::default_rig;
use surgbench_core::dataset::{
    read_episode, subsample, validate, Capture, DemonstrationSet, Episode, EpisodeRecorder, Source,
};
use surgbench_core::perception::{ObservationSpace, PerceptionConfig};
use surgbench_core::{check_success, reset_task, Action, JawCommand, TaskName, TaskSpec};

fn scripted_walk(spec: &TaskSpec, seed: u64, steps: usize, capture: Option<Capture>) -> Episode {
    let mut state = reset_task(spec, seed).unwrap();
    let mut rec = EpisodeRecorder::new(spec, seed, Source::Scripted, capture);
    let mut traj = vec![state.clone()];
    for i in 0..steps {
        let mut a = Action::zero(spec.num_arms);
        for arm in &mut a.arms {
            arm.dpos = [0.002 * (i as f64 * 0.7).cos(), 0.0013, -0.0021];
            arm.drot = [0.0, 0.0, 0.03];
            arm.jaw = if i % 4 < 2 {
                JawCommand::Open
            } else {
                JawCommand::Close
            };
        }
        let stored = rec.record(&state, &a).unwrap();
        state = state.step(&stored).unwrap();
        traj.push(state.clone());
    }
    let ok = check_success(spec, &traj);
    rec.finish(&state, ok).unwrap()
}

fn capture(spec: &TaskSpec, space: ObservationSpace) -> Capture {
    Capture {
        space,
        rig: default_rig(spec).unwrap().with_resolution(32),
        perception: PerceptionConfig {
            num_points: 64,
            ..Default::default()
        },
    }
}

#[test]
fn write_read_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (k, space) in ObservationSpace::ALL.into_iter().enumerate() {
        let spec = TaskSpec::default_for(TaskName::NeedleHandover);
        let ep = scripted_walk(&spec, 40 + k as u64, 6, Some(capture(&spec, space)));
        let root = dir.path().join(space.as_str());
        let mut set = DemonstrationSet::create(&root, spec.name, ep.meta.capture.clone()).unwrap();
        set.append(&ep).unwrap();
        let back = read_episode(&root.join("episode_0000")).unwrap();
        assert_eq!(back, ep);
        let obs = back.observation(3).unwrap();
        match space {
            ObservationSpace::SingleCamera => assert_eq!(obs.images.len(), 1),
            ObservationSpace::MultiCamera => assert_eq!(obs.images.len(), 3),
            ObservationSpace::PointCloud => {
                assert!(obs.images.is_empty());
                assert_eq!(obs.cloud.unwrap().len(), 64);
                assert!(back.observations.contains_key("depth_endoscope.f32"));
                assert!(back.observations.contains_key("seg_endoscope.i32"));
            }
        }
        assert!(validate(&DemonstrationSet::open(&root).unwrap()).all_valid());
    }
}

#[test]
fn corrupt_byte_flags_exactly_one_episode() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let mut set = DemonstrationSet::create(dir.path(), spec.name, None).unwrap();
    for seed in 0..4 {
        set.append(&scripted_walk(&spec, seed, 5, None)).unwrap();
    }
    assert!(set.corrupted().unwrap().is_empty());
    let path = dir.path().join("episode_0002").join("proprio.f32");
    let mut bytes = fs::read(&path).unwrap();
    bytes[20] ^= 0x01;
    fs::write(&path, bytes).unwrap();
    assert_eq!(set.corrupted().unwrap(), vec!["episode_0002".to_string()]);
    let report = validate(&set);
    assert_eq!(report.invalid(), vec!["episode_0002"]);
}

#[test]
fn mutated_action_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::default_for(TaskName::BlockTransfer);
    let mut set = DemonstrationSet::create(dir.path(), spec.name, None).unwrap();
    set.append(&scripted_walk(&spec, 7, 8, None)).unwrap();
    let clean = validate(&set);
    assert!(clean.all_valid());
    assert_eq!(clean.max_deviation(), 0.0);

    // Rewrite the action file with a shifted value and a matching checksum.
    let ep_dir = dir.path().join("episode_0000");
    let mut ep = read_episode(&ep_dir).unwrap();
    let mut acts = ep.actions.to_f32().unwrap();
    acts[0] += 0.001;
    ep.actions = surgbench_core::rawarray::RawArray::from_f32(&ep.actions.dims, &acts).unwrap();
    fs::remove_dir_all(&ep_dir).unwrap();
    let entry = surgbench_core::dataset::write_episode(&ep, dir.path(), "episode_0000").unwrap();
    set.manifest.episodes[0] = entry;
    let report = validate(&set);
    assert!(report.episodes[0].checksum_ok);
    assert!(report.episodes[0].deviation > 1e-9);
    assert_eq!(report.invalid(), vec!["episode_0000"]);
}

#[test]
fn subsample_prefix_nesting() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::default_for(TaskName::TissueRetraction);
    let mut set = DemonstrationSet::create(dir.path(), spec.name, None).unwrap();
    for seed in 0..50 {
        set.append(&scripted_walk(&spec, 1000 + seed, 1, None))
            .unwrap();
    }
    let reopened = DemonstrationSet::open(dir.path()).unwrap();
    assert_eq!(reopened.manifest.count, 50);
    let full = subsample(&reopened, 50, 3).unwrap();
    assert_eq!(full.manifest.episodes, reopened.manifest.episodes);
    let sets: Vec<Vec<String>> = [10, 20, 30, 40, 50]
        .iter()
        .map(|&n| {
            subsample(&reopened, n, 3)
                .unwrap()
                .manifest
                .episodes
                .into_iter()
                .map(|e| e.name)
                .collect()
        })
        .collect();
    for w in sets.windows(2) {
        assert!(w[0].iter().all(|name| w[1].contains(name)));
        assert_eq!(w[0].len() + 10, w[1].len());
    }
    assert!(subsample(&reopened, 51, 3).is_err());
    assert!(subsample(&reopened, 0, 3).is_err());
    let mut view = subsample(&reopened, 10, 3).unwrap();
    assert!(view.append(&scripted_walk(&spec, 1, 1, None)).is_err());
}

#[test]
fn manifest_count_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let mut set = DemonstrationSet::create(dir.path(), spec.name, None).unwrap();
    set.append(&scripted_walk(&spec, 0, 2, None)).unwrap();
    fs::create_dir(dir.path().join("episode_0001")).unwrap();
    assert!(DemonstrationSet::open(dir.path()).is_err());
    // Leftover temporary directories are invisible to readers.
    fs::remove_dir(dir.path().join("episode_0001")).unwrap();
    fs::create_dir(dir.path().join(".tmp-episode_0001")).unwrap();
    assert!(DemonstrationSet::open(dir.path()).is_ok());
}
