use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};
use surgbench_core::camera::rig_at_resolution;
use surgbench_core::dataset::{Capture, DemonstrationSet};
use surgbench_core::expert::{collect, CollectConfig};
use surgbench_core::perception::PerceptionConfig;
use surgbench_core::{rollout, ObservationSpace, RolloutConfig, TaskName, TaskSpec};
use surgbench_policies::checkpoint::WEIGHTS_FILE;
use surgbench_policies::data::TrainingData;
use surgbench_policies::{
    act_config_for, dp3_config_for, train_act, train_dp3, TrainConfig, TrainedPolicy,
};

fn demos(dir: &Path, space: ObservationSpace) -> DemonstrationSet {
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let cfg = CollectConfig {
        count: 3,
        seed: 0,
        noise_scale: 0.0,
        capture: Some(Capture {
            space,
            rig: rig_at_resolution(&spec, 32).unwrap(),
            perception: PerceptionConfig {
                num_points: 64,
                ..Default::default()
            },
        }),
    };
    collect(&spec, &dir.join(space.to_string()), &cfg)
        .unwrap()
        .0
}

fn train(set: &DemonstrationSet) -> TrainedPolicy {
    let data = TrainingData::load(set).unwrap();
    let cfg = TrainConfig {
        steps: 3,
        batch_size: 2,
        seed: 5,
        ..Default::default()
    };
    let policy = match set.manifest.capture.as_ref().unwrap().space {
        ObservationSpace::PointCloud => train_dp3(&data, dp3_config_for(&data).unwrap(), &cfg),
        _ => train_act(&data, act_config_for(&data), &cfg),
    };
    policy.unwrap().0
}

fn weights(dir: &Path) -> HashMap<String, Tensor> {
    candle_core::safetensors::load(dir.join(WEIGHTS_FILE), &Device::Cpu).unwrap()
}

fn same_weights(a: &Path, b: &Path) -> bool {
    let (a, b) = (weights(a), weights(b));
    a.len() == b.len()
        && a.iter().all(|(name, t)| {
            let flat = |t: &Tensor| t.flatten_all().unwrap().to_vec1::<f32>().unwrap();
            b.get(name).is_some_and(|u| flat(t) == flat(u))
        })
}

#[test]
fn training_is_reproducible_and_checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    for space in [ObservationSpace::SingleCamera, ObservationSpace::PointCloud] {
        let set = demos(dir.path(), space);
        let (a, b) = (
            dir.path().join(format!("{space}_a")),
            dir.path().join(format!("{space}_b")),
        );
        let mut first = train(&set);
        first.save(&a).unwrap();
        train(&set).save(&b).unwrap();
        assert!(same_weights(&a, &b), "{space}: weights differ between runs");

        let mut loaded = TrainedPolicy::load(&a).unwrap();
        assert_eq!(loaded.meta().demo_seeds, set.seeds());
        let cfg = RolloutConfig {
            rig: Some(rig_at_resolution(&spec, 32).unwrap()),
            perception: set.manifest.capture.clone().unwrap().perception,
            ..Default::default()
        };
        let mut short = spec.clone();
        short.horizon = 6;
        let x = rollout(&mut first, &short, 1_000_000, &cfg).unwrap();
        let y = rollout(&mut loaded, &short, 1_000_000, &cfg).unwrap();
        let pose = |r: &surgbench_core::RolloutResult| {
            format!("{:?} {:?}", r.final_state.objects, r.final_state.arms)
        };
        assert_eq!(
            pose(&x),
            pose(&y),
            "{space}: loaded policy acts differently"
        );
    }
}
