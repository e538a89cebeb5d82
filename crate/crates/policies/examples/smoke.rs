//! Collect needle_lift demos, train one model, and evaluate it.
//!
//! usage: smoke <act|dp3> <work dir> [steps] [trials] [noise] [batch] [lr]

use std::path::PathBuf;
use std::time::Instant;

use surgbench_core::camera::rig_at_resolution;
use surgbench_core::dataset::{Capture, DemonstrationSet};
use surgbench_core::expert::{collect, CollectConfig};
use surgbench_core::perception::PerceptionConfig;
use surgbench_core::{rollout, ObservationSpace, RolloutConfig, TaskName, TaskSpec};
use surgbench_policies::data::TrainingData;
use surgbench_policies::{act_config_for, dp3_config_for, train_act, train_dp3, TrainConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let model = args.get(1).map(String::as_str).unwrap_or("act");
    let work = PathBuf::from(args.get(2).map(String::as_str).unwrap_or("/tmp/smoke"));
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let steps = arg(3, 3000.0) as usize;
    let trials = arg(4, 20.0) as u64;
    let noise = arg(5, 0.0);
    let batch = arg(6, 16.0) as usize;
    let lr = arg(7, 3e-4);

    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let rig = rig_at_resolution(&spec, 128)?;
    let space = if model == "dp3" {
        ObservationSpace::PointCloud
    } else {
        ObservationSpace::SingleCamera
    };
    let root = work.join(format!("{space}_n{noise}"));
    let set = if root.join("manifest.toml").exists() {
        DemonstrationSet::open(&root)?
    } else {
        let t = Instant::now();
        let cfg = CollectConfig {
            count: 50,
            seed: 0,
            noise_scale: noise,
            capture: Some(Capture {
                space,
                rig: rig.clone(),
                perception: PerceptionConfig::default(),
            }),
        };
        let (set, _) = collect(&spec, &root, &cfg)?;
        eprintln!("collected in {:.0}s", t.elapsed().as_secs_f64());
        set
    };
    let data = TrainingData::load(&set)?;
    eprintln!("{} samples", data.index().len());
    let train = TrainConfig {
        steps,
        batch_size: batch,
        lr,
        log_every: 100,
        ..Default::default()
    };
    let (mut policy, report) = if model == "dp3" {
        train_dp3(&data, dp3_config_for(&data)?, &train)?
    } else {
        train_act(&data, act_config_for(&data), &train)?
    };
    eprintln!("trained in {:.0}s", report.seconds);
    policy.save(&work.join(format!("ckpt_{model}")))?;
    let cfg = RolloutConfig {
        rig: Some(rig),
        ..Default::default()
    };
    let t = Instant::now();
    let mut wins = 0;
    for seed in 0..trials {
        let r = rollout(&mut policy, &spec, 1_000_000 + seed, &cfg)?;
        wins += u32::from(r.success);
        eprintln!("trial {seed}: success={} steps={}", r.success, r.steps);
    }
    println!(
        "{model}: {wins}/{trials} ({:.0}s eval)",
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
