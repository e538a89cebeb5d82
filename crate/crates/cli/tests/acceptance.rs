//! End-to-end acceptance run. Prints one PASS or FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! Set `SURGBENCH_ACCEPT=determinism,experts,...` to run a subset.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::Path;
use std::rc::Rc;
use std::time::Instant;

use candle_core::{DType, Device, Module, Tensor, Var};
use candle_nn::{linear, VarMap};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgbench_core::camera::{default_rig, rig_at_resolution, PerturbBounds};
use surgbench_core::dataset::{subsample, validate, Capture, DemonstrationSet};
use surgbench_core::expert::{collect, CollectConfig};
use surgbench_core::layout;
use surgbench_core::perception::{
    crop_by_segmentation, default_crop_ids, deproject, farthest_point_sample, PerceptionConfig,
    PixelMask,
};
use surgbench_core::policy::ExpertPolicy;
use surgbench_core::render::render;
use surgbench_core::{
    reset_task, rollout, Action, ArmAction, JawCommand, ObjectId, ObservationSpace, Policy,
    PolicyInput, RolloutConfig, SceneState, TaskName, TaskSpec,
};
use surgbench_eval::protocols::NEEDLES;
use surgbench_eval::{
    emit_report, run_instance_generalization, run_sample_efficiency, run_success_eval,
    run_viewpoint_robustness, EvalSetup, ModelKind, ModelSpec, Report, SpecTrainer, ViewMode,
};
use surgbench_policies::act::{aggregate, kl_divergence};
use surgbench_policies::data::TrainingData;
use surgbench_policies::diffusion::{diffusion_loss, DiffusionSchedule};
use surgbench_policies::init::seeded_builder;
use surgbench_policies::nn::{mish, Encoder};
use surgbench_policies::pointnet::PointEncoder;
use surgbench_policies::toy::{bimodal_experiment, BimodalConfig};
use surgbench_policies::{
    act_config_for, dp3_config_for, train_act, train_dp3, TrainConfig, TrainedPolicy,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- determinism

/// Every float of the scene, as raw bits.
fn fingerprint(s: &SceneState) -> Vec<u64> {
    let mut out = vec![u64::from(s.step_count)];
    for (id, p) in &s.objects {
        out.push(id.0 as u64);
        out.extend(p.position.iter().chain(&p.orientation).map(|v| v.to_bits()));
    }
    for a in &s.arms {
        out.extend(a.proprio().iter().map(|v| v.to_bits()));
        out.push(a.jaw_cmd.as_f64().to_bits());
        out.push(a.attached_id().map_or(u64::MAX, |id| id.0 as u64));
    }
    out
}

fn determinism() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let task = TaskName::ALL[rng.random_range(0..5)];
        let spec = TaskSpec::default_for(task);
        let seed: u64 = rng.random();
        let len = rng.random_range(1..=spec.horizon as usize);
        // Deltas up to 1.5x the clamp so clamping is exercised too.
        let t = 1.5 * spec.sim.max_step_translation;
        let r = 1.5 * spec.sim.max_step_rotation;
        let actions: Vec<Action> = (0..len)
            .map(|_| Action {
                arms: (0..spec.num_arms)
                    .map(|_| ArmAction {
                        dpos: [0; 3].map(|_| rng.random_range(-t..=t)),
                        drot: [0; 3].map(|_| rng.random_range(-r..=r)),
                        jaw: if rng.random_bool(0.3) {
                            JawCommand::Close
                        } else {
                            JawCommand::Open
                        },
                    })
                    .collect(),
            })
            .collect();
        let replay = || -> Result<Vec<u64>, String> {
            let mut s = reset_task(&spec, seed).map_err(err)?;
            for a in &actions {
                s = s.step(&a.quantized()).map_err(err)?;
            }
            Ok(fingerprint(&s))
        };
        let (a, b) = (replay()?, replay()?);
        ensure(a == b, format!("triple {i} ({task}, seed {seed}) diverged"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.0}s, limit 120s"))?;
    Ok(format!("100 triples bitwise identical in {secs:.1}s"))
}

// ---------------------------------------------------------------- experts

fn experts(work: &Path) -> Check {
    let mut rates = Vec::new();
    for task in TaskName::ALL {
        let spec = TaskSpec::default_for(task);
        let mut wins = 0;
        for seed in 0..200 {
            let r = rollout(
                &mut ExpertPolicy::default(),
                &spec,
                50_000 + seed,
                &RolloutConfig::default(),
            )
            .map_err(err)?;
            wins += usize::from(r.success);
        }
        let rate = wins as f64 / 200.0;
        ensure(
            rate >= 0.96,
            format!("{task}: expert success {rate:.3} < 0.96"),
        )?;
        rates.push(format!("{task} {rate:.3}"));
    }
    let start = Instant::now();
    for task in TaskName::ALL {
        let spec = TaskSpec::default_for(task);
        let cfg = CollectConfig {
            count: 50,
            seed: 0,
            noise_scale: 0.0,
            capture: Some(Capture {
                space: ObservationSpace::SingleCamera,
                rig: rig_at_resolution(&spec, 128).map_err(err)?,
                perception: PerceptionConfig::default(),
            }),
        };
        let (set, _) = collect(&spec, &work.join(format!("experts_{task}")), &cfg).map_err(err)?;
        let report = validate(&set);
        ensure(set.len() == 50, format!("{task}: {} episodes", set.len()))?;
        ensure(
            report.all_valid(),
            format!("{task}: invalid episodes {:?}", report.invalid()),
        )?;
        ensure(
            report.max_deviation() == 0.0,
            format!("{task}: deviation {:e}", report.max_deviation()),
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        secs < 900.0,
        format!("collection took {secs:.0}s, limit 900s"),
    )?;
    Ok(format!(
        "{}; 5x50 demos collected and validated in {secs:.0}s",
        rates.join(", ")
    ))
}

// ---------------------------------------------------------------- perception

/// Greedy farthest-point selection recomputed from scratch every step.
fn brute_force_fps(points: &[[f64; 3]], n: usize) -> Vec<usize> {
    let dist = |a: &[f64; 3], b: &[f64; 3]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };
    let mut chosen = vec![0];
    while chosen.len() < n {
        let mut best = (0, -1.0);
        for (j, p) in points.iter().enumerate() {
            if chosen.contains(&j) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| dist(p, &points[c]))
                .fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (j, d);
            }
        }
        chosen.push(best.0);
    }
    chosen
}

fn perception() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..1000 {
        let m = rng.random_range(1..=8);
        let n = rng.random_range(1..=m.min(4));
        let grid = rng.random_bool(0.5);
        let pts: Vec<[f64; 3]> = (0..m)
            .map(|_| {
                if grid {
                    [0; 3].map(|_| f64::from(rng.random_range(0..3)))
                } else {
                    [0; 3].map(|_| rng.random_range(-1.0..1.0))
                }
            })
            .collect();
        let got = farthest_point_sample(&pts, n).map_err(err)?.indices;
        ensure(
            got == brute_force_fps(&pts, n),
            format!("FPS instance {i} differs from oracle"),
        )?;
    }

    let mut worst: f64 = 0.0;
    let mut pixels = 0;
    for task in TaskName::ALL {
        let spec = TaskSpec::default_for(task);
        let scene = reset_task(&spec, 2).map_err(err)?;
        for cam in default_rig(&spec)
            .map_err(err)?
            .cameras(&scene)
            .map_err(err)?
        {
            let frame = render(&scene, &cam);
            let cloud =
                deproject(&frame, &cam, &PixelMask::all(frame.width, frame.height)).map_err(err)?;
            let mut k = 0;
            for v in 0..frame.height {
                for u in 0..frame.width {
                    if frame.depth[frame.index(u, v)] <= 0.0 {
                        continue;
                    }
                    let px = cam.project(&cloud.points[k].into());
                    worst = worst
                        .max((px.x - f64::from(u)).abs())
                        .max((px.y - f64::from(v)).abs());
                    k += 1;
                }
            }
            pixels += k;
        }
    }
    ensure(worst <= 1e-6, format!("round trip error {worst:e} px"))?;

    let mut frames = 0;
    for seed in 0..20 {
        for task in TaskName::ALL {
            let spec = TaskSpec::default_for(task);
            let scene = reset_task(&spec, seed).map_err(err)?;
            let frame = render(&scene, &default_rig(&spec).map_err(err)?.primary);
            let ids = default_crop_ids(task, spec.num_arms);
            let mask = crop_by_segmentation(&frame, &ids).map_err(err)?;
            for v in 0..frame.height {
                for u in 0..frame.width {
                    let inside = ids.contains(&ObjectId(frame.seg[frame.index(u, v)]));
                    ensure(
                        mask.get(u, v) == inside,
                        format!("crop mismatch {task} seed {seed} at ({u},{v})"),
                    )?;
                }
            }
            frames += 1;
        }
    }
    Ok(format!(
        "FPS = oracle on 1000 instances; round trip max {worst:.1e} px over {pixels} px; crop exact on {frames} frames"
    ))
}

// ---------------------------------------------------------------- randomization

fn randomization() -> Check {
    // Half-widths from the task descriptions: (x, y) in meters.
    let ranges = [
        (TaskName::TissueRetraction, 0.02, 0.0),
        (TaskName::NeedleLift, 0.025, 0.01),
        (TaskName::NeedleHandover, 0.015, 0.02),
        (TaskName::SuturePad, 0.02, 0.0),
    ];
    let mut notes = Vec::new();
    for (task, hx, hy) in ranges {
        let spec = TaskSpec::default_for(task);
        let (mut max_x, mut max_y): (f64, f64) = (0.0, 0.0);
        for seed in 0..10_000 {
            let s = reset_task(&spec, seed).map_err(err)?;
            let (dx, dy) = if task == TaskName::TissueRetraction {
                (s.props.marker_local.ok_or("tissue marker missing")?[0], 0.0)
            } else {
                let (nominal, _) = layout::needle_nominal(task);
                let p = s.objects[&layout::NEEDLE].position;
                (p[0] - nominal.x, p[1] - nominal.y)
            };
            ensure(
                dx.abs() <= hx + 1e-12 && dy.abs() <= hy + 1e-12,
                format!("{task} seed {seed}: offset ({dx:.4}, {dy:.4})"),
            )?;
            max_x = max_x.max(dx.abs());
            max_y = max_y.max(dy.abs());
        }
        // The full range is used, not just a corner of it.
        ensure(
            max_x >= 0.95 * hx && max_y >= 0.95 * hy,
            format!("{task}: range underused ({max_x:.4}, {max_y:.4})"),
        )?;
        notes.push(format!("{task} |dx|<={max_x:.4} |dy|<={max_y:.4}"));
    }
    let spec = TaskSpec::default_for(TaskName::BlockTransfer);
    let pegs = spec.randomization.pegs as usize;
    let mut counts = vec![0usize; pegs];
    for seed in 0..10_000 {
        let s = reset_task(&spec, seed).map_err(err)?;
        let peg = s.props.start_peg.ok_or("no start peg")?;
        ensure(peg < pegs, format!("peg {peg} out of range"))?;
        counts[peg] += 1;
    }
    let worst = counts
        .iter()
        .map(|c| (*c as f64 / 10_000.0 - 1.0 / pegs as f64).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 0.02, format!("peg frequencies {counts:?}"))?;
    notes.push(format!(
        "block_transfer peg counts {counts:?} (max dev {worst:.4})"
    ));
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- policy math

fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(
        (0..n)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect::<Vec<f64>>(),
        shape,
        &Device::Cpu,
    )
    .unwrap()
}

/// Worst relative error between backprop and central differences. Gradients
/// smaller than the floor are compared against the floor.
fn gradient_error(map: &VarMap, loss: impl Fn() -> Tensor) -> f64 {
    const H: f64 = 1e-6;
    const FLOOR: f64 = 1e-5;
    let grads = loss().backward().unwrap();
    let mut worst: f64 = 0.0;
    for var in map.all_vars() {
        let analytic: Vec<f64> = grads
            .get(var.as_tensor())
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let shape = var.as_tensor().shape().clone();
        let set = |v: &Var, d: Vec<f64>| {
            v.set(&Tensor::from_vec(d, shape.clone(), &Device::Cpu).unwrap())
                .unwrap()
        };
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += H;
            set(&var, p);
            let lp = scalar(&loss());
            let mut m = base.clone();
            m[i] -= H;
            set(&var, m);
            let lm = scalar(&loss());
            set(&var, base.clone());
            let numeric = (lp - lm) / (2.0 * H);
            worst = worst.max(
                (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(FLOOR),
            );
        }
    }
    worst
}

fn policy_math() -> Check {
    let dev = Device::Cpu;
    let one = Tensor::new(&[[1.0f64]], &dev).map_err(err)?;
    let zero = one.zeros_like().map_err(err)?;
    // sigma = 1 means log-variance 0.
    let kl = scalar(&kl_divergence(&one, &zero).map_err(err)?);
    ensure(kl == 0.5, format!("KL(mu=1, sigma=1) = {kl}"))?;
    ensure(
        scalar(&kl_divergence(&zero, &zero).map_err(err)?) == 0.0,
        "KL(0, 1) != 0",
    )?;

    let (a, b) = ([1.0, -2.0, 0.5], [3.0, 4.0, -1.5]);
    let even = aggregate(&[(1, &a), (0, &b)], 0.0);
    let weighted = aggregate(&[(1, &a), (0, &b)], std::f64::consts::LN_2);
    for i in 0..3 {
        ensure(
            (even[i] - (a[i] + b[i]) / 2.0).abs() <= 1e-9,
            "m=0 aggregation is not the mean",
        )?;
        ensure(
            (weighted[i] - (0.5 * a[i] + b[i]) / 1.5).abs() <= 1e-9,
            "m=ln2 aggregation mismatch",
        )?;
    }

    let sched = DiffusionSchedule::from_alpha_bar(vec![1.0, 0.25]).map_err(err)?;
    ensure(
        sched.q_sample(&[0.7, -1.2], 0, &[5.0, -3.0]).map_err(err)? == vec![0.7, -1.2],
        "q_sample(t=0) != x0",
    )?;
    ensure(
        sched.q_sample(&[2.0], 1, &[0.0]).map_err(err)? == vec![1.0],
        "q_sample(t=1, eps=0) != sqrt(ab) x0",
    )?;

    let map = VarMap::new();
    let enc =
        PointEncoder::new(&[32, 64], 48, seeded_builder(&map, 3, DType::F32, &dev)).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let n = rng.random_range(1..300);
        let pts: Vec<f32> = (0..3 * n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<f32> = perm
            .iter()
            .flat_map(|&j| pts[3 * j..3 * j + 3].to_vec())
            .collect();
        let pooled = |p: Vec<f32>| -> Vec<f32> {
            let t = Tensor::from_vec(p, (1, n, 3), &dev).unwrap();
            enc.pooled(&t)
                .unwrap()
                .flatten_all()
                .unwrap()
                .to_vec1()
                .unwrap()
        };
        ensure(
            pooled(pts) == pooled(shuffled),
            format!("cloud {i}: pooled features depend on point order"),
        )?;
    }

    let mut worst: f64 = 0.0;
    {
        let map = VarMap::new();
        let vb = seeded_builder(&map, 7, DType::F64, &dev);
        let l1 = linear(4, 8, vb.pp("l1")).map_err(err)?;
        let l2 = linear(8, 3, vb.pp("l2")).map_err(err)?;
        let x = rand_tensor(&mut rng, &[6, 4]);
        let y = rand_tensor(&mut rng, &[6, 3]);
        worst = worst.max(gradient_error(&map, || {
            diffusion_loss(
                &l2.forward(&mish(&l1.forward(&x).unwrap()).unwrap())
                    .unwrap(),
                &y,
            )
            .unwrap()
        }));
    }
    {
        let map = VarMap::new();
        let vb = seeded_builder(&map, 5, DType::F64, &dev);
        let l1 = linear(4, 8, vb.pp("l1")).map_err(err)?;
        let x = rand_tensor(&mut rng, &[5, 4]);
        let truth = rand_tensor(&mut rng, &[5, 2, 2]);
        worst = worst.max(gradient_error(&map, || {
            let out = l1.forward(&x).unwrap().tanh().unwrap();
            let pred = out.narrow(1, 0, 4).unwrap().reshape((5, 2, 2)).unwrap();
            let mu = out.narrow(1, 4, 2).unwrap();
            let logvar = out.narrow(1, 6, 2).unwrap();
            surgbench_policies::act::act_loss(&pred, &truth, &mu, &logvar, 10.0)
                .unwrap()
                .total
        }));
    }
    {
        let map = VarMap::new();
        let enc =
            Encoder::new(1, 4, 2, 8, seeded_builder(&map, 9, DType::F64, &dev)).map_err(err)?;
        let x = rand_tensor(&mut rng, &[2, 3, 4]);
        let pos = rand_tensor(&mut rng, &[3, 4]);
        let y = rand_tensor(&mut rng, &[2, 3, 4]);
        worst = worst.max(gradient_error(&map, || {
            diffusion_loss(&enc.forward(&x, &pos).unwrap(), &y).unwrap()
        }));
    }
    ensure(
        worst <= 1e-4,
        format!("worst relative gradient error {worst:e}"),
    )?;
    Ok(format!("KL, aggregation, q_sample exact; permutation invariant on 100 clouds; gradient error {worst:.1e}"))
}

// ---------------------------------------------------------------- bimodality

fn bimodality() -> Check {
    let r = bimodal_experiment(&BimodalConfig::default()).map_err(err)?;
    let detail = format!(
        "{:.1}% near -1, {:.1}% near +1 after {:.0}s",
        100.0 * r.near_minus,
        100.0 * r.near_plus,
        r.seconds
    );
    ensure(r.near_minus >= 0.2 && r.near_plus >= 0.2, detail.clone())?;
    ensure(
        r.seconds < 300.0,
        format!("{detail}: over the 5 minute budget"),
    )?;
    Ok(detail)
}

// ---------------------------------------------------------------- learning smoke

const SMOKE_DEMOS: usize = 50;
const SMOKE_TRIALS: usize = 20;
const EVAL_SEED0: u64 = 1_000_000;
const ACT_TRAIN: (usize, f64) = (3000, 1e-3);
const DP3_TRAIN: (usize, f64) = (3000, 1e-3);

fn smoke_set(work: &Path, space: ObservationSpace) -> Result<DemonstrationSet, String> {
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let cfg = CollectConfig {
        count: SMOKE_DEMOS,
        seed: 0,
        noise_scale: 0.0,
        capture: Some(Capture {
            space,
            rig: rig_at_resolution(&spec, 128).map_err(err)?,
            perception: PerceptionConfig::default(),
        }),
    };
    Ok(collect(&spec, &work.join(format!("smoke_{space}")), &cfg)
        .map_err(err)?
        .0)
}

fn train_config((steps, lr): (usize, f64)) -> TrainConfig {
    TrainConfig {
        steps,
        lr,
        batch_size: 16,
        ..Default::default()
    }
}

fn setup_for(set: &DemonstrationSet) -> EvalSetup {
    let capture = set.manifest.capture.clone().expect("captured set");
    let mut setup = EvalSetup::new(Some(capture.rig)).with_training_seeds(set.seeds());
    setup.perception = capture.perception;
    setup
}

struct Smoke {
    act: TrainedPolicy,
    act_set: DemonstrationSet,
}

fn learning_smoke(work: &Path, keep: &mut Option<Smoke>) -> Check {
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let images = smoke_set(work, ObservationSpace::SingleCamera)?;
    let clouds = smoke_set(work, ObservationSpace::PointCloud)?;

    let start = Instant::now();
    let data = TrainingData::load(&images).map_err(err)?;
    let (mut act, _) =
        train_act(&data, act_config_for(&data), &train_config(ACT_TRAIN)).map_err(err)?;
    drop(data);
    let act_r = run_success_eval(
        &mut act,
        &spec,
        SMOKE_TRIALS,
        EVAL_SEED0,
        &setup_for(&images),
    )
    .map_err(err)?;
    let act_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let data = TrainingData::load(&clouds).map_err(err)?;
    let cfg = dp3_config_for(&data).map_err(err)?;
    let (mut dp3, _) = train_dp3(&data, cfg, &train_config(DP3_TRAIN)).map_err(err)?;
    drop(data);
    let dp3_r = run_success_eval(
        &mut dp3,
        &spec,
        SMOKE_TRIALS,
        EVAL_SEED0,
        &setup_for(&clouds),
    )
    .map_err(err)?;
    let dp3_secs = start.elapsed().as_secs_f64();

    let detail = format!(
        "ACT-S {}/{} ({:.0}s), DP3 {}/{} ({:.0}s); DP3 {} ACT-S",
        act_r.successes,
        act_r.n_trials,
        act_secs,
        dp3_r.successes,
        dp3_r.n_trials,
        dp3_secs,
        if dp3_r.success_rate >= act_r.success_rate {
            ">="
        } else {
            "<"
        }
    );
    *keep = Some(Smoke {
        act,
        act_set: images,
    });
    ensure(
        act_r.success_rate >= 0.5 && dp3_r.success_rate >= 0.5,
        detail.clone(),
    )?;
    ensure(
        act_secs + dp3_secs <= 8.0 * 3600.0,
        format!("{detail}: over the 8 h budget"),
    )?;
    Ok(detail)
}

// ---------------------------------------------------------------- harness protocols

/// Records which camera ids it sees, then ends the trial.
struct Probe(Rc<RefCell<Vec<BTreeSet<String>>>>);

impl Policy for Probe {
    fn name(&self) -> String {
        "probe".into()
    }
    fn observation_space(&self) -> Option<ObservationSpace> {
        Some(ObservationSpace::MultiCamera)
    }
    fn reset(&mut self, _: &SceneState, _: u64) -> surgbench_core::Result<()> {
        Ok(())
    }
    fn act(&mut self, input: &PolicyInput<'_>) -> surgbench_core::Result<Action> {
        self.0
            .borrow_mut()
            .push(input.observation.unwrap().images.keys().cloned().collect());
        Err(surgbench_core::Error::Policy("probe done".into()))
    }
}

fn harness(work: &Path, smoke: Option<Smoke>) -> Check {
    let spec = TaskSpec::default_for(TaskName::NeedleLift);
    let quick = ModelSpec {
        kind: ModelKind::Act,
        train: train_config((20, 1e-3)),
    };
    let Smoke { mut act, act_set } = match smoke {
        Some(s) => s,
        None => {
            let set = smoke_set(work, ObservationSpace::SingleCamera)?;
            Smoke {
                act: quick.fit(&set).map_err(err)?,
                act_set: set,
            }
        }
    };
    let setup = setup_for(&act_set);
    let mut report = Report::default();

    // Sample efficiency: a short training budget per point keeps this cheap;
    // the protocol, not the success level, is under test here.
    let mut trainer = SpecTrainer::new(quick, &act_set).map_err(err)?;
    let increments = [10, 20, 30, 40, 50];
    let curve = run_sample_efficiency(
        &mut trainer,
        &act_set,
        &spec,
        &increments,
        2,
        EVAL_SEED0,
        0,
        &setup,
    )
    .map_err(err)?;
    let xs: Vec<usize> = curve.points.iter().map(|p| p.n_demos).collect();
    ensure(xs == increments, format!("curve x-axis {xs:?}"))?;
    ensure(curve.is_nested(), "curve subsets are not nested")?;
    for w in increments.windows(2) {
        let small: BTreeSet<u64> = subsample(&act_set, w[0], 0)
            .map_err(err)?
            .seeds()
            .into_iter()
            .collect();
        let big: BTreeSet<u64> = subsample(&act_set, w[1], 0)
            .map_err(err)?
            .seeds()
            .into_iter()
            .collect();
        ensure(
            small.is_subset(&big),
            format!("{} demos not inside {}", w[0], w[1]),
        )?;
    }
    report.curves.push(curve);

    let table = run_instance_generalization(&mut act, &spec, &NEEDLES, 4, EVAL_SEED0, &setup)
        .map_err(err)?;
    let names: Vec<&str> = table.rows.iter().map(|r| r.needle.as_str()).collect();
    ensure(names == NEEDLES, format!("table rows {names:?}"))?;
    ensure(
        table.rows[0].train && table.rows[1..].iter().all(|r| !r.train),
        "N1 is not the only train row",
    )?;
    let held = table.rows[1..]
        .iter()
        .map(|r| r.result.success_rate)
        .sum::<f64>()
        / 4.0;
    ensure(table.average == Some(held), "Average is not the N2-N5 mean")?;
    report.instances.push(table);

    let bounds = PerturbBounds::default();
    let view1 = run_viewpoint_robustness(
        &mut act,
        &spec,
        ViewMode::View1,
        4,
        EVAL_SEED0,
        &bounds,
        &setup,
    )
    .map_err(err)?;
    ensure(
        view1.perturbations.len() == view1.n_trials,
        "not every view1 trial logged a perturbation",
    )?;
    ensure(
        view1.perturbations.iter().all(|(_, p)| p.within(&bounds)),
        "view1 perturbation out of bounds",
    )?;
    let view2 = run_viewpoint_robustness(
        &mut act,
        &spec,
        ViewMode::View2,
        4,
        EVAL_SEED0,
        &bounds,
        &setup,
    )
    .map_err(err)?;
    ensure(
        view2.errors.is_empty(),
        format!("view2 rollouts failed: {:?}", view2.errors),
    )?;
    report.results.extend([view1, view2]);

    let seen = Rc::new(RefCell::new(Vec::new()));
    let rig = rig_at_resolution(&spec, 32).map_err(err)?;
    let probe_setup = EvalSetup::new(Some(rig.clone()));
    for mode in [ViewMode::Train, ViewMode::View2] {
        run_viewpoint_robustness(
            &mut Probe(seen.clone()),
            &spec,
            mode,
            1,
            EVAL_SEED0,
            &bounds,
            &probe_setup,
        )
        .map_err(err)?;
    }
    let seen = seen.borrow();
    let alternate = rig
        .alternate
        .as_ref()
        .ok_or("rig has no alternate view")?
        .id
        .clone();
    let mut expected = seen[0].clone();
    expected.remove(&rig.primary.id);
    expected.insert(alternate);
    ensure(
        seen[1] == expected,
        format!("view2 cameras {:?}, expected {expected:?}", seen[1]),
    )?;

    let out = work.join("report");
    let files = emit_report(&report, &out).map_err(err)?;
    for name in [
        "sample_efficiency.csv",
        "sample_efficiency_needle_lift.png",
        "table2.md",
        "viewpoint.png",
    ] {
        ensure(out.join(name).exists(), format!("{name} was not written"))?;
    }
    let rows = std::fs::read_to_string(out.join("sample_efficiency.csv"))
        .map_err(err)?
        .lines()
        .count()
        - 1;
    ensure(rows == 5, format!("curve file has {rows} points"))?;
    Ok(format!(
        "5-point nested curve, instance table N1..N5 with N2-N5 average, view1 bounds held, view2 swapped only the primary; {} report files",
        files.len()
    ))
}

fn main() {
    let only: Option<BTreeSet<String>> = std::env::var("SURGBENCH_ACCEPT")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let want = |key: &str| only.as_ref().is_none_or(|o| o.contains(key));
    let work = tempfile::tempdir().expect("temp dir");
    let work = work.path();
    let mut failed = 0;
    let mut report = |label: &str, started: Instant, result: Check| {
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {label}: {detail} [{secs:.0}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {label}: {detail} [{secs:.0}s]");
            }
        }
    };
    let mut smoke = None;
    let criteria: [(&str, &str); 8] = [
        ("determinism", "Determinism"),
        ("experts", "Scripted experts"),
        ("perception", "Perception oracle equivalence"),
        ("randomization", "Randomization bounds"),
        ("math", "Policy math"),
        ("bimodal", "Diffusion multimodality"),
        ("smoke", "Learning smoke"),
        ("harness", "Harness protocols"),
    ];
    for (key, label) in criteria {
        if !want(key) {
            continue;
        }
        let t = Instant::now();
        let result = match key {
            "determinism" => determinism(),
            "experts" => experts(work),
            "perception" => perception(),
            "randomization" => randomization(),
            "math" => policy_math(),
            "bimodal" => bimodality(),
            "smoke" => learning_smoke(work, &mut smoke),
            _ => harness(work, smoke.take()),
        };
        report(label, t, result);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
