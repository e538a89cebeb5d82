use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use surgbench_core::camera::{rig_at_resolution, PerturbBounds};
use surgbench_core::dataset::{subsample, validate, Capture, DemonstrationSet};
use surgbench_core::expert::{collect, CollectConfig};
use surgbench_core::perception::PerceptionConfig;
use surgbench_core::{ObservationSpace, TaskName, TaskSpec};
use surgbench_eval::protocols::{
    CURVE_TRIALS, DEFAULT_INCREMENTS, INSTANCE_TRIALS, NEEDLES, TABLE1_TRIALS, VIEWPOINT_TRIALS,
};
use surgbench_eval::{
    emit_report, run_instance_generalization, run_sample_efficiency, run_success_eval,
    run_viewpoint_robustness, EvalSetup, ModelKind, ModelSpec, Report, SpecTrainer, ViewMode,
};
use surgbench_policies::checkpoint::ModelConfig;
use surgbench_policies::{TrainConfig, TrainedPolicy};
use surgbench_teleop::SessionConfig;

#[derive(Parser)]
#[command(
    name = "surgbench",
    version,
    about = "Surgical manipulation benchmark tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Act,
    Dp3,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Table1,
    SampleEff,
    InstanceGen,
    Viewpoint,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted-expert demonstrations.
    Collect {
        #[arg(long)]
        task: TaskName,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Observations to store: single_camera, multi_camera, point_cloud; omit for state only.
        #[arg(long)]
        space: Option<ObservationSpace>,
        #[arg(long, default_value_t = 128)]
        resolution: u32,
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy on a demonstration set.
    Train {
        #[arg(long)]
        task: TaskName,
        #[arg(long)]
        space: ObservationSpace,
        #[arg(long, value_enum)]
        model: Model,
        /// Dataset directory written by `collect`.
        #[arg(long)]
        data: PathBuf,
        /// Train on this many demos, drawn by `--seed`; all when omitted.
        #[arg(long)]
        demos: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3000)]
        steps: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an evaluation protocol and write CSV, Markdown and PNG reports.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: TaskName,
        #[arg(long, value_enum)]
        protocol: Protocol,
        /// Defaults to the protocol's standard count.
        #[arg(long)]
        trials: Option<usize>,
        /// First evaluation seed.
        #[arg(long, default_value_t = 1_000_000)]
        seed: u64,
        /// Demonstration set for `sample-eff`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        increments: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a live teleoperation session over WebSocket.
    TeleopServer {
        #[arg(long)]
        task: TaskName,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value_t = 20.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where recorded episodes are saved.
        #[arg(long, default_value = "teleop_demos")]
        data: PathBuf,
        /// Send a camera frame every this many steps.
        #[arg(long)]
        frame_every: Option<u32>,
        #[arg(long, default_value_t = 128)]
        resolution: u32,
    },
}

fn capture_for(
    spec: &TaskSpec,
    space: Option<ObservationSpace>,
    resolution: u32,
    points: usize,
) -> Result<Option<Capture>> {
    let Some(space) = space else {
        return Ok(None);
    };
    Ok(Some(Capture {
        space,
        rig: rig_at_resolution(spec, resolution)?,
        perception: PerceptionConfig {
            num_points: points,
            ..Default::default()
        },
    }))
}

fn run_collect(spec: &TaskSpec, config: &CollectConfig, out: &std::path::Path) -> Result<()> {
    let (set, stats) = collect(spec, out, config)?;
    let report = validate(&set);
    println!(
        "collected {} episodes in {} attempts; replay deviation {:.3e}",
        stats.kept,
        stats.attempts,
        report.max_deviation()
    );
    if !report.all_valid() {
        bail!("episodes failed validation: {:?}", report.invalid());
    }
    Ok(())
}

fn load_policy(dir: &std::path::Path, task: TaskName) -> Result<(TrainedPolicy, EvalSetup)> {
    let policy = TrainedPolicy::load(dir)
        .with_context(|| format!("loading checkpoint {}", dir.display()))?;
    let meta = policy.meta().clone();
    if meta.task != task {
        bail!("checkpoint was trained on {}, not {task}", meta.task);
    }
    let capture = meta
        .capture
        .clone()
        .context("checkpoint does not record the camera rig it was trained with")?;
    let mut setup =
        EvalSetup::new(Some(capture.rig)).with_training_seeds(meta.demo_seeds.iter().copied());
    setup.perception = capture.perception;
    Ok((policy, setup))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Collect {
            task,
            count,
            seed,
            noise,
            space,
            resolution,
            points,
            out,
        } => {
            let spec = TaskSpec::default_for(task);
            let config = CollectConfig {
                count,
                seed,
                noise_scale: noise,
                capture: capture_for(&spec, space, resolution, points)?,
            };
            run_collect(&spec, &config, &out)
        }
        Command::Train {
            task,
            space,
            model,
            data,
            demos,
            seed,
            steps,
            batch,
            lr,
            out,
        } => {
            let full = DemonstrationSet::open(&data)?;
            if full.manifest.task != task {
                bail!(
                    "{} holds {} demos, not {task}",
                    data.display(),
                    full.manifest.task
                );
            }
            let captured = full.manifest.capture.as_ref().map(|c| c.space);
            if captured != Some(space) {
                bail!(
                    "{} was captured as {captured:?}, not {space}",
                    data.display()
                );
            }
            let set = match demos {
                Some(n) => subsample(&full, n, seed)?,
                None => full,
            };
            let spec = ModelSpec {
                kind: match model {
                    Model::Act => ModelKind::Act,
                    Model::Dp3 => ModelKind::Dp3,
                },
                train: TrainConfig {
                    steps,
                    batch_size: batch,
                    lr,
                    seed,
                    log_every: 100,
                    dump_dir: Some(out.join("faults")),
                    ..Default::default()
                },
            };
            let policy = spec.fit(&set)?;
            policy.save(&out)?;
            println!(
                "saved {} trained on {} demos to {}",
                model_label(&policy),
                set.len(),
                out.display()
            );
            Ok(())
        }
        Command::Eval {
            checkpoint,
            task,
            protocol,
            trials,
            seed,
            data,
            increments,
            out,
        } => {
            let spec = TaskSpec::default_for(task);
            let (mut policy, setup) = load_policy(&checkpoint, task)?;
            let mut report = Report::default();
            match protocol {
                Protocol::Table1 => {
                    let n = trials.unwrap_or(TABLE1_TRIALS);
                    report
                        .results
                        .push(run_success_eval(&mut policy, &spec, n, seed, &setup)?);
                }
                Protocol::SampleEff => {
                    let data = data.context("sample-eff needs --data")?;
                    let set = DemonstrationSet::open(&data)?;
                    let meta = policy.meta();
                    let kind = match meta.model {
                        ModelConfig::Act(_) => ModelKind::Act,
                        ModelConfig::Dp3(_) => ModelKind::Dp3,
                    };
                    let model = ModelSpec {
                        kind,
                        train: meta.train.clone(),
                    };
                    let mut trainer = SpecTrainer::new(model, &set)?;
                    let increments = increments.unwrap_or(DEFAULT_INCREMENTS.to_vec());
                    let n = trials.unwrap_or(CURVE_TRIALS);
                    let curve = run_sample_efficiency(
                        &mut trainer,
                        &set,
                        &spec,
                        &increments,
                        n,
                        seed,
                        meta.train.seed,
                        &setup,
                    )?;
                    report
                        .results
                        .extend(curve.points.iter().filter_map(|p| p.result.clone()));
                    report.curves.push(curve);
                }
                Protocol::InstanceGen => {
                    let n = trials.unwrap_or(INSTANCE_TRIALS);
                    report.instances.push(run_instance_generalization(
                        &mut policy,
                        &spec,
                        &NEEDLES,
                        n,
                        seed,
                        &setup,
                    )?);
                }
                Protocol::Viewpoint => {
                    let n = trials.unwrap_or(VIEWPOINT_TRIALS);
                    for mode in ViewMode::ALL {
                        let r = run_viewpoint_robustness(
                            &mut policy,
                            &spec,
                            mode,
                            n,
                            seed,
                            &PerturbBounds::default(),
                            &setup,
                        )?;
                        report.results.push(r);
                    }
                }
            }
            for r in &report.results {
                println!(
                    "{} {} {} {}: {}/{}",
                    r.task, r.model, r.protocol, r.condition, r.successes, r.n_trials
                );
            }
            for path in emit_report(&report, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::TeleopServer {
            task,
            port,
            rate,
            seed,
            data,
            frame_every,
            resolution,
        } => {
            let spec = TaskSpec::default_for(task);
            let config = SessionConfig {
                rig: rig_at_resolution(&spec, resolution)?,
                spec,
                seed,
                rate_hz: rate,
                dataset: data,
                capture: None,
                frame_every,
            };
            let listener = std::net::TcpListener::bind(("0.0.0.0", port))?;
            println!("teleop server listening on ws://{}", listener.local_addr()?);
            surgbench_teleop::serve(listener, config, Arc::new(AtomicBool::new(false)))?;
            Ok(())
        }
    }
}

fn model_label(policy: &TrainedPolicy) -> String {
    use surgbench_core::Policy;
    surgbench_eval::model_label(&policy.name())
}
