//! Minibatch training loop with AdamW and a non-finite-loss guard.

use std::path::PathBuf;
use std::time::Instant;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW, VarMap};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Final learning rate as a fraction of `lr`, reached by cosine decay.
    pub final_lr_fraction: f64,
    pub seed: u64,
    /// Print a progress line every this many steps; 0 disables.
    pub log_every: usize,
    /// Where a failing batch is written on a non-finite loss.
    pub dump_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 16,
            lr: 3e-4,
            weight_decay: 1e-4,
            final_lr_fraction: 0.1,
            seed: 0,
            log_every: 0,
            dump_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, step: usize) -> f64 {
        let progress = step as f64 / self.steps.max(1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.lr * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cosine)
    }
}

/// Loss for one batch, plus named scalar terms for logging.
pub struct StepLoss {
    pub loss: Tensor,
    pub terms: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// `(step, loss)` for every step.
    pub losses: Vec<(usize, f64)>,
    pub seconds: f64,
}

impl TrainReport {
    /// Mean loss over the last `n` steps.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.losses[self.losses.len().saturating_sub(n)..];
        tail.iter().map(|(_, l)| l).sum::<f64>() / tail.len().max(1) as f64
    }
}

#[derive(Serialize)]
struct FaultDump<'a> {
    step: usize,
    samples: &'a [usize],
    loss: f64,
    terms: &'a [(String, f64)],
}

/// Runs `config.steps` optimizer steps over `num_samples` examples, drawn in
/// seeded epoch-wise shuffles. `step_fn` receives the sample indices of the
/// batch and the shared RNG for any noise it needs.
pub fn train_loop(
    vars: &VarMap,
    num_samples: usize,
    config: &TrainConfig,
    mut step_fn: impl FnMut(&[usize], &mut ChaCha8Rng) -> Result<StepLoss>,
) -> Result<TrainReport> {
    if num_samples == 0 {
        return Err(Error::config("no training samples"));
    }
    if config.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let params = ParamsAdamW {
        lr: config.lr_at(0),
        weight_decay: config.weight_decay,
        ..Default::default()
    };
    let mut opt = AdamW::new(vars.all_vars(), params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut report = TrainReport::default();
    let started = Instant::now();
    for step in 0..config.steps {
        let batch: Vec<usize> = (0..config.batch_size.min(num_samples))
            .map(|_| {
                if cursor == order.len() {
                    order = (0..num_samples).collect();
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                cursor += 1;
                order[cursor - 1]
            })
            .collect();
        let out = step_fn(&batch, &mut rng)?;
        let loss = out
            .loss
            .to_dtype(candle_core::DType::F64)?
            .to_scalar::<f64>()?;
        if !loss.is_finite() {
            let dump = match &config.dump_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("fault_step{step}.toml"));
                    let body = toml::to_string(&FaultDump {
                        step,
                        samples: &batch,
                        loss,
                        terms: &out.terms,
                    })?;
                    std::fs::write(&path, body)?;
                    Some(path)
                }
                None => None,
            };
            return Err(Error::TrainingFault { step, dump });
        }
        opt.set_learning_rate(config.lr_at(step));
        opt.backward_step(&out.loss)?;
        report.losses.push((step, loss));
        if config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.steps) {
            let terms: Vec<String> = out
                .terms
                .iter()
                .map(|(k, v)| format!("{k}={v:.4}"))
                .collect();
            eprintln!(
                "step {step:>6} loss {:.5} {} ({:.0}s)",
                report.tail_mean(config.log_every),
                terms.join(" "),
                started.elapsed().as_secs_f64()
            );
        }
    }
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_builder;
    use candle_core::{DType, Device, Module};

    #[test]
    fn fits_a_line_and_faults_on_nan() {
        let dev = Device::Cpu;
        let vars = VarMap::new();
        let lin = candle_nn::linear(1, 1, seeded_builder(&vars, 0, DType::F32, &dev)).unwrap();
        let xs: Vec<f32> = (0..32).map(|i| i as f32 / 16.0 - 1.0).collect();
        let cfg = TrainConfig {
            steps: 400,
            batch_size: 8,
            lr: 0.05,
            ..Default::default()
        };
        let report = train_loop(&vars, xs.len(), &cfg, |idx, _| {
            let x: Vec<f32> = idx.iter().map(|&i| xs[i]).collect();
            let y: Vec<f32> = x.iter().map(|v| 3.0 * v - 0.5).collect();
            let x = Tensor::from_vec(x, (idx.len(), 1), &dev)?;
            let y = Tensor::from_vec(y, (idx.len(), 1), &dev)?;
            let loss = (lin.forward(&x)? - y)?.sqr()?.mean_all()?;
            Ok(StepLoss {
                loss,
                terms: vec![],
            })
        })
        .unwrap();
        assert!(report.tail_mean(10) < 1e-3, "{}", report.tail_mean(10));

        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: 5,
            dump_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let err = train_loop(&vars, 4, &cfg, |_, _| {
            Ok(StepLoss {
                loss: Tensor::new(f32::NAN, &dev)?,
                terms: vec![("l1".into(), f64::NAN)],
            })
        })
        .unwrap_err();
        match err {
            Error::TrainingFault {
                step: 0,
                dump: Some(p),
            } => assert!(p.exists()),
            other => panic!("unexpected {other}"),
        }
    }
}
