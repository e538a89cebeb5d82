//! Denoising diffusion over action sequences, with a 1-D temporal U-Net that
//! predicts the clean sample directly.

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{group_norm, linear, GroupNorm, Init, Linear, VarBuilder};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{mish, timestep_embedding};

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    /// Cumulative signal fraction ᾱ_t for t in `0..T`.
    pub alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    /// Cosine schedule with offset 0.008 and betas capped at 0.999.
    pub fn squared_cos(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("diffusion needs at least one training step"));
        }
        let f = |t: f64| {
            ((t / steps as f64 + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2)
                .cos()
                .powi(2)
        };
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for i in 0..steps {
            let beta = (1.0 - f(i as f64 + 1.0) / f(i as f64)).min(0.999);
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self::from_alpha_bar(alpha_bar)
    }

    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.is_empty() {
            return Err(Error::config("empty diffusion schedule"));
        }
        if alpha_bar.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::config("alpha-bar values must lie in (0, 1]"));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("alpha-bar must be strictly decreasing"));
        }
        Ok(Self { alpha_bar })
    }

    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }

    fn check(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or_else(|| {
            Error::config(format!("timestep {t} outside 0..{}", self.alpha_bar.len()))
        })
    }

    /// `√ᾱ_t · x0 + √(1 − ᾱ_t) · noise`.
    pub fn q_sample(&self, x0: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>> {
        let a = self.check(t)?;
        if x0.len() != noise.len() {
            return Err(Error::shape("x0 and noise differ in length"));
        }
        Ok(x0
            .iter()
            .zip(noise)
            .map(|(x, n)| a.sqrt() * x + (1.0 - a).sqrt() * n)
            .collect())
    }

    /// Batched form: one timestep per leading row of `x0`.
    pub fn q_sample_tensor(&self, x0: &Tensor, ts: &[usize], noise: &Tensor) -> Result<Tensor> {
        let b = x0.dim(0)?;
        if ts.len() != b {
            return Err(Error::shape(format!(
                "{} timesteps for a batch of {b}",
                ts.len()
            )));
        }
        let mut shape = vec![b];
        shape.extend(std::iter::repeat_n(1, x0.rank() - 1));
        let mut sa = Vec::with_capacity(b);
        let mut sn = Vec::with_capacity(b);
        for &t in ts {
            let a = self.check(t)?;
            sa.push(a.sqrt());
            sn.push((1.0 - a).sqrt());
        }
        let sa = Tensor::from_vec(sa, shape.clone(), x0.device())?.to_dtype(x0.dtype())?;
        let sn = Tensor::from_vec(sn, shape, x0.device())?.to_dtype(x0.dtype())?;
        Ok((x0.broadcast_mul(&sa)? + noise.broadcast_mul(&sn)?)?)
    }

    /// Evenly strided timesteps, latest first. With `steps == T` this is the
    /// full schedule.
    pub fn inference_timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        let t = self.len();
        if steps == 0 || steps > t {
            return Err(Error::config(format!(
                "inference steps {steps} not in 1..={t}"
            )));
        }
        let ratio = t / steps;
        Ok((0..steps).rev().map(|i| i * ratio).collect())
    }

    /// Coefficients of the posterior `q(x_prev | x_t, x0)`:
    /// `(coef_x0, coef_xt, variance)`. `prev` is `None` for the last step.
    pub fn posterior(&self, t: usize, prev: Option<usize>) -> Result<(f64, f64, f64)> {
        let a_t = self.check(t)?;
        let a_prev = match prev {
            Some(p) => self.check(p)?,
            None => 1.0,
        };
        let alpha = a_t / a_prev;
        let beta = 1.0 - alpha;
        let coef_x0 = a_prev.sqrt() * beta / (1.0 - a_t);
        let coef_xt = alpha.sqrt() * (1.0 - a_prev) / (1.0 - a_t);
        let var = (1.0 - a_prev) / (1.0 - a_t) * beta;
        Ok((coef_x0, coef_xt, var.max(0.0)))
    }
}

pub fn gaussian(rng: &mut impl Rng, shape: &[usize], dtype: DType, dev: &Device) -> Result<Tensor> {
    let n = shape.iter().product();
    let data: Vec<f32> = (0..n)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect();
    Ok(Tensor::from_vec(data, shape, dev)?.to_dtype(dtype)?)
}

/// Mean squared error between the predicted and true clean samples.
pub fn diffusion_loss(pred: &Tensor, x0: &Tensor) -> Result<Tensor> {
    if pred.dims() != x0.dims() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            x0.dims()
        )));
    }
    Ok((pred - x0)?.sqr()?.mean_all()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnetConfig {
    pub action_dim: usize,
    pub horizon: usize,
    pub cond_dim: usize,
    pub down_dims: Vec<usize>,
    pub kernel: usize,
    pub groups: usize,
    pub step_embed_dim: usize,
}

impl UnetConfig {
    pub fn new(action_dim: usize, horizon: usize, cond_dim: usize) -> Self {
        Self {
            action_dim,
            horizon,
            cond_dim,
            down_dims: vec![64, 128, 256],
            kernel: 5,
            groups: 8,
            step_embed_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.down_dims.len();
        if levels == 0 {
            return Err(Error::config("U-Net needs at least one level"));
        }
        let factor = 1 << (levels - 1);
        if self.horizon == 0 || !self.horizon.is_multiple_of(factor) {
            return Err(Error::config(format!(
                "horizon {} must be a positive multiple of {factor}",
                self.horizon
            )));
        }
        if let Some(d) = self.down_dims.iter().find(|d| *d % self.groups != 0) {
            return Err(Error::config(format!(
                "width {d} not divisible by {} groups",
                self.groups
            )));
        }
        Ok(())
    }
}

/// 1-D convolution with "same" padding, built from slicing and a matmul.
///
/// candle's conv1d backward pass underflows on sequences shorter than the
/// kernel span, which the coarsest U-Net level hits at horizon 16. Stride 2
/// keeps every other output of the stride-1 result.
#[derive(Clone, Debug)]
struct Conv1d {
    weight: Tensor,
    bias: Tensor,
    kernel: usize,
    stride: usize,
}

impl Conv1d {
    fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        vb: VarBuilder,
    ) -> candle_core::Result<Self> {
        let weight = vb.get_with_hints(
            (cout, cin, kernel),
            "weight",
            candle_nn::init::DEFAULT_KAIMING_NORMAL,
        )?;
        let bound = 1.0 / ((cin * kernel) as f64).sqrt();
        let bias = vb.get_with_hints(
            cout,
            "bias",
            Init::Uniform {
                lo: -bound,
                up: bound,
            },
        )?;
        Ok(Self {
            weight,
            bias,
            kernel,
            stride,
        })
    }
}

impl Module for Conv1d {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, c, l) = x.dims3()?;
        let k = self.kernel;
        // Rows are (batch, position), columns are (channel, tap), matching the
        // weight layout, so the whole convolution is one 2-D matmul.
        let xt = x.transpose(1, 2)?;
        let cols = if k == 1 {
            xt.contiguous()?
        } else {
            let padded = xt.pad_with_zeros(1, k / 2, (k - 1) / 2)?;
            let taps: Vec<Tensor> = (0..k)
                .map(|j| padded.narrow(1, j, l))
                .collect::<candle_core::Result<_>>()?;
            Tensor::stack(&taps, 3)?
        };
        let o = self.weight.dim(0)?;
        let w = self.weight.reshape((o, c * k))?;
        let y = cols
            .reshape((b * l, c * k))?
            .matmul(&w.t()?)?
            .broadcast_add(&self.bias)?
            .reshape((b, l, o))?;
        let y = if self.stride > 1 {
            let keep: Vec<u32> = (0..l as u32).step_by(self.stride).collect();
            y.index_select(&Tensor::new(keep.as_slice(), x.device())?, 1)?
        } else {
            y
        };
        y.transpose(1, 2)?.contiguous()
    }
}

#[derive(Clone, Debug)]
struct ConvBlock {
    conv: Conv1d,
    norm: GroupNorm,
}

impl ConvBlock {
    fn new(
        cin: usize,
        cout: usize,
        k: usize,
        groups: usize,
        vb: VarBuilder,
    ) -> candle_core::Result<Self> {
        Ok(Self {
            conv: Conv1d::new(cin, cout, k, 1, vb.pp("conv"))?,
            norm: group_norm(groups, cout, 1e-5, vb.pp("norm"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        mish(&self.norm.forward(&self.conv.forward(x)?)?)
    }
}

/// Residual block whose first activation is modulated by the conditioning
/// vector (scale and shift per channel).
#[derive(Clone, Debug)]
struct FilmBlock {
    block1: ConvBlock,
    block2: ConvBlock,
    film: Linear,
    residual: Option<Conv1d>,
    channels: usize,
}

impl FilmBlock {
    fn new(
        cin: usize,
        cout: usize,
        cond: usize,
        cfg: &UnetConfig,
        vb: VarBuilder,
    ) -> candle_core::Result<Self> {
        let residual = if cin != cout {
            Some(Conv1d::new(cin, cout, 1, 1, vb.pp("residual"))?)
        } else {
            None
        };
        Ok(Self {
            block1: ConvBlock::new(cin, cout, cfg.kernel, cfg.groups, vb.pp("block1"))?,
            block2: ConvBlock::new(cout, cout, cfg.kernel, cfg.groups, vb.pp("block2"))?,
            film: linear(cond, 2 * cout, vb.pp("film"))?,
            residual,
            channels: cout,
        })
    }

    fn forward(&self, x: &Tensor, cond: &Tensor) -> candle_core::Result<Tensor> {
        let h = self.block1.forward(x)?;
        let film = self.film.forward(&mish(cond)?)?.unsqueeze(2)?;
        let scale = film.narrow(1, 0, self.channels)?;
        let shift = film.narrow(1, self.channels, self.channels)?;
        let h = h.broadcast_mul(&scale)?.broadcast_add(&shift)?;
        let h = self.block2.forward(&h)?;
        let skip = match &self.residual {
            Some(c) => c.forward(x)?,
            None => x.clone(),
        };
        h + skip
    }
}

fn downsample(c: usize, vb: VarBuilder) -> candle_core::Result<Conv1d> {
    Conv1d::new(c, c, 3, 2, vb)
}

/// Nearest-neighbour doubling followed by a 3-tap convolution.
fn upsample(x: &Tensor, conv: &Conv1d) -> candle_core::Result<Tensor> {
    let (b, c, l) = x.dims3()?;
    let doubled = x
        .unsqueeze(3)?
        .broadcast_as((b, c, l, 2))?
        .reshape((b, c, 2 * l))?;
    conv.forward(&doubled)
}

struct Level {
    blocks: [FilmBlock; 2],
    resample: Option<Conv1d>,
}

pub struct ConditionalUnet1d {
    pub config: UnetConfig,
    step_mlp: (Linear, Linear),
    down: Vec<Level>,
    mid: [FilmBlock; 2],
    up: Vec<Level>,
    final_block: ConvBlock,
    final_conv: Conv1d,
}

impl ConditionalUnet1d {
    pub fn new(config: UnetConfig, vb: VarBuilder) -> Result<Self> {
        config.validate()?;
        let e = config.step_embed_dim;
        let cond = e + config.cond_dim;
        let dims: Vec<usize> = std::iter::once(config.action_dim)
            .chain(config.down_dims.iter().copied())
            .collect();
        let levels = config.down_dims.len();
        let mut down = Vec::new();
        for i in 0..levels {
            let (cin, cout) = (dims[i], dims[i + 1]);
            let v = vb.pp(format!("down{i}"));
            down.push(Level {
                blocks: [
                    FilmBlock::new(cin, cout, cond, &config, v.pp("res0"))?,
                    FilmBlock::new(cout, cout, cond, &config, v.pp("res1"))?,
                ],
                resample: if i + 1 < levels {
                    Some(downsample(cout, v.pp("resample"))?)
                } else {
                    None
                },
            });
        }
        let last = dims[levels];
        let mid = [
            FilmBlock::new(last, last, cond, &config, vb.pp("mid0"))?,
            FilmBlock::new(last, last, cond, &config, vb.pp("mid1"))?,
        ];
        let mut up = Vec::new();
        for i in (1..levels).rev() {
            let (cin, cout) = (dims[i + 1], dims[i]);
            let v = vb.pp(format!("up{i}"));
            up.push(Level {
                blocks: [
                    FilmBlock::new(2 * cin, cout, cond, &config, v.pp("res0"))?,
                    FilmBlock::new(cout, cout, cond, &config, v.pp("res1"))?,
                ],
                resample: Some(Conv1d::new(cout, cout, 3, 1, v.pp("resample"))?),
            });
        }
        let start = dims[1];
        Ok(Self {
            step_mlp: (
                linear(e, 4 * e, vb.pp("step_mlp0"))?,
                linear(4 * e, e, vb.pp("step_mlp1"))?,
            ),
            down,
            mid,
            up,
            final_block: ConvBlock::new(
                start,
                start,
                config.kernel,
                config.groups,
                vb.pp("final_block"),
            )?,
            final_conv: Conv1d::new(start, config.action_dim, 1, 1, vb.pp("final_conv"))?,
            config,
        })
    }

    /// `sample` is `[B, H, A]`, `cond` is `[B, cond_dim]`; returns `[B, H, A]`.
    pub fn forward(&self, sample: &Tensor, timesteps: &[usize], cond: &Tensor) -> Result<Tensor> {
        let (b, h, a) = sample.dims3()?;
        if h != self.config.horizon || a != self.config.action_dim {
            return Err(Error::shape(format!(
                "sample [{b}, {h}, {a}] does not match horizon {} and action width {}",
                self.config.horizon, self.config.action_dim
            )));
        }
        if cond.dims() != [b, self.config.cond_dim] {
            return Err(Error::shape(format!(
                "conditioning {:?}, expected [{b}, {}]",
                cond.dims(),
                self.config.cond_dim
            )));
        }
        let temb = timestep_embedding(
            timesteps,
            self.config.step_embed_dim,
            sample.dtype(),
            sample.device(),
        )?;
        let temb = self
            .step_mlp
            .1
            .forward(&mish(&self.step_mlp.0.forward(&temb)?)?)?;
        let global = Tensor::cat(&[&temb, cond], 1)?;

        let mut x = sample.transpose(1, 2)?.contiguous()?;
        let mut skips = Vec::new();
        for level in &self.down {
            x = level.blocks[0].forward(&x, &global)?;
            x = level.blocks[1].forward(&x, &global)?;
            skips.push(x.clone());
            if let Some(d) = &level.resample {
                x = d.forward(&x)?;
            }
        }
        for block in &self.mid {
            x = block.forward(&x, &global)?;
        }
        // Each up level consumes the skip at its own resolution, deepest
        // first; the full-resolution skip is unused.
        for level in &self.up {
            let skip = skips.pop().expect("one skip per up level");
            x = Tensor::cat(&[&x, &skip], 1)?;
            x = level.blocks[0].forward(&x, &global)?;
            x = level.blocks[1].forward(&x, &global)?;
            if let Some(c) = &level.resample {
                x = upsample(&x, c)?;
            }
        }
        let x = self.final_conv.forward(&self.final_block.forward(&x)?)?;
        Ok(x.transpose(1, 2)?.contiguous()?)
    }
}

/// A U-Net denoiser together with its noise schedule.
pub struct DiffusionHead {
    pub unet: ConditionalUnet1d,
    pub schedule: DiffusionSchedule,
    pub inference_steps: usize,
}

impl DiffusionHead {
    pub fn new(
        unet: UnetConfig,
        train_steps: usize,
        inference_steps: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        let schedule = DiffusionSchedule::squared_cos(train_steps)?;
        schedule.inference_timesteps(inference_steps)?;
        Ok(Self {
            unet: ConditionalUnet1d::new(unet, vb)?,
            schedule,
            inference_steps,
        })
    }

    /// Training loss for clean chunks `x0` with random timesteps and noise.
    pub fn loss(&self, x0: &Tensor, cond: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        let b = x0.dim(0)?;
        let ts: Vec<usize> = (0..b)
            .map(|_| rng.random_range(0..self.schedule.len()))
            .collect();
        let noise = gaussian(rng, x0.dims(), x0.dtype(), x0.device())?;
        let xt = self.schedule.q_sample_tensor(x0, &ts, &noise)?;
        let pred = self.unet.forward(&xt, &ts, cond)?;
        diffusion_loss(&pred, x0)
    }

    /// Ancestral sampling over the strided steps. Predicted clean samples
    /// are clipped to [-1, 1] before forming each transition mean.
    pub fn sample(&self, cond: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        let b = cond.dim(0)?;
        let shape = [b, self.unet.config.horizon, self.unet.config.action_dim];
        let mut x = gaussian(rng, &shape, cond.dtype(), cond.device())?;
        let ts = self.schedule.inference_timesteps(self.inference_steps)?;
        for (i, &t) in ts.iter().enumerate() {
            let prev = ts.get(i + 1).copied();
            let x0 = self.unet.forward(&x, &vec![t; b], cond)?.clamp(-1.0, 1.0)?;
            let (cx0, cxt, var) = self.schedule.posterior(t, prev)?;
            let mean = ((x0 * cx0)? + (&x * cxt)?)?;
            // Sampling never backpropagates; detaching frees each step's graph.
            x = if prev.is_some() && var > 0.0 {
                let z = gaussian(rng, &shape, cond.dtype(), cond.device())?;
                (mean + (z * var.sqrt())?)?
            } else {
                mean
            }
            .detach();
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_builder;
    use candle_nn::VarMap;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv1d_matches_candle_forward() {
        let dev = Device::Cpu;
        let map = VarMap::new();
        let vb = seeded_builder(&map, 1, DType::F64, &dev);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(&mut rng, &[3, 4, 8], DType::F64, &dev).unwrap();
        for (k, stride) in [(1, 1), (3, 1), (5, 1), (3, 2)] {
            let conv = Conv1d::new(4, 6, k, stride, vb.pp(format!("c{k}{stride}"))).unwrap();
            let ours = conv.forward(&x).unwrap();
            let reference = x
                .conv1d(&conv.weight, k / 2, stride, 1, 1)
                .unwrap()
                .broadcast_add(&conv.bias.reshape((1, 6, 1)).unwrap())
                .unwrap();
            assert_eq!(ours.dims(), reference.dims());
            let diff = (ours - reference)
                .unwrap()
                .abs()
                .unwrap()
                .max_all()
                .unwrap()
                .to_scalar::<f64>()
                .unwrap();
            assert!(diff < 1e-12, "k={k} stride={stride}: {diff}");
        }
    }

    #[test]
    fn cosine_schedule_is_strictly_decreasing_from_one() {
        let s = DiffusionSchedule::squared_cos(100).unwrap();
        assert_eq!(s.len(), 100);
        assert!(s.alpha_bar[0] > 0.999 && s.alpha_bar[0] <= 1.0);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(*s.alpha_bar.last().unwrap() > 0.0);
    }

    #[test]
    fn strided_timesteps() {
        let s = DiffusionSchedule::squared_cos(100).unwrap();
        assert_eq!(
            s.inference_timesteps(10).unwrap(),
            vec![90, 80, 70, 60, 50, 40, 30, 20, 10, 0]
        );
        let full = s.inference_timesteps(100).unwrap();
        assert_eq!(full.len(), 100);
        assert_eq!((full[0], full[99]), (99, 0));
        assert!(s.inference_timesteps(0).is_err());
        assert!(s.inference_timesteps(101).is_err());
    }

    #[test]
    fn last_step_returns_predicted_sample() {
        let s = DiffusionSchedule::squared_cos(100).unwrap();
        let (cx0, cxt, var) = s.posterior(0, None).unwrap();
        assert!((cx0 - 1.0).abs() < 1e-12);
        assert!(cxt.abs() < 1e-12);
        assert!(var.abs() < 1e-12);
    }

    #[test]
    fn unet_shapes_and_seeded_sampling() {
        let dev = Device::Cpu;
        let map = VarMap::new();
        let mut cfg = UnetConfig::new(7, 16, 10);
        cfg.down_dims = vec![16, 32];
        let head =
            DiffusionHead::new(cfg, 100, 10, seeded_builder(&map, 0, DType::F32, &dev)).unwrap();
        let cond = Tensor::zeros((3, 10), DType::F32, &dev).unwrap();
        let a = head
            .sample(&cond, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let b = head
            .sample(&cond, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        assert_eq!(a.dims(), &[3, 16, 7]);
        let diff: f32 = (a - b)
            .unwrap()
            .abs()
            .unwrap()
            .sum_all()
            .unwrap()
            .to_scalar()
            .unwrap();
        assert_eq!(diff, 0.0);
        assert!(UnetConfig::new(7, 6, 1).validate().is_err());
    }
}
