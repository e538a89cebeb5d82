//! Transformer building blocks.
//!
//! Everything here is composed from differentiable tensor primitives. The
//! fused softmax and layer-norm kernels in candle have no backward pass, so
//! they are avoided.

use candle_core::{DType, Device, Module, Result, Tensor, D};
use candle_nn::{linear, Linear, VarBuilder};

/// `x * tanh(softplus(x))` with an overflow-safe softplus.
pub fn mish(x: &Tensor) -> Result<Tensor> {
    let softplus = (x.relu()? + (x.abs()?.neg()?.exp()? + 1.0)?.log()?)?;
    x * softplus.tanh()?
}

pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    candle_nn::ops::softmax(x, D::Minus1)
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            weight: vb.get_with_hints(dim, "weight", candle_nn::Init::Const(1.0))?,
            bias: vb.get_with_hints(dim, "bias", candle_nn::Init::Const(0.0))?,
            eps: 1e-5,
        })
    }
}

impl Module for LayerNorm {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        normed
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)
    }
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, vb: VarBuilder) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            candle_core::bail!("model width {dim} is not divisible by {heads} heads");
        }
        Ok(Self {
            q: linear(dim, dim, vb.pp("q"))?,
            k: linear(dim, dim, vb.pp("k"))?,
            v: linear(dim, dim, vb.pp("v"))?,
            out: linear(dim, dim, vb.pp("out"))?,
            heads,
        })
    }

    fn split(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        x.reshape((b, t, self.heads, d / self.heads))?
            .transpose(1, 2)?
            .contiguous()
    }

    /// `query` is `[B, Tq, D]`, `memory` is `[B, Tk, D]`.
    pub fn forward(&self, query: &Tensor, key: &Tensor, value: &Tensor) -> Result<Tensor> {
        let (b, tq, d) = query.dims3()?;
        let q = self.split(&self.q.forward(query)?)?;
        let k = self.split(&self.k.forward(key)?)?;
        let v = self.split(&self.v.forward(value)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let scores = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? * scale)?;
        let attn = softmax_last(&scores)?.matmul(&v)?;
        let merged = attn.transpose(1, 2)?.contiguous()?.reshape((b, tq, d))?;
        self.out.forward(&merged)
    }
}

#[derive(Clone, Debug)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn new(dim: usize, hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            up: linear(dim, hidden, vb.pp("up"))?,
            down: linear(hidden, dim, vb.pp("down"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.relu()?)
    }
}

/// Pre-norm self-attention block. Positional embeddings are added to queries
/// and keys at every layer, not to values.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    attn: MultiHeadAttention,
    ff: FeedForward,
    norm1: LayerNorm,
    norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(dim: usize, heads: usize, hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            attn: MultiHeadAttention::new(dim, heads, vb.pp("attn"))?,
            ff: FeedForward::new(dim, hidden, vb.pp("ff"))?,
            norm1: LayerNorm::new(dim, vb.pp("norm1"))?,
            norm2: LayerNorm::new(dim, vb.pp("norm2"))?,
        })
    }

    pub fn forward(&self, x: &Tensor, pos: &Tensor) -> Result<Tensor> {
        let h = self.norm1.forward(x)?;
        let qk = h.broadcast_add(pos)?;
        let x = (x + self.attn.forward(&qk, &qk, &h)?)?;
        let h = self.norm2.forward(&x)?;
        x + self.ff.forward(&h)?
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    layers: Vec<EncoderLayer>,
    norm: LayerNorm,
}

impl Encoder {
    pub fn new(
        layers: usize,
        dim: usize,
        heads: usize,
        hidden: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        Ok(Self {
            layers: (0..layers)
                .map(|i| EncoderLayer::new(dim, heads, hidden, vb.pp(format!("layer{i}"))))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new(dim, vb.pp("norm"))?,
        })
    }

    pub fn forward(&self, x: &Tensor, pos: &Tensor) -> Result<Tensor> {
        let mut x = x.clone();
        for layer in &self.layers {
            x = layer.forward(&x, pos)?;
        }
        self.norm.forward(&x)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    self_attn: MultiHeadAttention,
    cross_attn: MultiHeadAttention,
    ff: FeedForward,
    norm1: LayerNorm,
    norm2: LayerNorm,
    norm3: LayerNorm,
}

impl DecoderLayer {
    pub fn new(dim: usize, heads: usize, hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            self_attn: MultiHeadAttention::new(dim, heads, vb.pp("self_attn"))?,
            cross_attn: MultiHeadAttention::new(dim, heads, vb.pp("cross_attn"))?,
            ff: FeedForward::new(dim, hidden, vb.pp("ff"))?,
            norm1: LayerNorm::new(dim, vb.pp("norm1"))?,
            norm2: LayerNorm::new(dim, vb.pp("norm2"))?,
            norm3: LayerNorm::new(dim, vb.pp("norm3"))?,
        })
    }

    /// `x` holds the query tokens, `query_pos` their learned embeddings.
    pub fn forward(
        &self,
        x: &Tensor,
        query_pos: &Tensor,
        memory: &Tensor,
        memory_pos: &Tensor,
    ) -> Result<Tensor> {
        let h = self.norm1.forward(x)?;
        let qk = h.broadcast_add(query_pos)?;
        let x = (x + self.self_attn.forward(&qk, &qk, &h)?)?;
        let h = self.norm2.forward(&x)?;
        let q = h.broadcast_add(query_pos)?;
        let k = memory.broadcast_add(memory_pos)?;
        let x = (&x + self.cross_attn.forward(&q, &k, memory)?)?;
        let h = self.norm3.forward(&x)?;
        x + self.ff.forward(&h)?
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    layers: Vec<DecoderLayer>,
    norm: LayerNorm,
}

impl Decoder {
    pub fn new(
        layers: usize,
        dim: usize,
        heads: usize,
        hidden: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        Ok(Self {
            layers: (0..layers)
                .map(|i| DecoderLayer::new(dim, heads, hidden, vb.pp(format!("layer{i}"))))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new(dim, vb.pp("norm"))?,
        })
    }

    pub fn forward(
        &self,
        queries: &Tensor,
        query_pos: &Tensor,
        memory: &Tensor,
        memory_pos: &Tensor,
    ) -> Result<Tensor> {
        let mut x = queries.clone();
        for layer in &self.layers {
            x = layer.forward(&x, query_pos, memory, memory_pos)?;
        }
        self.norm.forward(&x)
    }
}

fn sinusoid(position: f64, dim: usize, i: usize) -> f64 {
    let pair = (i / 2) as f64;
    let angle = position / 10000f64.powf(2.0 * pair / dim as f64);
    if i.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// `[n, dim]` sinusoidal table over positions `0..n`.
pub fn sinusoidal_1d(n: usize, dim: usize, dtype: DType, dev: &Device) -> Result<Tensor> {
    let data: Vec<f64> = (0..n)
        .flat_map(|p| (0..dim).map(move |i| sinusoid(p as f64, dim, i)))
        .collect();
    Tensor::from_vec(data, (n, dim), dev)?.to_dtype(dtype)
}

/// `[h * w, dim]` table; the first half of each row encodes the row index,
/// the second half the column index. Rows are in raster order.
pub fn sinusoidal_2d(h: usize, w: usize, dim: usize, dtype: DType, dev: &Device) -> Result<Tensor> {
    if !dim.is_multiple_of(2) {
        candle_core::bail!("2-D positional embedding needs an even width, got {dim}");
    }
    let half = dim / 2;
    let mut data = Vec::with_capacity(h * w * dim);
    for y in 0..h {
        for x in 0..w {
            data.extend((0..half).map(|i| sinusoid(y as f64, half, i)));
            data.extend((0..half).map(|i| sinusoid(x as f64, half, i)));
        }
    }
    Tensor::from_vec(data, (h * w, dim), dev)?.to_dtype(dtype)
}

/// `[B, dim]` embedding of scalar diffusion timesteps.
pub fn timestep_embedding(
    steps: &[usize],
    dim: usize,
    dtype: DType,
    dev: &Device,
) -> Result<Tensor> {
    let data: Vec<f64> = steps
        .iter()
        .flat_map(|&t| (0..dim).map(move |i| sinusoid(t as f64, dim, i)))
        .collect();
    Tensor::from_vec(data, (steps.len(), dim), dev)?.to_dtype(dtype)
}
