//! A linear layer whose output for each row is computed in a fixed
//! summation order, independent of where the row sits in the batch.
//!
//! BLAS-style kernels round differently for rows that land in vector lanes
//! and rows in remainder tiles, so permuting the points of a cloud changes
//! per-point features in the last bits. Set encoders need exact permutation
//! invariance, so they use this layer instead.

use candle_core::{CpuStorage, CustomOp2, Layout, Module, Result, Shape, Tensor, WithDType};
use candle_nn::{Init, VarBuilder};

struct RowMatmul;

fn rows_times_wt<T: WithDType + std::ops::Mul<Output = T> + std::ops::Add<Output = T>>(
    x: &[T],
    w: &[T],
    k: usize,
    o: usize,
) -> Vec<T> {
    let mut wt = vec![T::zero(); k * o];
    for (r, row) in w.chunks_exact(k).enumerate() {
        for (c, v) in row.iter().enumerate() {
            wt[c * o + r] = *v;
        }
    }
    let rows = x.len() / k;
    let mut out = vec![T::zero(); rows * o];
    for (xr, yr) in x.chunks_exact(k).zip(out.chunks_exact_mut(o)) {
        for (xv, wrow) in xr.iter().zip(wt.chunks_exact(o)) {
            for (y, wv) in yr.iter_mut().zip(wrow) {
                *y += *xv * *wv;
            }
        }
    }
    out
}

impl CustomOp2 for RowMatmul {
    fn name(&self) -> &'static str {
        "row-matmul"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> Result<(CpuStorage, Shape)> {
        let (Some((a0, a1)), Some((b0, b1))) = (l1.contiguous_offsets(), l2.contiguous_offsets())
        else {
            candle_core::bail!("row-matmul needs contiguous inputs");
        };
        let (o, k) = l2.shape().dims2()?;
        let mut dims = l1.shape().dims().to_vec();
        if dims.last() != Some(&k) {
            candle_core::bail!("row-matmul: input {:?} vs weight [{o}, {k}]", dims);
        }
        *dims.last_mut().expect("checked above") = o;
        let out = match (s1, s2) {
            (CpuStorage::F32(x), CpuStorage::F32(w)) => {
                CpuStorage::F32(rows_times_wt(&x[a0..a1], &w[b0..b1], k, o))
            }
            (CpuStorage::F64(x), CpuStorage::F64(w)) => {
                CpuStorage::F64(rows_times_wt(&x[a0..a1], &w[b0..b1], k, o))
            }
            _ => candle_core::bail!("row-matmul supports matching f32 or f64 inputs"),
        };
        Ok((out, Shape::from(dims)))
    }

    fn bwd(
        &self,
        x: &Tensor,
        w: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> Result<(Option<Tensor>, Option<Tensor>)> {
        let (o, k) = w.dims2()?;
        let gx = grad.broadcast_matmul(w)?;
        let g2 = grad.reshape(((), o))?;
        let x2 = x.reshape(((), k))?;
        let gw = g2.t()?.matmul(&x2)?;
        Ok((Some(gx), Some(gw)))
    }
}

#[derive(Clone, Debug)]
pub struct RowLinear {
    weight: Tensor,
    bias: Tensor,
}

impl RowLinear {
    /// Same parameter names and initialization as `candle_nn::linear`.
    pub fn new(cin: usize, cout: usize, vb: VarBuilder) -> Result<Self> {
        let weight = vb.get_with_hints(
            (cout, cin),
            "weight",
            candle_nn::init::DEFAULT_KAIMING_NORMAL,
        )?;
        let bound = 1.0 / (cin as f64).sqrt();
        let bias = vb.get_with_hints(
            cout,
            "bias",
            Init::Uniform {
                lo: -bound,
                up: bound,
            },
        )?;
        Ok(Self { weight, bias })
    }
}

impl Module for RowLinear {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.contiguous()?
            .apply_op2(&self.weight, RowMatmul)?
            .broadcast_add(&self.bias)
    }
}
