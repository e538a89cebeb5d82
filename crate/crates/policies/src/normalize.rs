//! Per-dimension min-max scaling to [-1, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions whose observed range is narrower than this are treated as
/// constant: they map to 0 and back to their recorded value.
pub const MIN_RANGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::config("cannot fit normalization on no data"))?;
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::shape(format!(
                    "row of length {} in {dim}-d data",
                    r.len()
                )));
            }
            for (i, v) in r.iter().enumerate() {
                min[i] = min[i].min(f64::from(*v));
                max[i] = max[i].max(f64::from(*v));
            }
        }
        for i in 0..dim {
            if max[i] - min[i] < MIN_RANGE {
                let c = 0.5 * (max[i] + min[i]);
                min[i] = c - 1.0;
                max[i] = c + 1.0;
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn normalize(&self, x: &[f32]) -> Vec<f32> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| (2.0 * (f64::from(*v) - lo) / (hi - lo) - 1.0) as f32)
            .collect()
    }

    pub fn denormalize(&self, y: &[f32]) -> Vec<f64> {
        y.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| lo + 0.5 * (f64::from(*v) + 1.0) * (hi - lo))
            .collect()
    }
}
