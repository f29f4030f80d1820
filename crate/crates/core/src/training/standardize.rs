use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-time-step z-scoring of responses and affine mapping of parameters
/// from their prior box onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
    pub theta_lo: Vec<f64>,
    pub theta_hi: Vec<f64>,
}

impl Standardizer {
    /// Fits response statistics (population std, floored at `1e-8`) on the
    /// given series; parameter bounds come from the dataset's prior.
    pub fn fit<'a, I>(series: I, theta_lo: &[f64], theta_hi: &[f64]) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let series: Vec<&[f64]> = series.into_iter().collect();
        let Some(first) = series.first() else {
            return Err(Error::InvalidArgument("cannot fit a standardizer on an empty dataset".into()));
        };
        let w = first.len();
        if series.iter().any(|s| s.len() != w) {
            return Err(Error::InvalidArgument("series lengths differ".into()));
        }
        if theta_lo.len() != theta_hi.len() || theta_lo.iter().zip(theta_hi).any(|(l, h)| !(h > l)) {
            return Err(Error::InvalidArgument("parameter bounds must satisfy lo < hi".into()));
        }
        let n = series.len() as f64;
        let mut mean = vec![0.0; w];
        for s in &series {
            mean.iter_mut().zip(*s).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; w];
        for s in &series {
            for ((acc, v), m) in var.iter_mut().zip(*s).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self {
            y_mean: mean,
            y_std: std,
            theta_lo: theta_lo.to_vec(),
            theta_hi: theta_hi.to_vec(),
        })
    }

    /// Identity on responses and on the `[-1, 1]` parameter box.
    pub fn identity(w: usize, m: usize) -> Self {
        Self {
            y_mean: vec![0.0; w],
            y_std: vec![1.0; w],
            theta_lo: vec![-1.0; m],
            theta_hi: vec![1.0; m],
        }
    }

    pub fn series_len(&self) -> usize {
        self.y_mean.len()
    }

    pub fn param_dim(&self) -> usize {
        self.theta_lo.len()
    }

    pub fn transform_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.y_mean)
            .zip(&self.y_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn inverse_y(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.y_mean)
            .zip(&self.y_std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    pub fn transform_theta(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.theta_lo)
            .zip(&self.theta_hi)
            .map(|((t, lo), hi)| 2.0 * (t - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn inverse_theta(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.theta_lo)
            .zip(&self.theta_hi)
            .map(|((v, lo), hi)| lo + (v + 1.0) * (hi - lo) / 2.0)
            .collect()
    }
}
