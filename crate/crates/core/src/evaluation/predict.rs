use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::flows::FlowModel;
use crate::training::Standardizer;
use crate::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 2000;

/// Monte Carlo summary of `q(y | θ)` in physical units. `alpha` is the
/// coverage level of the band `[ci_lo, ci_hi]`, whose edges are the
/// empirical `(1 − α)/2` and `(1 + α)/2` quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub alpha: f64,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<f64>>>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl PredictiveSummary {
    /// Summarizes `n` row-major draws of width `w`.
    pub fn from_draws(draws: &[f64], w: usize, alpha: f64, keep: bool) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("coverage level must lie in (0, 1), got {alpha}")));
        }
        if w == 0 || draws.is_empty() || draws.len() % w != 0 {
            return Err(Error::InvalidArgument("draws do not form whole series".into()));
        }
        let n = draws.len() / w;
        let (p_lo, p_hi) = ((1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0);
        let mut mean = vec![0.0; w];
        let mut std = vec![0.0; w];
        let mut ci_lo = vec![0.0; w];
        let mut ci_hi = vec![0.0; w];
        let mut column = vec![0.0; n];
        for j in 0..w {
            for (i, c) in column.iter_mut().enumerate() {
                *c = draws[i * w + j];
            }
            let m = column.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            column.sort_by(f64::total_cmp);
            mean[j] = m;
            std[j] = var.sqrt();
            ci_lo[j] = quantile_sorted(&column, p_lo);
            ci_hi[j] = quantile_sorted(&column, p_hi);
        }
        let samples = keep.then(|| draws.chunks(w).map(<[f64]>::to_vec).collect());
        Ok(Self { mean, std, ci_lo, ci_hi, alpha, n_samples: n, samples })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Draws `n_samples` series for parameters `theta` (physical units) and
/// summarizes them after undoing the response standardization.
pub fn predict<R: Rng + ?Sized>(
    model: &FlowModel,
    standardizer: &Standardizer,
    theta: &[f64],
    n_samples: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<PredictiveSummary> {
    predict_impl(model, standardizer, theta, n_samples, alpha, rng, false)
}

/// Like [`predict`] but keeps the individual draws.
pub fn predict_with_samples<R: Rng + ?Sized>(
    model: &FlowModel,
    standardizer: &Standardizer,
    theta: &[f64],
    n_samples: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<PredictiveSummary> {
    predict_impl(model, standardizer, theta, n_samples, alpha, rng, true)
}

fn predict_impl<R: Rng + ?Sized>(
    model: &FlowModel,
    standardizer: &Standardizer,
    theta: &[f64],
    n_samples: usize,
    alpha: f64,
    rng: &mut R,
    keep: bool,
) -> Result<PredictiveSummary> {
    if theta.len() != model.cond_dim() {
        return Err(Error::dim("parameter vector (m)", model.cond_dim(), theta.len()));
    }
    if standardizer.series_len() != model.data_dim() || standardizer.param_dim() != model.cond_dim() {
        return Err(Error::InvalidArgument("standardizer does not match the model".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("coverage level must lie in (0, 1), got {alpha}")));
    }
    let cond = standardizer.transform_theta(theta);
    let w = model.data_dim();
    let z = model.sample_rows(&cond, n_samples, rng)?;
    let y: Vec<f64> = z.chunks(w).flat_map(|row| standardizer.inverse_y(row)).collect();
    PredictiveSummary::from_draws(&y, w, alpha, keep)
}
