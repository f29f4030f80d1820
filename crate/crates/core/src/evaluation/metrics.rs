use super::predict::PredictiveSummary;
use crate::{Error, Result};

/// `‖pred − truth‖₂ / ‖truth‖₂`.
pub fn relative_l2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim("prediction length", truth.len(), pred.len()));
    }
    let norm = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("relative error is undefined for a zero-norm truth".into()));
    }
    let diff = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>().sqrt();
    Ok(diff / norm)
}

/// Coefficient of determination about the truth mean.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim("prediction length", truth.len(), pred.len()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::InvalidArgument("R² is undefined for a constant truth".into()));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Fraction of (record, step) cells whose truth lies inside the band.
pub fn coverage_rate(summaries: &[PredictiveSummary], truths: &[Vec<f64>]) -> Result<f64> {
    if summaries.len() != truths.len() {
        return Err(Error::dim("number of truth series", summaries.len(), truths.len()));
    }
    let (mut inside, mut total) = (0usize, 0usize);
    for (s, t) in summaries.iter().zip(truths) {
        if s.ci_lo.len() != t.len() {
            return Err(Error::dim("truth series length", s.ci_lo.len(), t.len()));
        }
        inside += t
            .iter()
            .zip(s.ci_lo.iter().zip(&s.ci_hi))
            .filter(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
            .count();
        total += t.len();
    }
    if total == 0 {
        return Err(Error::InvalidArgument("no cells to score".into()));
    }
    Ok(inside as f64 / total as f64)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relative_l2_table() {
        let t = [1.0, -2.0, 3.0];
        assert_eq!(relative_l2(&t, &t).unwrap(), 0.0);
        let twice: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        assert_eq!(relative_l2(&twice, &t).unwrap(), 1.0);
        assert_eq!(relative_l2(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2f64.sqrt());
        assert!(relative_l2(&[1.0], &[0.0]).is_err());
        assert!(relative_l2(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn r_squared_table() {
        let t = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        assert_eq!(r_squared(&[3.5; 4], &t).unwrap(), 0.0);
        let delta = 0.25;
        let shifted: Vec<f64> = t.iter().map(|v| v + delta).collect();
        let ss_tot = [2.5f64, 1.5, 0.5, 3.5].iter().map(|d| d * d).sum::<f64>();
        let want = 1.0 - 4.0 * delta * delta / ss_tot;
        assert!((r_squared(&shifted, &t).unwrap() - want).abs() < 1e-15);
        assert!(r_squared(&t, &[2.0; 4]).is_err());
    }

    fn summary(lo: Vec<f64>, hi: Vec<f64>) -> PredictiveSummary {
        let mean = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        PredictiveSummary { mean, std: vec![0.0; lo.len()], ci_lo: lo, ci_hi: hi, alpha: 0.95, n_samples: 1, samples: None }
    }

    #[test]
    fn coverage_table() {
        let s = summary(vec![-1.0, -1.0], vec![1.0, 1.0]);
        assert_eq!(coverage_rate(&[s.clone()], &[vec![0.0, 0.5]]).unwrap(), 1.0);
        let flat = summary(vec![2.0, 2.0], vec![2.0, 2.0]);
        assert_eq!(coverage_rate(&[flat], &[vec![0.0, 1.0]]).unwrap(), 0.0);
        assert!(coverage_rate(&[s], &[]).is_err());
    }

    proptest! {
        #[test]
        fn relative_l2_is_scale_free(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40),
            c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(t.iter().any(|v| v.abs() > 1e-3));
            let base = relative_l2(&p, &t).unwrap();
            let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
            let ts: Vec<f64> = t.iter().map(|v| v * c).collect();
            let scaled = relative_l2(&ps, &ts).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn r_squared_at_most_one(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40),
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mean = t.iter().sum::<f64>() / t.len() as f64;
            prop_assume!(t.iter().any(|v| (v - mean).abs() > 1e-6));
            let r2 = r_squared(&p, &t).unwrap();
            prop_assert!(r2 <= 1.0);
            prop_assert_eq!(r2 == 1.0, p == t);
        }
    }
}
