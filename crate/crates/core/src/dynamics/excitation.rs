use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// Band-limited Gaussian base acceleration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub dt_sim: f64,
    pub duration: f64,
    pub seed: u64,
    pub bandwidth_hz: f64,
    /// Target RMS of the generated record, m/s².
    pub amplitude: f64,
}

impl ExcitationSpec {
    pub fn n_steps(&self) -> Result<usize> {
        steps_for(self.duration, self.dt_sim)
    }
}

/// Number of whole steps of size `dt` in `duration`, or an error when `dt`
/// does not divide it.
pub fn steps_for(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and duration > 0, got {dt} and {duration}")));
    }
    let n = (duration / dt).round();
    if (n * dt - duration).abs() > 1e-9 * duration {
        return Err(Error::InvalidArgument(format!("step {dt} does not divide duration {duration}")));
    }
    Ok(n as usize)
}

/// Integer ratio `coarse / fine`, or an error when it is not integral.
pub fn step_ratio(coarse: f64, fine: f64) -> Result<usize> {
    let r = (coarse / fine).round();
    if !(r >= 1.0) || (r * fine - coarse).abs() > 1e-9 * coarse {
        return Err(Error::InvalidArgument(format!("{coarse} is not an integer multiple of {fine}")));
    }
    Ok(r as usize)
}

/// Second-order low-pass section from the bilinear transform.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(cutoff_hz: f64, sample_hz: f64, q: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / sample_hz).tan();
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

/// Fourth-order Butterworth low-pass, as two cascaded biquads.
pub fn butterworth_lowpass(x: &mut [f64], cutoff_hz: f64, sample_hz: f64) {
    // Pole-pair quality factors of the 4th-order Butterworth prototype.
    for q in [0.541_196_100_146_197, 1.306_562_964_876_376_8] {
        Biquad::lowpass(cutoff_hz, sample_hz, q).run(x);
    }
}

/// Base acceleration sampled at `t = k·dt_sim`, `k = 0..=n_steps`.
///
/// White noise is filtered after a burn-in long enough for the filter to
/// forget its zero state, then demeaned and scaled to the target RMS.
pub fn generate_excitation(spec: &ExcitationSpec) -> Result<Vec<f64>> {
    let n = spec.n_steps()? + 1;
    let fs = 1.0 / spec.dt_sim;
    if !(spec.bandwidth_hz > 0.0 && spec.bandwidth_hz < 0.5 * fs) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth {} Hz must lie below the Nyquist rate {} Hz",
            spec.bandwidth_hz,
            0.5 * fs
        )));
    }
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(Error::InvalidArgument("amplitude must be finite and non-negative".into()));
    }
    let burn = (20.0 * fs / spec.bandwidth_hz).ceil() as usize;
    let mut rng = rng_from_seed(spec.seed);
    let mut x: Vec<f64> = (0..burn + n).map(|_| StandardNormal.sample(&mut rng)).collect();
    butterworth_lowpass(&mut x, spec.bandwidth_hz, fs);
    let mut x = x.split_off(burn);
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let scale = spec.amplitude / rms;
        x.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(x)
}
