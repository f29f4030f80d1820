use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for NewmarkParams {
    /// Average acceleration: unconditionally stable, second order.
    fn default() -> Self {
        Self { beta: 0.25, gamma: 0.5 }
    }
}

/// External force `f(t_k) = pattern · scale[k]` on the grid `t_k = k·dt`.
#[derive(Debug, Clone)]
pub struct LoadHistory {
    pub pattern: DVector<f64>,
    pub scale: Vec<f64>,
}

impl LoadHistory {
    /// Effective load of a rigid base motion: `-M·1·a_g(t)`.
    pub fn base_motion(mass: &DMatrix<f64>, base_accel: &[f64]) -> Self {
        let ones = DVector::from_element(mass.nrows(), 1.0);
        Self { pattern: -(mass * ones), scale: base_accel.to_vec() }
    }
}

/// Relative displacement, velocity and acceleration of one DOF at every
/// grid point, including `t = 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub disp: Vec<f64>,
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn gemv_acc(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &a[i * n..(i + 1) * n];
        *o += row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
}

/// Integrates `M ü + C u̇ + K u = f(t)` from rest with the Newmark-β
/// recurrence and returns the history of `sensor_dof`.
pub fn newmark_solve(
    mass: &DMatrix<f64>,
    damping: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
    load: &LoadHistory,
    dt: f64,
    params: NewmarkParams,
    sensor_dof: usize,
) -> Result<Trajectory> {
    let n = mass.nrows();
    for (what, mat) in [("damping", damping), ("stiffness", stiffness)] {
        if mat.shape() != (n, n) {
            return Err(Error::dim(what, n, mat.nrows()));
        }
    }
    if load.pattern.len() != n {
        return Err(Error::dim("load pattern", n, load.pattern.len()));
    }
    if sensor_dof >= n {
        return Err(Error::InvalidArgument(format!("sensor dof {sensor_dof} out of range for {n} DOFs")));
    }
    let NewmarkParams { beta, gamma } = params;
    if !(dt > 0.0 && beta > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidArgument("need dt, beta and gamma positive".into()));
    }
    let steps = load.scale.len();
    if steps == 0 {
        return Ok(Trajectory::default());
    }

    let c0 = 1.0 / (beta * dt * dt);
    let c1 = gamma / (beta * dt);
    let c2 = 1.0 / (beta * dt);
    let c3 = 1.0 / (2.0 * beta) - 1.0;
    let c4 = gamma / beta - 1.0;
    let c5 = dt * (gamma / (2.0 * beta) - 1.0);

    let k_eff = stiffness + damping * c1 + mass * c0;
    let k_inv = k_eff
        .cholesky()
        .ok_or_else(|| Error::Numerical("effective stiffness is singular or indefinite".into()))?
        .inverse();
    let m_inv = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?
        .inverse();

    // u_{k+1} = K⁻¹f_{k+1} + Pu·u + Pv·v + Pa·a
    let pu = flat(&(&k_inv * (mass * c0 + damping * c1)));
    let pv = flat(&(&k_inv * (mass * c2 + damping * c4)));
    let pa = flat(&(&k_inv * (mass * c3 + damping * c5)));
    let kf = &k_inv * &load.pattern;
    let kf = kf.as_slice();

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let a0 = &m_inv * (&load.pattern * load.scale[0]);
    let mut a: Vec<f64> = a0.iter().copied().collect();
    let mut u1 = vec![0.0; n];

    let mut out = Trajectory {
        disp: Vec::with_capacity(steps),
        vel: Vec::with_capacity(steps),
        acc: Vec::with_capacity(steps),
    };
    out.disp.push(0.0);
    out.vel.push(0.0);
    out.acc.push(a[sensor_dof]);

    for &s in &load.scale[1..] {
        u1.iter_mut().zip(kf).for_each(|(x, k)| *x = k * s);
        gemv_acc(&pu, &u, &mut u1);
        gemv_acc(&pv, &v, &mut u1);
        gemv_acc(&pa, &a, &mut u1);
        for i in 0..n {
            let a_new = c0 * (u1[i] - u[i]) - c2 * v[i] - c3 * a[i];
            v[i] += dt * ((1.0 - gamma) * a[i] + gamma * a_new);
            a[i] = a_new;
            u[i] = u1[i];
        }
        if !u[sensor_dof].is_finite() {
            return Err(Error::Numerical("Newmark integration produced a non-finite state".into()));
        }
        out.disp.push(u[sensor_dof]);
        out.vel.push(v[sensor_dof]);
        out.acc.push(a[sensor_dof]);
    }
    Ok(out)
}

/// Samples `series[stride·(k+1)]` for `k = 0..n_out`.
pub fn decimate(series: &[f64], stride: usize, n_out: usize) -> Result<Vec<f64>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("decimation stride must be positive".into()));
    }
    if stride * n_out >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot give {n_out} outputs at stride {stride}",
            series.len()
        )));
    }
    Ok((1..=n_out).map(|k| series[k * stride]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sdof(m: f64, c: f64, k: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_element(1, 1, m),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, k),
        )
    }

    fn sine_load(omega: f64, dt: f64, steps: usize) -> LoadHistory {
        LoadHistory {
            pattern: DVector::from_element(1, 1.0),
            scale: (0..=steps).map(|i| (omega * i as f64 * dt).sin()).collect(),
        }
    }

    #[test]
    fn quiescent_stays_at_rest() {
        let (m, c, k) = sdof(1.0, 0.1, 4.0);
        let load = LoadHistory { pattern: DVector::from_element(1, 1.0), scale: vec![0.0; 100] };
        let t = newmark_solve(&m, &c, &k, &load, 0.01, NewmarkParams::default(), 0).unwrap();
        assert!(t.disp.iter().chain(&t.acc).all(|v| *v == 0.0));
    }

    #[test]
    fn undamped_forced_response_matches_closed_form() {
        // With ζ = 0 and zero initial state the exact solution is
        // u = A·(sin ωt − (ω/ωn) sin ωn t) with A = 1/(k − ω²).
        let (m, c, k) = sdof(1.0, 0.0, 4.0 * PI * PI);
        let (omega, omega_n) = (PI, 2.0 * PI);
        let dt = 1e-3;
        let steps = 20_000;
        let t = newmark_solve(&m, &c, &k, &sine_load(omega, dt, steps), dt, NewmarkParams::default(), 0).unwrap();
        let amp = 1.0 / (k[(0, 0)] - omega * omega);
        // Least-squares projection onto the forcing-frequency harmonics.
        let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, u) in t.disp.iter().enumerate() {
            let tt = i as f64 * dt;
            let free = -(omega / omega_n) * amp * (omega_n * tt).sin();
            let (s, co) = ((omega * tt).sin(), (omega * tt).cos());
            let r = u - free;
            ss += s * s;
            sc += s * co;
            cc += co * co;
            ys += r * s;
            yc += r * co;
        }
        let det = ss * cc - sc * sc;
        let a_s = (ys * cc - yc * sc) / det;
        let a_c = (yc * ss - ys * sc) / det;
        let fitted = a_s.hypot(a_c);
        assert!((fitted / amp - 1.0).abs() < 0.01, "{fitted} vs {amp}");
    }

    #[test]
    fn free_decay_envelope() {
        let zeta = 0.02;
        let omega = 2.0 * PI;
        let (m, c, k) = sdof(1.0, 2.0 * zeta * omega, omega * omega);
        let dt = 1e-3;
        // Impulse-like kick: a short constant force, then free vibration.
        let steps = 20_000;
        let mut scale = vec![0.0; steps + 1];
        scale[1..=10].iter_mut().for_each(|s| *s = 100.0);
        let load = LoadHistory { pattern: DVector::from_element(1, 1.0), scale };
        let t = newmark_solve(&m, &c, &k, &load, dt, NewmarkParams::default(), 0).unwrap();
        let period = (1.0 / dt) as usize; // one undamped period in steps
        let peak = |cycle: usize| {
            t.disp[cycle * period + 20..(cycle + 1) * period + 20]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let (p1, p11) = (peak(1), peak(11));
        let want = (-zeta * omega * 10.0).exp();
        assert!((p11 / p1 / want - 1.0).abs() < 0.01, "{} vs {want}", p11 / p1);
    }

    #[test]
    fn second_order_convergence() {
        let zeta = 0.05;
        let omega_n = 2.0 * PI;
        let (m, c, k) = sdof(1.0, 2.0 * zeta * omega_n, omega_n * omega_n);
        let omega = 1.3 * PI;
        let horizon = 5.0;
        let dt = 0.02;
        let run = |h: f64| {
            let steps = (horizon / h).round() as usize;
            newmark_solve(&m, &c, &k, &sine_load(omega, h, steps), h, NewmarkParams::default(), 0)
                .unwrap()
                .disp
        };
        let reference = run(dt / 8.0);
        let err = |h: f64| {
            let u = run(h);
            let stride = (h / (dt / 8.0)).round() as usize;
            u.iter()
                .enumerate()
                .map(|(i, v)| (v - reference[i * stride]).abs())
                .fold(0.0f64, f64::max)
        };
        let (e1, e2) = (err(dt), err(dt / 2.0));
        let order = (e1 / e2).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}");
    }

    #[test]
    fn singular_system_is_reported() {
        let (m, c, k) = sdof(0.0, 0.0, 0.0);
        let load = LoadHistory { pattern: DVector::from_element(1, 1.0), scale: vec![1.0; 4] };
        assert!(newmark_solve(&m, &c, &k, &load, 0.01, NewmarkParams::default(), 0).is_err());
    }

    #[test]
    fn decimation_picks_exact_multiples() {
        let s: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(decimate(&s, 50, 2).unwrap(), vec![50.0, 100.0]);
        assert!(decimate(&s, 50, 3).is_err());
    }
}
