use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lumped-mass shear chain fixed at the base. Story `j` connects floor `j`
/// to floor `j - 1` (floor `-1` being the ground); its stiffness is
/// `story_stiffness · (1 + θ[groups[j]])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralConfig {
    pub n_dof: usize,
    /// Nominal story stiffness, N/m.
    pub story_stiffness: f64,
    /// Floor mass, kg.
    pub story_mass: f64,
    pub damping_ratio: f64,
    /// Zero-based modes at which the Rayleigh damping hits `damping_ratio`.
    pub damping_modes: (usize, usize),
    /// Parameter group of each story.
    pub groups: Vec<usize>,
    pub n_groups: usize,
    pub sensor_dof: usize,
}

impl StructuralConfig {
    /// Contiguous groups of equal size (story `j` → group `j·m / n`),
    /// sensor at the top floor, damping anchored at modes 1 and 3.
    pub fn shear_chain(n_dof: usize, n_groups: usize) -> Self {
        Self {
            n_dof,
            story_stiffness: 2.0e6,
            story_mass: 1000.0,
            damping_ratio: 0.02,
            damping_modes: (0, 2),
            groups: (0..n_dof).map(|j| j * n_groups / n_dof.max(1)).collect(),
            n_groups,
            sensor_dof: n_dof.saturating_sub(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.n_dof < self.n_groups {
            return Err(Error::config("structure.n_dof", "need n_dof >= number of parameter groups >= 1"));
        }
        if self.groups.len() != self.n_dof || self.groups.iter().any(|&g| g >= self.n_groups) {
            return Err(Error::config("structure.groups", "every story needs exactly one valid group"));
        }
        if !(self.damping_ratio > 0.0 && self.damping_ratio < 0.2) {
            return Err(Error::config("structure.damping_ratio", "must lie in (0, 0.2)"));
        }
        if !(self.story_stiffness > 0.0 && self.story_mass > 0.0) {
            return Err(Error::config("structure", "stiffness and mass must be positive"));
        }
        if self.sensor_dof >= self.n_dof {
            return Err(Error::config("structure.sensor_dof", "must index a floor"));
        }
        let (i, j) = self.damping_modes;
        if i > j || j >= self.n_dof {
            return Err(Error::config("structure.damping_modes", "need i <= j < n_dof"));
        }
        Ok(())
    }
}

/// Diagonal mass and tridiagonal shear-chain stiffness for parameters θ.
pub fn assemble_matrices(cfg: &StructuralConfig, theta: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if theta.len() != cfg.n_groups {
        return Err(Error::dim("parameter vector", cfg.n_groups, theta.len()));
    }
    if let Some(bad) = theta.iter().find(|t| !(**t > -1.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "stiffness deviation {bad} gives a non-physical stiffness (need θ > -1)"
        )));
    }
    let n = cfg.n_dof;
    let mass = DMatrix::from_diagonal_element(n, n, cfg.story_mass);
    let story: Vec<f64> = cfg
        .groups
        .iter()
        .map(|&g| cfg.story_stiffness * (1.0 + theta[g]))
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] += story[j];
        if j + 1 < n {
            k[(j, j)] += story[j + 1];
            k[(j, j + 1)] -= story[j + 1];
            k[(j + 1, j)] -= story[j + 1];
        }
    }
    Ok((mass, k))
}

/// Natural circular frequencies (rad/s), ascending.
pub fn natural_frequencies(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = mass.nrows();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let m = mass[(i, i)];
        if !(m > 0.0) {
            return Err(Error::Numerical("mass matrix must have a positive diagonal".into()));
        }
        inv_sqrt.push(1.0 / m.sqrt());
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| stiffness[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let eig = SymmetricEigen::new(scaled);
    let mut omegas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    omegas.sort_by(|a, b| a.total_cmp(b));
    Ok(omegas)
}

/// Rayleigh coefficients `(a0, a1)` giving damping ratio `zeta` at the two
/// anchor frequencies. With a single anchor the ratio is split evenly
/// between the mass and stiffness terms.
pub fn rayleigh_coefficients(zeta: f64, omega_i: f64, omega_j: f64, same_mode: bool) -> Result<(f64, f64)> {
    if same_mode {
        return Ok((zeta * omega_i, zeta / omega_i));
    }
    if (omega_j - omega_i).abs() <= 1e-9 * omega_j.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "repeated frequencies {omega_i} and {omega_j} cannot anchor Rayleigh damping"
        )));
    }
    let a0 = 2.0 * zeta * omega_i * omega_j / (omega_i + omega_j);
    let a1 = 2.0 * zeta / (omega_i + omega_j);
    Ok((a0, a1))
}

/// `C = a0·M + a1·K` with `ζ = a0/(2ω) + a1·ω/2` at modes `i` and `j`.
pub fn rayleigh_damping(
    mass: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
    zeta: f64,
    modes: (usize, usize),
) -> Result<DMatrix<f64>> {
    let omegas = natural_frequencies(mass, stiffness)?;
    let (i, j) = modes;
    if i > j || j >= omegas.len() {
        return Err(Error::InvalidArgument(format!(
            "mode pair ({i}, {j}) outside spectrum of size {}",
            omegas.len()
        )));
    }
    if zeta == 0.0 {
        return Ok(DMatrix::zeros(mass.nrows(), mass.ncols()));
    }
    let (a0, a1) = rayleigh_coefficients(zeta, omegas[i], omegas[j], i == j)?;
    Ok(mass * a0 + stiffness * a1)
}
