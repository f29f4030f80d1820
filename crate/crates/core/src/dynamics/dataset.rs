use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::excitation::{generate_excitation, step_ratio, steps_for, ExcitationSpec};
use super::newmark::{decimate, newmark_solve, LoadHistory, NewmarkParams};
use super::structure::{assemble_matrices, rayleigh_damping, StructuralConfig};
use crate::seed::{derive_seed, rng_from_seed};
use crate::{Error, Result};

pub const PRIOR_BOUND: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fidelity {
    #[serde(rename = "LF")]
    Lf,
    #[serde(rename = "HF")]
    Hf,
}

impl std::fmt::Display for Fidelity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fidelity::Lf => "LF",
            Fidelity::Hf => "HF",
        })
    }
}

/// Random amplitude modulation `1 + F(t)` of a record's base excitation.
/// Knot values are drawn i.i.d. from `U(lo, hi)` every `segment_s` seconds
/// and interpolated linearly; without a segment length a single draw scales
/// the whole record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Uniform {
        lo: f64,
        hi: f64,
        #[serde(default)]
        segment_s: Option<f64>,
    },
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        let Perturbation::Uniform { lo, hi, segment_s } = self;
        if !(lo <= hi) || *lo <= -1.0 {
            return Err(Error::config("excitation_perturbation", "need -1 < lo <= hi"));
        }
        if segment_s.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::config("excitation_perturbation.segment_s", "must be positive"));
        }
        Ok(())
    }

    /// Multiplicative envelope on the grid `t = k·dt`, `k = 0..n`.
    pub fn envelope(&self, n: usize, dt: f64, rng: &mut impl rand::Rng) -> Vec<f64> {
        let Perturbation::Uniform { lo, hi, segment_s } = *self;
        let mut draw = || lo + (hi - lo) * rng.random::<f64>();
        match segment_s {
            None => vec![1.0 + draw(); n],
            Some(seg) => {
                let span = (n.saturating_sub(1)) as f64 * dt;
                let knots: Vec<f64> = (0..=(span / seg).ceil() as usize + 1).map(|_| draw()).collect();
                (0..n)
                    .map(|k| {
                        let x = k as f64 * dt / seg;
                        let j = x.floor() as usize;
                        let frac = x - j as f64;
                        1.0 + knots[j] + (knots[j + 1] - knots[j]) * frac
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityConfig {
    pub level: Fidelity,
    pub dt_sim: f64,
    pub stiffness_bias: f64,
    #[serde(default)]
    pub excitation_perturbation: Option<Perturbation>,
}

impl FidelityConfig {
    /// Coarse time step and 5% stiffer structure.
    pub fn lf_default() -> Self {
        Self { level: Fidelity::Lf, dt_sim: 0.025, stiffness_bias: 1.05, excitation_perturbation: None }
    }

    pub fn hf_case1() -> Self {
        Self { level: Fidelity::Hf, dt_sim: 0.001, stiffness_bias: 1.0, excitation_perturbation: None }
    }

    /// HF under an excitation whose amplitude wanders by up to ±60%.
    pub fn hf_case2() -> Self {
        Self {
            excitation_perturbation: Some(Perturbation::Uniform { lo: -0.6, hi: 0.6, segment_s: Some(1.0) }),
            ..Self::hf_case1()
        }
    }
}

/// Time window, output grid, excitation character and parameter prior
/// shared by both fidelities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub duration: f64,
    pub sample_rate_hz: f64,
    pub n_points: usize,
    pub bandwidth_hz: f64,
    pub amplitude: f64,
    pub prior_bound: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            duration: 10.0,
            sample_rate_hz: 20.0,
            n_points: 200,
            bandwidth_hz: 8.0,
            amplitude: 1.0,
            prior_bound: PRIOR_BOUND,
        }
    }
}

impl SignalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 || !(self.sample_rate_hz > 0.0) {
            return Err(Error::config("signal", "need a positive sample rate and at least one point"));
        }
        if self.n_points as f64 / self.sample_rate_hz > self.duration + 1e-9 {
            return Err(Error::config("signal.n_points", "output grid extends past the simulated window"));
        }
        if !(self.prior_bound > 0.0 && self.prior_bound < 1.0) {
            return Err(Error::config("signal.prior_bound", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn sample_interval(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }
}

/// Checks the pairwise fidelity constraints and the simulation grids.
pub fn validate_fidelities(lf: &FidelityConfig, hf: &FidelityConfig, signal: &SignalConfig) -> Result<()> {
    if lf.level != Fidelity::Lf || hf.level != Fidelity::Hf {
        return Err(Error::config("fidelity.level", "expected one LF and one HF configuration"));
    }
    if !(lf.dt_sim > hf.dt_sim) {
        return Err(Error::config("fidelity.lf.dt_sim", "LF must use a coarser step than HF"));
    }
    if hf.stiffness_bias != 1.0 {
        return Err(Error::config("fidelity.hf.stiffness_bias", "HF is the unbiased reference and must be 1"));
    }
    if !(lf.stiffness_bias > 0.0) {
        return Err(Error::config("fidelity.lf.stiffness_bias", "must be positive"));
    }
    if lf.excitation_perturbation.is_some() {
        return Err(Error::config("fidelity.lf.excitation_perturbation", "only HF records are perturbed"));
    }
    if let Some(p) = &hf.excitation_perturbation {
        p.validate()?;
    }
    signal.validate()?;
    let as_config = |field: &str, e: Error| Error::config(field, e.to_string());
    step_ratio(lf.dt_sim, hf.dt_sim).map_err(|e| as_config("fidelity.lf.dt_sim", e))?;
    for (field, dt) in [("fidelity.lf.dt_sim", lf.dt_sim), ("fidelity.hf.dt_sim", hf.dt_sim)] {
        step_ratio(signal.sample_interval(), dt).map_err(|e| as_config(field, e))?;
        steps_for(signal.duration, dt).map_err(|e| as_config(field, e))?;
    }
    Ok(())
}

/// `n` i.i.d. draws from `U(-0.3, 0.3)^m`.
pub fn sample_parameters(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    sample_parameters_within(n, m, PRIOR_BOUND, seed)
}

pub fn sample_parameters_within(n: usize, m: usize, bound: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(-bound..=bound)).collect())
        .collect()
}

/// Absolute acceleration at the sensor, on the output grid, for one
/// structure driven by `base_accel` sampled at `dt`.
pub fn simulate_response(
    cfg: &StructuralConfig,
    theta: &[f64],
    stiffness_bias: f64,
    base_accel: &[f64],
    dt: f64,
    signal: &SignalConfig,
) -> Result<Vec<f64>> {
    let (mass, k) = assemble_matrices(cfg, theta)?;
    let k = k * stiffness_bias;
    let c = rayleigh_damping(&mass, &k, cfg.damping_ratio, cfg.damping_modes)?;
    let load = LoadHistory::base_motion(&mass, base_accel);
    let traj = newmark_solve(&mass, &c, &k, &load, dt, NewmarkParams::default(), cfg.sensor_dof)?;
    let absolute: Vec<f64> = traj.acc.iter().zip(base_accel).map(|(a, g)| a + g).collect();
    decimate(&absolute, step_ratio(signal.sample_interval(), dt)?, signal.n_points)
}

/// Everything needed to simulate single records of a dataset pair.
#[derive(Debug, Clone)]
pub struct PairSimulator {
    pub structure: StructuralConfig,
    pub lf: FidelityConfig,
    pub hf: FidelityConfig,
    pub signal: SignalConfig,
    pub master_seed: u64,
    /// Shared base acceleration at the HF step.
    pub excitation: Vec<f64>,
    lf_stride: usize,
}

impl PairSimulator {
    pub fn new(
        structure: &StructuralConfig,
        lf: &FidelityConfig,
        hf: &FidelityConfig,
        signal: &SignalConfig,
        master_seed: u64,
    ) -> Result<Self> {
        structure.validate()?;
        validate_fidelities(lf, hf, signal)?;
        let excitation = generate_excitation(&ExcitationSpec {
            dt_sim: hf.dt_sim,
            duration: signal.duration,
            seed: derive_seed(master_seed, "excitation"),
            bandwidth_hz: signal.bandwidth_hz,
            amplitude: signal.amplitude,
        })?;
        Ok(Self {
            structure: structure.clone(),
            lf: lf.clone(),
            hf: hf.clone(),
            signal: signal.clone(),
            master_seed,
            excitation,
            lf_stride: step_ratio(lf.dt_sim, hf.dt_sim)?,
        })
    }

    pub fn lf_response(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let base: Vec<f64> = self.excitation.iter().step_by(self.lf_stride).copied().collect();
        simulate_response(&self.structure, theta, self.lf.stiffness_bias, &base, self.lf.dt_sim, &self.signal)
    }

    /// HF response of record `index`; the record index selects the
    /// perturbation draw when one is configured.
    pub fn hf_response(&self, theta: &[f64], index: usize) -> Result<Vec<f64>> {
        let base = match &self.hf.excitation_perturbation {
            None => self.excitation.clone(),
            Some(p) => {
                let mut rng = rng_from_seed(derive_seed(self.master_seed, &format!("perturbation/{index}")));
                let env = p.envelope(self.excitation.len(), self.hf.dt_sim, &mut rng);
                self.excitation.iter().zip(&env).map(|(a, e)| a * e).collect()
            }
        };
        simulate_response(&self.structure, theta, 1.0, &base, self.hf.dt_sim, &self.signal)
    }
}

/// Paired LF/HF datasets on the common output grid, with independent
/// parameter draws per fidelity and one shared base excitation.
pub fn generate_pairs(
    cfg: &StructuralConfig,
    lf: &FidelityConfig,
    hf: &FidelityConfig,
    signal: &SignalConfig,
    n_lf: usize,
    n_hf: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_hf > n_lf {
        return Err(Error::config("n_hf", format!("{n_hf} HF records exceed the {n_lf} LF records")));
    }
    if n_hf == 0 {
        return Err(Error::config("n_hf", "need at least one record"));
    }
    let sim = PairSimulator::new(cfg, lf, hf, signal, seed)?;
    let m = cfg.n_groups;
    let lf_seed = derive_seed(seed, "theta/lf");
    let hf_seed = derive_seed(seed, "theta/hf");
    let lf_theta = sample_parameters_within(n_lf, m, signal.prior_bound, lf_seed);
    let hf_theta = sample_parameters_within(n_hf, m, signal.prior_bound, hf_seed);

    let lf_y = crate::par::try_map(n_lf, |i| sim.lf_response(&lf_theta[i]))?;
    let hf_y = crate::par::try_map(n_hf, |i| sim.hf_response(&hf_theta[i], i))?;

    let mut seeds = BTreeMap::from([
        ("master".to_string(), seed),
        ("excitation".to_string(), derive_seed(seed, "excitation")),
    ]);
    let mut manifest = |level: Fidelity, fid: &FidelityConfig, theta_seed: u64, rows: usize| {
        seeds.insert("theta".into(), theta_seed);
        DatasetManifest {
            fidelity: level,
            rows,
            n_params: m,
            n_points: signal.n_points,
            sample_rate_hz: signal.sample_rate_hz,
            prior_lo: vec![-signal.prior_bound; m],
            prior_hi: vec![signal.prior_bound; m],
            seeds: seeds.clone(),
            structure: cfg.clone(),
            fidelity_config: fid.clone(),
            signal: signal.clone(),
        }
    };
    let lf_set = Dataset { manifest: manifest(Fidelity::Lf, lf, lf_seed, n_lf), theta: lf_theta, y: lf_y };
    let hf_set = Dataset { manifest: manifest(Fidelity::Hf, hf, hf_seed, n_hf), theta: hf_theta, y: hf_y };
    Ok((lf_set, hf_set))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub fidelity: Fidelity,
    pub rows: usize,
    pub n_params: usize,
    pub n_points: usize,
    pub sample_rate_hz: f64,
    pub prior_lo: Vec<f64>,
    pub prior_hi: Vec<f64>,
    pub seeds: BTreeMap<String, u64>,
    pub structure: StructuralConfig,
    pub fidelity_config: FidelityConfig,
    pub signal: SignalConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub theta: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn series_len(&self) -> usize {
        self.manifest.n_points
    }

    pub fn param_dim(&self) -> usize {
        self.manifest.n_params
    }

    pub fn records(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.theta.iter().map(Vec::as_slice).zip(self.y.iter().map(Vec::as_slice))
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!("row {bad} out of range for {} rows", self.len())));
        }
        let mut manifest = self.manifest.clone();
        manifest.rows = indices.len();
        Ok(Self {
            manifest,
            theta: indices.iter().map(|&i| self.theta[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i].clone()).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mf = &self.manifest;
        if self.theta.len() != self.y.len() || self.y.len() != mf.rows {
            return Err(Error::Format(format!(
                "manifest lists {} rows, found {} parameter rows and {} series",
                mf.rows,
                self.theta.len(),
                self.y.len()
            )));
        }
        if mf.prior_lo.len() != mf.n_params || mf.prior_hi.len() != mf.n_params {
            return Err(Error::Format("prior bounds do not match the parameter count".into()));
        }
        for (i, (t, y)) in self.records().enumerate() {
            if t.len() != mf.n_params || y.len() != mf.n_points {
                return Err(Error::Format(format!("row {i} has the wrong shape")));
            }
            let inside = t.iter().zip(&mf.prior_lo).zip(&mf.prior_hi).all(|((v, lo), hi)| v >= lo && v <= hi);
            if !inside {
                return Err(Error::Format(format!("row {i} lies outside the prior bounds")));
            }
        }
        Ok(())
    }

    pub fn csv_path(dir: &Path, stem: &str) -> PathBuf {
        dir.join(format!("{stem}.csv"))
    }

    pub fn manifest_path(dir: &Path, stem: &str) -> PathBuf {
        dir.join(format!("{stem}.json"))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(Self::csv_path(dir, stem)).map_err(csv_err)?;
        let header: Vec<String> = (1..=self.param_dim())
            .map(|i| format!("theta_{i}"))
            .chain((1..=self.series_len()).map(|i| format!("y_{i}")))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for (t, y) in self.records() {
            w.write_record(t.iter().chain(y).map(|v| format!("{v:.16e}"))).map_err(csv_err)?;
        }
        w.flush()?;
        fs::write(Self::manifest_path(dir, stem), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(Self::manifest_path(dir, stem))?)?;
        let mut r = csv::Reader::from_path(Self::csv_path(dir, stem)).map_err(csv_err)?;
        let width = manifest.n_params + manifest.n_points;
        if r.headers().map_err(csv_err)?.len() != width {
            return Err(Error::Format(format!("{stem}.csv does not have {width} columns")));
        }
        let (mut theta, mut y) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("{stem}.csv: {e}")))?;
            if vals.len() != width {
                return Err(Error::Format(format!("{stem}.csv: ragged row")));
            }
            theta.push(vals[..manifest.n_params].to_vec());
            y.push(vals[manifest.n_params..].to_vec());
        }
        let ds = Self { manifest, theta, y };
        ds.validate()?;
        Ok(ds)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Pearson correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
