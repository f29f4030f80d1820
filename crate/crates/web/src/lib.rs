//! Browser bindings for a small interactive demo: simulate the shear chain
//! at both fidelities, train a compact surrogate on LF records a few epochs
//! at a time, and draw its predictive band next to the simulated truth.
//!
//! See `www/index.html` for the page; the README has the build steps.

use wasm_bindgen::prelude::*;

use mfflow::dynamics::{sample_parameters_within, PairSimulator};
use mfflow::evaluation::predict;
use mfflow::experiment::{Case, ExperimentConfig, Preset};
use mfflow::flows::{DefaultLayout, FlowModel};
use mfflow::seed::{derive_seed, rng_from_seed};
use mfflow::training::{fit, Standardizer, TrainConfig, TrainSet};

fn js_err(e: mfflow::Error) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct Demo {
    sim: PairSimulator,
    prior_bound: f64,
    sample_interval: f64,
    model: FlowModel,
    standardizer: Standardizer,
    train: TrainSet,
    history: Vec<f64>,
    rounds: u64,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    /// Simulates `n_records` LF training records for the small preset and
    /// builds an untrained surrogate. `case2` switches the HF excitation to
    /// the randomly modulated one.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n_records: usize, case2: bool) -> Result<Demo, String> {
        if n_records < 2 {
            return Err("need at least two training records".into());
        }
        let seed = u64::from(seed);
        let case = if case2 { Case::Case2 } else { Case::Case1 };
        let cfg = ExperimentConfig::preset(Preset::DeskSmall, case);
        let sim = PairSimulator::new(&cfg.structure, &cfg.lf, &cfg.hf, &cfg.signal, seed).map_err(js_err)?;
        let m = cfg.structure.n_groups;
        let bound = cfg.signal.prior_bound;
        let thetas = sample_parameters_within(n_records, m, bound, derive_seed(seed, "theta/lf"));
        let ys = thetas.iter().map(|t| sim.lf_response(t)).collect::<mfflow::Result<Vec<_>>>().map_err(js_err)?;
        let standardizer =
            Standardizer::fit(ys.iter().map(Vec::as_slice), &vec![-bound; m], &vec![bound; m]).map_err(js_err)?;
        let train = TrainSet::from_records(thetas.iter().map(Vec::as_slice).zip(ys.iter().map(Vec::as_slice)), &standardizer)
            .map_err(js_err)?;
        // Narrower than the CLI default so an epoch stays well under a second.
        let layout = DefaultLayout {
            conditioner_hidden: vec![32],
            decoder_hidden: vec![32],
            ..DefaultLayout::new(cfg.signal.n_points, cfg.model.latent_dim, m)
        };
        let model = layout.build(derive_seed(seed, "init")).map_err(js_err)?;
        Ok(Demo {
            sim,
            prior_bound: bound,
            sample_interval: cfg.signal.sample_interval(),
            model,
            standardizer,
            train,
            history: Vec::new(),
            rounds: 0,
            seed,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.model.cond_dim()
    }

    pub fn n_points(&self) -> usize {
        self.model.data_dim()
    }

    pub fn prior_bound(&self) -> f64 {
        self.prior_bound
    }

    /// Seconds between output samples.
    pub fn sample_interval(&self) -> f64 {
        self.sample_interval
    }

    /// LF response followed by the HF response of record `record`
    /// (the record index picks the excitation perturbation in case 2).
    pub fn simulate(&self, theta: &[f64], record: u32) -> Result<Vec<f64>, String> {
        let mut out = self.sim.lf_response(theta).map_err(js_err)?;
        out.extend(self.sim.hf_response(theta, record as usize).map_err(js_err)?);
        Ok(out)
    }

    /// Trains for `epochs` more epochs and returns the training NLL of every
    /// epoch so far. Each call starts a fresh optimizer state.
    pub fn train(&mut self, epochs: usize) -> Result<Vec<f64>, String> {
        let cfg = TrainConfig::new(epochs, 16, 1e-3, derive_seed(self.seed, &format!("train/{}", self.rounds)));
        let report = fit(&mut self.model, &self.train, None, &cfg).map_err(js_err)?;
        self.rounds += 1;
        self.history.extend(report.train_nll());
        Ok(self.history.clone())
    }

    pub fn epochs_trained(&self) -> usize {
        self.history.len()
    }

    /// Predictive mean, lower and upper band edge, concatenated.
    pub fn predict(&self, theta: &[f64], n_samples: usize, alpha: f64, seed: u32) -> Result<Vec<f64>, String> {
        let mut rng = rng_from_seed(derive_seed(u64::from(seed), "predict"));
        let s = predict(&self.model, &self.standardizer, theta, n_samples, alpha, &mut rng).map_err(js_err)?;
        Ok([s.mean, s.ci_lo, s.ci_hi].concat())
    }
}
