//! Declarative experiment configuration.
//!
//! A config is one JSON document naming a `preset` (`case1`, `case2` or
//! `desk_small`); every other field is optional and deep-merged over the
//! preset, so `{"preset": "desk_small", "lf_train": {"epochs": 50}}` is a
//! complete config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dynamics::{generate_pairs, Dataset, FidelityConfig, SignalConfig, StructuralConfig};
use crate::evaluation::{AblationData, AblationSettings, Scenario, DEFAULT_SAMPLES};
use crate::flows::{DefaultLayout, DEFAULT_LOG_STD_BOUNDS};
use crate::seed::derive_seed;
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Case1,
    Case2,
    DeskSmall,
}

/// Which HF excitation regime to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Same excitation at both fidelities (strong LF/HF correlation).
    Case1,
    /// HF excitation amplitude randomly modulated (weak correlation).
    Case2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSizes {
    pub n_lf: usize,
    /// HF records generated, test split included.
    pub n_hf: usize,
    /// The last `n_test` HF records are held out for testing.
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub pre_couplings: usize,
    pub post_couplings: usize,
    pub conditioner_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub clamp: f64,
    pub log_std_bounds: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub alpha: f64,
    pub scenarios: Vec<Scenario>,
    /// Test records per scenario that get a plot-data CSV.
    pub plot_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub case: Case,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub structure: StructuralConfig,
    pub lf: FidelityConfig,
    pub hf: FidelityConfig,
    pub signal: SignalConfig,
    pub data: DataSizes,
    pub model: ModelConfig,
    pub lf_train: TrainConfig,
    pub hf_train: TrainConfig,
    pub lf_val_fraction: f64,
    pub hf_val_fraction: f64,
    pub evaluation: EvalConfig,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset, case: Case) -> Self {
        let hf = match case {
            Case::Case1 => FidelityConfig::hf_case1(),
            Case::Case2 => FidelityConfig::hf_case2(),
        };
        let full = Self {
            preset,
            case,
            seed: 2024,
            output_dir: PathBuf::from("runs").join(match preset {
                Preset::Case1 => "case1",
                Preset::Case2 => "case2",
                Preset::DeskSmall => "desk_small",
            }),
            structure: StructuralConfig::shear_chain(18, 9),
            lf: FidelityConfig::lf_default(),
            hf,
            signal: SignalConfig::default(),
            data: DataSizes { n_lf: 1000, n_hf: 200, n_test: 20 },
            model: ModelConfig {
                latent_dim: 10,
                pre_couplings: 4,
                post_couplings: 2,
                conditioner_hidden: vec![64, 64],
                decoder_hidden: vec![64, 64],
                clamp: 2.0,
                log_std_bounds: DEFAULT_LOG_STD_BOUNDS,
            },
            lf_train: TrainConfig::new(1000, 64, 1e-4, 0),
            hf_train: TrainConfig::new(500, 16, 1e-4, 0),
            lf_val_fraction: 0.02,
            hf_val_fraction: 0.1,
            evaluation: EvalConfig {
                n_samples: DEFAULT_SAMPLES,
                alpha: 0.95,
                scenarios: vec![Scenario::HfOnly(180), Scenario::Mf(100), Scenario::Mf(180)],
                plot_records: 2,
            },
        };
        match preset {
            Preset::Case1 | Preset::Case2 => full,
            Preset::DeskSmall => Self {
                structure: StructuralConfig::shear_chain(9, 9),
                // A narrower excitation band keeps the short record from
                // being dominated by phase drift in the upper modes.
                signal: SignalConfig { duration: 3.2, n_points: 64, bandwidth_hz: 3.0, ..SignalConfig::default() },
                data: DataSizes { n_lf: 300, n_hf: 60, n_test: 20 },
                model: ModelConfig { latent_dim: 8, ..full.model.clone() },
                lf_train: TrainConfig::new(300, 32, 1e-3, 0),
                hf_train: TrainConfig::new(300, 8, 1e-3, 0),
                lf_val_fraction: 0.1,
                hf_val_fraction: 0.2,
                evaluation: EvalConfig {
                    scenarios: vec![Scenario::HfOnly(40), Scenario::Mf(22), Scenario::Mf(40)],
                    ..full.evaluation.clone()
                },
                ..full
            },
        }
    }

    /// Builds a config from a JSON document with a `preset` field and
    /// optional overrides.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        let Value::Object(obj) = &user else {
            return Err(Error::config("<root>", "config must be a JSON object"));
        };
        let preset: Preset = match obj.get("preset") {
            Some(p) => serde_json::from_value(p.clone())
                .map_err(|_| Error::config("preset", "expected one of case1, case2, desk_small"))?,
            None => return Err(Error::config("preset", "missing")),
        };
        let default_case = if preset == Preset::Case2 { Case::Case2 } else { Case::Case1 };
        let case: Case = match obj.get("case") {
            Some(c) => serde_json::from_value(c.clone()).map_err(|_| Error::config("case", "expected case1 or case2"))?,
            None => default_case,
        };
        let mut base = serde_json::to_value(Self::preset(preset, case))?;
        merge(&mut base, user);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::config("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        crate::dynamics::validate_fidelities(&self.lf, &self.hf, &self.signal)?;
        let d = &self.data;
        if d.n_hf > d.n_lf {
            return Err(Error::config("data.n_hf", format!("{} exceeds data.n_lf = {}", d.n_hf, d.n_lf)));
        }
        if d.n_test == 0 || d.n_test >= d.n_hf {
            return Err(Error::config("data.n_test", "need 0 < n_test < n_hf"));
        }
        if d.n_lf < 2 {
            return Err(Error::config("data.n_lf", "need at least two LF records"));
        }
        let w = self.signal.n_points;
        let q = self.model.latent_dim;
        if q == 0 || q >= w {
            return Err(Error::config("model.latent_dim", format!("need 0 < Q < W = {w}")));
        }
        if self.model.post_couplings > 0 && q < 2 {
            return Err(Error::config("model.latent_dim", "couplings after the funnel need Q >= 2"));
        }
        if !(self.model.clamp > 0.0) {
            return Err(Error::config("model.clamp", "must be positive"));
        }
        let (lo, hi) = self.model.log_std_bounds;
        if !(lo < hi) {
            return Err(Error::config("model.log_std_bounds", "need lo < hi"));
        }
        for (field, t) in [("lf_train", &self.lf_train), ("hf_train", &self.hf_train)] {
            t.validate().map_err(|e| Error::config(field, e.to_string()))?;
        }
        for (field, f) in [("lf_val_fraction", self.lf_val_fraction), ("hf_val_fraction", self.hf_val_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::config(field, "must lie in [0, 1)"));
            }
        }
        let e = &self.evaluation;
        if e.n_samples == 0 {
            return Err(Error::config("evaluation.n_samples", "must be at least 1"));
        }
        if !(e.alpha > 0.0 && e.alpha < 1.0) {
            return Err(Error::config("evaluation.alpha", "must lie in (0, 1)"));
        }
        let pool = d.n_hf - d.n_test;
        if let Some(s) = e.scenarios.iter().find(|s| s.hf_records() > pool) {
            return Err(Error::config(
                "evaluation.scenarios",
                format!("{s} needs more HF training records than the {pool} available"),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    /// Hash of everything but `output_dir`, so a moved run stays valid.
    pub fn hash(&self) -> String {
        self.hash_without(&["output_dir"])
    }

    /// Hash of the fields LF data and LF pretraining depend on. A saved LF
    /// checkpoint stays reusable while this is unchanged, so editing the
    /// scenario list or HF training settings does not force retraining.
    pub fn lf_hash(&self) -> String {
        self.hash_without(&["output_dir", "hf_train", "hf_val_fraction", "evaluation"])
    }

    fn hash_without(&self, keys: &[&str]) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(obj) = &mut v {
            for key in keys {
                obj.remove(*key);
            }
        }
        Sha256::digest(v.to_string().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn layout(&self) -> DefaultLayout {
        let m = &self.model;
        DefaultLayout {
            data_dim: self.signal.n_points,
            latent_dim: m.latent_dim,
            cond_dim: self.structure.n_groups,
            pre_couplings: m.pre_couplings,
            post_couplings: m.post_couplings,
            conditioner_hidden: m.conditioner_hidden.clone(),
            decoder_hidden: m.decoder_hidden.clone(),
            clamp: m.clamp,
            log_std_bounds: m.log_std_bounds,
        }
    }

    pub fn ablation_settings(&self) -> AblationSettings {
        AblationSettings {
            layout: self.layout(),
            lf_train: self.lf_train.clone(),
            hf_train: self.hf_train.clone(),
            lf_val_fraction: self.lf_val_fraction,
            hf_val_fraction: self.hf_val_fraction,
            n_samples: self.evaluation.n_samples,
            alpha: self.evaluation.alpha,
        }
    }

    pub fn data_seed(&self) -> u64 {
        derive_seed(self.seed, "data")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn checkpoint_dir(&self, stage: &str) -> PathBuf {
        self.output_dir.join("checkpoints").join(stage)
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.output_dir.join("ablation")
    }

    /// Simulates the LF and HF datasets.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        generate_pairs(
            &self.structure,
            &self.lf,
            &self.hf,
            &self.signal,
            self.data.n_lf,
            self.data.n_hf,
            self.data_seed(),
        )
    }
}

/// LF set plus the HF training pool and test split.
#[derive(Debug, Clone)]
pub struct Splits {
    pub lf: Dataset,
    pub hf_train: Dataset,
    pub hf_test: Dataset,
}

impl Splits {
    pub fn new(lf: Dataset, hf: Dataset, n_test: usize) -> Result<Self> {
        if n_test == 0 || n_test >= hf.len() {
            return Err(Error::config("data.n_test", format!("need 0 < n_test < {}", hf.len())));
        }
        let cut = hf.len() - n_test;
        let hf_train = hf.subset(&(0..cut).collect::<Vec<_>>())?;
        let hf_test = hf.subset(&(cut..hf.len()).collect::<Vec<_>>())?;
        Ok(Self { lf, hf_train, hf_test })
    }

    pub fn ablation_data(&self) -> AblationData<'_> {
        AblationData { lf: &self.lf, hf_train: &self.hf_train, hf_test: &self.hf_test }
    }

    /// Reads `lf.*` and `hf.*` from `dir` and checks them against `cfg`.
    pub fn load(dir: impl AsRef<Path>, cfg: &ExperimentConfig) -> Result<Self> {
        let dir = dir.as_ref();
        for stem in ["lf", "hf"] {
            if !Dataset::csv_path(dir, stem).exists() {
                return Err(Error::Precondition(format!(
                    "dataset {} not found; run `generate` first",
                    Dataset::csv_path(dir, stem).display()
                )));
            }
        }
        let lf = Dataset::load(dir, "lf")?;
        let hf = Dataset::load(dir, "hf")?;
        for d in [&lf, &hf] {
            if d.series_len() != cfg.signal.n_points {
                return Err(Error::config(
                    "signal.n_points",
                    format!("config W = {} but the dataset has series of length {}", cfg.signal.n_points, d.series_len()),
                ));
            }
            if d.param_dim() != cfg.structure.n_groups {
                return Err(Error::config("structure.n_groups", "does not match the dataset's parameter count"));
            }
        }
        Self::new(lf, hf, cfg.data.n_test)
    }
}
