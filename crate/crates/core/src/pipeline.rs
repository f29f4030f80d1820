//! File-backed pipeline steps: generate, train, ablate. Every step reads and
//! writes under the config's output directory:
//!
//! ```text
//! data/{lf,hf}.{csv,json}
//! checkpoints/{lf,mf,hf-only}/
//! ablation/records.csv  ablation/summary.json  ablation/plots/
//! ```

use std::fmt;
use std::str::FromStr;

use crate::evaluation::{pretrain_for_ablation, run_scenarios, write_results, AblationResult, AblationSummary, Scenario};
use crate::experiment::{ExperimentConfig, Splits};
use crate::seed::derive_seed;
use crate::training::{run_hf_only_stage, run_mf_stage, Checkpoint, CheckpointMeta, StageOutput, TrainConfig, TrainReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Lf,
    Mf,
    HfOnly,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Lf => "lf",
            Stage::Mf => "mf",
            Stage::HfOnly => "hf-only",
        }
    }

    /// The hash stored with a checkpoint of this stage.
    pub fn config_hash(&self, cfg: &ExperimentConfig) -> String {
        match self {
            Stage::Lf => cfg.lf_hash(),
            Stage::Mf | Stage::HfOnly => cfg.hash(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lf" => Ok(Stage::Lf),
            "mf" => Ok(Stage::Mf),
            "hf-only" | "hf_only" => Ok(Stage::HfOnly),
            _ => Err(Error::InvalidArgument(format!("unknown stage '{s}' (expected lf, mf or hf-only)"))),
        }
    }
}

/// Simulates both datasets and writes them to the data directory.
pub fn generate(cfg: &ExperimentConfig) -> Result<Splits> {
    let (lf, hf) = cfg.generate()?;
    let dir = cfg.data_dir();
    lf.save(&dir, "lf")?;
    hf.save(&dir, "hf")?;
    Splits::new(lf, hf, cfg.data.n_test)
}

pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    Splits::load(cfg.data_dir(), cfg)
}

/// Trains one stage. MF and HF-only use the whole HF training pool; MF
/// needs the pretrained LF stage.
pub fn train_stage(cfg: &ExperimentConfig, splits: &Splits, stage: Stage, lf: Option<&StageOutput>) -> Result<StageOutput> {
    let settings = cfg.ablation_settings();
    let hf_cfg = |label: &str| TrainConfig { seed: derive_seed(cfg.seed, &format!("{label}/train")), ..cfg.hf_train.clone() };
    match stage {
        Stage::Lf => pretrain_for_ablation(&splits.ablation_data(), &settings, cfg.seed),
        Stage::Mf => {
            let lf = lf.ok_or_else(|| Error::Precondition("MF fine-tuning needs an LF checkpoint".into()))?;
            run_mf_stage(&lf.model, &lf.standardizer, &splits.hf_train, &hf_cfg("mf"), cfg.hf_val_fraction)
        }
        Stage::HfOnly => run_hf_only_stage(
            &settings.layout,
            &splits.hf_train,
            &hf_cfg("hf-only"),
            cfg.hf_val_fraction,
            derive_seed(cfg.seed, "hf-only/init"),
        ),
    }
}

pub fn save_stage(cfg: &ExperimentConfig, stage: Stage, out: &StageOutput) -> Result<()> {
    let checkpoint = Checkpoint {
        model: out.model.clone(),
        standardizer: out.standardizer.clone(),
        meta: CheckpointMeta {
            stage: stage.to_string(),
            config_hash: stage.config_hash(cfg),
            epoch: out.report.best_epoch,
            val_nll: out.report.best_val_nll,
            sample_interval: Some(cfg.signal.sample_interval()),
        },
    };
    checkpoint.save(cfg.checkpoint_dir(stage.name()), Some(&out.report))
}

#[derive(Debug)]
pub enum SavedStage {
    Missing,
    /// Saved under a config whose relevant fields differ.
    Stale,
    Ready(StageOutput),
}

/// Looks for a saved checkpoint of `stage` trained under the current config.
pub fn load_stage(cfg: &ExperimentConfig, stage: Stage) -> Result<SavedStage> {
    let dir = cfg.checkpoint_dir(stage.name());
    if !dir.join("model.bin").exists() {
        return Ok(SavedStage::Missing);
    }
    let ck = Checkpoint::load(&dir)?;
    if ck.meta.config_hash != stage.config_hash(cfg) {
        return Ok(SavedStage::Stale);
    }
    Ok(SavedStage::Ready(StageOutput { model: ck.model, standardizer: ck.standardizer, report: TrainReport::default() }))
}

pub struct AblationRun {
    pub results: Vec<AblationResult>,
    pub summary: AblationSummary,
    /// Whether a saved LF checkpoint was reused instead of retraining.
    pub reused_lf: bool,
}

/// Runs `scenarios`, reusing the saved LF checkpoint when its hash matches
/// (and saving a fresh one otherwise), then writes the results directory.
pub fn ablate(cfg: &ExperimentConfig, splits: &Splits, scenarios: &[Scenario]) -> Result<AblationRun> {
    let mut reused_lf = false;
    let lf = if scenarios.iter().any(Scenario::needs_lf) {
        match load_stage(cfg, Stage::Lf)? {
            SavedStage::Ready(out) => {
                reused_lf = true;
                Some(out)
            }
            SavedStage::Missing | SavedStage::Stale => {
                let out = train_stage(cfg, splits, Stage::Lf, None)?;
                save_stage(cfg, Stage::Lf, &out)?;
                Some(out)
            }
        }
    } else {
        None
    };
    let settings = cfg.ablation_settings();
    let results = run_scenarios(&splits.ablation_data(), scenarios, &settings, cfg.seed, lf.as_ref())?;
    let summary = AblationSummary::new(&results, cfg.seed, settings.alpha, settings.n_samples);
    write_results(
        cfg.ablation_dir(),
        &results,
        &summary,
        &splits.hf_test.y,
        cfg.signal.sample_interval(),
        cfg.evaluation.plot_records,
    )?;
    Ok(AblationRun { results, summary, reused_lf })
}
