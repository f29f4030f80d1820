use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{coverage_rate, mean, median, r_squared, relative_l2};
use super::predict::{predict, PredictiveSummary, DEFAULT_SAMPLES};
use crate::dynamics::Dataset;
use crate::flows::{DefaultLayout, FlowModel};
use crate::seed::{derive_seed, rng_from_seed};
use crate::training::{run_hf_only_stage, run_lf_stage, run_mf_stage, Standardizer, StageOutput, TrainConfig};
use crate::{Error, Result};

/// A training regime compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scenario {
    /// The pretrained LF model scored directly against HF truth.
    LfOnly,
    /// Trained from scratch on the first `n` HF training records.
    HfOnly(usize),
    /// LF-pretrained, fine-tuned on the first `n` HF training records.
    Mf(usize),
}

impl Scenario {
    pub fn needs_lf(&self) -> bool {
        !matches!(self, Scenario::HfOnly(_))
    }

    pub fn hf_records(&self) -> usize {
        match self {
            Scenario::LfOnly => 0,
            Scenario::HfOnly(n) | Scenario::Mf(n) => *n,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::LfOnly => write!(f, "LF-only"),
            Scenario::HfOnly(n) => write!(f, "HF-only-{n}"),
            Scenario::Mf(n) => write!(f, "MF-{n}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown scenario '{s}' (expected LF-only, HF-only-N or MF-N)"));
        if s.eq_ignore_ascii_case("LF-only") {
            return Ok(Scenario::LfOnly);
        }
        let (kind, n) = s.rsplit_once('-').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind.to_ascii_lowercase().as_str() {
            "hf-only" => Ok(Scenario::HfOnly(n)),
            "mf" => Ok(Scenario::Mf(n)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Scenario {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSettings {
    pub layout: DefaultLayout,
    pub lf_train: TrainConfig,
    pub hf_train: TrainConfig,
    pub lf_val_fraction: f64,
    pub hf_val_fraction: f64,
    pub n_samples: usize,
    pub alpha: f64,
}

impl AblationSettings {
    pub fn new(layout: DefaultLayout, lf_train: TrainConfig, hf_train: TrainConfig) -> Self {
        Self {
            layout,
            lf_train,
            hf_train,
            lf_val_fraction: 0.02,
            hf_val_fraction: 0.1,
            n_samples: DEFAULT_SAMPLES,
            alpha: 0.95,
        }
    }
}

/// LF training data, the HF pool scenarios draw their training records from,
/// and the HF test split shared by every scenario.
#[derive(Debug, Clone, Copy)]
pub struct AblationData<'a> {
    pub lf: &'a Dataset,
    pub hf_train: &'a Dataset,
    pub hf_test: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub record_id: usize,
    pub rel_l2: f64,
    pub r2: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub label: String,
    pub seed: u64,
    pub entries: Vec<RecordScore>,
    pub median_rel_l2: f64,
    pub mean_rel_l2: f64,
    /// Pooled over all test cells.
    pub coverage: f64,
    #[serde(skip)]
    pub summaries: Vec<PredictiveSummary>,
}

impl AblationResult {
    pub fn rel_l2(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.rel_l2).collect()
    }
}

/// Scores a model on every test record: predictive mean against truth, and
/// band coverage. Record `r` samples with a seed derived from `seed` and `r`.
pub fn evaluate_model(
    model: &FlowModel,
    standardizer: &Standardizer,
    test: &Dataset,
    n_samples: usize,
    alpha: f64,
    seed: u64,
) -> Result<(Vec<RecordScore>, Vec<PredictiveSummary>, f64)> {
    let mut entries = Vec::with_capacity(test.len());
    let mut summaries = Vec::with_capacity(test.len());
    for (r, (theta, truth)) in test.records().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("predict/{r}")));
        let s = predict(model, standardizer, theta, n_samples, alpha, &mut rng)?;
        entries.push(RecordScore {
            record_id: r,
            rel_l2: relative_l2(&s.mean, truth)?,
            r2: r_squared(&s.mean, truth)?,
            coverage: coverage_rate(std::slice::from_ref(&s), &[truth.to_vec()])?,
        });
        summaries.push(s);
    }
    let pooled = coverage_rate(&summaries, &test.y)?;
    Ok((entries, summaries, pooled))
}

/// Seed of scenario `index`; labels are part of the derivation so a
/// scenario list can be reordered without silently reusing seeds.
pub fn scenario_seed(master: u64, index: usize, scenario: &Scenario) -> u64 {
    derive_seed(master, &format!("scenario/{index}/{scenario}"))
}

/// LF pretraining as done inside an ablation run.
pub fn pretrain_for_ablation(data: &AblationData, settings: &AblationSettings, seed: u64) -> Result<StageOutput> {
    let cfg = TrainConfig { seed: derive_seed(seed, "lf/train"), ..settings.lf_train.clone() };
    run_lf_stage(&settings.layout, data.lf, &cfg, settings.lf_val_fraction, derive_seed(seed, "lf/init"))
}

/// Trains and scores every scenario. LF pretraining happens once and is
/// shared by all scenarios that need it.
pub fn run_ablation(
    data: &AblationData,
    scenarios: &[Scenario],
    settings: &AblationSettings,
    seed: u64,
) -> Result<Vec<AblationResult>> {
    let lf = if scenarios.iter().any(Scenario::needs_lf) {
        Some(pretrain_for_ablation(data, settings, seed)?)
    } else {
        None
    };
    run_scenarios(data, scenarios, settings, seed, lf.as_ref())
}

/// Runs scenarios against an already pretrained LF stage.
pub fn run_scenarios(
    data: &AblationData,
    scenarios: &[Scenario],
    settings: &AblationSettings,
    seed: u64,
    lf: Option<&StageOutput>,
) -> Result<Vec<AblationResult>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidArgument("no scenarios to run".into()));
    }
    if data.hf_test.is_empty() {
        return Err(Error::InvalidArgument("HF test split is empty".into()));
    }
    for s in scenarios {
        if s.hf_records() > data.hf_train.len() {
            return Err(Error::InvalidArgument(format!(
                "scenario {s} needs {} HF training records, only {} available",
                s.hf_records(),
                data.hf_train.len()
            )));
        }
        if s.needs_lf() && lf.is_none() {
            return Err(Error::InvalidArgument(format!("scenario {s} needs a pretrained LF model")));
        }
    }
    crate::par::try_map(scenarios.len(), |i| {
        let scenario = scenarios[i];
        let s_seed = scenario_seed(seed, i, &scenario);
        run_one(data, scenario, settings, s_seed, lf)
            .map_err(|e| Error::Scenario { label: scenario.to_string(), source: Box::new(e) })
    })
}

fn run_one(
    data: &AblationData,
    scenario: Scenario,
    settings: &AblationSettings,
    seed: u64,
    lf: Option<&StageOutput>,
) -> Result<AblationResult> {
    let cfg = TrainConfig { seed: derive_seed(seed, "train"), ..settings.hf_train.clone() };
    let hf_subset = || data.hf_train.subset(&(0..scenario.hf_records()).collect::<Vec<_>>());
    let trained;
    let (model, standardizer) = match scenario {
        Scenario::LfOnly => {
            let lf = lf.expect("checked above");
            (&lf.model, &lf.standardizer)
        }
        Scenario::HfOnly(_) => {
            trained = run_hf_only_stage(&settings.layout, &hf_subset()?, &cfg, settings.hf_val_fraction, derive_seed(seed, "init"))?;
            (&trained.model, &trained.standardizer)
        }
        Scenario::Mf(_) => {
            let lf = lf.expect("checked above");
            trained = run_mf_stage(&lf.model, &lf.standardizer, &hf_subset()?, &cfg, settings.hf_val_fraction)?;
            (&trained.model, &trained.standardizer)
        }
    };
    let (entries, summaries, coverage) =
        evaluate_model(model, standardizer, data.hf_test, settings.n_samples, settings.alpha, seed)?;
    let rel: Vec<f64> = entries.iter().map(|e| e.rel_l2).collect();
    Ok(AblationResult {
        label: scenario.to_string(),
        seed,
        median_rel_l2: median(&rel),
        mean_rel_l2: mean(&rel),
        coverage,
        entries,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_labels_round_trip() {
        for s in [Scenario::LfOnly, Scenario::HfOnly(180), Scenario::Mf(100)] {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!("hf-only-5".parse::<Scenario>().unwrap(), Scenario::HfOnly(5));
        for bad in ["MF", "MF-0", "HF-180", "XX-3", "MF-x"] {
            assert!(bad.parse::<Scenario>().is_err(), "{bad}");
        }
        let json = serde_json::to_string(&vec![Scenario::Mf(3)]).unwrap();
        assert_eq!(json, r#"["MF-3"]"#);
    }

    #[test]
    fn duplicate_labels_get_distinct_seeds() {
        let s = Scenario::Mf(10);
        assert_ne!(scenario_seed(1, 0, &s), scenario_seed(1, 1, &s));
        assert_eq!(scenario_seed(1, 0, &s), scenario_seed(1, 0, &s));
    }
}
