use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{ArgGroup, Args};
use log::{info, warn};
use serde::Serialize;

use mfflow::evaluation::{
    evaluate_model, mean, median, predict as predict_summary, write_plot_csv, write_results, AblationResult,
    AblationSummary, Scenario, DEFAULT_SAMPLES,
};
use mfflow::experiment::{ExperimentConfig, Preset};
use mfflow::pipeline::{self, SavedStage, Stage};
use mfflow::seed::{derive_seed, rng_from_seed};
use mfflow::training::Checkpoint;

use crate::Common;

/// Bad command-line input; exits with code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn library_code(e: &mfflow::Error) -> u8 {
    match e {
        mfflow::Error::Config { .. } | mfflow::Error::Precondition(_) => 2,
        mfflow::Error::Scenario { source, .. } => library_code(source),
        _ => 1,
    }
}

/// 2 for configuration and validation failures, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<mfflow::Error>() {
            return library_code(e);
        }
    }
    1
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = Path::new(&common.config);
    let mut cfg = if !path.exists() && matches!(common.config.as_str(), "case1" | "case2" | "desk_small") {
        let preset: Preset = serde_json::from_value(common.config.clone().into())?;
        ExperimentConfig::from_json(&serde_json::json!({ "preset": preset }).to_string())?
    } else {
        ExperimentConfig::load(path)?
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn generate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    info!("simulating {} LF and {} HF records", cfg.data.n_lf, cfg.data.n_hf);
    let splits = pipeline::generate(&cfg)?;
    println!(
        "wrote {} LF and {} HF records ({} held out for testing) to {}",
        splits.lf.len(),
        splits.hf_train.len() + splits.hf_test.len(),
        splits.hf_test.len(),
        cfg.data_dir().display()
    );
    Ok(())
}

pub fn train(common: &Common, stage: Stage) -> Result<()> {
    let cfg = load_config(common)?;
    let splits = pipeline::load_splits(&cfg)?;
    let lf = if stage == Stage::Mf {
        let dir = cfg.checkpoint_dir(Stage::Lf.name());
        match pipeline::load_stage(&cfg, Stage::Lf)? {
            SavedStage::Ready(out) => Some(out),
            SavedStage::Missing => {
                return Err(mfflow::Error::Precondition(format!(
                    "no LF checkpoint in {}; run `mfflow train --stage lf` first",
                    dir.display()
                ))
                .into())
            }
            SavedStage::Stale => {
                return Err(mfflow::Error::Precondition(format!(
                    "the LF checkpoint in {} was trained under a different config; rerun `mfflow train --stage lf`",
                    dir.display()
                ))
                .into())
            }
        }
    } else {
        None
    };
    info!("training stage {stage}");
    let out = pipeline::train_stage(&cfg, &splits, stage, lf.as_ref())?;
    pipeline::save_stage(&cfg, stage, &out)?;
    let r = &out.report;
    let kept = r.best_epoch.map_or("initial parameters".to_string(), |e| format!("epoch {e}"));
    match r.best_val_nll {
        Some(v) => println!("{stage}: {} epochs, kept {kept}, validation NLL {v:.4}", r.epochs.len()),
        None => println!(
            "{stage}: {} epochs, kept {kept}, final training NLL {:.4}",
            r.epochs.len(),
            r.epochs.last().map_or(f64::NAN, |e| e.train_nll)
        ),
    }
    println!("checkpoint: {}", cfg.checkpoint_dir(stage.name()).display());
    Ok(())
}

#[derive(Args)]
#[command(group(ArgGroup::new("theta_source").required(true).args(["theta", "theta_file"])))]
pub struct PredictArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,

    /// Parameter vector, comma separated, e.g. `0.1,-0.05,0,...`.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,

    /// File with one parameter vector per line (commas or whitespace;
    /// blank lines and `#` comments are skipped).
    #[arg(long)]
    theta_file: Option<PathBuf>,

    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    n_samples: usize,

    /// Coverage level of the credible band.
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value = "predictions")]
    out: PathBuf,
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| usage(format!("not a number: '{s}'"))))
        .collect()
}

fn read_thetas(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_row)
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(usage(format!("{} holds no parameter vectors", path.display())));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct PredictionStats<'a> {
    index: usize,
    theta: &'a [f64],
    alpha: f64,
    n_samples: usize,
    seed: u64,
    mean: &'a [f64],
    std: &'a [f64],
    ci_lo: &'a [f64],
    ci_hi: &'a [f64],
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    if !args.checkpoint.join("model.bin").exists() {
        return Err(usage(format!("no checkpoint found in {}", args.checkpoint.display())));
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let thetas = match (&args.theta, &args.theta_file) {
        (Some(t), _) => vec![parse_row(t)?],
        (None, Some(p)) => read_thetas(p)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let m = ck.model.cond_dim();
    if let Some((i, t)) = thetas.iter().enumerate().find(|(_, t)| t.len() != m) {
        return Err(usage(format!("parameter vector {i} has {} values; this checkpoint expects m = {m}", t.len())));
    }
    if args.n_samples == 0 {
        return Err(usage("--n-samples must be at least 1"));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    if args.n_samples < 100 {
        warn!("only {} samples: band edges will be noisy (degenerate for a single sample)", args.n_samples);
    }
    let dt = ck.meta.sample_interval.unwrap_or(1.0);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut summaries = Vec::with_capacity(thetas.len());
    for (i, theta) in thetas.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(args.seed, &format!("predict/{i}")));
        let s = predict_summary(&ck.model, &ck.standardizer, theta, args.n_samples, args.alpha, &mut rng)?;
        write_plot_csv(args.out.join(format!("prediction_{i}.csv")), &s, None, dt)?;
        summaries.push(s);
    }
    let stats: Vec<PredictionStats> = thetas
        .iter()
        .zip(&summaries)
        .enumerate()
        .map(|(index, (theta, s))| PredictionStats {
            index,
            theta,
            alpha: s.alpha,
            n_samples: s.n_samples,
            seed: args.seed,
            mean: &s.mean,
            std: &s.std,
            ci_lo: &s.ci_lo,
            ci_hi: &s.ci_hi,
        })
        .collect();
    fs::write(args.out.join("predictions.json"), serde_json::to_string_pretty(&stats)? + "\n")?;
    println!("wrote {} prediction(s) to {}", thetas.len(), args.out.display());
    Ok(())
}

fn print_table(results: &[AblationResult]) {
    println!("{:<14} {:>10} {:>10} {:>10}", "scenario", "median l2", "mean l2", "coverage");
    for r in results {
        println!("{:<14} {:>10.4} {:>10.4} {:>10.3}", r.label, r.median_rel_l2, r.mean_rel_l2, r.coverage);
    }
}

pub fn ablate(common: &Common, scenario_args: &[String]) -> Result<()> {
    let mut cfg = load_config(common)?;
    if !scenario_args.is_empty() {
        cfg.evaluation.scenarios = scenario_args
            .iter()
            .map(|s| s.parse::<Scenario>().map_err(|e| usage(e.to_string())))
            .collect::<Result<_>>()?;
        cfg.validate()?;
    }
    let splits = pipeline::load_splits(&cfg)?;
    let run = pipeline::ablate(&cfg, &splits, &cfg.evaluation.scenarios)?;
    if run.reused_lf {
        info!("reused the LF checkpoint in {}", cfg.checkpoint_dir(Stage::Lf.name()).display());
    }
    print_table(&run.results);
    println!("results: {}", cfg.ablation_dir().display());
    Ok(())
}

pub fn evaluate(common: &Common, stage: Stage) -> Result<()> {
    let cfg = load_config(common)?;
    let splits = pipeline::load_splits(&cfg)?;
    let dir = cfg.checkpoint_dir(stage.name());
    if !dir.join("model.bin").exists() {
        return Err(mfflow::Error::Precondition(format!(
            "no {stage} checkpoint in {}; run `mfflow train --stage {stage}` first",
            dir.display()
        ))
        .into());
    }
    let ck = Checkpoint::load(&dir)?;
    if ck.meta.config_hash != stage.config_hash(&cfg) {
        warn!("the {stage} checkpoint was trained under a different config");
    }
    let e = &cfg.evaluation;
    let seed = derive_seed(cfg.seed, &format!("evaluate/{stage}"));
    let (entries, summaries, coverage) =
        evaluate_model(&ck.model, &ck.standardizer, &splits.hf_test, e.n_samples, e.alpha, seed)?;
    let rel: Vec<f64> = entries.iter().map(|r| r.rel_l2).collect();
    let result = AblationResult {
        label: stage.to_string(),
        seed,
        median_rel_l2: median(&rel),
        mean_rel_l2: mean(&rel),
        coverage,
        entries,
        summaries,
    };
    let results = [result];
    let summary = AblationSummary::new(&results, cfg.seed, e.alpha, e.n_samples);
    let out = cfg.output_dir.join("evaluation").join(stage.name());
    write_results(&out, &results, &summary, &splits.hf_test.y, cfg.signal.sample_interval(), e.plot_records)?;
    print_table(&results);
    println!("results: {}", out.display());
    Ok(())
}
