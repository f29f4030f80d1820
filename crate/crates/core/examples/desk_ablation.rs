//! Runs the desk-scale ablation for one case over a few seeds.
//!
//!     cargo run --release --example desk_ablation -- case2 1,2,3 '{"lf_train": {"epochs": 100}}'
//!
//! The optional last argument is merged over the preset like a config file.

use mfflow::evaluation::{run_ablation, Scenario};
use mfflow::experiment::{Case, ExperimentConfig, Splits};

fn main() -> mfflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let case = match args.next().as_deref() {
        Some("case2") => Case::Case2,
        _ => Case::Case1,
    };
    let seeds: Vec<u64> = args
        .next()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_else(|| vec![1]);
    let overrides: serde_json::Value = match args.next() {
        Some(text) => serde_json::from_str(&text)?,
        None => serde_json::json!({}),
    };
    for seed in seeds {
        let mut doc = overrides.clone();
        doc["preset"] = "desk_small".into();
        doc["case"] = serde_json::to_value(case)?;
        doc["seed"] = seed.into();
        let cfg = ExperimentConfig::from_json(&doc.to_string())?;
        let (lf, hf) = cfg.generate()?;
        let splits = Splits::new(lf, hf, cfg.data.n_test)?;
        let mut scenarios = vec![Scenario::LfOnly];
        scenarios.extend(cfg.evaluation.scenarios.iter().copied());
        let results = run_ablation(&splits.ablation_data(), &scenarios, &cfg.ablation_settings(), seed)?;
        print!("{case:?} seed {seed}:");
        for r in &results {
            print!("  {} {:.3} (cov {:.3})", r.label, r.median_rel_l2, r.coverage);
        }
        println!();
    }
    Ok(())
}
