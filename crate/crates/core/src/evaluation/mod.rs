//! Predictive summaries, accuracy metrics and the ablation runner.

mod ablation;
mod metrics;
mod predict;
mod report;

pub use ablation::{
    evaluate_model, pretrain_for_ablation, run_ablation, run_scenarios, scenario_seed, AblationData, AblationResult,
    AblationSettings, RecordScore, Scenario,
};
pub use metrics::{coverage_rate, mean, median, r_squared, relative_l2};
pub use predict::{predict, predict_with_samples, quantile_sorted, PredictiveSummary, DEFAULT_SAMPLES};
pub use report::{
    medians_from_records_csv, plot_csv, records_csv, summary_json, write_plot_csv, write_results, AblationSummary,
    ScenarioSummary,
};
