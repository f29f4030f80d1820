use super::standardize::Standardizer;
use super::trainer::{finetune_hf, pretrain_lf, train_hf_only, TrainConfig, TrainReport, TrainSet};
use crate::dynamics::Dataset;
use crate::flows::{DefaultLayout, FlowModel};
use crate::{Error, Result};

/// A trained model with the standardizer it was trained under.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub model: FlowModel,
    pub standardizer: Standardizer,
    pub report: TrainReport,
}

/// Splits `0..n` into training and validation indices. The last
/// `round(fraction·n)` rows (at least one when `fraction > 0`, never all of
/// them) are held out.
pub fn split_validation(n: usize, fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let k = if fraction > 0.0 && n > 1 {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    ((0..n - k).collect(), (n - k..n).collect())
}

fn train_val(data: &Dataset, fraction: f64, standardizer: &Standardizer) -> Result<(TrainSet, Option<TrainSet>)> {
    let (tr, va) = split_validation(data.len(), fraction);
    let train = TrainSet::from_records(tr.iter().map(|&i| (data.theta[i].as_slice(), data.y[i].as_slice())), standardizer)?;
    let val = if va.is_empty() {
        None
    } else {
        Some(TrainSet::from_records(
            va.iter().map(|&i| (data.theta[i].as_slice(), data.y[i].as_slice())),
            standardizer,
        )?)
    };
    Ok((train, val))
}

fn fit_standardizer(data: &Dataset, fraction: f64) -> Result<Standardizer> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(format!("{} dataset is empty", data.manifest.fidelity)));
    }
    let (tr, _) = split_validation(data.len(), fraction);
    Standardizer::fit(
        tr.iter().map(|&i| data.y[i].as_slice()),
        &data.manifest.prior_lo,
        &data.manifest.prior_hi,
    )
}

fn check_layout(layout: &DefaultLayout, data: &Dataset) -> Result<()> {
    if layout.data_dim != data.series_len() {
        return Err(Error::dim("model data dimension W", data.series_len(), layout.data_dim));
    }
    if layout.cond_dim != data.param_dim() {
        return Err(Error::dim("model parameter dimension m", data.param_dim(), layout.cond_dim));
    }
    Ok(())
}

/// Builds a fresh model and trains it on `data`, standardized by statistics
/// of its own training rows.
fn from_scratch(
    layout: &DefaultLayout,
    data: &Dataset,
    cfg: &TrainConfig,
    val_fraction: f64,
    init_seed: u64,
    hf_only: bool,
) -> Result<StageOutput> {
    check_layout(layout, data)?;
    let standardizer = fit_standardizer(data, val_fraction)?;
    let (train, val) = train_val(data, val_fraction, &standardizer)?;
    let mut model = layout.build(init_seed)?;
    let (_, report) = if hf_only {
        train_hf_only(&mut model, &train, val.as_ref(), cfg)?
    } else {
        pretrain_lf(&mut model, &train, val.as_ref(), cfg)?
    };
    Ok(StageOutput { model, standardizer, report })
}

pub fn run_lf_stage(
    layout: &DefaultLayout,
    lf: &Dataset,
    cfg: &TrainConfig,
    val_fraction: f64,
    init_seed: u64,
) -> Result<StageOutput> {
    from_scratch(layout, lf, cfg, val_fraction, init_seed, false)
}

pub fn run_hf_only_stage(
    layout: &DefaultLayout,
    hf: &Dataset,
    cfg: &TrainConfig,
    val_fraction: f64,
    init_seed: u64,
) -> Result<StageOutput> {
    from_scratch(layout, hf, cfg, val_fraction, init_seed, true)
}

/// Fine-tunes a copy of the pretrained model on HF data, keeping the
/// pretrained standardizer so inputs stay in the space the model learned.
pub fn run_mf_stage(
    pretrained: &FlowModel,
    standardizer: &Standardizer,
    hf: &Dataset,
    cfg: &TrainConfig,
    val_fraction: f64,
) -> Result<StageOutput> {
    if standardizer.series_len() != hf.series_len() || standardizer.param_dim() != hf.param_dim() {
        return Err(Error::dim("HF series length", standardizer.series_len(), hf.series_len()));
    }
    let (train, val) = train_val(hf, val_fraction, standardizer)?;
    let mut model = pretrained.clone();
    let init = pretrained.params().clone();
    let (_, report) = finetune_hf(&mut model, &init, &train, val.as_ref(), cfg)?;
    Ok(StageOutput { model, standardizer: standardizer.clone(), report })
}
