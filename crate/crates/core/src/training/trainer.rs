use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use crate::flows::FlowModel;
use crate::nnmath::{AdamConfig, AdamState, ParamStore, Tape};
use crate::seed::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub early_stop_patience: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            lr,
            seed,
            shuffle: true,
            grad_clip: None,
            early_stop_patience: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("grad_clip", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Standardized training rows: `y` is `(n, W)` and `cond` is `(n, m)`,
/// both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    pub y: Vec<f64>,
    pub cond: Vec<f64>,
    pub w: usize,
    pub m: usize,
}

impl TrainSet {
    pub fn new(y: Vec<f64>, cond: Vec<f64>, w: usize, m: usize) -> Result<Self> {
        if w == 0 || y.len() % w != 0 || cond.len() != (y.len() / w) * m {
            return Err(Error::InvalidArgument(format!(
                "inconsistent training matrices: {} response values (W={w}), {} conditioning values (m={m})",
                y.len(),
                cond.len()
            )));
        }
        Ok(Self { y, cond, w, m })
    }

    /// Standardizes raw `(θ, y)` records.
    pub fn from_records<'a, I>(records: I, standardizer: &Standardizer) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
    {
        let (w, m) = (standardizer.series_len(), standardizer.param_dim());
        let mut y = Vec::new();
        let mut cond = Vec::new();
        for (theta, series) in records {
            if series.len() != w {
                return Err(Error::dim("response length", w, series.len()));
            }
            if theta.len() != m {
                return Err(Error::dim("parameter vector length", m, theta.len()));
            }
            y.extend(standardizer.transform_y(series));
            cond.extend(standardizer.transform_theta(theta));
        }
        Self::new(y, cond, w, m)
    }

    pub fn len(&self) -> usize {
        self.y.len() / self.w
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn gather(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut y = Vec::with_capacity(rows.len() * self.w);
        let mut c = Vec::with_capacity(rows.len() * self.m);
        for &r in rows {
            y.extend_from_slice(&self.y[r * self.w..(r + 1) * self.w]);
            c.extend_from_slice(&self.cond[r * self.m..(r + 1) * self.m]);
        }
        (y, c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` means the initial ones.
    pub best_epoch: Option<usize>,
    pub best_val_nll: Option<f64>,
}

impl TrainReport {
    pub fn train_nll(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_nll).collect()
    }

    /// Per-epoch losses. Wall-clock time is left out so reruns produce
    /// identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_nll,val_nll\n");
        for e in &self.epochs {
            let val = e.val_nll.map(|v| format!("{v:.16e}")).unwrap_or_default();
            out.push_str(&format!("{},{:.16e},{}\n", e.epoch, e.train_nll, val));
        }
        out
    }
}

// `Instant` panics on wasm32-unknown-unknown; epoch timings read 0 there.
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let started = std::time::Instant::now();
    move || started.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

/// Mean negative log-likelihood per sample over a whole set.
pub fn mean_nll(model: &FlowModel, data: &TrainSet) -> Result<f64> {
    const CHUNK: usize = 512;
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let mut total = 0.0;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let ll = model.log_likelihood_rows(
            &data.y[start * data.w..end * data.w],
            &data.cond[start * data.m..end * data.m],
        )?;
        total -= ll.iter().sum::<f64>();
    }
    Ok(total / n as f64)
}

/// Maximum-likelihood training with shuffled mini-batches and Adam.
///
/// The final short batch is kept. After every epoch the validation NLL (or
/// the epoch's training NLL when no validation set is given) is compared
/// against the best so far, starting from the initial parameters; the model
/// ends holding the best parameters seen.
pub fn fit(
    model: &mut FlowModel,
    train: &TrainSet,
    val: Option<&TrainSet>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    for set in std::iter::once(train).chain(val) {
        if set.w != model.data_dim() {
            return Err(Error::dim("training response length", model.data_dim(), set.w));
        }
        if set.m != model.cond_dim() {
            return Err(Error::dim("training parameter length", model.cond_dim(), set.m));
        }
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut report = TrainReport::default();
    if cfg.epochs == 0 {
        return Ok(report);
    }

    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), model.params().len());
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_params: ParamStore = model.params().clone();
    let mut best_score = match val {
        Some(v) => mean_nll(model, v)?,
        None => f64::INFINITY,
    };
    report.best_val_nll = val.map(|_| best_score);
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let elapsed = stopwatch();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut nll_sum = 0.0;
        for (batch_idx, rows) in order.chunks(cfg.batch_size).enumerate() {
            let (y, c) = train.gather(rows);
            let mut tape = Tape::new();
            let yv = tape.leaf(rows.len(), train.w, y);
            let cv = tape.leaf(rows.len(), train.m, c);
            let ll = model
                .log_likelihood(&mut tape, yv, cv)
                .map_err(|e| Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    detail: e.to_string(),
                })?;
            let batch_ll: f64 = tape.value(ll).iter().sum();
            let mean = tape.mean(ll);
            let params = model.params_mut();
            params.zero_grads();
            tape.backward(mean, &[-1.0], params);
            if params.grads().iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    detail: "non-finite gradient".into(),
                });
            }
            if let Some(max_norm) = cfg.grad_clip {
                params.clip_grad_norm(max_norm);
            }
            adam.step(params);
            nll_sum -= batch_ll;
        }
        let train_nll = nll_sum / train.len() as f64;
        let val_nll = val.map(|v| mean_nll(model, v)).transpose()?;
        let score = val_nll.unwrap_or(train_nll);
        if score < best_score {
            best_score = score;
            best_params.copy_values_from(model.params())?;
            report.best_epoch = Some(epoch);
            report.best_val_nll = val_nll;
            since_best = 0;
        } else {
            since_best += 1;
        }
        report.epochs.push(EpochRecord {
            epoch,
            train_nll,
            val_nll,
            seconds: elapsed(),
        });
        if let Some(patience) = cfg.early_stop_patience {
            if since_best >= patience {
                break;
            }
        }
    }
    model.params_mut().copy_values_from(&best_params)?;
    Ok(report)
}

/// Low-fidelity pretraining. Returns the selected parameter snapshot.
pub fn pretrain_lf(
    model: &mut FlowModel,
    lf_train: &TrainSet,
    lf_val: Option<&TrainSet>,
    cfg: &TrainConfig,
) -> Result<(ParamStore, TrainReport)> {
    let report = fit(model, lf_train, lf_val, cfg)?;
    Ok((model.params().clone(), report))
}

/// High-fidelity fine-tuning warm-started from `init` (all layers train).
pub fn finetune_hf(
    model: &mut FlowModel,
    init: &ParamStore,
    hf_train: &TrainSet,
    hf_val: Option<&TrainSet>,
    cfg: &TrainConfig,
) -> Result<(ParamStore, TrainReport)> {
    if !model.params().same_layout(init) {
        return Err(Error::InvalidArgument(
            "initial parameters do not match the model layout".into(),
        ));
    }
    model.params_mut().copy_values_from(init)?;
    let report = fit(model, hf_train, hf_val, cfg)?;
    Ok((model.params().clone(), report))
}

/// High-fidelity-only baseline from the model's current (random) init.
pub fn train_hf_only(
    model: &mut FlowModel,
    hf_train: &TrainSet,
    hf_val: Option<&TrainSet>,
    cfg: &TrainConfig,
) -> Result<(ParamStore, TrainReport)> {
    let report = fit(model, hf_train, hf_val, cfg)?;
    Ok((model.params().clone(), report))
}
