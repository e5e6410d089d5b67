use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Strategy, TrainConfig};
use super::model::{Example, LossBreakdown, Model, Objective};
use super::params::Params;
use crate::error::{Error, Result};
use crate::par;

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss_summ: f64,
    pub loss_copy: f64,
    pub loss_total: f64,
    pub token_count: usize,
}

fn reduce(parts: Vec<Result<(LossBreakdown, Params)>>, template: &Params) -> Result<(LossBreakdown, Params)> {
    let count = parts.len() as f64;
    let mut grads = template.zeros_like();
    let mut loss = LossBreakdown::default();
    for part in parts {
        let (l, g) = part?;
        loss.loss_summ += l.loss_summ;
        loss.loss_copy += l.loss_copy;
        loss.loss_total += l.loss_total;
        loss.token_count += l.token_count;
        grads.axpy(1.0, &g);
    }
    grads.scale(1.0 / count);
    loss.loss_summ /= count;
    loss.loss_copy /= count;
    loss.loss_total /= count;
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of `{name}`")));
    }
    Ok((loss, grads))
}

/// Mean loss and mean gradient over `batch`. Examples are processed in
/// parallel and summed in batch order.
pub fn grad(model: &Model, batch: &[Example], objective: Objective) -> Result<(LossBreakdown, Params)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let parts = par::map_ordered(batch, |ex| model.example_grad(ex, objective));
    reduce(parts, &model.params)
}

/// Same as [`grad`] on the calling thread only.
pub fn grad_sequential(model: &Model, batch: &[Example], objective: Objective) -> Result<(LossBreakdown, Params)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let parts = par::sequential_map(batch, |ex| model.example_grad(ex, objective));
    reduce(parts, &model.params)
}

/// Plain SGD over shuffled passes of `data`. Each step's losses are
/// measured before that step's update and written to `log` as JSON lines.
pub fn train(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    data: &[Example],
    log: Option<&mut dyn Write>,
) -> Result<(Model, Vec<StepLog>)> {
    let model = Model::init(cfg.clone())?;
    train_from(model, tcfg, data, log)
}

pub fn train_from(
    mut model: Model,
    tcfg: &TrainConfig,
    data: &[Example],
    mut log: Option<&mut dyn Write>,
) -> Result<(Model, Vec<StepLog>)> {
    tcfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training data is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let warmup = tcfg.warmup();
    let mut history = Vec::with_capacity(tcfg.total_steps);
    let mut batch = Vec::with_capacity(tcfg.batch_size);
    for step in 0..tcfg.total_steps {
        batch.clear();
        while batch.len() < tcfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(data[order[cursor]].clone());
            cursor += 1;
        }
        let objective = if tcfg.strategy == Strategy::TwoStage && step < warmup {
            Objective::CopyOnly
        } else {
            Objective::Total
        };
        let (loss, grads) = grad(&model, &batch, objective).map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFiniteLoss { step },
            other => other,
        })?;
        model.params.axpy(-tcfg.learning_rate, &grads);
        if model.params.first_non_finite().is_some() {
            return Err(Error::NonFiniteLoss { step });
        }
        let entry = StepLog {
            step,
            loss_summ: loss.loss_summ,
            loss_copy: loss.loss_copy,
            loss_total: loss.loss_total,
            token_count: loss.token_count,
        };
        if let Some(w) = log.as_deref_mut() {
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
        }
        history.push(entry);
    }
    Ok((model, history))
}

/// Mean of the first and last `window` entries of `loss_total`.
pub fn smoothed_endpoints(history: &[StepLog], window: usize) -> Option<(f64, f64)> {
    if history.is_empty() || window == 0 {
        return None;
    }
    let w = window.min(history.len());
    let mean = |s: &[StepLog]| s.iter().map(|e| e.loss_total).sum::<f64>() / s.len() as f64;
    Some((mean(&history[..w]), mean(&history[history.len() - w..])))
}
