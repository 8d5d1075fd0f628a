//! Mini-batch training of the multi-task objective.
//!
//! Each record draws its own diffusion step and noise from a stream keyed by
//! `(epoch, record index)`, so results do not depend on thread scheduling.
//! Per-record gradients are computed in parallel and summed in batch order.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{generation_targets, total_loss, LossComponents, LossWeights};
use super::optim::{sgd_step, LrScheduleConfig, LrState, Signal};
use crate::corpus::InteractionRecord;
use crate::diffusion::{corrupt_var, word_noise, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::model::{
    build_sequence, decode, encode, generation_rows, predict_rating, vocab_logits, Dropout,
    KeywordMode, ModelParameters, SequenceLayout,
};
use crate::numerics::{ParamGrads, ParamStore, Tape, Tensor, Var};
use crate::rng::substream;

/// A training record with its encoder input.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub record: InteractionRecord,
    pub persona: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub batch_size: usize,
    pub schedule: LrScheduleConfig,
    pub clip_max_norm: f64,
    pub max_epochs: usize,
    pub keyword_mode: KeywordMode,
    /// Train every record at `t = 0` (no noise).
    pub ablate_diffusion: bool,
    /// Restore the parameters of the best monitored epoch when training ends.
    pub restore_best: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            batch_size: 32,
            schedule: LrScheduleConfig::default(),
            clip_max_norm: 1.0,
            max_epochs: 500,
            keyword_mode: KeywordMode::None,
            ablate_diffusion: false,
            restore_best: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max epochs must be >= 1"));
        }
        if !(self.clip_max_norm > 0.0) {
            return Err(Error::invalid("clip norm must be positive"));
        }
        LrState::new(self.schedule)?;
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_r: f64,
    pub loss_ctx: f64,
    pub loss_w: f64,
    pub lr: f64,
    pub counter: usize,
    /// Validation objective, when a validation set was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_total: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

/// Loss nodes of one record's forward pass.
#[derive(Debug, Clone, Copy)]
pub struct RecordLosses {
    pub rating_pred: Var,
    pub rating: Var,
    pub context: Var,
    pub generation: Var,
    pub total: Var,
}

/// Layout that [`build_sequence`] will produce for a record.
pub fn record_layout(record: &InteractionRecord, mode: KeywordMode, max_review_len: usize) -> Result<SequenceLayout> {
    SequenceLayout::new(mode.num_slots(), record.review.len().min(max_review_len))
}

/// Records one record's full forward pass at step `t` with noise `eps`.
#[allow(clippy::too_many_arguments)]
pub fn record_losses(
    tape: &mut Tape,
    model: &ModelParameters,
    schedule: &DiffusionSchedule,
    example: &TrainExample,
    mode: KeywordMode,
    t: usize,
    eps: &Tensor,
    weights: &LossWeights,
    mut drop: Option<&mut Dropout>,
) -> Result<RecordLosses> {
    let record = &example.record;
    let enc = encode(tape, model, &example.persona, drop.as_deref_mut())?;
    let (x0, layout) = build_sequence(tape, model, record, mode)?;
    let xt = corrupt_var(tape, x0, &layout, t, schedule, eps)?;
    let h = decode(tape, model, xt, t, enc, &layout, drop)?;

    let h_user = tape.slice_rows(h, 0, 1)?;
    let rating_pred = predict_rating(tape, model, h_user)?;
    let truth = tape.leaf(Tensor::scalar(record.rating));
    let diff = tape.sub(rating_pred, truth)?;
    let rating = tape.square(diff)?;

    let h_item = tape.slice_rows(h, 1, 2)?;
    let ctx_logits = vocab_logits(tape, model, h_item)?;
    let bag: Vec<(usize, usize)> = record.review.iter().map(|&w| (0, w as usize)).collect();
    let context = tape.nll(ctx_logits, &bag)?;

    let rows = generation_rows(tape, h, &layout)?;
    let word_logits = vocab_logits(tape, model, rows)?;
    let targets: Vec<(usize, usize)> = generation_targets(&record.review[..layout.num_words])
        .into_iter()
        .enumerate()
        .map(|(k, w)| (k, w as usize))
        .collect();
    let generation = tape.nll(word_logits, &targets)?;

    let mut terms = Vec::new();
    for (v, w) in [(context, weights.context), (rating, weights.rating), (generation, weights.generation)] {
        if w != 0.0 {
            terms.push(tape.scale(v, w)?);
        }
    }
    let mut total = *terms.first().ok_or_else(|| Error::invalid("all loss weights are zero"))?;
    for t in &terms[1..] {
        total = tape.add(total, *t)?;
    }
    Ok(RecordLosses {
        rating_pred,
        rating,
        context,
        generation,
        total,
    })
}

struct RecordResult {
    components: LossComponents,
    grads: Option<ParamGrads>,
}

fn components(tape: &Tape, l: &RecordLosses) -> LossComponents {
    LossComponents {
        context: tape.value(l.context).item(),
        rating: tape.value(l.rating).item(),
        generation: tape.value(l.generation).item(),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_record(
    model: &ModelParameters,
    schedule: &DiffusionSchedule,
    example: &TrainExample,
    config: &TrainConfig,
    stream: &str,
    key: u64,
    dropout: f64,
    with_grads: bool,
) -> Result<RecordResult> {
    let mut rng = substream(config.seed, stream, key);
    let t = if config.ablate_diffusion {
        0
    } else {
        rng.random_range(0..=schedule.horizon())
    };
    let layout = record_layout(&example.record, config.keyword_mode, model.config.max_review_len)?;
    let eps = word_noise(&layout, model.config.d_model, &mut rng);
    let mut drop = (dropout > 0.0).then(|| Dropout {
        rate: dropout,
        rng: substream(config.seed, "dropout", key),
    });
    let mut tape = Tape::new();
    let l = record_losses(
        &mut tape,
        model,
        schedule,
        example,
        config.keyword_mode,
        t,
        &eps,
        &config.weights,
        drop.as_mut(),
    )?;
    let grads = if with_grads {
        Some(tape.param_grads(l.total, &model.store)?)
    } else {
        None
    };
    Ok(RecordResult {
        components: components(&tape, &l),
        grads,
    })
}

fn mean_components(sum: LossComponents, n: usize) -> LossComponents {
    let n = n as f64;
    LossComponents {
        context: sum.context / n,
        rating: sum.rating / n,
        generation: sum.generation / n,
    }
}

fn add_components(a: &mut LossComponents, b: &LossComponents) {
    a.context += b.context;
    a.rating += b.rating;
    a.generation += b.generation;
}

/// Mean loss components over `examples` with fixed per-record noise and no
/// dropout, so repeated calls on the same parameters agree exactly.
pub fn evaluate_loss(
    model: &ModelParameters,
    schedule: &DiffusionSchedule,
    examples: &[TrainExample],
    config: &TrainConfig,
) -> Result<LossComponents> {
    if examples.is_empty() {
        return Err(Error::invalid("no examples to evaluate"));
    }
    let results: Vec<Result<RecordResult>> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| run_record(model, schedule, ex, config, "valid-noise", i as u64, 0.0, false))
        .collect();
    let mut sum = LossComponents::default();
    for r in results {
        add_components(&mut sum, &r?.components);
    }
    Ok(mean_components(sum, examples.len()))
}

/// Mean-over-batch gradient and summed loss components for one mini-batch.
pub fn batch_gradients(
    model: &ModelParameters,
    schedule: &DiffusionSchedule,
    examples: &[TrainExample],
    batch: &[usize],
    config: &TrainConfig,
    epoch: usize,
) -> Result<(ParamGrads, LossComponents)> {
    let n = examples.len() as u64;
    let dropout = model.config.dropout;
    let results: Vec<Result<RecordResult>> = batch
        .par_iter()
        .map(|&i| {
            let key = epoch as u64 * n + i as u64;
            run_record(model, schedule, &examples[i], config, "noise", key, dropout, true)
        })
        .collect();
    let mut grads = ParamGrads::zeros_like(&model.store);
    let mut sum = LossComponents::default();
    for r in results {
        let r = r?;
        grads.accumulate(r.grads.as_ref().expect("gradients requested"))?;
        add_components(&mut sum, &r.components);
    }
    grads.scale(1.0 / batch.len() as f64);
    Ok((grads, sum))
}

/// Trains `model` in place. `on_epoch` sees every epoch's log line and the
/// parameters after that epoch; returning an error aborts training.
pub fn train<F>(
    model: &mut ModelParameters,
    schedule: &DiffusionSchedule,
    train_set: &[TrainExample],
    valid_set: &[TrainExample],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochLog, &ModelParameters) -> Result<()>,
{
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if schedule.horizon() > model.config.horizon {
        return Err(Error::invalid("schedule horizon exceeds the model's timestep table"));
    }
    let mut state = LrState::new(config.schedule)?;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut logs = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut substream(config.seed, "shuffle", epoch as u64));
        let lr = state.lr;
        let mut sum = LossComponents::default();
        for batch in order.chunks(config.batch_size) {
            let (grads, batch_sum) = batch_gradients(model, schedule, train_set, batch, config, epoch)?;
            sgd_step(&mut model.store, &grads, lr, config.clip_max_norm)?;
            add_components(&mut sum, &batch_sum);
        }
        let train_mean = mean_components(sum, train_set.len());
        let train_total = total_loss(&train_mean, &config.weights);
        let valid_total = if valid_set.is_empty() {
            None
        } else {
            let v = evaluate_loss(model, schedule, valid_set, config)?;
            Some(total_loss(&v, &config.weights))
        };
        let monitored = valid_total.unwrap_or(train_total);
        if !monitored.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch} loss")));
        }
        let improved = monitored < state.best;
        let signal = state.step(monitored);
        if improved && config.restore_best {
            best = Some((epoch, monitored, model.store.clone()));
        }
        let log = EpochLog {
            epoch,
            loss_total: train_total,
            loss_r: train_mean.rating,
            loss_ctx: train_mean.context,
            loss_w: train_mean.generation,
            lr,
            counter: state.counter,
            valid_total,
        };
        log::info!(
            "epoch {epoch}: loss {train_total:.4} (r {:.4} ctx {:.4} w {:.4}) lr {lr:.4} counter {}",
            log.loss_r,
            log.loss_ctx,
            log.loss_w,
            log.counter
        );
        on_epoch(&log, model)?;
        logs.push(log);
        if signal == Signal::Stop {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_loss) = match best {
        Some((e, l, store)) => {
            model.store = store;
            (e, l)
        }
        None => (logs.len(), state.best),
    };
    Ok(TrainOutcome {
        logs,
        best_epoch,
        best_loss,
        stopped_early,
    })
}
