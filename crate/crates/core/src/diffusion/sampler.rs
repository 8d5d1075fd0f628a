//! Reverse sampling from pure noise to a token sequence.
//!
//! At each visited step the decoder predicts every word position, the
//! predictions are rounded to their argmax tokens and re-embedded as the
//! clean estimate, and that estimate is re-noised to the next visited step.

use rand::Rng;

use super::DiffusionSchedule;
use crate::corpus::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::model::{
    build_prefix, decode, encode, generation_rows, vocab_logits,
    ModelParameters, SequenceLayout,
};
use crate::numerics::{Tape, Tensor};
use crate::rng::normal_vec;

/// Encoder output for persona/profile tokens, without dropout.
pub fn encode_persona(params: &ModelParameters, tokens: &[u32]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = encode(&mut tape, params, tokens, None)?;
    Ok(tape.value(v).clone())
}

/// Per-step record of decoder inputs, for inspection.
#[derive(Debug, Default, Clone)]
pub struct SampleTrace {
    pub steps: Vec<usize>,
    pub inputs: Vec<Tensor>,
}

/// Argmax over a logit row, never choosing `pad` or `bos`.
fn argmax_token(row: &[f64]) -> u32 {
    let mut best = (f64::NEG_INFINITY, EOS);
    for (i, &v) in row.iter().enumerate() {
        let id = i as u32;
        if id == PAD || id == BOS {
            continue;
        }
        if v > best.0 {
            best = (v, id);
        }
    }
    best.1
}

/// Tokens up to (not including) the first `eos`, at most `max_len`.
fn truncate_at_eos(tokens: &[u32], max_len: usize) -> Vec<u32> {
    tokens.iter().take_while(|&&t| t != EOS).take(max_len).copied().collect()
}

fn prefix_tensor(params: &ModelParameters, user: &str, item: &str, keywords: &[u32]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = build_prefix(&mut tape, params, user, item, keywords)?;
    Ok(tape.value(p).clone())
}

/// One decoder pass; returns argmax tokens over the generation span.
fn predict_tokens(
    params: &ModelParameters,
    prefix: &Tensor,
    words: &Tensor,
    t: usize,
    encoder_states: &Tensor,
    layout: &SequenceLayout,
    trace: Option<&mut SampleTrace>,
) -> Result<Vec<u32>> {
    let mut tape = Tape::new();
    let p = tape.leaf(prefix.clone());
    let w = tape.leaf(words.clone());
    let x = tape.concat_rows(&[p, w])?;
    if let Some(tr) = trace {
        tr.steps.push(t);
        tr.inputs.push(tape.value(x).clone());
    }
    let enc = tape.leaf(encoder_states.clone());
    let h = decode(&mut tape, params, x, t, enc, layout, None)?;
    let rows = generation_rows(&mut tape, h, layout)?;
    let logits = vocab_logits(&mut tape, params, rows)?;
    let z = tape.value(logits);
    Ok((0..z.rows()).map(|r| argmax_token(z.row_slice(r))).collect())
}

/// Clean word rows for the first `m` predicted tokens.
fn embed_words(params: &ModelParameters, tokens: &[u32]) -> Tensor {
    let table = params.store.get(params.word_table);
    let d = params.config.d_model;
    let mut out = Vec::with_capacity(tokens.len() * d);
    for &tok in tokens {
        out.extend_from_slice(table.row_slice(tok as usize));
    }
    Tensor::matrix(tokens.len(), d, out).unwrap()
}

#[allow(clippy::too_many_arguments)]
pub fn reverse_sample_traced<R: Rng + ?Sized>(
    params: &ModelParameters,
    user: &str,
    item: &str,
    keywords: &[u32],
    encoder_states: &Tensor,
    schedule: &DiffusionSchedule,
    stride: usize,
    rng: &mut R,
    mut trace: Option<&mut SampleTrace>,
) -> Result<Vec<u32>> {
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    let horizon = schedule.horizon();
    if horizon > params.config.horizon {
        return Err(Error::invalid(format!(
            "schedule horizon {horizon} exceeds the model's {}",
            params.config.horizon
        )));
    }
    let m = params.config.max_review_len;
    let d = params.config.d_model;
    let layout = SequenceLayout::new(keywords.len(), m)?;
    let prefix = prefix_tensor(params, user, item, keywords)?;

    let mut words = Tensor::matrix(m, d, normal_vec(rng, m * d))?;
    let mut t = horizon;
    loop {
        let tokens = predict_tokens(params, &prefix, &words, t, encoder_states, &layout, trace.as_deref_mut())?;
        let next = t.saturating_sub(stride);
        if next == 0 {
            return Ok(truncate_at_eos(&tokens, m));
        }
        let x0 = embed_words(params, &tokens[..m]);
        let g = schedule.gamma(next)?;
        let (a, b) = (g.sqrt(), (1.0 - g).sqrt());
        let eps = normal_vec(rng, m * d);
        let noised = x0.data().iter().zip(&eps).map(|(x, e)| a * x + b * e).collect();
        words = Tensor::matrix(m, d, noised)?;
        t = next;
    }
}

/// Iterative denoising from `X_T ~ N(0, I)`, visiting `T, T - stride, ...`.
#[allow(clippy::too_many_arguments)]
pub fn reverse_sample<R: Rng + ?Sized>(
    params: &ModelParameters,
    user: &str,
    item: &str,
    keywords: &[u32],
    encoder_states: &Tensor,
    schedule: &DiffusionSchedule,
    stride: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    reverse_sample_traced(params, user, item, keywords, encoder_states, schedule, stride, rng, None)
}

/// Noise-free left-to-right decoding at `t = 0`, for models trained without
/// diffusion. Each pass fills one more word row with the previous argmax.
pub fn greedy_decode(
    params: &ModelParameters,
    user: &str,
    item: &str,
    keywords: &[u32],
    encoder_states: &Tensor,
) -> Result<Vec<u32>> {
    let m = params.config.max_review_len;
    let layout = SequenceLayout::new(keywords.len(), m)?;
    let prefix = prefix_tensor(params, user, item, keywords)?;
    let mut tokens = vec![PAD; m];
    for j in 0..=m {
        let words = embed_words(params, &tokens);
        let pred = predict_tokens(params, &prefix, &words, 0, encoder_states, &layout, None)?;
        if pred[j] == EOS || j == m {
            break;
        }
        tokens[j] = pred[j];
    }
    Ok(truncate_at_eos(&tokens.into_iter().take_while(|&t| t != PAD).collect::<Vec<_>>(), m))
}
