//! Forward passes: persona encoder, noisy decoder and the three heads.

use rand::Rng;

use super::params::{AttentionIds, FfnIds, NormIds};
use super::{KeywordMode, ModelParameters, SequenceLayout};
use crate::corpus::{InteractionRecord, ProfilePair, BOS};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::StreamRng;

/// Additive attention mask value for hidden keys.
const MASKED: f64 = -1e30;

/// Inverted dropout with its own random stream.
#[derive(Debug)]
pub struct Dropout {
    pub rate: f64,
    pub rng: StreamRng,
}

impl Dropout {
    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let shape = tape.value(x).shape().to_vec();
        let n = tape.value(x).numel();
        let mask = (0..n)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        tape.mul_const(x, &Tensor::new(shape, mask)?)
    }
}

fn dropout(tape: &mut Tape, x: Var, d: Option<&mut Dropout>) -> Result<Var> {
    match d {
        Some(d) => d.apply(tape, x),
        None => Ok(x),
    }
}

/// Fixed sinusoidal codes for rows `start..start + rows`.
pub fn positional_encoding(start: usize, rows: usize, d: usize) -> Tensor {
    let mut out = Vec::with_capacity(rows * d);
    for pos in start..start + rows {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            out.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(rows, d, out).expect("positional encoding shape")
}

/// Multi-head scaled dot-product attention. Returns the projected output and
/// the per-head attention weight matrices.
pub fn multi_head_attention(
    tape: &mut Tape,
    params: &ModelParameters,
    ids: AttentionIds,
    query_in: Var,
    kv_in: Var,
    mask: Option<&Tensor>,
) -> Result<(Var, Vec<Var>)> {
    let store = &params.store;
    let heads = params.config.num_heads;
    let dk = params.config.head_dim();
    let wq = tape.param(store, ids.query);
    let wk = tape.param(store, ids.key);
    let wv = tape.param(store, ids.value);
    let wo = tape.param(store, ids.output);
    let q = tape.matmul(query_in, wq)?;
    let k = tape.matmul(kv_in, wk)?;
    let v = tape.matmul(kv_in, wv)?;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dk, (h + 1) * dk);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let mut scores = tape.scale(scores, scale)?;
        if let Some(m) = mask {
            scores = tape.add_const(scores, m)?;
        }
        let a = tape.softmax(scores)?;
        weights.push(a);
        outs.push(tape.matmul(a, vh)?);
    }
    let cat = tape.concat_cols(&outs)?;
    Ok((tape.matmul(cat, wo)?, weights))
}

/// `LayerNorm(x + sub)` followed by the learned per-column affine.
fn add_norm(tape: &mut Tape, params: &ModelParameters, x: Var, sub: Var, ids: NormIds) -> Result<Var> {
    let s = tape.add(x, sub)?;
    let n = tape.layer_norm(s)?;
    let g = tape.param(&params.store, ids.gain);
    let b = tape.param(&params.store, ids.bias);
    let y = tape.mul_row(n, g)?;
    tape.add_row(y, b)
}

/// `max(0, x W1 + b1) W2 + b2`.
fn feed_forward(tape: &mut Tape, params: &ModelParameters, x: Var, ids: FfnIds) -> Result<Var> {
    let s = &params.store;
    let (w1, b1, w2, b2) = (
        tape.param(s, ids.w1),
        tape.param(s, ids.b1),
        tape.param(s, ids.w2),
        tape.param(s, ids.b2),
    );
    let h = tape.matmul(x, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, w2)?;
    tape.add_row(o, b2)
}

/// Concatenated persona and profile tokens, each side capped at half of
/// `max_len` unless the other side leaves room.
pub fn persona_tokens(pair: &ProfilePair, max_len: usize) -> Vec<u32> {
    let flat = |p: &crate::corpus::PersonaProfile| -> Vec<u32> {
        p.sentences.iter().flatten().copied().collect()
    };
    let (u, i) = (flat(&pair.user), flat(&pair.item));
    let half = max_len / 2;
    let take_u = u.len().min(max_len - half.min(i.len()));
    let take_i = i.len().min(max_len - take_u);
    u[..take_u].iter().chain(&i[..take_i]).copied().collect()
}

/// Self-attention encoder over persona/profile tokens (no positional codes).
pub fn encode(
    tape: &mut Tape,
    params: &ModelParameters,
    tokens: &[u32],
    mut drop: Option<&mut Dropout>,
) -> Result<Var> {
    let cfg = &params.config;
    if tokens.is_empty() {
        return Err(Error::invalid("encoder input is empty"));
    }
    if tokens.len() > cfg.max_encoder_len {
        return Err(Error::invalid(format!(
            "encoder input has {} tokens, limit is {}",
            tokens.len(),
            cfg.max_encoder_len
        )));
    }
    let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    let words = tape.param(&params.store, params.word_table);
    let mut x = tape.gather(words, &ids)?;
    for layer in &params.encoder {
        let (a, _) = multi_head_attention(tape, params, layer.attn, x, x, None)?;
        let a = dropout(tape, a, drop.as_deref_mut())?;
        let h = add_norm(tape, params, x, a, layer.norm1)?;
        let f = feed_forward(tape, params, h, layer.ffn)?;
        let f = dropout(tape, f, drop.as_deref_mut())?;
        x = add_norm(tape, params, h, f, layer.norm2)?;
    }
    Ok(x)
}

/// Keyword tokens a record contributes under `mode`.
pub fn keyword_ids(record: &InteractionRecord, mode: KeywordMode) -> Result<Vec<u32>> {
    let need = |w: Option<u32>, what: &str| {
        w.ok_or_else(|| Error::invalid(format!("mode {mode} needs a {what} keyword")))
    };
    Ok(match mode {
        KeywordMode::None => vec![],
        KeywordMode::F => vec![need(record.feature, "feature")?],
        KeywordMode::FO => vec![need(record.feature, "feature")?, need(record.opinion, "opinion")?],
    })
}

/// Embedded `[user, item, keywords.., bos]` rows with positional codes.
pub fn build_prefix(
    tape: &mut Tape,
    params: &ModelParameters,
    user: &str,
    item: &str,
    keywords: &[u32],
) -> Result<Var> {
    let u = params.user_index(user)?;
    let i = params.item_index(item)?;
    let s = &params.store;
    let users = tape.param(s, params.user_table);
    let items = tape.param(s, params.item_table);
    let words = tape.param(s, params.word_table);
    let ur = tape.gather(users, &[u])?;
    let ir = tape.gather(items, &[i])?;
    let mut ids: Vec<usize> = keywords.iter().map(|&k| k as usize).collect();
    ids.push(BOS as usize);
    let kr = tape.gather(words, &ids)?;
    let rows = tape.concat_rows(&[ur, ir, kr])?;
    let n = 3 + keywords.len();
    tape.add_const(rows, &positional_encoding(0, n, params.config.d_model))
}

/// Clean word embeddings for `tokens`. Positional codes are added by
/// [`decode`], after corruption, so noise never hides a row's position.
pub fn word_rows(tape: &mut Tape, params: &ModelParameters, tokens: &[u32]) -> Result<Var> {
    let words = tape.param(&params.store, params.word_table);
    let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    tape.gather(words, &ids)
}

/// Clean input `X_0` for a record under a keyword mode.
pub fn build_sequence(
    tape: &mut Tape,
    params: &ModelParameters,
    record: &InteractionRecord,
    mode: KeywordMode,
) -> Result<(Var, SequenceLayout)> {
    if record.review.is_empty() {
        return Err(Error::invalid("review is empty"));
    }
    let keywords = keyword_ids(record, mode)?;
    let n = record.review.len().min(params.config.max_review_len);
    let layout = SequenceLayout::new(keywords.len(), n)?;
    let prefix = build_prefix(tape, params, &record.user, &record.item, &keywords)?;
    let words = word_rows(tape, params, &record.review[..n])?;
    Ok((tape.concat_rows(&[prefix, words])?, layout))
}

/// Additive mask for the decoder self-attention.
pub fn decoder_mask(layout: &SequenceLayout) -> Tensor {
    let n = layout.len();
    let mut m = vec![0.0; n * n];
    for q in 0..n {
        for k in 0..n {
            if !layout.visible(q, k) {
                m[q * n + k] = MASKED;
            }
        }
    }
    Tensor::matrix(n, n, m).unwrap()
}

/// Decoder over a (partially) noised sequence at step `t`.
pub fn decode(
    tape: &mut Tape,
    params: &ModelParameters,
    x_t: Var,
    t: usize,
    encoder_states: Var,
    layout: &SequenceLayout,
    mut drop: Option<&mut Dropout>,
) -> Result<Var> {
    let cfg = &params.config;
    if t > cfg.horizon {
        return Err(Error::invalid(format!("step {t} outside [0, {}]", cfg.horizon)));
    }
    let (rows, _) = tape.value(x_t).dims2();
    if rows != layout.len() {
        return Err(Error::ShapeMismatch {
            op: "decode",
            lhs: tape.value(x_t).shape().to_vec(),
            rhs: vec![layout.len(), cfg.d_model],
        });
    }
    let ts = tape.param(&params.store, params.timestep_table);
    let step_rows = tape.gather(ts, &vec![t; layout.num_words])?;
    let zeros = tape.leaf(Tensor::zeros(&[layout.prefix_len(), cfg.d_model]));
    let step = tape.concat_rows(&[zeros, step_rows])?;
    let x = tape.add(x_t, step)?;
    let mut pe = Tensor::zeros(&[layout.prefix_len(), cfg.d_model]).to_vec();
    pe.extend(positional_encoding(layout.prefix_len(), layout.num_words, cfg.d_model).data());
    let mut x = tape.add_const(x, &Tensor::matrix(layout.len(), cfg.d_model, pe)?)?;
    let mask = decoder_mask(layout);
    for layer in &params.decoder {
        let (a, _) = multi_head_attention(tape, params, layer.self_attn, x, x, Some(&mask))?;
        let a = dropout(tape, a, drop.as_deref_mut())?;
        let h = add_norm(tape, params, x, a, layer.norm1)?;
        let (c, _) = multi_head_attention(tape, params, layer.cross_attn, h, encoder_states, None)?;
        let c = dropout(tape, c, drop.as_deref_mut())?;
        let h2 = add_norm(tape, params, h, c, layer.norm2)?;
        let f = feed_forward(tape, params, h2, layer.ffn)?;
        let f = dropout(tape, f, drop.as_deref_mut())?;
        x = add_norm(tape, params, h2, f, layer.norm3)?;
    }
    Ok(x)
}

/// `w^r . sigmoid(W^r h + b^r) + b` on the user-slot output (`1 x d`).
pub fn predict_rating(tape: &mut Tape, params: &ModelParameters, hidden: Var) -> Result<Var> {
    let s = &params.store;
    let ids = params.rating;
    let (w, b, ow, ob) = (
        tape.param(s, ids.hidden_w),
        tape.param(s, ids.hidden_b),
        tape.param(s, ids.out_w),
        tape.param(s, ids.out_b),
    );
    let z = tape.matmul(hidden, w)?;
    let z = tape.add_row(z, b)?;
    let a = tape.sigmoid(z)?;
    let y = tape.mul_row(a, ow)?;
    let y = tape.sum(y)?;
    tape.add(y, ob)
}

/// `W^v h + b^v` for each row of `hidden`.
pub fn vocab_logits(tape: &mut Tape, params: &ModelParameters, hidden: Var) -> Result<Var> {
    let s = &params.store;
    let w = tape.param(s, params.vocab.weight);
    let b = tape.param(s, params.vocab.bias);
    let wt = tape.transpose(w)?;
    let z = tape.matmul(hidden, wt)?;
    tape.add_row(z, b)
}

/// Context word distribution from the item-slot output (`1 x d`).
pub fn predict_context(tape: &mut Tape, params: &ModelParameters, hidden: Var) -> Result<Var> {
    let z = vocab_logits(tape, params, hidden)?;
    tape.softmax(z)
}

/// Rows of the generation span of `hidden`.
pub fn generation_rows(tape: &mut Tape, hidden: Var, layout: &SequenceLayout) -> Result<Var> {
    let g = layout.generation_span();
    tape.slice_rows(hidden, g.start, g.end)
}

/// Next-token distributions over the generation span (`bos` predicts `w_1`).
pub fn predict_words(tape: &mut Tape, params: &ModelParameters, hidden: Var, layout: &SequenceLayout) -> Result<Var> {
    let rows = generation_rows(tape, hidden, layout)?;
    let z = vocab_logits(tape, params, rows)?;
    tape.softmax(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PersonaProfile;
    use crate::corpus::ProfileKind;

    #[test]
    fn positional_encoding_row_zero() {
        let pe = positional_encoding(0, 2, 4);
        assert_eq!(pe.row_slice(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.get(1, 0) - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn persona_tokens_split_budget() {
        let mk = |owner: &str, kind, s: Vec<Vec<u32>>| PersonaProfile {
            owner: owner.into(),
            kind,
            scores: vec![0.0; s.len()],
            sentences: s,
            sources: vec![],
        };
        let pair = ProfilePair {
            user: mk("u", ProfileKind::User, vec![vec![4, 5, 6], vec![7, 8]]),
            item: mk("i", ProfileKind::Item, vec![vec![9, 10, 11, 12]]),
        };
        assert_eq!(persona_tokens(&pair, 6), vec![4, 5, 6, 9, 10, 11]);
        assert_eq!(persona_tokens(&pair, 100).len(), 9);
        let short = ProfilePair {
            user: pair.user.clone(),
            item: mk("i", ProfileKind::Item, vec![vec![9]]),
        };
        assert_eq!(persona_tokens(&short, 6), vec![4, 5, 6, 7, 8, 9]);
    }
}
