use serde::{Deserialize, Serialize};

use crate::corpus::EOS;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Squared error of one rating prediction.
pub fn loss_rating(predicted: f64, truth: f64) -> f64 {
    (truth - predicted).powi(2)
}

/// Mean squared error over `(predicted, truth)` pairs.
pub fn batch_loss_rating(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    Ok(pairs.iter().map(|(p, t)| loss_rating(*p, *t)).sum::<f64>() / pairs.len() as f64)
}

fn neg_log(p: f64) -> f64 {
    if p <= 0.0 {
        f64::INFINITY
    } else {
        -p.ln()
    }
}

/// Mean `-log p[w]` over the review words, with `p` the context distribution.
pub fn loss_context(p: &[f64], review: &[u32]) -> Result<f64> {
    if review.is_empty() {
        return Err(Error::invalid("context loss on an empty review"));
    }
    let mut total = 0.0;
    for &w in review {
        let pw = *p.get(w as usize).ok_or_else(|| Error::UnknownId {
            kind: "token",
            id: w.to_string(),
        })?;
        total += neg_log(pw);
    }
    Ok(total / review.len() as f64)
}

/// Next-token targets for a review: its words followed by `eos`.
pub fn generation_targets(review: &[u32]) -> Vec<u32> {
    review.iter().copied().chain(std::iter::once(EOS)).collect()
}

/// Mean `-log p_k[target_k]` where row `k` of `probs` predicts target `k` of
/// `review + [eos]`.
pub fn loss_generation(probs: &Tensor, review: &[u32]) -> Result<f64> {
    let targets = generation_targets(review);
    if probs.rows() != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "loss_generation",
            lhs: probs.shape().to_vec(),
            rhs: vec![targets.len()],
        });
    }
    let mut total = 0.0;
    for (k, &w) in targets.iter().enumerate() {
        let row = probs.row_slice(k);
        let pw = *row.get(w as usize).ok_or_else(|| Error::UnknownId {
            kind: "token",
            id: w.to_string(),
        })?;
        total += neg_log(pw);
    }
    Ok(total / targets.len() as f64)
}

/// Trade-off weights of the multi-task objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub context: f64,
    pub rating: f64,
    pub generation: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            context: 1.0,
            rating: 0.1,
            generation: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.context, self.rating, self.generation];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::invalid("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub context: f64,
    pub rating: f64,
    pub generation: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.context * c.context + w.rating * c.rating + w.generation * c.generation
}
