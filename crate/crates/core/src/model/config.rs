use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network shape. `num_layers` applies to both encoder and decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ffn_dim: usize,
    pub max_encoder_len: usize,
    pub max_review_len: usize,
    pub vocab_size: usize,
    pub num_users: usize,
    pub num_items: usize,
    /// Diffusion horizon `T`; the timestep table has `T + 1` rows.
    pub horizon: usize,
    pub dropout: f64,
    /// Standard deviation of the initial user and item embeddings.
    #[serde(default = "default_id_init_std")]
    pub id_init_std: f64,
}

fn default_id_init_std() -> f64 {
    0.1
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.num_heads == 0 || self.d_model % self.num_heads != 0 {
            return Err(Error::invalid(format!(
                "d_model {} must be a positive multiple of num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.num_layers < 1 {
            return Err(Error::invalid("num_layers must be >= 1"));
        }
        if self.ffn_dim == 0 || self.max_encoder_len == 0 || self.max_review_len == 0 {
            return Err(Error::invalid("ffn_dim, max_encoder_len and max_review_len must be positive"));
        }
        if self.vocab_size <= crate::corpus::NUM_RESERVED {
            return Err(Error::invalid("vocabulary holds only reserved tokens"));
        }
        if self.num_users == 0 || self.num_items == 0 {
            return Err(Error::invalid("need at least one user and one item"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        if !(self.id_init_std > 0.0) {
            return Err(Error::invalid("id_init_std must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    /// Closed-form count of scalar parameters.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let f = self.ffn_dim;
        let v = self.vocab_size;
        let ffn = d * f + f + f * d + d;
        let norm = 2 * d;
        let embeddings = (self.num_users + self.num_items + v + self.horizon + 1) * d;
        let encoder = self.num_layers * (4 * d * d + 2 * norm + ffn);
        let decoder = self.num_layers * (8 * d * d + 3 * norm + ffn);
        let rating = d * d + d + d + 1;
        let vocab_head = v * d + v;
        embeddings + encoder + decoder + rating + vocab_head
    }
}
