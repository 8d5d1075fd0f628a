use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tensor};

/// Stable mapping from opaque string ids to embedding rows.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    /// Keeps first occurrences in order.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut m = Self::default();
        for n in names {
            let n = n.into();
            if !m.index.contains_key(&n) {
                m.index.insert(n.clone(), m.names.len());
                m.names.push(n);
            }
        }
        m
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionIds {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub output: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct NormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderLayerIds {
    pub attn: AttentionIds,
    pub norm1: NormIds,
    pub ffn: FfnIds,
    pub norm2: NormIds,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderLayerIds {
    pub self_attn: AttentionIds,
    pub norm1: NormIds,
    pub cross_attn: AttentionIds,
    pub norm2: NormIds,
    pub ffn: FfnIds,
    pub norm3: NormIds,
}

/// Rating MLP: `w^r . sigmoid(W^r h + b^r) + b`.
#[derive(Debug, Clone, Copy)]
pub struct RatingHeadIds {
    pub hidden_w: ParamId,
    pub hidden_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// The single vocabulary projection shared by the context and word heads.
#[derive(Debug, Clone, Copy)]
pub struct VocabHeadIds {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Every trainable array plus the id-to-row maps for users and items.
#[derive(Debug, Clone)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub users: IdMap,
    pub items: IdMap,
    pub user_table: ParamId,
    pub item_table: ParamId,
    pub word_table: ParamId,
    pub timestep_table: ParamId,
    pub encoder: Vec<EncoderLayerIds>,
    pub decoder: Vec<DecoderLayerIds>,
    pub rating: RatingHeadIds,
    pub vocab: VocabHeadIds,
}

struct Init<'r, R: Rng> {
    rng: &'r mut R,
    store: ParamStore,
}

impl<R: Rng> Init<'_, R> {
    fn normal(&mut self, name: String, shape: &[usize], std: f64) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| std * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data).unwrap())
    }

    fn constant(&mut self, name: String, shape: &[usize], value: f64) -> ParamId {
        self.store.add(name, Tensor::full(shape, value))
    }

    fn linear(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        self.normal(name, &[fan_in, fan_out], (fan_in as f64).powf(-0.5))
    }

    fn attention(&mut self, prefix: &str, d: usize) -> AttentionIds {
        AttentionIds {
            query: self.linear(format!("{prefix}.wq"), d, d),
            key: self.linear(format!("{prefix}.wk"), d, d),
            value: self.linear(format!("{prefix}.wv"), d, d),
            output: self.linear(format!("{prefix}.wo"), d, d),
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIds {
        NormIds {
            gain: self.constant(format!("{prefix}.gain"), &[1, d], 1.0),
            bias: self.constant(format!("{prefix}.bias"), &[1, d], 0.0),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIds {
        FfnIds {
            w1: self.linear(format!("{prefix}.w1"), d, f),
            b1: self.constant(format!("{prefix}.b1"), &[1, f], 0.0),
            w2: self.linear(format!("{prefix}.w2"), f, d),
            b2: self.constant(format!("{prefix}.b2"), &[1, d], 0.0),
        }
    }
}

impl ModelParameters {
    /// Randomly initialized parameters. `users` and `items` fix the id maps
    /// and must match `config.num_users` / `config.num_items`.
    pub fn init<R: Rng>(config: &ModelConfig, users: IdMap, items: IdMap, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if users.len() != config.num_users || items.len() != config.num_items {
            return Err(Error::invalid(format!(
                "id maps ({} users, {} items) disagree with config ({}, {})",
                users.len(),
                items.len(),
                config.num_users,
                config.num_items
            )));
        }
        let d = config.d_model;
        let f = config.ffn_dim;
        let v = config.vocab_size;
        let mut init = Init {
            rng,
            store: ParamStore::new(),
        };
        let user_table = init.normal("embed.user".into(), &[config.num_users, d], config.id_init_std);
        let item_table = init.normal("embed.item".into(), &[config.num_items, d], config.id_init_std);
        let word_table = init.normal("embed.word".into(), &[v, d], 1.0);
        let timestep_table = init.normal("embed.timestep".into(), &[config.horizon + 1, d], 0.1);
        let encoder = (0..config.num_layers)
            .map(|l| {
                let p = format!("encoder.{l}");
                EncoderLayerIds {
                    attn: init.attention(&format!("{p}.attn"), d),
                    norm1: init.norm(&format!("{p}.norm1"), d),
                    ffn: init.ffn(&format!("{p}.ffn"), d, f),
                    norm2: init.norm(&format!("{p}.norm2"), d),
                }
            })
            .collect();
        let decoder = (0..config.num_layers)
            .map(|l| {
                let p = format!("decoder.{l}");
                DecoderLayerIds {
                    self_attn: init.attention(&format!("{p}.self_attn"), d),
                    norm1: init.norm(&format!("{p}.norm1"), d),
                    cross_attn: init.attention(&format!("{p}.cross_attn"), d),
                    norm2: init.norm(&format!("{p}.norm2"), d),
                    ffn: init.ffn(&format!("{p}.ffn"), d, f),
                    norm3: init.norm(&format!("{p}.norm3"), d),
                }
            })
            .collect();
        let rating = RatingHeadIds {
            hidden_w: init.linear("head.rating.hidden_w".into(), d, d),
            hidden_b: init.constant("head.rating.hidden_b".into(), &[1, d], 0.0),
            out_w: init.normal("head.rating.out_w".into(), &[1, d], (d as f64).powf(-0.5)),
            out_b: init.constant("head.rating.out_b".into(), &[], 3.0),
        };
        let vocab = VocabHeadIds {
            weight: init.normal("head.vocab.weight".into(), &[v, d], (d as f64).powf(-0.5)),
            bias: init.constant("head.vocab.bias".into(), &[1, v], 0.0),
        };
        Ok(Self {
            config: config.clone(),
            store: init.store,
            users,
            items,
            user_table,
            item_table,
            word_table,
            timestep_table,
            encoder,
            decoder,
            rating,
            vocab,
        })
    }

    pub fn user_index(&self, id: &str) -> Result<usize> {
        self.users.get(id).ok_or_else(|| Error::UnknownId {
            kind: "user",
            id: id.to_string(),
        })
    }

    pub fn item_index(&self, id: &str) -> Result<usize> {
        self.items.get(id).ok_or_else(|| Error::UnknownId {
            kind: "item",
            id: id.to_string(),
        })
    }

    /// Parameters of the rating MLP.
    pub fn rating_head_ids(&self) -> [ParamId; 4] {
        [
            self.rating.hidden_w,
            self.rating.hidden_b,
            self.rating.out_w,
            self.rating.out_b,
        ]
    }
}
