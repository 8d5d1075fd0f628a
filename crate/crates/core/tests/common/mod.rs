#![allow(dead_code)]

use diffexr::corpus::InteractionRecord;
use diffexr::model::{IdMap, ModelConfig, ModelParameters};
use diffexr::rng::stream;
use diffexr::training::TrainExample;

/// d=8, h=2, L=2, |V|=20, T=8.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        num_heads: 2,
        num_layers: 2,
        ffn_dim: 12,
        max_encoder_len: 12,
        max_review_len: 6,
        vocab_size: 20,
        num_users: 3,
        num_items: 2,
        horizon: 8,
        dropout: 0.0,
        id_init_std: 0.5,
    }
}

pub fn tiny_model(seed: u64) -> ModelParameters {
    let c = tiny_config();
    ModelParameters::init(
        &c,
        IdMap::from_names(["u0", "u1", "u2"]),
        IdMap::from_names(["i0", "i1"]),
        &mut stream(seed, "init"),
    )
    .unwrap()
}

pub fn example(review: &[u32]) -> TrainExample {
    TrainExample {
        record: InteractionRecord {
            user: "u1".into(),
            item: "i0".into(),
            rating: 4.0,
            review: review.to_vec(),
            feature: Some(review[0]),
            opinion: Some(review[1]),
        },
        persona: vec![5, 9, 13, 7, 11, 17, 4],
    }
}
