//! The network: persona encoder, noisy transformer decoder, and the rating,
//! context and word heads.
//!
//! Decoder input rows are laid out as `[user, item, k_1..k_K, bos, w_1..w_n]`.
//! Only the word rows are ever noised. Position 0 feeds the rating head,
//! position 1 the context (bag-of-words) head, and positions `bos..` the
//! next-token head. The context and word heads share one vocabulary
//! projection.

mod checkpoint;
mod config;
mod layout;
mod network;
mod params;

pub use checkpoint::{Checkpoint, ParamEntry, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use layout::{KeywordMode, SequenceLayout};
pub use network::{
    build_prefix, build_sequence, keyword_ids, decode, decoder_mask, encode, generation_rows,
    multi_head_attention, persona_tokens, positional_encoding, predict_context, predict_rating,
    predict_words, vocab_logits, word_rows, Dropout,
};
pub use params::{
    AttentionIds, DecoderLayerIds, EncoderLayerIds, FfnIds, IdMap, ModelParameters, NormIds,
    RatingHeadIds, VocabHeadIds,
};
