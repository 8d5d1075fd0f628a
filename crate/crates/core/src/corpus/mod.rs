//! Records, vocabulary, pseudo persona/profile construction and synthetic data.

mod embed;
mod profile;
mod record;
mod synth;
mod vocab;

pub use embed::{cosine, sentence_embed, MeanWordEmbedder, SentenceEmbedder};
pub use profile::{
    build_profiles, find_leaks, load_profiles, save_profiles, PersonaProfile, ProfileBuilder, ProfileKind,
    ProfileLine, ProfilePair, Ranking, RecordKey,
};
pub use record::{
    encode_all, load_records, save_records, split_records, InteractionRecord, RawRecord, Splits,
};
pub use synth::{
    item_id, synth_generate, user_id, SyntheticCorpus, SyntheticSpec, ASPECT_FEATURES,
    DEFAULT_TEMPLATES, OPINIONS,
};
pub use vocab::{tokenize, Vocabulary, BOS, EOS, NUM_RESERVED, PAD, UNK};
