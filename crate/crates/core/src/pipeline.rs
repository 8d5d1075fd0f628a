//! Glue from raw record splits to model-ready examples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    encode_all, InteractionRecord, ProfileBuilder, ProfilePair, Ranking, RawRecord,
    SentenceEmbedder, Splits, Vocabulary,
};
use crate::error::Result;
use crate::model::{persona_tokens, IdMap};
use crate::training::TrainExample;

/// Encoded splits plus the shared vocabulary and id maps.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub users: IdMap,
    pub items: IdMap,
    pub splits: Splits<InteractionRecord>,
}

/// Builds the vocabulary from training reviews and keywords, then encodes
/// every split with it. Users and items are indexed across all splits.
pub fn prepare(raw: &Splits<RawRecord>, min_count: usize) -> Result<PreparedData> {
    let texts = raw.train.iter().flat_map(|r| {
        std::iter::once(r.review.as_str())
            .chain(r.feature.as_deref())
            .chain(r.opinion.as_deref())
    });
    let vocab = Vocabulary::build(texts, min_count)?;
    let all = || raw.train.iter().chain(&raw.valid).chain(&raw.test);
    let users = IdMap::from_names(all().map(|r| r.user.clone()));
    let items = IdMap::from_names(all().map(|r| r.item.clone()));
    let splits = Splits {
        train: encode_all(&raw.train, &vocab)?,
        valid: encode_all(&raw.valid, &vocab)?,
        test: encode_all(&raw.test, &vocab)?,
    };
    Ok(PreparedData {
        vocab,
        users,
        items,
        splits,
    })
}

/// Profiles built within one split only; owners without other records in
/// the split get placeholders.
pub fn split_profiles<E: SentenceEmbedder + Sync>(
    records: &[InteractionRecord],
    embedder: &E,
    k: usize,
    ranking: Ranking,
) -> Result<Vec<ProfilePair>> {
    ProfileBuilder::new(records, embedder, k, ranking)?.build_all(true)
}

pub fn attach_personas(
    records: &[InteractionRecord],
    profiles: &[ProfilePair],
    max_encoder_len: usize,
) -> Vec<TrainExample> {
    records
        .iter()
        .zip(profiles)
        .map(|(r, p)| TrainExample {
            record: r.clone(),
            persona: persona_tokens(p, max_encoder_len),
        })
        .collect()
}

/// Where held-out records look for persona/profile sentences. Training
/// records always draw from the training split alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfilePool {
    /// Training history plus the held-out split itself.
    #[default]
    History,
    /// The held-out split only.
    WithinSplit,
}

impl std::str::FromStr for ProfilePool {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "history" => Ok(Self::History),
            "within-split" => Ok(Self::WithinSplit),
            other => Err(crate::Error::invalid(format!(
                "unknown profile pool `{other}` (expected history or within-split)"
            ))),
        }
    }
}

/// Profiles for held-out `records`. Under [`ProfilePool::History`] the
/// candidate pool is `train ++ records`; the target itself is always excluded.
pub fn held_out_profiles<E: SentenceEmbedder + Sync>(
    train: &[InteractionRecord],
    records: &[InteractionRecord],
    embedder: &E,
    k: usize,
    pool: ProfilePool,
    ranking: Ranking,
) -> Result<Vec<ProfilePair>> {
    match pool {
        ProfilePool::WithinSplit => split_profiles(records, embedder, k, ranking),
        ProfilePool::History => {
            let combined: Vec<InteractionRecord> = train.iter().chain(records).cloned().collect();
            let builder = ProfileBuilder::new(&combined, embedder, k, ranking)?;
            (train.len()..combined.len())
                .into_par_iter()
                .map(|i| builder.build_or_placeholder(i))
                .collect()
        }
    }
}

/// Profiles plus encoder inputs for one split.
pub fn split_examples<E: SentenceEmbedder + Sync>(
    records: &[InteractionRecord],
    embedder: &E,
    k: usize,
    max_encoder_len: usize,
) -> Result<Vec<TrainExample>> {
    let profiles = split_profiles(records, embedder, k, Ranking::Similarity)?;
    Ok(attach_personas(records, &profiles, max_encoder_len))
}
