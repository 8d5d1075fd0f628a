//! Seeded synthetic review corpus.
//!
//! Users carry a rating bias and a preference over aspects; items carry a
//! per-aspect quality, an aspect salience, and one concrete feature word per
//! aspect. Each record picks an aspect, plants that item's feature word and
//! an opinion word matching the rating into a sentence template.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::record::RawRecord;
use crate::error::{Error, Result};
use crate::rng;

pub const ASPECT_FEATURES: [&[&str]; 10] = [
    &["fit", "size", "sizing", "waist", "length"],
    &["comfort", "sole", "cushion", "padding", "arch"],
    &["material", "fabric", "leather", "cotton", "stitching"],
    &["color", "style", "design", "pattern", "shade"],
    &["value", "cost", "deal", "bargain", "discount"],
    &["shipping", "delivery", "packaging", "box", "seller"],
    &["bracelet", "necklace", "ring", "earrings", "chain"],
    &["strap", "buckle", "zipper", "button", "clasp"],
    &["heel", "toe", "insole", "lace", "tongue"],
    &["pocket", "collar", "sleeve", "hood", "lining"],
];

/// Opinion words by sentiment level, from rating 1 to rating 5.
pub const OPINIONS: [&[&str]; 5] = [
    &["terrible", "awful", "horrible"],
    &["poor", "disappointing", "cheap"],
    &["okay", "decent", "average"],
    &["good", "nice", "solid"],
    &["great", "perfect", "beautiful"],
];

pub const DEFAULT_TEMPLATES: [&str; 8] = [
    "the {feature} is {opinion} and i would recommend it",
    "i found the {feature} to be {opinion} overall",
    "really {opinion} {feature} for the money",
    "this one has a {opinion} {feature} in my opinion",
    "the {feature} was {opinion} when it arrived",
    "overall a {opinion} {feature} and a lovely piece",
    "my wife said the {feature} looks {opinion}",
    "honestly the {feature} feels {opinion} to me",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    /// Mean records per user; realized counts are the floor or ceiling.
    pub records_per_user: f64,
    pub num_aspects: usize,
    pub templates: Vec<String>,
    pub rating_noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Amazon clothing/jewelry shape at 1/100 scale.
    pub fn amazon_like(seed: u64) -> Self {
        Self {
            num_users: 388,
            num_items: 229,
            records_per_user: 4.62,
            num_aspects: ASPECT_FEATURES.len(),
            templates: DEFAULT_TEMPLATES.iter().map(|s| s.to_string()).collect(),
            rating_noise_std: 0.3,
            seed,
        }
    }

    /// TripAdvisor shape at 1/100 scale.
    pub fn tripadvisor_like(seed: u64) -> Self {
        Self {
            num_users: 98,
            num_items: 63,
            records_per_user: 32.77,
            ..Self::amazon_like(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 {
            return Err(Error::invalid("need at least one user and one item"));
        }
        if !(self.records_per_user >= 1.0) {
            return Err(Error::invalid("records_per_user must be >= 1"));
        }
        if self.num_aspects == 0 || self.num_aspects > ASPECT_FEATURES.len() {
            return Err(Error::invalid(format!(
                "num_aspects must be in 1..={}",
                ASPECT_FEATURES.len()
            )));
        }
        if self.templates.is_empty() {
            return Err(Error::invalid("template set is empty"));
        }
        for t in &self.templates {
            if t.matches("{feature}").count() != 1 || t.matches("{opinion}").count() != 1 {
                return Err(Error::invalid(format!(
                    "template `{t}` needs exactly one {{feature}} and one {{opinion}}"
                )));
            }
        }
        if !(self.rating_noise_std >= 0.0) {
            return Err(Error::invalid("rating_noise_std must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<RawRecord>,
    /// Every feature word that can be planted, sorted.
    pub lexicon: Vec<String>,
    /// Noise-free rating `3 + affinity` per record, before clipping.
    pub rating_means: Vec<f64>,
}

struct User {
    bias: f64,
    pref: Vec<f64>,
}

struct Item {
    quality: Vec<f64>,
    salience: Vec<f64>,
    features: Vec<&'static str>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    crate::numerics::softmax_row(logits)
}

fn categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn user_id(i: usize) -> String {
    format!("u{i:04}")
}

pub fn item_id(i: usize) -> String {
    format!("i{i:04}")
}

pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, "data");
    let a = spec.num_aspects;
    let bias = Normal::new(0.0, 0.6).unwrap();
    let spread = Normal::new(0.0, 0.4).unwrap();

    let users: Vec<User> = (0..spec.num_users)
        .map(|_| {
            let logits: Vec<f64> = (0..a)
                .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            User {
                bias: bias.sample(&mut rng),
                pref: softmax(&logits),
            }
        })
        .collect();
    let items: Vec<Item> = (0..spec.num_items)
        .map(|_| {
            let b = bias.sample(&mut rng);
            let quality = (0..a).map(|_| b + spread.sample(&mut rng)).collect();
            let logits: Vec<f64> = (0..a)
                .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let features = (0..a)
                .map(|k| ASPECT_FEATURES[k][rng.random_range(0..ASPECT_FEATURES[k].len())])
                .collect();
            Item {
                quality,
                salience: softmax(&logits),
                features,
            }
        })
        .collect();

    let base = spec.records_per_user.floor() as usize;
    let frac = spec.records_per_user - base as f64;
    let mut records = Vec::new();
    let mut rating_means = Vec::new();
    for (ui, user) in users.iter().enumerate() {
        let extra = usize::from(rng.random::<f64>() < frac);
        let count = (base + extra).clamp(1, spec.num_items);
        let chosen = sample(&mut rng, spec.num_items, count);
        for ii in chosen.iter() {
            let item = &items[ii];
            let w: Vec<f64> = user.pref.iter().zip(&item.salience).map(|(p, s)| p * s).collect();
            let aspect = categorical(&mut rng, &w);
            let mean = 3.0 + user.bias + item.quality[aspect];
            let noise = if spec.rating_noise_std > 0.0 {
                spec.rating_noise_std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let rating = (mean + noise).clamp(1.0, 5.0);
            let level = (rating.round() as usize).clamp(1, 5) - 1;
            let opinion = OPINIONS[level][rng.random_range(0..OPINIONS[level].len())];
            let feature = item.features[aspect];
            let template = &spec.templates[rng.random_range(0..spec.templates.len())];
            let review = template.replace("{feature}", feature).replace("{opinion}", opinion);
            records.push(RawRecord {
                user: user_id(ui),
                item: item_id(ii),
                rating,
                review,
                feature: Some(feature.to_string()),
                opinion: Some(opinion.to_string()),
            });
            rating_means.push(mean);
        }
    }

    let mut lexicon: Vec<String> = ASPECT_FEATURES[..a]
        .iter()
        .flat_map(|ws| ws.iter().map(|w| w.to_string()))
        .collect();
    lexicon.sort();
    Ok(SyntheticCorpus {
        records,
        lexicon,
        rating_means,
    })
}
