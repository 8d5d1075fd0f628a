use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, UNK};
use crate::error::{Error, Result};
use crate::rng;

/// One dataset line as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub review: String,
    pub feature: Option<String>,
    pub opinion: Option<String>,
}

impl RawRecord {
    pub fn validate(&self) -> Result<()> {
        if !(1.0..=5.0).contains(&self.rating) {
            return Err(Error::invalid(format!("rating {} outside [1, 5]", self.rating)));
        }
        if super::tokenize(&self.review).is_empty() {
            return Err(Error::invalid("review has no tokens"));
        }
        Ok(())
    }
}

/// A record with its review and keywords mapped to vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub review: Vec<u32>,
    pub feature: Option<u32>,
    pub opinion: Option<u32>,
}

impl InteractionRecord {
    pub fn encode(raw: &RawRecord, vocab: &Vocabulary) -> Result<Self> {
        raw.validate()?;
        let keyword = |w: &Option<String>| -> Result<Option<u32>> {
            let Some(w) = w else { return Ok(None) };
            let toks = super::tokenize(w);
            match toks.as_slice() {
                [t] => Ok(Some(vocab.encode_token(t))),
                _ => Err(Error::invalid(format!("keyword `{w}` is not a single token"))),
            }
        };
        Ok(Self {
            user: raw.user.clone(),
            item: raw.item.clone(),
            rating: raw.rating,
            review: vocab.encode(&raw.review),
            feature: keyword(&raw.feature)?,
            opinion: keyword(&raw.opinion)?,
        })
    }

    pub fn to_raw(&self, vocab: &Vocabulary) -> RawRecord {
        let word = |w: Option<u32>| w.map(|i| vocab.token(i).unwrap_or("<unk>").to_string());
        RawRecord {
            user: self.user.clone(),
            item: self.item.clone(),
            rating: self.rating,
            review: vocab.detokenize(&self.review),
            feature: word(self.feature),
            opinion: word(self.opinion),
        }
    }

    pub fn has_unknown_keyword(&self) -> bool {
        self.feature == Some(UNK) || self.opinion == Some(UNK)
    }
}

pub fn encode_all(raw: &[RawRecord], vocab: &Vocabulary) -> Result<Vec<InteractionRecord>> {
    raw.iter().map(|r| InteractionRecord::encode(r, vocab)).collect()
}

/// Reads JSONL; errors carry the 1-based line number.
pub fn load_records(path: &Path) -> Result<Vec<RawRecord>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_records(records: &[RawRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Train/valid/test partition of a record set.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded 8:1:1 shuffle split by record.
pub fn split_records<T: Clone>(records: &[T], seed: u64) -> Splits<T> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let n = records.len();
    let n_train = (n * 8 + 5) / 10;
    let n_valid = (n - n_train) / 2;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Splits {
        train: pick(&order[..n_train]),
        valid: pick(&order[n_train..n_train + n_valid]),
        test: pick(&order[n_train + n_valid..]),
    }
}
