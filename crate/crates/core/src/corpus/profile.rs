//! Pseudo persona (user) and profile (item) construction.
//!
//! For a target record, every other review written by the same user (or
//! about the same item) within one split is scored by cosine similarity to
//! the target review, and the top-k become the owner's evidence sentences.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::{cosine, SentenceEmbedder};
use super::record::InteractionRecord;
use super::vocab::{Vocabulary, UNK};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    User,
    Item,
}

/// How candidate sentences are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ranking {
    /// Cosine similarity to the target review.
    #[default]
    Similarity,
    /// Most recent history first; for deployments with no target review.
    /// Scores are reported as zero.
    Recency,
}

impl std::str::FromStr for Ranking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(Self::Similarity),
            "recency" => Ok(Self::Recency),
            other => Err(Error::invalid(format!("unknown ranking `{other}` (expected similarity or recency)"))),
        }
    }
}

/// Identity of the record a profile sentence came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub user: String,
    pub item: String,
}

impl RecordKey {
    pub fn of(r: &InteractionRecord) -> Self {
        Self {
            user: r.user.clone(),
            item: r.item.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonaProfile {
    pub owner: String,
    pub kind: ProfileKind,
    /// Exactly `k` sentences, best first.
    pub sentences: Vec<Vec<u32>>,
    pub scores: Vec<f64>,
    /// Records the sentences were taken from; empty for placeholders.
    pub sources: Vec<RecordKey>,
}

impl PersonaProfile {
    /// Stand-in for an owner with no usable history: `k` copies of `[unk]`.
    pub fn placeholder(owner: &str, kind: ProfileKind, k: usize) -> Self {
        Self {
            owner: owner.to_string(),
            kind,
            sentences: vec![vec![UNK]; k],
            scores: vec![0.0; k],
            sources: Vec::new(),
        }
    }

    pub fn is_placeholder(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Persona and profile for one target record.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePair {
    pub user: PersonaProfile,
    pub item: PersonaProfile,
}

/// Precomputed sentence embeddings and owner indexes for one split.
pub struct ProfileBuilder<'a> {
    records: &'a [InteractionRecord],
    embeddings: Vec<Vec<f64>>,
    by_user: HashMap<&'a str, Vec<usize>>,
    by_item: HashMap<&'a str, Vec<usize>>,
    k: usize,
    ranking: Ranking,
}

impl<'a> ProfileBuilder<'a> {
    pub fn new<E: SentenceEmbedder + Sync>(
        records: &'a [InteractionRecord],
        embedder: &E,
        k: usize,
        ranking: Ranking,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("profile size k must be at least 1"));
        }
        let embeddings = records
            .par_iter()
            .map(|r| embedder.embed(&r.review))
            .collect::<Result<Vec<_>>>()?;
        let mut by_user: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut by_item: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            by_user.entry(r.user.as_str()).or_default().push(i);
            by_item.entry(r.item.as_str()).or_default().push(i);
        }
        Ok(Self {
            records,
            embeddings,
            by_user,
            by_item,
            k,
            ranking,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Profiles for `records[target]`; errors if either owner lacks history.
    pub fn build(&self, target: usize) -> Result<ProfilePair> {
        let rec = self
            .records
            .get(target)
            .ok_or_else(|| Error::invalid(format!("target index {target} out of range")))?;
        Ok(ProfilePair {
            user: self.build_one(target, ProfileKind::User, &rec.user)?,
            item: self.build_one(target, ProfileKind::Item, &rec.item)?,
        })
    }

    /// Like [`ProfileBuilder::build`], substituting a placeholder for an
    /// owner with no other record in the split.
    pub fn build_or_placeholder(&self, target: usize) -> Result<ProfilePair> {
        let rec = self
            .records
            .get(target)
            .ok_or_else(|| Error::invalid(format!("target index {target} out of range")))?;
        let one = |kind, owner: &str| match self.build_one(target, kind, owner) {
            Err(Error::MissingHistory { .. }) => Ok(PersonaProfile::placeholder(owner, kind, self.k)),
            other => other,
        };
        Ok(ProfilePair {
            user: one(ProfileKind::User, &rec.user)?,
            item: one(ProfileKind::Item, &rec.item)?,
        })
    }

    /// Profiles for every record in the split, in order.
    pub fn build_all(&self, lenient: bool) -> Result<Vec<ProfilePair>> {
        (0..self.records.len())
            .into_par_iter()
            .map(|i| {
                if lenient {
                    self.build_or_placeholder(i)
                } else {
                    self.build(i)
                }
            })
            .collect()
    }

    fn key(&self, i: usize) -> (&str, &str) {
        (&self.records[i].user, &self.records[i].item)
    }

    fn build_one(&self, target: usize, kind: ProfileKind, owner: &str) -> Result<PersonaProfile> {
        let (index, kind_name) = match kind {
            ProfileKind::User => (&self.by_user, "user"),
            ProfileKind::Item => (&self.by_item, "item"),
        };
        let pool = index.get(owner).ok_or_else(|| Error::UnknownId {
            kind: kind_name,
            id: owner.to_string(),
        })?;
        let mut cands: Vec<(usize, f64)> = match self.ranking {
            Ranking::Similarity => pool
                .iter()
                .filter(|&&i| i != target)
                .map(|&i| (i, cosine(&self.embeddings[target], &self.embeddings[i])))
                .collect(),
            Ranking::Recency => pool
                .iter()
                .rev()
                .filter(|&&i| i != target)
                .map(|&i| (i, 0.0))
                .collect(),
        };
        if cands.is_empty() {
            return Err(Error::MissingHistory {
                kind: kind_name,
                id: owner.to_string(),
            });
        }
        if self.ranking == Ranking::Similarity {
            cands.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| self.records[a.0].review.cmp(&self.records[b.0].review))
                    .then_with(|| self.key(a.0).cmp(&self.key(b.0)))
                    .then(a.0.cmp(&b.0))
            });
        }
        cands.truncate(self.k);
        while cands.len() < self.k {
            cands.push(*cands.last().unwrap());
        }
        Ok(PersonaProfile {
            owner: owner.to_string(),
            kind,
            sentences: cands.iter().map(|(i, _)| self.records[*i].review.clone()).collect(),
            scores: cands.iter().map(|(_, s)| *s).collect(),
            sources: cands.iter().map(|(i, _)| RecordKey::of(&self.records[*i])).collect(),
        })
    }
}

/// Persona and profile for `records[target]` using similarity ranking.
pub fn build_profiles<E: SentenceEmbedder + Sync>(
    records: &[InteractionRecord],
    target: usize,
    k: usize,
    embedder: &E,
) -> Result<ProfilePair> {
    ProfileBuilder::new(records, embedder, k, Ranking::Similarity)?.build(target)
}

/// Source records of `profiles` that belong to `forbidden` (e.g. the test split).
pub fn find_leaks(profiles: &[ProfilePair], forbidden: &[InteractionRecord]) -> Vec<RecordKey> {
    let banned: HashSet<RecordKey> = forbidden.iter().map(RecordKey::of).collect();
    let mut leaks: Vec<RecordKey> = profiles
        .iter()
        .flat_map(|p| p.user.sources.iter().chain(&p.item.sources))
        .filter(|k| banned.contains(*k))
        .cloned()
        .collect();
    leaks.sort();
    leaks.dedup();
    leaks
}

/// Profile file line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileLine {
    pub record: usize,
    pub owner: String,
    pub kind: ProfileKind,
    pub sentences: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(default)]
    pub sources: Vec<RecordKey>,
}

/// Writes two lines (user, then item) per target record.
pub fn save_profiles(pairs: &[ProfilePair], vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (i, pair) in pairs.iter().enumerate() {
        for p in [&pair.user, &pair.item] {
            let line = ProfileLine {
                record: i,
                owner: p.owner.clone(),
                kind: p.kind,
                sentences: p.sentences.iter().map(|s| vocab.detokenize(s)).collect(),
                scores: p.scores.clone(),
                sources: p.sources.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`save_profiles`], re-encoding sentences with `vocab`.
pub fn load_profiles(path: &Path, vocab: &Vocabulary) -> Result<Vec<ProfilePair>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ProfileLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        lines.push((n + 1, parsed));
    }
    if lines.len() % 2 != 0 {
        return Err(Error::Parse {
            line: lines.len(),
            msg: "profile file must hold a user and an item line per record".into(),
        });
    }
    let to_profile = |l: ProfileLine| PersonaProfile {
        owner: l.owner,
        kind: l.kind,
        sentences: l.sentences.iter().map(|s| vocab.encode(s)).collect(),
        scores: l.scores,
        sources: l.sources,
    };
    let mut out = Vec::with_capacity(lines.len() / 2);
    let mut it = lines.into_iter();
    while let (Some((n, u)), Some((_, i))) = (it.next(), it.next()) {
        if u.kind != ProfileKind::User || i.kind != ProfileKind::Item || u.record != out.len() || i.record != u.record {
            return Err(Error::Parse {
                line: n,
                msg: format!("expected user and item lines for record {}", out.len()),
            });
        }
        out.push(ProfilePair {
            user: to_profile(u),
            item: to_profile(i),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::embed::MeanWordEmbedder;

    fn rec(user: &str, item: &str, review: &[u32]) -> InteractionRecord {
        InteractionRecord {
            user: user.into(),
            item: item.into(),
            rating: 3.0,
            review: review.to_vec(),
            feature: None,
            opinion: None,
        }
    }

    fn embedder() -> MeanWordEmbedder {
        MeanWordEmbedder::random(20, 8, 3)
    }

    #[test]
    fn single_history_is_repeated() {
        let recs = vec![rec("u", "a", &[4, 5]), rec("u", "b", &[6, 7]), rec("v", "a", &[8])];
        let p = build_profiles(&recs, 0, 3, &embedder()).unwrap();
        assert_eq!(p.user.sentences, vec![vec![6, 7]; 3]);
        assert_eq!(p.user.scores.len(), 3);
        assert!(p.user.scores.iter().all(|s| *s == p.user.scores[0]));
    }

    #[test]
    fn identical_review_ranks_first_with_score_one() {
        let recs = vec![
            rec("u", "a", &[4, 5, 6]),
            rec("u", "b", &[9, 10]),
            rec("u", "c", &[4, 5, 6]),
            rec("u", "d", &[11, 12, 13]),
            rec("w", "a", &[7]),
        ];
        let e = embedder();
        let p = build_profiles(&recs, 0, 2, &e).unwrap();
        // Brute-force: score every candidate independently and take the max.
        let target = e.embed(&recs[0].review).unwrap();
        let best = (1..4)
            .map(|i| (i, cosine(&target, &e.embed(&recs[i].review).unwrap())))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(best.0, 2);
        assert_eq!(p.user.sentences[0], vec![4, 5, 6]);
        assert!((p.user.scores[0] - 1.0).abs() < 1e-12);
        assert!(p.user.scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn target_is_excluded_and_missing_history_errors() {
        let recs = vec![rec("u", "a", &[4]), rec("v", "a", &[5])];
        match build_profiles(&recs, 0, 2, &embedder()) {
            Err(Error::MissingHistory { kind, id }) => {
                assert_eq!(kind, "user");
                assert_eq!(id, "u");
            }
            other => panic!("{other:?}"),
        }
        let b = ProfileBuilder::new(&recs, &embedder(), 2, Ranking::Similarity).unwrap();
        let p = b.build_or_placeholder(0).unwrap();
        assert!(p.user.is_placeholder());
        assert_eq!(p.item.sentences, vec![vec![5], vec![5]]);
    }

    #[test]
    fn recency_prefers_latest() {
        let recs = vec![rec("u", "a", &[4]), rec("u", "b", &[5]), rec("u", "c", &[6]), rec("x", "a", &[7])];
        let b = ProfileBuilder::new(&recs, &embedder(), 2, Ranking::Recency).unwrap();
        let p = b.build(0).unwrap();
        assert_eq!(p.user.sentences, vec![vec![6], vec![5]]);
    }

    #[test]
    fn profile_file_round_trip() {
        let vocab = Vocabulary::from_tokens(["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p"]);
        let recs = vec![rec("u", "a", &[4, 5]), rec("u", "b", &[6, 7]), rec("v", "a", &[8]), rec("v", "b", &[9])];
        let pairs = ProfileBuilder::new(&recs, &embedder(), 2, Ranking::Similarity)
            .unwrap()
            .build_all(true)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        save_profiles(&pairs, &vocab, &path).unwrap();
        let back = load_profiles(&path, &vocab).unwrap();
        assert_eq!(back.len(), pairs.len());
        for (a, b) in pairs.iter().zip(&back) {
            assert_eq!(a.user.sentences, b.user.sentences);
            assert_eq!(a.item.sources, b.item.sources);
            assert_eq!(a.user.scores, b.user.scores);
        }
    }

    #[test]
    fn leak_scan_flags_forbidden_sources() {
        let train = vec![rec("u", "a", &[4]), rec("u", "b", &[5])];
        let test = vec![rec("u", "b", &[5])];
        let pairs = vec![ProfilePair {
            user: build_profiles(&[train[0].clone(), train[1].clone(), rec("z", "a", &[6])], 0, 1, &embedder())
                .unwrap()
                .user,
            item: PersonaProfile::placeholder("a", ProfileKind::Item, 1),
        }];
        assert_eq!(find_leaks(&pairs, &test).len(), 1);
        assert!(find_leaks(&pairs, &[rec("q", "q", &[4])]).is_empty());
    }
}
