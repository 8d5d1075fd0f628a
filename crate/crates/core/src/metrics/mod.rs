//! Rating accuracy, text overlap and explainability metrics.
//!
//! BLEU and ROUGE are returned on the 0-100 scale; RMSE, MAE and the
//! explainability ratios are raw. Feature containment is exact token
//! equality, never substring matching.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::hash::Hash;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn same_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            op,
            lhs: vec![a],
            rhs: vec![b],
        });
    }
    if a == 0 {
        return Err(Error::invalid(format!("{op} of empty input")));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len("rmse", pred.len(), truth.len())?;
    let se: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((se / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len("mae", pred.len(), truth.len())?;
    let ae: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(ae / pred.len() as f64)
}

/// Multiset of the order-`n` n-grams of `tokens`.
pub fn ngram_counts<T: Hash + Eq + Clone>(tokens: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    m
}

fn clipped_overlap<T: Hash + Eq>(cand: &HashMap<Vec<T>, usize>, refs: &HashMap<Vec<T>, usize>) -> usize {
    cand.iter().map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0))).sum()
}

/// Corpus BLEU with uniform weights over orders `1..=n`, clipped n-gram
/// precision, the brevity penalty, and add-one smoothing on orders >= 2.
pub fn bleu_n<T: Hash + Eq + Clone>(candidates: &[Vec<T>], references: &[Vec<T>], n: usize) -> Result<f64> {
    same_len("bleu", candidates.len(), references.len())?;
    if n == 0 {
        return Err(Error::invalid("BLEU order must be >= 1"));
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        c_len += c.len();
        r_len += r.len();
        for k in 1..=n {
            let cc = ngram_counts(c, k);
            let rc = ngram_counts(r, k);
            matched[k - 1] += clipped_overlap(&cc, &rc);
            total[k - 1] += c.len().saturating_sub(k - 1);
        }
    }
    if c_len == 0 || matched[0] == 0 {
        return Ok(0.0);
    }
    let mut log_p = 0.0;
    for k in 0..n {
        let p = if k == 0 {
            matched[0] as f64 / total[0] as f64
        } else {
            (matched[k] + 1) as f64 / (total[k] + 1) as f64
        };
        log_p += p.ln() / n as f64;
    }
    let bp = if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    Ok(100.0 * bp * log_p.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// ROUGE-n precision, recall and F1 per pair, averaged, on the 0-100 scale.
pub fn rouge_n<T: Hash + Eq + Clone>(candidates: &[Vec<T>], references: &[Vec<T>], n: usize) -> Result<Prf> {
    same_len("rouge", candidates.len(), references.len())?;
    if n == 0 {
        return Err(Error::invalid("ROUGE order must be >= 1"));
    }
    let mut acc = Prf::default();
    for (c, r) in candidates.iter().zip(references) {
        let cc = ngram_counts(c, n);
        let rc = ngram_counts(r, n);
        let overlap = clipped_overlap(&cc, &rc) as f64;
        let c_total = c.len().saturating_sub(n - 1) as f64;
        let r_total = r.len().saturating_sub(n - 1) as f64;
        let p = if c_total > 0.0 { overlap / c_total } else { 0.0 };
        let rec = if r_total > 0.0 { overlap / r_total } else { 0.0 };
        let f = if p + rec > 0.0 { 2.0 * p * rec / (p + rec) } else { 0.0 };
        acc.precision += p;
        acc.recall += rec;
        acc.f1 += f;
    }
    let scale = 100.0 / candidates.len() as f64;
    Ok(Prf {
        precision: acc.precision * scale,
        recall: acc.recall * scale,
        f1: acc.f1 * scale,
    })
}

/// One generated explanation with its reference and ground truth.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalPair {
    pub generated: Vec<String>,
    pub reference: Vec<String>,
    #[serde(default)]
    pub predicted_rating: Option<f64>,
    #[serde(default)]
    pub true_rating: Option<f64>,
    #[serde(default)]
    pub feature: Option<String>,
}

/// Feature matching ratio and the number of pairs skipped for lacking a
/// ground-truth feature.
pub fn fmr(pairs: &[EvalPair]) -> Result<(f64, usize)> {
    let mut hits = 0usize;
    let mut used = 0usize;
    for p in pairs {
        if let Some(f) = &p.feature {
            used += 1;
            if p.generated.iter().any(|t| t == f) {
                hits += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::invalid("no pair carries a feature"));
    }
    Ok((hits as f64 / used as f64, pairs.len() - used))
}

fn features_in<'a>(tokens: &'a [String], lexicon: &HashSet<&str>) -> BTreeSet<&'a str> {
    tokens.iter().map(String::as_str).filter(|t| lexicon.contains(t)).collect()
}

fn lexicon_set(lexicon: &[String]) -> Result<HashSet<&str>> {
    if lexicon.is_empty() {
        return Err(Error::invalid("feature lexicon is empty"));
    }
    Ok(lexicon.iter().map(String::as_str).collect())
}

/// Share of the lexicon mentioned anywhere in the generated sentences.
pub fn fcr(pairs: &[EvalPair], lexicon: &[String]) -> Result<f64> {
    let lex = lexicon_set(lexicon)?;
    let covered: HashSet<&str> = pairs.iter().flat_map(|p| features_in(&p.generated, &lex)).collect();
    Ok(covered.len() as f64 / lex.len() as f64)
}

/// Mean number of shared lexicon features over all unordered pairs of
/// generated sentences. Lower is better.
pub fn div(pairs: &[EvalPair], lexicon: &[String]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::invalid("feature diversity needs at least two sentences"));
    }
    let lex = lexicon_set(lexicon)?;
    let sets: Vec<BTreeSet<&str>> = pairs.iter().map(|p| features_in(&p.generated, &lex)).collect();
    // Sum over pairs of |A ∩ B| equals, per feature, C(count, 2).
    let mut per_feature: HashMap<&str, usize> = HashMap::new();
    for s in &sets {
        for f in s {
            *per_feature.entry(f).or_insert(0) += 1;
        }
    }
    let shared: usize = per_feature.values().map(|c| c * (c - 1) / 2).sum();
    let n = sets.len();
    Ok(shared as f64 / (n * (n - 1) / 2) as f64)
}

/// Fraction of distinct token sequences.
pub fn usr<T: Hash + Eq>(sentences: &[Vec<T>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::invalid("no sentences"));
    }
    let distinct: HashSet<&Vec<T>> = sentences.iter().collect();
    Ok(distinct.len() as f64 / sentences.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub fmr: Option<f64>,
    pub fcr: f64,
    pub div: Option<f64>,
    pub usr: f64,
    pub num_pairs: usize,
    pub num_rated: usize,
    pub num_without_feature: usize,
}

/// Every metric over one evaluation set.
pub fn evaluate(pairs: &[EvalPair], lexicon: &[String]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("no evaluation pairs"));
    }
    let (pred, truth): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .filter_map(|p| Some((p.predicted_rating?, p.true_rating?)))
        .unzip();
    let (rmse_v, mae_v) = if pred.is_empty() {
        (None, None)
    } else {
        (Some(rmse(&pred, &truth)?), Some(mae(&pred, &truth)?))
    };
    let cands: Vec<Vec<String>> = pairs.iter().map(|p| p.generated.clone()).collect();
    let refs: Vec<Vec<String>> = pairs.iter().map(|p| p.reference.clone()).collect();
    let (fmr_v, without) = match fmr(pairs) {
        Ok((v, skipped)) => (Some(v), skipped),
        Err(_) => (None, pairs.len()),
    };
    Ok(MetricReport {
        rmse: rmse_v,
        mae: mae_v,
        bleu1: bleu_n(&cands, &refs, 1)?,
        bleu4: bleu_n(&cands, &refs, 4)?,
        rouge1: rouge_n(&cands, &refs, 1)?,
        rouge2: rouge_n(&cands, &refs, 2)?,
        fmr: fmr_v,
        fcr: fcr(pairs, lexicon)?,
        div: if pairs.len() >= 2 { Some(div(pairs, lexicon)?) } else { None },
        usr: usr(&cands)?,
        num_pairs: pairs.len(),
        num_rated: pred.len(),
        num_without_feature: without,
    })
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "rmse,mae,bleu1,bleu4,rouge1_p,rouge1_r,rouge1_f,rouge2_p,rouge2_r,rouge2_f,fmr,fcr,div,usr,num_pairs";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            opt(self.rmse),
            opt(self.mae),
            self.bleu1,
            self.bleu4,
            self.rouge1.precision,
            self.rouge1.recall,
            self.rouge1.f1,
            self.rouge2.precision,
            self.rouge2.recall,
            self.rouge2.f1,
            opt(self.fmr),
            self.fcr,
            opt(self.div),
            self.usr,
            self.num_pairs
        )
    }

    /// Appends a row, writing the header first if the file is new or empty.
    pub fn append_csv(&self, path: &Path) -> Result<()> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(f, "{}", Self::CSV_HEADER)?;
        }
        writeln!(f, "{}", self.csv_row())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn pair(generated: &str, feature: Option<&str>) -> EvalPair {
        EvalPair {
            generated: toks(generated),
            reference: toks("ref"),
            feature: feature.map(String::from),
            ..Default::default()
        }
    }

    fn lex(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn rating_errors() {
        assert_eq!(rmse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[4.0, 6.0], &[5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(mae(&[4.0, 6.0], &[5.0, 5.0]).unwrap(), 1.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn bleu_examples() {
        let a = vec![toks("the room was clean")];
        assert!((bleu_n(&a, &a, 1).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(bleu_n(&[toks("x y")], &[toks("a b")], 1).unwrap(), 0.0);
        assert_eq!(bleu_n(&[toks("x y")], &[toks("a b")], 4).unwrap(), 0.0);
        // clipped unigram precision 1/2, candidate longer than reference
        assert!((bleu_n(&[toks("a a")], &[toks("a")], 1).unwrap() - 50.0).abs() < 1e-12);
        assert!(bleu_n::<String>(&[], &[], 1).is_err());
    }

    #[test]
    fn rouge_examples() {
        let r = rouge_n(&[toks("a b c")], &[toks("a c")], 1).unwrap();
        assert!((r.precision - 200.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 100.0).abs() < 1e-12);
        assert!((r.f1 - 80.0).abs() < 1e-12);
        let same = rouge_n(&[toks("a b")], &[toks("a b")], 2).unwrap();
        assert_eq!((same.precision, same.recall, same.f1), (100.0, 100.0, 100.0));
        let none = rouge_n(&[toks("a b")], &[toks("c d")], 1).unwrap();
        assert_eq!(none, Prf::default());
    }

    #[test]
    fn fmr_examples() {
        let all = [pair("great screen", Some("screen")), pair("nice fit", Some("fit"))];
        assert_eq!(fmr(&all).unwrap(), (1.0, 0));
        let none = [pair("great", Some("screen")), pair("nice", Some("fit"))];
        assert_eq!(fmr(&none).unwrap().0, 0.0);
        let mixed = [pair("screen", Some("screen")), pair("x", None)];
        assert_eq!(fmr(&mixed).unwrap(), (1.0, 1));
        // exact token, not substring
        assert_eq!(fmr(&[pair("heart", Some("art"))]).unwrap().0, 0.0);
    }

    #[test]
    fn fcr_examples() {
        let l = lex(&["a", "b", "c", "d"]);
        let p = [pair("a x a", None), pair("b", None)];
        assert_eq!(fcr(&p, &l).unwrap(), 0.5);
        let p = [pair("a b", None), pair("c d", None)];
        assert_eq!(fcr(&p, &l).unwrap(), 1.0);
        assert!(fcr(&p, &[]).is_err());
    }

    #[test]
    fn div_examples() {
        let l = lex(&["a", "b", "c"]);
        let shared = [pair("a x", None), pair("a y", None), pair("a z", None)];
        assert_eq!(div(&shared, &l).unwrap(), 1.0);
        let empty = [pair("x", None), pair("y", None)];
        assert_eq!(div(&empty, &l).unwrap(), 0.0);
        let disjoint = [pair("a", None), pair("b", None), pair("c", None)];
        assert_eq!(div(&disjoint, &l).unwrap(), 0.0);
        assert!(div(&shared[..1], &l).is_err());
    }

    #[test]
    fn usr_examples() {
        assert_eq!(usr(&[toks("a"), toks("b")]).unwrap(), 1.0);
        assert_eq!(usr(&[toks("a"), toks("a"), toks("a")]).unwrap(), 1.0 / 3.0);
        assert!((usr(&[toks("a"), toks("a"), toks("b")]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn self_evaluation() {
        let pairs: Vec<EvalPair> = ["the screen is great", "the fit is poor", "the screen is great"]
            .iter()
            .map(|s| EvalPair {
                generated: toks(s),
                reference: toks(s),
                predicted_rating: Some(4.0),
                true_rating: Some(4.0),
                feature: Some("screen".into()),
            })
            .collect();
        let r = evaluate(&pairs, &lex(&["screen", "fit"])).unwrap();
        assert_eq!(r.rmse, Some(0.0));
        assert!((r.bleu1 - 100.0).abs() < 1e-12);
        assert!((r.usr - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.csv_row().split(',').count(), MetricReport::CSV_HEADER.split(',').count());
    }
}
