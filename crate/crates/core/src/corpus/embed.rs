use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

/// Maps a token sequence to a unit-length sentence vector.
pub trait SentenceEmbedder {
    fn embed(&self, tokens: &[u32]) -> Result<Vec<f64>>;
}

/// L2-normalized mean of word vectors.
#[derive(Debug, Clone)]
pub struct MeanWordEmbedder {
    table: Tensor,
}

impl MeanWordEmbedder {
    pub fn new(table: Tensor) -> Self {
        Self { table }
    }

    /// Gaussian word table seeded from `seed`.
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let data = rng::normal_vec(&mut rng::stream(seed, "embedder"), vocab_size * dim);
        Self::new(Tensor::matrix(vocab_size, dim, data).expect("table shape"))
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }
}

impl SentenceEmbedder for MeanWordEmbedder {
    fn embed(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        sentence_embed(tokens, &self.table)
    }
}

pub fn sentence_embed(tokens: &[u32], word_vectors: &Tensor) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::invalid("cannot embed an empty sentence"));
    }
    let (n, d) = word_vectors.dims2();
    let mut acc = vec![0.0; d];
    for &t in tokens {
        let t = t as usize;
        if t >= n {
            return Err(Error::UnknownId {
                kind: "token",
                id: t.to_string(),
            });
        }
        acc.iter_mut()
            .zip(word_vectors.row_slice(t))
            .for_each(|(a, v)| *a += v);
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        acc.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(acc)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}
