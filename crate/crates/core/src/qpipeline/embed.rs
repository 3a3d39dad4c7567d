//! Text embeddings for similarity reduction.

use serde::{Deserialize, Serialize};

use crate::domain::QuestionDescriptionPair;

/// An L2-normalized vector. The zero vector normalizes to the first basis
/// vector so every embedding has unit norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn normalized(mut values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "embedding dimension must be positive");
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            values.iter_mut().for_each(|v| *v = 0.0);
            values[0] = 1.0;
        } else {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> EmbeddingVector;
}

/// Seeded signed feature hashing of lowercase character 3-grams.
#[derive(Clone, Debug)]
pub struct HashingEmbedder {
    pub dims: usize,
    pub seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dims: 256, seed: 0 }
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= *b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> EmbeddingVector {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut v = vec![0.0; self.dims.max(1)];
        let mut add = |gram: &[char]| {
            let s: String = gram.iter().collect();
            let h = fnv1a(self.seed, s.as_bytes());
            let idx = (h % v.len() as u64) as usize;
            v[idx] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        if chars.len() < 3 {
            if !chars.is_empty() {
                add(&chars);
            }
        } else {
            chars.windows(3).for_each(&mut add);
        }
        EmbeddingVector::normalized(v)
    }
}

/// Text embedded for a pair: question, a newline, then the description.
pub fn pair_text(pair: &QuestionDescriptionPair) -> String {
    format!(
        "{}\n{}",
        pair.question.text,
        pair.description.as_deref().unwrap_or("")
    )
}

pub fn embed_pair(pair: &QuestionDescriptionPair, embedder: &dyn Embedder) -> EmbeddingVector {
    embedder.embed(&pair_text(pair))
}
