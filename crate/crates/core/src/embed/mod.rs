//! Text embeddings behind a provider abstraction, plus cosine similarity.
//!
//! Providers return unit-length vectors, so downstream cosine is a dot
//! product. Text is normalized (trim, collapse whitespace, case-fold) before
//! it reaches a provider.

mod cache;
mod remote;

use std::collections::HashMap;
use std::sync::RwLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::stable_u64;
use crate::text::normalize;

pub use cache::CachedEmbedder;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, EMBED_API_KEY_ENV};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding provider error: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    /// Scale to unit L2 norm. A zero vector is returned unchanged.
    pub fn normalized(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return EmbeddingVector { values };
        }
        EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn model(&self) -> &str {
        self.name()
    }

    fn dimension(&self) -> usize;

    /// Embed already-normalized, non-empty text.
    fn embed_normalized(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    /// Batch variant; remote providers override it to send one request.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed_normalized(t)).collect()
    }
}

/// Normalize `text` and embed it with `provider`.
pub fn embed(provider: &dyn EmbeddingProvider, text: &str) -> Result<EmbeddingVector, EmbedError> {
    let text = normalize(text);
    if text.is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let v = provider.embed_normalized(&text)?;
    if v.dimension() != provider.dimension() {
        return Err(EmbedError::DimensionMismatch(v.dimension(), provider.dimension()));
    }
    Ok(v)
}

/// Cosine similarity, clamped to [-1, 1]. Zero vectors have similarity 0.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// Offline provider: each normalized text maps to a pseudo-random unit
/// vector seeded from a stable 64-bit hash of the text. Tests may plant
/// exact vectors for chosen texts.
pub struct DeterministicEmbedder {
    dimension: usize,
    planted: RwLock<HashMap<String, EmbeddingVector>>,
}

impl DeterministicEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension >= 2, "dimension must be at least 2");
        DeterministicEmbedder {
            dimension,
            planted: RwLock::new(HashMap::new()),
        }
    }

    /// Override the vector for `text` (normalized before storing). The
    /// vector is unit-normalized on the way in.
    pub fn plant(&self, text: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.dimension, "planted vector dimension");
        self.planted
            .write()
            .unwrap()
            .insert(normalize(text), EmbeddingVector::normalized(values));
    }

    fn hashed(&self, text: &str) -> EmbeddingVector {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_u64(text));
        let values: Vec<f64> = (0..self.dimension)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        EmbeddingVector::normalized(values)
    }
}

impl EmbeddingProvider for DeterministicEmbedder {
    fn name(&self) -> &str {
        "deterministic"
    }

    fn model(&self) -> &str {
        "sha256-chacha8"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_normalized(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if let Some(v) = self.planted.read().unwrap().get(text) {
            return Ok(v.clone());
        }
        Ok(self.hashed(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let e = DeterministicEmbedder::new(384);
        let a = embed(&e, "the zoo").unwrap();
        let b = embed(&e, "  The   ZOO ").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dimension(), 384);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        let c = embed(&e, "aquarium").unwrap();
        assert_ne!(embed(&e, "zoo").unwrap(), c);
    }

    #[test]
    fn empty_text_is_rejected() {
        let e = DeterministicEmbedder::new(8);
        assert!(matches!(embed(&e, ""), Err(EmbedError::EmptyText)));
        assert!(matches!(embed(&e, " \t "), Err(EmbedError::EmptyText)));
    }

    #[test]
    fn planted_vectors_override_hashing() {
        let e = DeterministicEmbedder::new(2);
        e.plant("Zoo", vec![3.0, 4.0]);
        let v = embed(&e, "zoo").unwrap();
        assert_eq!(v.values, vec![0.6, 0.8]);
    }

    #[test]
    fn cosine_examples() {
        let a = EmbeddingVector::new(vec![0.6, 0.8]);
        let b = EmbeddingVector::new(vec![0.8, 0.6]);
        // 0.6 * 0.8 + 0.8 * 0.6
        assert!((cosine(&a, &b).unwrap() - 0.96).abs() < 1e-12);
        let e1 = EmbeddingVector::new(vec![1.0, 0.0, 0.0]);
        let e2 = EmbeddingVector::new(vec![0.0, 1.0, 0.0]);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(cosine(&a, &e1), Err(EmbedError::DimensionMismatch(2, 3))));
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_bounded(a in "[a-z ]{1,20}", b in "[a-z ]{1,20}") {
            prop_assume!(!a.trim().is_empty() && !b.trim().is_empty());
            let e = DeterministicEmbedder::new(16);
            let va = embed(&e, &a).unwrap();
            let vb = embed(&e, &b).unwrap();
            let ab = cosine(&va, &vb).unwrap();
            prop_assert_eq!(ab, cosine(&vb, &va).unwrap());
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
            prop_assert!((cosine(&va, &va).unwrap() - 1.0).abs() < 1e-9);
        }
    }
}
