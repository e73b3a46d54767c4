//! Text embedder over a synthetic vocabulary.
//!
//! In-vocabulary terms map to their stored unit vector. Anything else is
//! embedded by hashing character trigrams of `<term>` into signed buckets
//! and normalizing, so every string gets a deterministic unit vector.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::VocabEntry;
use crate::error::{Error, Result};
use crate::linalg::{l2_normalize, norm};

pub const DEFAULT_EMBEDDER_ID: &str = "synthetic_vocab_v1";
const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Stored form under the `embedders` namespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderArtifact {
    pub embedder_id: String,
    pub dimension: usize,
    pub vocabulary: Vec<VocabEntry>,
}

#[derive(Debug, Clone)]
pub struct Embedder {
    id: String,
    dimension: usize,
    entries: Vec<VocabEntry>,
    lookup: HashMap<String, usize>,
}

pub fn normalize_term(term: &str) -> String {
    term.trim().to_lowercase()
}

impl Embedder {
    pub fn new(id: impl Into<String>, dimension: usize, entries: Vec<VocabEntry>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("embedder dimension must be positive"));
        }
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.vector.len() != dimension {
                return Err(Error::invalid(format!("vocabulary word `{}` has wrong dimension", e.word)));
            }
            if (norm(&e.vector) - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::invalid(format!("vocabulary word `{}` is not unit norm", e.word)));
            }
            if lookup.insert(normalize_term(&e.word), i).is_some() {
                return Err(Error::invalid(format!("vocabulary word `{}` repeated", e.word)));
            }
        }
        Ok(Embedder {
            id: id.into(),
            dimension,
            entries,
            lookup,
        })
    }

    pub fn from_artifact(a: EmbedderArtifact) -> Result<Self> {
        Self::new(a.embedder_id, a.dimension, a.vocabulary)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vocabulary(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn contains(&self, term: &str) -> bool {
        self.lookup.contains_key(&normalize_term(term))
    }

    /// Unit-norm embedding of `term`; fails only for empty terms.
    pub fn embed(&self, term: &str) -> Result<Vec<f64>> {
        let key = normalize_term(term);
        if key.is_empty() {
            return Err(Error::invalid("empty query term"));
        }
        if let Some(&i) = self.lookup.get(&key) {
            return Ok(self.entries[i].vector.clone());
        }
        Ok(hashed_trigram_embedding(&key, self.dimension))
    }
}

fn bucket_and_sign(bytes: &[u8], dimension: usize) -> (usize, f64) {
    let h = Sha256::digest(bytes);
    let n = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
    let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
    ((n % dimension as u64) as usize, sign)
}

/// Signed-bucket sum over character trigrams of `<term>`, L2-normalized.
pub fn hashed_trigram_embedding(term: &str, dimension: usize) -> Vec<f64> {
    let padded: Vec<char> = std::iter::once('<')
        .chain(term.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut v = vec![0.0; dimension];
    for w in padded.windows(3) {
        let gram: String = w.iter().collect();
        let (b, s) = bucket_and_sign(gram.as_bytes(), dimension);
        v[b] += s;
    }
    match l2_normalize(&v) {
        Some(u) => u,
        None => {
            // All trigrams cancelled: fall back to a one-hot of the whole term.
            let (b, s) = bucket_and_sign(term.as_bytes(), dimension);
            let mut one = vec![0.0; dimension];
            one[b] = s;
            one
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn embedder() -> Embedder {
        let e = |w: &str, v: Vec<f64>| VocabEntry { word: w.into(), vector: v };
        Embedder::new(
            DEFAULT_EMBEDDER_ID,
            3,
            vec![e("pasta", vec![1.0, 0.0, 0.0]), e("dough", vec![0.0, 0.6, 0.8])],
        )
        .unwrap()
    }

    #[test]
    fn vocabulary_lookup_is_exact() {
        let e = embedder();
        assert_eq!(e.embed("pasta").unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.embed("  DOUGH ").unwrap(), vec![0.0, 0.6, 0.8]);
    }

    #[test]
    fn empty_term_rejected() {
        assert_eq!(embedder().embed("   ").unwrap_err().code(), crate::ErrorCode::InvalidRequest);
    }

    #[test]
    fn oov_is_deterministic() {
        let e = embedder();
        assert_eq!(e.embed("carbonara").unwrap(), e.embed("carbonara").unwrap());
        assert_ne!(e.embed("carbonara").unwrap(), e.embed("lasagna").unwrap());
    }

    #[test]
    fn rejects_non_unit_vocabulary() {
        let bad = vec![VocabEntry { word: "x".into(), vector: vec![1.0, 1.0] }];
        assert!(Embedder::new("e", 2, bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn oov_embeddings_are_unit_norm(term in "\\PC{1,24}", d in 1usize..64) {
            let key = normalize_term(&term);
            prop_assume!(!key.is_empty());
            let v = hashed_trigram_embedding(&key, d);
            prop_assert!((norm(&v) - 1.0).abs() <= 1e-9);
        }
    }
}
