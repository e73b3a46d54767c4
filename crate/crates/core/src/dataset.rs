//! Stored form of a labelled dataset with per-sample semantic embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub sample_id: String,
    pub features: Vec<f64>,
    pub label: usize,
    pub semantic_embedding: Vec<f64>,
    pub is_poisoned: bool,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabEntry {
    pub word: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub seed: u64,
    pub input_dim: usize,
    pub embedding_dim: usize,
    pub class_names: Vec<String>,
    pub poison_rate: f64,
    /// Index of the feature carrying the injected shortcut signal.
    pub spurious_feature: usize,
    pub samples: Vec<Sample>,
    pub vocabulary: Vec<VocabEntry>,
}

impl Dataset {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ds: Dataset =
            serde_json::from_slice(bytes).map_err(|e| Error::invalid(format!("malformed dataset: {e}")))?;
        ds.check()?;
        Ok(ds)
    }

    pub fn check(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.input_dim {
                return Err(Error::invalid(format!("sample {i} has {} features", s.features.len())));
            }
            if s.semantic_embedding.len() != self.embedding_dim {
                return Err(Error::invalid(format!("sample {i} embedding dimension mismatch")));
            }
            if s.label >= self.class_names.len() {
                return Err(Error::invalid(format!("sample {i} label out of range")));
            }
        }
        for w in self.samples.windows(2) {
            if w[0].sample_id >= w[1].sample_id {
                return Err(Error::invalid("sample ids must be strictly ascending"));
            }
        }
        Ok(())
    }

    pub fn sample(&self, sample_id: &str) -> Option<&Sample> {
        self.samples
            .binary_search_by(|s| s.sample_id.as_str().cmp(sample_id))
            .ok()
            .map(|i| &self.samples[i])
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:06}")
}
