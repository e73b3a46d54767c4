//! Synthetic two-cluster dataset with a spurious shortcut channel.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_id, Dataset, Sample, Split, VocabEntry};
use crate::error::{Error, Result};
use crate::linalg::{dot, l2_normalize};

pub const ARTIFACT_WORD: &str = "artifact";
pub const CLUSTER_SIGMA: f64 = 0.5;
/// Mixture weights of a poisoned sample's semantic embedding.
pub const POISON_ARTIFACT_WEIGHT: f64 = 0.6;
pub const POISON_CLASS_WEIGHT: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetParams {
    pub seed: u64,
    pub n_samples: usize,
    pub input_dim: usize,
    pub embedding_dim: usize,
    pub class_names: Vec<String>,
    pub poison_rate: f64,
    pub test_fraction: f64,
    /// Fraction of class-0 test samples carrying the spurious signal.
    pub test_poison_rate: f64,
    pub distractors: Vec<String>,
}

impl DatasetParams {
    pub fn check(&self) -> Result<()> {
        if self.n_samples < 100 {
            return Err(Error::invalid("n_samples must be at least 100"));
        }
        if self.input_dim < 2 {
            return Err(Error::invalid("input_dim must be at least 2"));
        }
        if self.class_names.len() != 2 {
            return Err(Error::invalid("exactly two classes are supported"));
        }
        for (name, v) in [
            ("poison_rate", self.poison_rate),
            ("test_poison_rate", self.test_poison_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1]")));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must be in (0, 1)"));
        }
        let words = self.words();
        if words.len() > self.embedding_dim {
            return Err(Error::invalid(format!(
                "{} vocabulary words do not fit orthonormally in dimension {}",
                words.len(),
                self.embedding_dim
            )));
        }
        let mut sorted = words.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != words.len() {
            return Err(Error::invalid("vocabulary words must be distinct"));
        }
        Ok(())
    }

    /// Class concepts first, then the artifact concept, then distractors.
    pub fn words(&self) -> Vec<String> {
        let mut w = self.class_names.clone();
        w.push(ARTIFACT_WORD.to_string());
        w.extend(self.distractors.iter().cloned());
        w
    }
}

/// `n` orthonormal vectors in `R^d` via twice-applied modified Gram-Schmidt.
pub fn orthonormal_vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for u in &out {
                let p = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
            }
        }
        // Reject near-dependent draws; practically never taken for n <= d.
        if let Some(u) = l2_normalize(&v).filter(|_| crate::linalg::norm(&v) > 1e-6) {
            out.push(u);
        }
        if out.len() < n && out.len() == d {
            return Err(Error::invalid("more vectors requested than dimensions"));
        }
    }
    Ok(out)
}

fn choose(rng: &mut ChaCha8Rng, pool: &[usize], fraction: f64) -> Vec<usize> {
    let mut pool = pool.to_vec();
    pool.shuffle(rng);
    pool.truncate((fraction * pool.len() as f64).round() as usize);
    pool
}

pub fn gen_dataset(p: &DatasetParams) -> Result<Dataset> {
    p.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let clean_dim = p.input_dim - 1;
    let direction = orthonormal_vectors(&mut rng, 1, clean_dim)?.remove(0);
    let noise = Normal::new(0.0, CLUSTER_SIGMA).expect("valid sigma");

    let words = p.words();
    let vectors = orthonormal_vectors(&mut rng, words.len(), p.embedding_dim)?;
    let vocabulary: Vec<VocabEntry> = words
        .into_iter()
        .zip(vectors)
        .map(|(word, vector)| VocabEntry { word, vector })
        .collect();
    let artifact = vocabulary[p.class_names.len()].vector.clone();

    let mut samples = Vec::with_capacity(p.n_samples);
    for i in 0..p.n_samples {
        let label = i % 2;
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let mut features: Vec<f64> = direction
            .iter()
            .map(|u| sign * u + noise.sample(&mut rng))
            .collect();
        features.push(0.0);
        let split = if rand::Rng::random::<f64>(&mut rng) < p.test_fraction {
            Split::Test
        } else {
            Split::Train
        };
        samples.push(Sample {
            sample_id: sample_id(i),
            features,
            label,
            semantic_embedding: vocabulary[label].vector.clone(),
            is_poisoned: false,
            split,
        });
    }

    let pool = |label: usize, split: Split| -> Vec<usize> {
        samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label && s.split == split)
            .map(|(i, _)| i)
            .collect()
    };
    let train_pool = pool(1, Split::Train);
    let test_pool = pool(0, Split::Test);
    let mut poisoned = choose(&mut rng, &train_pool, p.poison_rate);
    // Without a trained shortcut there is nothing for test poisoning to expose.
    if p.poison_rate > 0.0 {
        poisoned.extend(choose(&mut rng, &test_pool, p.test_poison_rate));
    }
    for i in poisoned {
        let s = &mut samples[i];
        s.features[clean_dim] = 1.0;
        s.is_poisoned = true;
        let mix: Vec<f64> = vocabulary[s.label]
            .vector
            .iter()
            .zip(&artifact)
            .map(|(c, a)| POISON_CLASS_WEIGHT * c + POISON_ARTIFACT_WEIGHT * a)
            .collect();
        s.semantic_embedding = l2_normalize(&mix).expect("orthonormal mixture is nonzero");
    }

    let ds = Dataset {
        seed: p.seed,
        input_dim: p.input_dim,
        embedding_dim: p.embedding_dim,
        class_names: p.class_names.clone(),
        poison_rate: p.poison_rate,
        spurious_feature: clean_dim,
        samples,
        vocabulary,
    };
    ds.check()?;
    Ok(ds)
}
