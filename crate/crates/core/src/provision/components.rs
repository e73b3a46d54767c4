//! Offline component analysis: top activating samples, concept embeddings,
//! alignment labels, class relevance and a purity score per unit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contracts::{ActivationStats, AlignmentLabel, ClassRelevance, ComponentRecord};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::linalg::{cosine, l2_normalize};
use crate::lrp::inspect_layer_relevance;
use crate::matrix::Matrix;
use crate::search::Embedder;
use crate::Network;

pub const N_ALIGNMENT_LABELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentParams {
    pub k: usize,
    pub probe_size: usize,
    pub probe_seed: u64,
    pub epsilon: f64,
    /// Split whose samples define top-k, probes and concept embeddings.
    pub reference_split: Split,
}

/// Records (with zero layout) plus the `[units x d]` embedding matrix.
#[derive(Debug, Clone)]
pub struct ComponentAnalysis {
    pub records: Vec<ComponentRecord>,
    pub embeddings: Matrix<f64>,
}

/// Mean pairwise cosine, clamped to [0, 1]. A single sample is trivially pure.
pub fn mean_pairwise_cosine(vectors: &[&[f64]]) -> f64 {
    let n = vectors.len();
    if n < 2 {
        return if n == 1 { 1.0 } else { 0.0 };
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += cosine(vectors[i], vectors[j]);
        }
    }
    (total / (n * (n - 1) / 2) as f64).clamp(0.0, 1.0)
}

/// Top `n` vocabulary words by cosine to `embedding`, ties in vocabulary order.
pub fn alignment_labels(embedder: &Embedder, embedding: &[f64], n: usize) -> Vec<AlignmentLabel> {
    let mut scored: Vec<(usize, f64)> = embedder
        .vocabulary()
        .iter()
        .enumerate()
        .map(|(i, e)| (i, cosine(embedding, &e.vector)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(n)
        .map(|(i, score)| AlignmentLabel {
            word: embedder.vocabulary()[i].word.clone(),
            score,
        })
        .collect()
}

/// `activations` is `[n_samples x units]` in dataset order.
pub fn analyze_components(
    network_id: &str,
    net: &Network,
    ds: &Dataset,
    activations: &Matrix<f64>,
    embedder: &Embedder,
    p: &ComponentParams,
) -> Result<ComponentAnalysis> {
    if p.k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if activations.rows() != ds.samples.len() || activations.cols() != net.n_components() {
        return Err(Error::invalid("activation matrix does not match dataset and model"));
    }
    if embedder.dimension() != ds.embedding_dim {
        return Err(Error::invalid("embedder dimension differs from dataset embeddings"));
    }
    let units = activations.cols();
    let d = ds.embedding_dim;
    let reference: Vec<usize> = (0..ds.samples.len())
        .filter(|&i| ds.samples[i].split == p.reference_split)
        .collect();

    let mut probes = reference.clone();
    probes.shuffle(&mut ChaCha8Rng::seed_from_u64(p.probe_seed));
    probes.truncate(p.probe_size);
    probes.sort_unstable();
    let n_classes = net.output_dim();
    // relevance_sum[c][unit]
    let mut relevance_sum = vec![vec![0.0; units]; n_classes];
    for &i in &probes {
        let x = &ds.samples[i].features;
        let pred = net.forward(x, None)?;
        for (c, sums) in relevance_sum.iter_mut().enumerate() {
            let r = inspect_layer_relevance(net, x, &pred.trace, c, p.epsilon)?;
            sums.iter_mut().zip(r.result()).for_each(|(s, v)| *s += v);
        }
    }

    let mut embeddings = Matrix::zeros(units, d);
    let mut records = Vec::with_capacity(units);
    let mut order: Vec<usize> = reference.clone();
    for u in 0..units {
        let column = |i: usize| activations.get(i, u);
        // Sample ids ascend with dataset index, so index order breaks ties.
        order.sort_by(|&a, &b| column(b).total_cmp(&column(a)).then(a.cmp(&b)));
        let top: Vec<usize> = order.iter().copied().take(p.k).collect();
        let top_acts: Vec<f64> = top.iter().map(|&i| column(i)).collect();
        let degenerate = top_acts.iter().all(|a| *a == 0.0);

        let top_embeddings: Vec<&[f64]> = top.iter().map(|&i| ds.samples[i].semantic_embedding.as_slice()).collect();
        let embedding = if degenerate {
            vec![0.0; d]
        } else {
            let mut mean = vec![0.0; d];
            for e in &top_embeddings {
                mean.iter_mut().zip(*e).for_each(|(m, x)| *m += x);
            }
            mean.iter_mut().for_each(|m| *m /= top.len() as f64);
            l2_normalize(&mean).unwrap_or_else(|| vec![0.0; d])
        };
        let degenerate = degenerate || embedding.iter().all(|x| *x == 0.0);
        embeddings.row_mut(u).copy_from_slice(&embedding);

        let n_rows = activations.rows().max(1) as f64;
        let (mut max, mut sum) = (f64::NEG_INFINITY, 0.0);
        for i in 0..activations.rows() {
            max = max.max(column(i));
            sum += column(i);
        }
        records.push(ComponentRecord {
            network_id: network_id.to_string(),
            neuron_id: u as u64,
            embedding: embedding.clone(),
            layout_xy: [0.0, 0.0],
            top_sample_ids: top.iter().map(|&i| ds.samples[i].sample_id.clone()).collect(),
            top_sample_activations: top_acts,
            activation_stats: ActivationStats {
                max: if max.is_finite() { max } else { 0.0 },
                mean: sum / n_rows,
            },
            alignment_labels: if degenerate {
                Vec::new()
            } else {
                alignment_labels(embedder, &embedding, N_ALIGNMENT_LABELS)
            },
            relevant_classes: (0..n_classes)
                .map(|c| ClassRelevance {
                    class_index: c,
                    mean_relevance: if probes.is_empty() {
                        0.0
                    } else {
                        relevance_sum[c][u] / probes.len() as f64
                    },
                })
                .collect(),
            quality: if degenerate { 0.0 } else { mean_pairwise_cosine(&top_embeddings) },
            degenerate,
        });
    }
    Ok(ComponentAnalysis { records, embeddings })
}
