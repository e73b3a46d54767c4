//! Seeded fixtures shared by tests, benchmarks and the acceptance suite.
//!
//! Everything here goes through the public store and model-service APIs,
//! so a fixture is indistinguishable from provisioned data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contracts::{LayerSpec, ModelSpec, VersionRef};
use crate::dataset::VocabEntry;
use crate::error::Result;
use crate::matrix::{Matrix, MATRIX_MEDIA_TYPE};
use crate::model_service::ModelService;
use crate::provision::orthonormal_vectors;
use crate::search::EmbedderArtifact;
use crate::store::{names, Provenance, JSON_MEDIA_TYPE};

/// Uniform entries in [-1, 1] rounded to multiples of 1/64, so sums stay exact.
fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    (rng.random_range(-64i32..=64) as f64) / 64.0
}

/// `dense(hidden) -> relu -> dense(classes)` with seeded dyadic weights.
pub fn mlp_spec(name: &str, input_dim: usize, hidden: usize, classes: usize, seed: u64, zero_bias: bool) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense = |out: usize, inp: usize, rng: &mut ChaCha8Rng| {
        let weights = (0..out).map(|_| (0..inp).map(|_| dyadic(rng)).collect()).collect();
        let bias = (0..out).map(|_| if zero_bias { 0.0 } else { dyadic(rng) }).collect();
        LayerSpec::Dense { weights, bias }
    };
    let l0 = dense(hidden, input_dim, &mut rng);
    let l2 = dense(classes, hidden, &mut rng);
    ModelSpec {
        name: name.to_string(),
        input_dim,
        class_names: (0..classes).map(|c| format!("class{c}")).collect(),
        layers: vec![l0, LayerSpec::Relu, l2],
        inspect_layer: 1,
        provenance_note: format!("fixture seed={seed}"),
        metrics: Default::default(),
    }
}

#[derive(Debug, Clone)]
pub struct SearchFixture {
    pub model: VersionRef,
    pub embedder: VersionRef,
    pub embeddings: VersionRef,
    pub matrix: Matrix<f64>,
    pub vocabulary: Vec<VocabEntry>,
}

/// Registers a model with `n_components` inspect units and publishes an
/// embedder plus component embeddings for it.
///
/// The matrix contains exact duplicate rows, a scaled copy and a zero row,
/// so rankings exercise the tie rule and the degenerate-norm guard.
pub fn publish_search_fixture(
    models: &ModelService,
    name: &str,
    embedder_id: &str,
    n_components: usize,
    dimension: usize,
    seed: u64,
) -> Result<SearchFixture> {
    let spec = mlp_spec(name, 4, n_components, 2, seed, false);
    let model = models.register_model(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let words = ["artifact", "circle", "square", "stripe", "ring", "grid"];
    let n_words = words.len().min(dimension);
    let vocabulary: Vec<VocabEntry> = words[..n_words]
        .iter()
        .zip(orthonormal_vectors(&mut rng, n_words, dimension)?)
        .map(|(w, v)| VocabEntry {
            word: w.to_string(),
            vector: v,
        })
        .collect();
    let artifact = EmbedderArtifact {
        embedder_id: embedder_id.to_string(),
        dimension,
        vocabulary: vocabulary.clone(),
    };
    let store = models.data().store();
    let embedder = store.put(
        names::EMBEDDERS,
        embedder_id,
        &crate::contracts::to_canonical_bytes(&artifact)?,
        JSON_MEDIA_TYPE,
        Provenance::root("fixture_embedder"),
        None,
    )?;

    let mut matrix = Matrix::zeros(n_components, dimension);
    for i in 0..n_components {
        let row: Vec<f64> = match i % 10 {
            // Exact copies of a vocabulary vector: score 1 for that word, tied.
            3 | 7 => vocabulary[i % n_words].vector.clone(),
            5 => matrix.row(i - 5).iter().map(|x| x * 4.0).collect(),
            9 if i == 9 => vec![0.0; dimension],
            _ => (0..dimension).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        matrix.row_mut(i).copy_from_slice(&row);
    }
    let embeddings = store.put(
        names::EMBEDDINGS,
        &names::embeddings_key(&model, embedder_id),
        &matrix.encode(),
        MATRIX_MEDIA_TYPE,
        Provenance::new("fixture_embeddings", &seed, vec![model.clone(), embedder.clone()])?.with_model(model.clone()),
        None,
    )?;
    Ok(SearchFixture {
        model,
        embedder,
        embeddings,
        matrix,
        vocabulary,
    })
}
