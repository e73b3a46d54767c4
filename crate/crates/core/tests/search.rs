mod common;

use std::time::Instant;

use common::Stack;
use xsys_core::contracts::{canonical_serialize, SearchRequest, SearchResponse};
use xsys_core::fixtures::{publish_search_fixture, SearchFixture};
use xsys_core::matrix::Matrix;
use xsys_core::search::{hashed_trigram_embedding, DEFAULT_EMBEDDER_ID};
use xsys_core::store::{names, network_id_of};
use xsys_core::ErrorCode;

const N: usize = 50;
const D: usize = 8;

fn fixture(s: &Stack) -> SearchFixture {
    publish_search_fixture(&s.models, "fx", DEFAULT_EMBEDDER_ID, N, D, 42).unwrap()
}

fn request(network_id: &str, terms: &[&str]) -> SearchRequest {
    SearchRequest {
        query: Some(terms.iter().map(|t| t.to_string()).collect()),
        network_id: network_id.into(),
        used_foundation_model: DEFAULT_EMBEDDER_ID.into(),
    }
}

/// Independent oracle: naive cosine per row, then repeated selection of the
/// best remaining (highest score, lowest id).
fn oracle(query: &[f64], m: &Matrix<f64>) -> Vec<(u64, f64)> {
    let mut q_sq = 0.0;
    for x in query {
        q_sq += x * x;
    }
    let mut scores: Vec<(u64, f64)> = (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let (mut d, mut r_sq) = (0.0, 0.0);
            for k in 0..row.len() {
                d += query[k] * row[k];
                r_sq += row[k] * row[k];
            }
            let s = if q_sq < 1e-24 || r_sq < 1e-24 {
                0.0
            } else {
                (d / (q_sq * r_sq).sqrt()).clamp(-1.0, 1.0)
            };
            (i as u64, s)
        })
        .collect();
    let mut out = Vec::new();
    while !scores.is_empty() {
        let mut best = 0;
        for j in 1..scores.len() {
            let (id, s) = scores[j];
            let (bid, bs) = scores[best];
            if s > bs || (s == bs && id < bid) {
                best = j;
            }
        }
        out.push(scores.remove(best));
    }
    out
}

fn assert_matches_oracle(r: &SearchResponse, query: &[f64], m: &Matrix<f64>) {
    let expected = oracle(query, m);
    let got: Vec<(u64, f64)> = r.neurons.iter().map(|n| (n.neuron_id, n.alignment_score)).collect();
    assert_eq!(got, expected, "query {}", r.query);
    assert_eq!(r.max_alignment, expected[0].1);
    assert_eq!(r.min_alignment, expected[expected.len() - 1].1);
}

#[test]
fn fifty_component_ranking_matches_oracle_exactly() {
    let s = Stack::new();
    let fx = fixture(&s);
    let started = Instant::now();
    let net = network_id_of(&fx.model);
    s.search.init(&net, DEFAULT_EMBEDDER_ID).unwrap();
    let terms = ["artifact", "circle", "square", "carbonara", "Stripe ", "x"];
    let responses = s.search.search(&request(&net, &terms)).unwrap();
    assert!(started.elapsed().as_secs_f64() < 1.0);
    assert_eq!(responses.len(), terms.len());
    for (r, t) in responses.iter().zip(terms) {
        assert_eq!(r.query, t);
        let ctx = s.search.init(&net, DEFAULT_EMBEDDER_ID).unwrap();
        let q = ctx.embedder().embed(t).unwrap();
        assert_matches_oracle(r, &q, &fx.matrix);
        canonical_serialize(r).unwrap();
    }
}

#[test]
fn ties_and_degenerate_rows_follow_the_rules() {
    let s = Stack::new();
    let fx = fixture(&s);
    let net = network_id_of(&fx.model);
    s.search.init(&net, DEFAULT_EMBEDDER_ID).unwrap();
    // Rows 3, 27 and 33 all hold vocabulary[3] exactly.
    let word = fx.vocabulary[3].word.clone();
    let r = &s.search.search(&request(&net, &[&word])).unwrap()[0];
    let top: Vec<u64> = r.neurons.iter().take_while(|n| n.alignment_score == 1.0).map(|n| n.neuron_id).collect();
    assert_eq!(top, [3, 27, 33]);
    let zero = r.neurons.iter().find(|n| n.neuron_id == 9).unwrap();
    assert_eq!(zero.alignment_score, 0.0);
}

#[test]
fn scaling_a_component_keeps_its_score() {
    let s = Stack::new();
    let fx = fixture(&s);
    let net = network_id_of(&fx.model);
    s.search.init(&net, DEFAULT_EMBEDDER_ID).unwrap();
    let r = &s.search.search(&request(&net, &["lasagna"])).unwrap()[0];
    let score = |id: u64| r.neurons.iter().find(|n| n.neuron_id == id).unwrap().alignment_score;
    // Row 15 is 4x row 10.
    assert!((score(15) - score(10)).abs() <= 1e-15);
}

#[test]
fn exact_vocabulary_match_scores_one() {
    let s = Stack::new();
    let fx = fixture(&s);
    let net = network_id_of(&fx.model);
    s.search.init(&net, DEFAULT_EMBEDDER_ID).unwrap();
    let r = &s.search.search(&request(&net, &[&fx.vocabulary[3].word])).unwrap()[0];
    assert_eq!(r.max_alignment, 1.0);
    assert_eq!(r.neurons[0].neuron_id, 3);
}

#[test]
fn oov_terms_use_the_hashed_embedding() {
    let s = Stack::new();
    let fx = fixture(&s);
    let net = network_id_of(&fx.model);
    let ctx = s.search.init(&net, DEFAULT_EMBEDDER_ID).unwrap();
    assert_eq!(ctx.embedder().embed("  Carbonara").unwrap(), hashed_trigram_embedding("carbonara", D));
}

#[test]
fn uninitialized_context_is_not_found() {
    let s = Stack::new();
    let fx = fixture(&s);
    let e = s.search.search(&request(&network_id_of(&fx.model), &["x"])).unwrap_err();
    assert_eq!(e.code(), ErrorCode::NotFound);
    let e = s.search.init("nobody", DEFAULT_EMBEDDER_ID).unwrap_err();
    assert_eq!(e.code(), ErrorCode::NotFound);
    let e = s.search.init(&network_id_of(&fx.model), "other_embedder").unwrap_err();
    assert_eq!(e.code(), ErrorCode::NotFound);
}

#[test]
fn missing_query_is_invalid() {
    let s = Stack::new();
    let fx = fixture(&s);
    let net = network_id_of(&fx.model);
    s.search.init(&net, DEFAULT_EMBEDDER_ID).unwrap();
    let mut req = request(&net, &[]);
    req.query = None;
    assert_eq!(s.search.search(&req).unwrap_err().code(), ErrorCode::InvalidRequest);
}

#[test]
fn context_loads_embeddings_once() {
    let s = Stack::new();
    let fx = fixture(&s);
    let net = network_id_of(&fx.model);
    let before = s.store.fetches().namespace(names::EMBEDDINGS);
    std::thread::scope(|scope| {
        for _ in 0..8 {
            scope.spawn(|| {
                s.search.init(&net, DEFAULT_EMBEDDER_ID).unwrap();
                s.search.search(&request(&net, &["artifact", "ring"])).unwrap();
            });
        }
    });
    assert_eq!(s.store.fetches().namespace(names::EMBEDDINGS) - before, 1);
    assert_eq!(s.models.calls(), 0);
}

#[test]
fn pinned_versions_resolve_by_hash() {
    let s = Stack::new();
    let fx = fixture(&s);
    let pinned = format!("fx@{}", fx.model.version);
    s.search.init(&pinned, DEFAULT_EMBEDDER_ID).unwrap();
    let a = s.search.search(&request(&pinned, &["grid"])).unwrap();
    let b = s.search.search(&request("fx", &["grid"])).unwrap();
    assert_eq!(a, b);
}
