mod common;

use common::{provisioned, Stack};
use xsys_core::contracts::{
    CompareRequest, InspectionRequest, LayerSpec, ModelSpec, SampleRef, SteeringModifier, VersionRef, WhatIfRequest,
};
use xsys_core::dataset::Split;
use xsys_core::fixtures::mlp_spec;
use xsys_core::linalg::cosine;
use xsys_core::lrp::{propagate, DEFAULT_EPSILON};
use xsys_core::store::{names, network_id_of};
use xsys_core::{ErrorCode, Network};

const EPS: f64 = DEFAULT_EPSILON;

fn sign(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// 2 -> 3 -> relu -> 2, hand-sized so activations and logits are exact.
fn tiny_spec() -> ModelSpec {
    ModelSpec {
        name: "tiny".into(),
        input_dim: 2,
        class_names: vec!["c0".into(), "c1".into()],
        layers: vec![
            LayerSpec::Dense {
                weights: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
                bias: vec![0.0, 0.0, 0.0],
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                weights: vec![vec![0.5, -1.0, 0.25], vec![1.0, 0.5, -0.5]],
                bias: vec![0.125, 0.0],
            },
        ],
        inspect_layer: 1,
        provenance_note: String::new(),
        metrics: Default::default(),
    }
}

fn inline(x: &[f64]) -> SampleRef {
    SampleRef::Inline(x.to_vec())
}

fn inspect_req(net: &str, x: &[f64], steering: Option<Vec<SteeringModifier>>, target: Option<usize>) -> InspectionRequest {
    InspectionRequest {
        network_id: net.into(),
        sample_id: inline(x),
        steering,
        target_class: target,
    }
}

#[test]
fn single_dense_tail_matches_frozen_closed_form() {
    let s = Stack::new();
    let m = s.models.register_model(&tiny_spec()).unwrap();
    // h = [2, 1, 3]; logits = [0.875, 1.0]; predicted class 1.
    let r = s.inspection.attribute(&m, &[2.0, 1.0], None).unwrap();
    assert_eq!(r.target_class, 1);
    assert_eq!(r.output_relevance, 1.0);
    let expected = [1.999998000002, 0.4999995000005, -1.4999985000015];
    for (got, want) in r.result().iter().zip(expected) {
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
    // Target 0 goes through a biased logit: z = 0.875.
    let r0 = s.inspection.attribute(&m, &[2.0, 1.0], Some(0)).unwrap();
    let scale = 0.875 / (0.875 + EPS);
    for (got, contribution) in r0.result().iter().zip([1.0, -1.0, 0.75]) {
        assert!((got - contribution * scale).abs() <= 1e-9);
    }
}

#[test]
fn closed_form_on_random_tails() {
    let s = Stack::new();
    for seed in 0..20 {
        let spec = mlp_spec("rand", 5, 7, 3, seed, false);
        let m = s.models.register_model(&spec).unwrap();
        let net = Network::from_spec(&spec).unwrap();
        let x: Vec<f64> = (0..5).map(|i| ((i as f64) - 2.0) * 0.75 + seed as f64 * 0.1).collect();
        let p = net.forward(&x, None).unwrap();
        let a = &p.trace.layers[1];
        let LayerSpec::Dense { weights, bias } = &spec.layers[2] else { unreachable!() };
        for t in 0..3 {
            let r = s.inspection.attribute(&m, &x, Some(t)).unwrap();
            let z: f64 = (0..7).map(|i| a[i] * weights[t][i]).sum::<f64>() + bias[t];
            let r_t = p.logits[t];
            for i in 0..7 {
                let want = a[i] * weights[t][i] * r_t / (z + EPS * sign(z));
                assert!((r.result()[i] - want).abs() <= 1e-9, "seed {seed} t {t} i {i}");
            }
        }
    }
}

/// dense -> relu -> dense -> relu -> dense with zero biases, inspect at layer 1.
fn deep_zero_bias(seed: u64) -> Network {
    let a = mlp_spec("a", 6, 9, 5, seed, true);
    let b = mlp_spec("b", 5, 4, 3, seed + 100, true);
    let mut layers = a.layers[..3].to_vec();
    layers.push(LayerSpec::Relu);
    layers.extend(b.layers[2..].iter().cloned());
    // b's head expects 4 inputs; rebuild it at width 5.
    let LayerSpec::Dense { weights, bias } = &b.layers[0] else { unreachable!() };
    let head_w: Vec<Vec<f64>> = (0..3).map(|k| (0..5).map(|j| weights[j % 4][k % 4] - 0.125 * j as f64).collect()).collect();
    layers[4] = LayerSpec::Dense {
        weights: head_w,
        bias: vec![0.0; 3],
    };
    let _ = bias;
    let spec = ModelSpec {
        name: "deep".into(),
        input_dim: 6,
        class_names: (0..3).map(|c| c.to_string()).collect(),
        layers,
        inspect_layer: 1,
        provenance_note: String::new(),
        metrics: Default::default(),
    };
    Network::from_spec(&spec).unwrap()
}

/// Inputs scaled so every pre-activation and logit is well away from zero:
/// the epsilon rule leaks `eps / (|z_k| + eps)` of each unit's relevance.
fn conservation_input(seed: u64) -> Vec<f64> {
    (0..6).map(|i| 8.0 * (0.3 * i as f64 - 0.6 + 0.05 * seed as f64) + 1.0).collect()
}

#[test]
fn zero_bias_conserves_per_dense_hop() {
    let mut checked = 0;
    for seed in 0..25 {
        let net = deep_zero_bias(seed);
        let x = conservation_input(seed);
        let p = net.forward(&x, None).unwrap();
        for t in 0..3 {
            let logit = p.logits[t];
            if logit.abs() < 1.0 {
                continue;
            }
            let trace = propagate(&net, &x, &p.trace, t, EPS, 0).unwrap();
            let total = |pos: usize| trace.at(pos).unwrap().iter().sum::<f64>();
            assert_eq!(total(5), logit);
            for (upper, lower) in [(5, 4), (3, 2), (1, 0)] {
                let (hi, lo) = (total(upper), total(lower));
                assert!((hi - lo).abs() <= 1e-6 * hi.abs(), "seed {seed} hop {upper}->{lower}: {hi} vs {lo}");
            }
            // Relu hops are exact pass-through.
            assert_eq!(trace.at(4), trace.at(3));
            assert_eq!(trace.at(2), trace.at(1));
            checked += 1;
        }
    }
    assert!(checked >= 40, "only {checked} cases had |logit| >= 1");
}

#[test]
fn zero_bias_leak_is_exactly_the_epsilon_share() {
    for seed in 0..25 {
        let net = deep_zero_bias(seed);
        let x: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.6 + 0.05 * seed as f64).collect();
        let p = net.forward(&x, None).unwrap();
        for t in 0..3 {
            let trace = propagate(&net, &x, &p.trace, t, EPS, 0).unwrap();
            for (upper, lower, layer) in [(5, 4, 4), (3, 2, 2), (1, 0, 0)] {
                let z = &p.trace.layers[layer];
                let r_hi = trace.at(upper).unwrap();
                let expected: f64 = r_hi.iter().zip(z).map(|(r, z)| r * z / (z + EPS * sign(*z))).sum();
                let got: f64 = trace.at(lower).unwrap().iter().sum();
                assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "seed {seed} hop {upper}");
                assert!((got - r_hi.iter().sum::<f64>()).abs() <= EPS * r_hi.len() as f64 * 1.01);
            }
        }
    }
}

#[test]
fn biased_conservation_accounts_for_absorbed_shares() {
    for seed in 0..25 {
        let spec = mlp_spec("b", 4, 6, 2, seed, false);
        let net = Network::from_spec(&spec).unwrap();
        let x = [0.5, -0.25, 1.0, 0.75];
        let p = net.forward(&x, None).unwrap();
        let LayerSpec::Dense { bias, .. } = &spec.layers[2] else { unreachable!() };
        for t in 0..2 {
            let trace = propagate(&net, &x, &p.trace, t, EPS, 2).unwrap();
            let z = p.logits[t];
            let bias_share = bias[t] / (z + EPS * sign(z)) * p.logits[t];
            let sum: f64 = trace.result().iter().sum();
            assert!((sum + bias_share - p.logits[t]).abs() <= 1e-4, "seed {seed}");
        }
    }
}

#[test]
fn zero_input_zero_bias_gives_zero_relevance() {
    let s = Stack::new();
    let m = s.models.register_model(&mlp_spec("z", 4, 6, 2, 1, true)).unwrap();
    let r = s.inspection.attribute(&m, &[0.0; 4], None).unwrap();
    assert!(r.result().iter().all(|v| *v == 0.0));
}

#[test]
fn inactive_units_get_zero_relevance() {
    let s = Stack::new();
    let m = s.models.register_model(&tiny_spec()).unwrap();
    // x = [-1, 2]: h = [0, 2, 1]; unit 0 is dead.
    let resp = s.inspection.inspect(&m, &inspect_req("tiny", &[-1.0, 2.0], None, None)).unwrap();
    let unit0 = resp.components.iter().find(|c| c.neuron_id == 0).unwrap();
    assert_eq!(unit0.activation_before, 0.0);
    assert_eq!(unit0.relevance, 0.0);
}

#[test]
fn empty_and_zero_steering_are_identity() {
    let s = Stack::new();
    let m = s.models.register_model(&mlp_spec("m", 4, 6, 3, 2, false)).unwrap();
    let x = [0.25, -0.5, 1.0, 0.125];
    let zero: Vec<SteeringModifier> = (0..6).map(|u| SteeringModifier { layer: 1, unit: u, m: 0.0 }).collect();
    for steering in [None, Some(vec![]), Some(zero)] {
        let r = s.inspection.inspect(&m, &inspect_req("m", &x, steering, None)).unwrap();
        assert_eq!(r.logits_after, r.logits_before);
        assert_eq!(r.predicted_after, r.predicted_before);
        assert!(r.components.iter().all(|c| c.activation_after == c.activation_before));
    }
}

#[test]
fn suppression_zeroes_the_unit_and_matches_direct_predict() {
    let s = Stack::new();
    let m = s.models.register_model(&mlp_spec("m", 4, 6, 3, 2, false)).unwrap();
    let x = [0.25, -0.5, 1.0, 0.125];
    let steering = vec![SteeringModifier { layer: 1, unit: 2, m: -1.0 }, SteeringModifier { layer: 1, unit: 4, m: 0.5 }];
    let r = s.inspection.inspect(&m, &inspect_req("m", &x, Some(steering.clone()), None)).unwrap();
    let unit = |id| r.components.iter().find(|c| c.neuron_id == id).unwrap();
    assert_eq!(unit(2).activation_after, 0.0);
    assert_eq!(unit(4).activation_after, unit(4).activation_before * 1.5);
    let direct = s.models.predict(&m, &x, Some(&steering)).unwrap();
    assert_eq!(r.logits_after, direct.logits);
}

#[test]
fn components_ranked_by_absolute_relevance() {
    let s = Stack::new();
    let m = s.models.register_model(&mlp_spec("m", 4, 12, 3, 8, false)).unwrap();
    let r = s.inspection.inspect(&m, &inspect_req("m", &[1.0, 0.5, -0.5, 0.25], None, None)).unwrap();
    assert_eq!(r.components.len(), 12);
    for w in r.components.windows(2) {
        let (a, b) = (w[0].relevance.abs(), w[1].relevance.abs());
        assert!(a > b || (a == b && w[0].neuron_id < w[1].neuron_id));
    }
    let again = s.inspection.inspect(&m, &inspect_req("m", &[1.0, 0.5, -0.5, 0.25], None, None)).unwrap();
    assert_eq!(r, again);
}

#[test]
fn whatif_linear_tail_delta() {
    let s = Stack::new();
    let spec = mlp_spec("m", 4, 6, 3, 21, false);
    let m = s.models.register_model(&spec).unwrap();
    let net = Network::from_spec(&spec).unwrap();
    let LayerSpec::Dense { weights, .. } = &spec.layers[2] else { unreachable!() };
    let x = [0.75, 0.5, -0.25, 1.0];
    let a = net.forward(&x, None).unwrap().trace.layers[1].clone();
    for unit in 0..6 {
        for m_val in [-1.0, -0.3, 0.6, 1.0] {
            let req = WhatIfRequest {
                network_id: "m".into(),
                sample_id: inline(&x),
                steering: vec![SteeringModifier { layer: 1, unit, m: m_val }],
                target_class: None,
            };
            let r = s.inspection.whatif(&m, &req).unwrap();
            for k in 0..3 {
                let want = m_val * a[unit] * weights[k][unit];
                assert!((r.delta_logits[k] - want).abs() <= 1e-9, "unit {unit} m {m_val} k {k}");
            }
        }
    }
}

#[test]
fn whatif_zero_steering_and_baseline_cache() {
    let s = Stack::new();
    let m = s.models.register_model(&mlp_spec("m", 4, 6, 3, 21, false)).unwrap();
    let req = WhatIfRequest {
        network_id: "m".into(),
        sample_id: inline(&[0.1, 0.2, 0.3, 0.4]),
        steering: vec![SteeringModifier { layer: 1, unit: 0, m: 0.0 }],
        target_class: None,
    };
    let first = s.inspection.whatif(&m, &req).unwrap();
    assert!(first.delta_logits.iter().all(|d| *d == 0.0));
    assert_eq!(first.before, first.after);
    assert_eq!(s.inspection.baseline_stats(), (0, 1));
    let second = s.inspection.whatif(&m, &WhatIfRequest { steering: vec![SteeringModifier { layer: 1, unit: 1, m: -1.0 }], ..req.clone() }).unwrap();
    assert_eq!(s.inspection.baseline_stats(), (1, 1));
    assert_eq!(second.before, first.before);

    let empty = WhatIfRequest { steering: vec![], ..req };
    assert_eq!(s.inspection.whatif(&m, &empty).unwrap_err().code(), ErrorCode::InvalidRequest);
}

#[test]
fn compare_self_and_one_weight_apart() {
    let s = Stack::new();
    let spec = mlp_spec("m", 4, 6, 3, 5, false);
    let mut tweaked = spec.clone();
    if let LayerSpec::Dense { weights, .. } = &mut tweaked.layers[2] {
        weights[1][3] += 0.5;
    }
    let a = s.models.register_model(&spec).unwrap();
    let b = s.models.register_model(&tweaked).unwrap();
    let x = [0.5, 0.5, -1.0, 0.25];
    let req = CompareRequest {
        model_a: network_id_of(&a),
        model_b: network_id_of(&b),
        sample_id: inline(&x),
        target_class: None,
    };
    let same = s.inspection.compare(&a, &a, &req).unwrap();
    assert_eq!(same.a, same.b);
    assert!(same.delta_logits.iter().all(|d| *d == 0.0));

    let diff = s.inspection.compare(&a, &b, &req).unwrap();
    let pa = s.models.predict(&a, &x, None).unwrap().logits;
    let pb = s.models.predict(&b, &x, None).unwrap().logits;
    for k in 0..3 {
        assert_eq!(diff.delta_logits[k], pb[k] - pa[k]);
    }
    assert_eq!((diff.model_a.clone(), diff.model_b.clone()), (a.clone(), b.clone()));

    let ghost = VersionRef::new(names::MODELS, "m", "f".repeat(64));
    assert_eq!(s.inspection.compare(&a, &ghost, &req).unwrap_err().code(), ErrorCode::NotFound);
}

#[test]
fn sample_ids_resolve_through_the_training_dataset() {
    let p = provisioned();
    let ch = p.manifest.model("clever_hans").unwrap();
    let ds = p.stack.models.dataset(&p.manifest.dataset_version).unwrap();
    let sample = ds.split(Split::Test).next().unwrap();
    let by_id = InspectionRequest {
        network_id: ch.network_id.clone(),
        sample_id: SampleRef::Id(sample.sample_id.clone()),
        steering: None,
        target_class: None,
    };
    let a = p.stack.inspection.inspect(&ch.model_version, &by_id).unwrap();
    let b = p.stack.inspection.inspect(&ch.model_version, &InspectionRequest { sample_id: inline(&sample.features), ..by_id.clone() }).unwrap();
    assert_eq!(a, b);
    let missing = InspectionRequest { sample_id: SampleRef::Id("s999999".into()), ..by_id };
    assert_eq!(p.stack.inspection.inspect(&ch.model_version, &missing).unwrap_err().code(), ErrorCode::NotFound);
}

#[test]
fn component_details_project_the_records() {
    let p = provisioned();
    let ch = p.manifest.model("clever_hans").unwrap();
    let ds = p.stack.models.dataset(&p.manifest.dataset_version).unwrap();
    let n = p.stack.models.load(&ch.model_version).unwrap().network.n_components();
    for u in 0..n as u64 {
        let d = p.stack.inspection.component_details(&ch.network_id, u).unwrap();
        let record = p.stack.data.query_component(&ch.network_id, u).unwrap();
        assert_eq!(d.top_samples.len(), 9);
        assert!((0.0..=1.0).contains(&d.quality));
        // Independent label oracle: cosine against every vocabulary word.
        let mut scored: Vec<(f64, &str)> = ds
            .vocabulary
            .iter()
            .map(|v| (cosine(&record.embedding, &v.vector), v.word.as_str()))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for (label, (score, word)) in d.alignment_labels.iter().zip(&scored) {
            assert_eq!(label.word, *word);
            assert!((label.score - score).abs() <= 1e-12);
        }
        assert_eq!(d.alignment_labels.len(), 5);
    }
    let e = p.stack.inspection.component_details(&ch.network_id, n as u64).unwrap_err();
    assert_eq!(e.code(), ErrorCode::NotFound);
}
