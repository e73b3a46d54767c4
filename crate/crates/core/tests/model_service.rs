mod common;

use common::Stack;
use xsys_core::contracts::{canonical_serialize, LayerSpec, ModelSpec, SteeringModifier, VersionRef};
use xsys_core::fixtures::mlp_spec;
use xsys_core::matrix::Matrix;
use xsys_core::model_service::JobStatus;
use xsys_core::provision::{DatasetParams, Provisioner};
use xsys_core::store::names;
use xsys_core::ErrorCode;

fn dataset_params() -> DatasetParams {
    DatasetParams {
        seed: 5,
        n_samples: 120,
        input_dim: 4,
        embedding_dim: 6,
        class_names: vec!["a".into(), "b".into()],
        poison_rate: 0.5,
        test_fraction: 0.3,
        test_poison_rate: 0.3,
        distractors: vec!["x".into()],
    }
}

#[test]
fn registration_is_idempotent() {
    let s = Stack::new();
    let spec = mlp_spec("m", 4, 6, 2, 1, false);
    let a = s.models.register_model(&spec).unwrap();
    let b = s.models.register_model(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(s.store.list_versions(names::MODELS, "m").unwrap().len(), 1);
}

#[test]
fn one_weight_change_is_a_new_version() {
    let s = Stack::new();
    let spec = mlp_spec("m", 4, 6, 2, 1, false);
    let mut tweaked = spec.clone();
    if let LayerSpec::Dense { weights, .. } = &mut tweaked.layers[0] {
        weights[2][1] += 1e-9;
    }
    let a = s.models.register_model(&spec).unwrap();
    let b = s.models.register_model(&tweaked).unwrap();
    assert_ne!(a.version, b.version);
    assert_eq!(s.store.latest(names::MODELS, "m").unwrap(), Some(b));
}

#[test]
fn registered_spec_is_stored_canonically() {
    let s = Stack::new();
    let spec = mlp_spec("m", 3, 5, 3, 9, true);
    let r = s.models.register_model(&spec).unwrap();
    assert_eq!(s.store.get(&r).unwrap().bytes, canonical_serialize(&spec).unwrap());
    let loaded = s.models.load(&r).unwrap();
    assert_eq!(loaded.spec, spec);
}

#[test]
fn malformed_specs_rejected() {
    let s = Stack::new();
    let mut spec = mlp_spec("m", 3, 5, 2, 9, true);
    spec.inspect_layer = 0;
    assert_eq!(s.models.register_model(&spec).unwrap_err().code(), ErrorCode::InvalidRequest);
    let bad = ModelSpec {
        input_dim: 4,
        ..mlp_spec("m", 3, 5, 2, 9, true)
    };
    assert_eq!(s.models.register_model(&bad).unwrap_err().code(), ErrorCode::InvalidRequest);
}

#[test]
fn unknown_model_not_found() {
    let s = Stack::new();
    let r = VersionRef::new(names::MODELS, "ghost", "0".repeat(64));
    assert_eq!(s.models.predict(&r, &[0.0; 4], None).unwrap_err().code(), ErrorCode::NotFound);
}

#[test]
fn predict_validates_input_and_steering() {
    let s = Stack::new();
    let r = s.models.register_model(&mlp_spec("m", 4, 6, 2, 1, false)).unwrap();
    assert_eq!(s.models.predict(&r, &[0.0; 3], None).unwrap_err().code(), ErrorCode::InvalidRequest);
    let bad_layer = [SteeringModifier { layer: 0, unit: 0, m: 0.5 }];
    let bad_unit = [SteeringModifier { layer: 1, unit: 6, m: 0.5 }];
    for mods in [&bad_layer[..], &bad_unit[..]] {
        let e = s.models.predict(&r, &[0.0; 4], Some(mods)).unwrap_err();
        assert_eq!(e.code(), ErrorCode::InvalidRequest);
    }
}

#[test]
fn batch_matches_single_calls_and_polls() {
    let s = Stack::new();
    let p = Provisioner::new(s.models.clone());
    let ds_ref = p.dataset("d", &dataset_params()).unwrap();
    let model = s.models.register_model(&mlp_spec("m", 4, 6, 2, 3, false)).unwrap();
    let job = s.models.batch_activations(&model, &ds_ref, 1).unwrap();
    let out = s.models.wait_job(job).unwrap();
    assert!(matches!(s.models.job_status(job), Some(JobStatus::Done(ref r)) if *r == out));
    let provenance = s.store.get_provenance(&out).unwrap();
    assert_eq!(provenance.inputs, vec![model.clone(), ds_ref.clone()]);

    let m = Matrix::decode(&s.store.get(&out).unwrap().bytes).unwrap();
    let ds = s.models.dataset(&ds_ref).unwrap();
    assert_eq!((m.rows(), m.cols()), (ds.samples.len(), 6));
    for i in (0..ds.samples.len()).step_by(ds.samples.len() / 20) {
        let single = s.models.get_activations(&model, &ds.samples[i].features, 1).unwrap();
        assert_eq!(m.row(i), single.as_slice(), "row {i}");
    }
    // Rerunning the same job lands on the same content address.
    assert_eq!(s.models.batch_activations_blocking(&model, &ds_ref, 1).unwrap(), out);
}

#[test]
fn batch_of_one_equals_single_call() {
    let s = Stack::new();
    let p = Provisioner::new(s.models.clone());
    let mut params = dataset_params();
    params.n_samples = 100;
    let ds_ref = p.dataset("d", &params).unwrap();
    let model = s.models.register_model(&mlp_spec("m", 4, 6, 2, 3, false)).unwrap();
    let out = s.models.batch_activations_blocking(&model, &ds_ref, 2).unwrap();
    let m = Matrix::decode(&s.store.get(&out).unwrap().bytes).unwrap();
    let ds = s.models.dataset(&ds_ref).unwrap();
    let logits = s.models.predict(&model, &ds.samples[0].features, None).unwrap().logits;
    assert_eq!(m.row(0), logits.as_slice());
}

#[test]
fn batch_on_missing_dataset_fails_fast() {
    let s = Stack::new();
    let model = s.models.register_model(&mlp_spec("m", 4, 6, 2, 3, false)).unwrap();
    let ghost = VersionRef::new(names::DATASETS, "d", "1".repeat(64));
    assert_eq!(s.models.batch_activations(&model, &ghost, 1).unwrap_err().code(), ErrorCode::NotFound);
}

#[test]
fn metadata_and_listing() {
    let s = Stack::new();
    let a = s.models.register_model(&mlp_spec("alpha", 4, 6, 2, 3, false)).unwrap();
    let b = s.models.register_model(&mlp_spec("beta", 4, 11, 3, 3, false)).unwrap();
    let md = s.models.model_metadata(&b).unwrap();
    assert_eq!(md.n_components, 11);
    assert_eq!(md.class_names.len(), 3);
    let listed: Vec<VersionRef> = s.models.list_models().unwrap().into_iter().map(|m| m.version).collect();
    assert_eq!(listed, vec![a, b]);
}
