//! Full-batch gradient descent for `dense(h) -> relu -> dense(classes)`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contracts::{is_valid_name, LayerSpec, ModelSpec};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::Network;

/// How the spurious input channel may reach the hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ShortcutWiring {
    /// No hidden unit sees the channel.
    Blocked,
    /// Only `unit` sees it, and sees nothing else; its bias is pinned at 0.
    Designated { unit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub name: String,
    pub hidden_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub wiring: ShortcutWiring,
}

impl TrainParams {
    pub fn check(&self) -> Result<()> {
        if !is_valid_name(&self.name) {
            return Err(Error::invalid(format!("invalid model name `{}`", self.name)));
        }
        if self.hidden_width == 0 {
            return Err(Error::invalid("hidden_width must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if let ShortcutWiring::Designated { unit } = self.wiring {
            if unit >= self.hidden_width {
                return Err(Error::invalid("designated spurious unit out of range"));
            }
        }
        Ok(())
    }
}

/// Trainable parameters plus fixed-zero masks (`false` = frozen at 0).
struct Params {
    n_in: usize,
    h: usize,
    c: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w1_mask: Vec<bool>,
    b1_mask: Vec<bool>,
}

impl Params {
    fn init(n_in: usize, h: usize, c: usize, spurious: usize, p: &TrainParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let r1 = 1.0 / (n_in as f64).sqrt();
        let r2 = 1.0 / (h as f64).sqrt();
        let mut w1: Vec<f64> = (0..h * n_in).map(|_| rng.random_range(-r1..=r1)).collect();
        let w2: Vec<f64> = (0..c * h).map(|_| rng.random_range(-r2..=r2)).collect();
        let mut w1_mask = vec![true; h * n_in];
        let mut b1_mask = vec![true; h];
        for u in 0..h {
            let designated = p.wiring == ShortcutWiring::Designated { unit: u };
            for j in 0..n_in {
                let on_spurious = j == spurious;
                w1_mask[u * n_in + j] = if designated { on_spurious } else { !on_spurious };
            }
            if designated {
                b1_mask[u] = false;
                // Positive start so the unit is alive on the channel.
                w1[u * n_in + spurious] = w1[u * n_in + spurious].abs().max(r1 / 2.0);
            }
        }
        for (w, m) in w1.iter_mut().zip(&w1_mask) {
            if !m {
                *w = 0.0;
            }
        }
        Params {
            n_in,
            h,
            c,
            w1,
            b1: vec![0.0; h],
            w2,
            b2: vec![0.0; c],
            w1_mask,
            b1_mask,
        }
    }

    /// One full-batch step; returns the mean cross-entropy before the update.
    fn step(&mut self, xs: &[&[f64]], ys: &[usize], lr: f64) -> f64 {
        let (n_in, h, c) = (self.n_in, self.h, self.c);
        let mut g_w1 = vec![0.0; h * n_in];
        let mut g_b1 = vec![0.0; h];
        let mut g_w2 = vec![0.0; c * h];
        let mut g_b2 = vec![0.0; c];
        let mut pre = vec![0.0; h];
        let mut act = vec![0.0; h];
        let mut probs = vec![0.0; c];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            for u in 0..h {
                let mut s = 0.0;
                for j in 0..n_in {
                    s += self.w1[u * n_in + j] * x[j];
                }
                pre[u] = s + self.b1[u];
                act[u] = pre[u].max(0.0);
            }
            for k in 0..c {
                let mut s = 0.0;
                for u in 0..h {
                    s += self.w2[k * h + u] * act[u];
                }
                probs[k] = s + self.b2[k];
            }
            let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for p in probs.iter_mut() {
                *p = (*p - max).exp();
                total += *p;
            }
            for p in probs.iter_mut() {
                *p /= total;
            }
            loss -= probs[y].max(1e-300).ln();
            for k in 0..c {
                let dz = probs[k] - if k == y { 1.0 } else { 0.0 };
                g_b2[k] += dz;
                for u in 0..h {
                    g_w2[k * h + u] += dz * act[u];
                }
            }
            for u in 0..h {
                if pre[u] <= 0.0 {
                    continue;
                }
                let mut da = 0.0;
                for k in 0..c {
                    da += self.w2[k * h + u] * (probs[k] - if k == y { 1.0 } else { 0.0 });
                }
                g_b1[u] += da;
                for j in 0..n_in {
                    g_w1[u * n_in + j] += da * x[j];
                }
            }
        }
        let scale = lr / xs.len() as f64;
        for ((w, g), m) in self.w1.iter_mut().zip(&g_w1).zip(&self.w1_mask) {
            if *m {
                *w -= scale * g;
            }
        }
        for ((b, g), m) in self.b1.iter_mut().zip(&g_b1).zip(&self.b1_mask) {
            if *m {
                *b -= scale * g;
            }
        }
        self.w2.iter_mut().zip(&g_w2).for_each(|(w, g)| *w -= scale * g);
        self.b2.iter_mut().zip(&g_b2).for_each(|(b, g)| *b -= scale * g);
        loss / xs.len() as f64
    }

    fn layers(&self) -> Vec<LayerSpec> {
        let rows = |w: &[f64], cols: usize| w.chunks(cols).map(<[f64]>::to_vec).collect();
        vec![
            LayerSpec::Dense {
                weights: rows(&self.w1, self.n_in),
                bias: self.b1.clone(),
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                weights: rows(&self.w2, self.h),
                bias: self.b2.clone(),
            },
        ]
    }
}

/// Fraction of `samples` the network classifies correctly; `None` if empty.
pub fn accuracy<'a>(net: &Network, samples: impl Iterator<Item = &'a crate::dataset::Sample>) -> Result<Option<f64>> {
    let (mut hit, mut n) = (0usize, 0usize);
    for s in samples {
        n += 1;
        if net.forward(&s.features, None)?.predicted_class == s.label {
            hit += 1;
        }
    }
    Ok((n > 0).then(|| hit as f64 / n as f64))
}

/// Trains on the train split and returns the finished spec with QA metrics.
pub fn train_mlp(ds: &Dataset, p: &TrainParams) -> Result<ModelSpec> {
    p.check()?;
    let train: Vec<_> = ds.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::invalid("dataset has no training samples"));
    }
    let xs: Vec<&[f64]> = train.iter().map(|s| s.features.as_slice()).collect();
    let ys: Vec<usize> = train.iter().map(|s| s.label).collect();
    let c = ds.class_names.len();
    let mut params = Params::init(ds.input_dim, p.hidden_width, c, ds.spurious_feature, p);
    let mut loss = f64::NAN;
    for _ in 0..p.epochs {
        loss = params.step(&xs, &ys, p.learning_rate);
    }

    let mut spec = ModelSpec {
        name: p.name.clone(),
        input_dim: ds.input_dim,
        class_names: ds.class_names.clone(),
        layers: params.layers(),
        inspect_layer: 1,
        provenance_note: format!(
            "train_mlp: h={} epochs={} lr={} seed={} wiring={}",
            p.hidden_width,
            p.epochs,
            p.learning_rate,
            p.seed,
            match p.wiring {
                ShortcutWiring::Blocked => "blocked".to_string(),
                ShortcutWiring::Designated { unit } => format!("designated:{unit}"),
            }
        ),
        metrics: BTreeMap::new(),
    };
    let net = Network::from_spec(&spec)?;
    let mut metrics = BTreeMap::new();
    if loss.is_finite() {
        metrics.insert("final_train_loss".to_string(), loss);
    }
    let test = || ds.split(Split::Test);
    for (name, acc) in [
        ("train_accuracy", accuracy(&net, ds.split(Split::Train))?),
        ("clean_test_accuracy", accuracy(&net, test().filter(|s| !s.is_poisoned))?),
        ("poisoned_test_accuracy", accuracy(&net, test().filter(|s| s.is_poisoned))?),
    ] {
        if let Some(a) = acc {
            metrics.insert(name.to_string(), a);
        }
    }
    spec.metrics = metrics;
    Ok(spec)
}
