//! Feedforward networks with activation capture and steering.
//!
//! Steering rescales post-activation units of relu layers in place during
//! the forward pass: `a' = a * (1 + m)` with `m` in [-1, 1]. Later layers
//! consume the steered values.

use std::collections::BTreeMap;

use crate::contracts::{LayerSpec, ModelSpec, SteeringModifier};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    /// `weights` is `[out x in]`.
    Dense { weights: Matrix<T>, bias: Vec<T> },
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    input_dim: usize,
    layers: Vec<Layer<T>>,
    widths: Vec<usize>,
    inspect_layer: usize,
}

/// Post-activation output of every layer for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace<T> {
    pub layers: Vec<Vec<T>>,
    pub steered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub logits: Vec<T>,
    pub predicted_class: usize,
    pub trace: ActivationTrace<T>,
}

/// Validated steering modifiers grouped by layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Steering<T> {
    by_layer: BTreeMap<usize, Vec<(usize, T)>>,
}

impl<T: Scalar> Steering<T> {
    pub fn none() -> Self {
        Steering {
            by_layer: BTreeMap::new(),
        }
    }

    /// Checks each modifier against `model`: relu layer, unit in range,
    /// `m` in [-1, 1], and no repeated `(layer, unit)`.
    pub fn new(model: &Mlp<T>, modifiers: &[SteeringModifier]) -> Result<Self> {
        let mut by_layer: BTreeMap<usize, Vec<(usize, T)>> = BTreeMap::new();
        for (i, s) in modifiers.iter().enumerate() {
            if !s.m.is_finite() || !(-1.0..=1.0).contains(&s.m) {
                return Err(Error::invalid(format!("steering[{i}].m = {} outside [-1, 1]", s.m)));
            }
            match model.layers.get(s.layer) {
                Some(Layer::Relu) => {}
                Some(_) => {
                    return Err(Error::invalid(format!(
                        "steering[{i}].layer {} is not a relu layer",
                        s.layer
                    )))
                }
                None => {
                    return Err(Error::invalid(format!(
                        "steering[{i}].layer {} out of range",
                        s.layer
                    )))
                }
            }
            if s.unit >= model.widths[s.layer] {
                return Err(Error::invalid(format!(
                    "steering[{i}].unit {} out of range for width {}",
                    s.unit, model.widths[s.layer]
                )));
            }
            let units = by_layer.entry(s.layer).or_default();
            if units.iter().any(|(u, _)| *u == s.unit) {
                return Err(Error::invalid(format!(
                    "steering[{i}] repeats (layer {}, unit {})",
                    s.layer, s.unit
                )));
            }
            units.push((s.unit, T::of(s.m)));
        }
        Ok(Steering { by_layer })
    }

    pub fn is_empty(&self) -> bool {
        self.by_layer.is_empty()
    }

    pub fn for_layer(&self, layer: usize) -> &[(usize, T)] {
        self.by_layer.get(&layer).map_or(&[], Vec::as_slice)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Mlp<T> {
    pub fn new(input_dim: usize, layers: Vec<Layer<T>>, inspect_layer: usize) -> Result<Self> {
        let mut widths = Vec::with_capacity(layers.len());
        let mut width = input_dim;
        for (li, l) in layers.iter().enumerate() {
            if let Layer::Dense { weights, bias } = l {
                if weights.cols() != width || weights.rows() != bias.len() {
                    return Err(Error::invalid(format!(
                        "layer {li}: {}x{} weights after width {width} with {} biases",
                        weights.rows(),
                        weights.cols(),
                        bias.len()
                    )));
                }
                width = bias.len();
            }
            widths.push(width);
        }
        if !matches!(layers.get(inspect_layer), Some(Layer::Relu)) {
            return Err(Error::invalid("inspect layer must be a relu layer"));
        }
        Ok(Mlp {
            input_dim,
            layers,
            widths,
            inspect_layer,
        })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let layers = spec
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Dense { weights, bias } => {
                    let rows: Vec<Vec<T>> = weights
                        .iter()
                        .map(|r| r.iter().map(|x| T::of(*x)).collect())
                        .collect();
                    let cols = weights.first().map_or(0, Vec::len);
                    let weights = if rows.is_empty() {
                        Matrix::zeros(0, cols)
                    } else {
                        Matrix::from_rows(&rows)?
                    };
                    Ok(Layer::Dense {
                        weights,
                        bias: bias.iter().map(|x| T::of(*x)).collect(),
                    })
                }
                LayerSpec::Relu => Ok(Layer::Relu),
            })
            .collect::<Result<Vec<_>>>()?;
        let mlp = Mlp::new(spec.input_dim, layers, spec.inspect_layer)?;
        if mlp.output_dim() != spec.class_names.len() {
            return Err(Error::invalid("output width does not match class_names"));
        }
        Ok(mlp)
    }

    /// Layer list in wire form; `f64` values are widened from `T`.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weights, bias } => LayerSpec::Dense {
                    weights: weights
                        .iter_rows()
                        .map(|r| r.iter().map(|x| x.to_f64_lossy()).collect())
                        .collect(),
                    bias: bias.iter().map(|x| x.to_f64_lossy()).collect(),
                },
                Layer::Relu => LayerSpec::Relu,
            })
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.widths.last().copied().unwrap_or(self.input_dim)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Output width of layer `l`.
    pub fn width(&self, l: usize) -> usize {
        self.widths[l]
    }

    pub fn inspect_layer(&self) -> usize {
        self.inspect_layer
    }

    pub fn n_components(&self) -> usize {
        self.widths[self.inspect_layer]
    }

    pub fn forward(&self, input: &[T], steering: Option<&Steering<T>>) -> Result<Prediction<T>> {
        if input.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                input.len(),
                self.input_dim
            )));
        }
        let steering = steering.filter(|s| !s.is_empty());
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut current: Vec<T> = input.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = match layer {
                Layer::Dense { weights, bias } => dense_forward(weights, bias, &current),
                Layer::Relu => current.iter().map(|x| x.max(T::zero())).collect(),
            };
            if let Some(s) = steering {
                for &(unit, m) in s.for_layer(li) {
                    next[unit] *= T::one() + m;
                }
            }
            trace.push(next.clone());
            current = next;
        }
        let predicted_class = argmax(&current);
        Ok(Prediction {
            logits: current,
            predicted_class,
            trace: ActivationTrace {
                layers: trace,
                steered: steering.is_some(),
            },
        })
    }

    /// Input to layer `l` for a recorded pass.
    pub fn layer_input<'a>(&self, input: &'a [T], trace: &'a ActivationTrace<T>, l: usize) -> &'a [T] {
        if l == 0 {
            input
        } else {
            &trace.layers[l - 1]
        }
    }
}

/// `out_k = sum_j w_kj x_j + b_k`, summed in ascending `j`.
pub fn dense_forward<T: Scalar>(weights: &Matrix<T>, bias: &[T], x: &[T]) -> Vec<T> {
    (0..weights.rows())
        .map(|k| {
            let mut acc = T::zero();
            for (w, xi) in weights.row(k).iter().zip(x) {
                acc += *w * *xi;
            }
            acc + bias[k]
        })
        .collect()
}
