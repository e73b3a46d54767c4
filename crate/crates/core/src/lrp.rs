//! Epsilon-rule relevance propagation from one logit to the inspect layer.
//!
//! Relevance starts as the target logit on the target class (zero
//! elsewhere). Through a dense layer with inputs `a`:
//!
//! ```text
//! z_jk = a_j * w_kj
//! z_k  = sum_j z_jk + b_k
//! R_j  = sum_k z_jk / (z_k + eps * sign(z_k)) * R_k      sign(0) = +1
//! ```
//!
//! Relu layers pass relevance through unchanged. Bias shares are absorbed,
//! so relevance is conserved exactly only for zero-bias layers (up to the
//! `eps` leak).

use crate::error::{Error, Result};
use crate::nn::{ActivationTrace, Layer, Mlp};
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Relevance at every position from the output down to the inspect layer.
///
/// Position `p` is the output of layer `p - 1`; position 0 is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceTrace<T> {
    pub target_class: usize,
    pub epsilon: T,
    /// The target logit, i.e. the total relevance injected at the output.
    pub output_relevance: T,
    /// `positions[p]` is `Some` for every propagated position.
    pub positions: Vec<Option<Vec<T>>>,
    pub stop_position: usize,
}

impl<T: Scalar> RelevanceTrace<T> {
    pub fn at(&self, position: usize) -> Option<&[T]> {
        self.positions.get(position)?.as_deref()
    }

    /// Relevance at the lowest propagated position.
    pub fn result(&self) -> &[T] {
        self.at(self.stop_position).expect("stop position is always filled")
    }
}

/// Propagates relevance of `target` down to position `stop_position`.
pub fn propagate<T: Scalar>(
    model: &Mlp<T>,
    input: &[T],
    trace: &ActivationTrace<T>,
    target: usize,
    epsilon: T,
    stop_position: usize,
) -> Result<RelevanceTrace<T>> {
    let n_layers = model.layers().len();
    if target >= model.output_dim() {
        return Err(Error::invalid(format!(
            "target class {target} out of range for {} classes",
            model.output_dim()
        )));
    }
    if stop_position > n_layers {
        return Err(Error::invalid("stop position beyond the output"));
    }
    if trace.layers.len() != n_layers {
        return Err(Error::invalid("trace does not match the model"));
    }
    let logits = &trace.layers[n_layers - 1];
    let mut r = vec![T::zero(); logits.len()];
    r[target] = logits[target];
    let output_relevance = logits[target];

    let mut positions: Vec<Option<Vec<T>>> = vec![None; n_layers + 1];
    positions[n_layers] = Some(r.clone());
    for l in (stop_position..n_layers).rev() {
        r = match &model.layers()[l] {
            Layer::Relu => r,
            Layer::Dense { weights, bias } => {
                let a = model.layer_input(input, trace, l);
                // s_k = R_k / (z_k + eps * sign(z_k)), then R_j = a_j * sum_k w_kj s_k
                let s: Vec<T> = (0..weights.rows())
                    .map(|k| {
                        let mut z = T::zero();
                        for (w, aj) in weights.row(k).iter().zip(a) {
                            z += *w * *aj;
                        }
                        z += bias[k];
                        let sign = if z >= T::zero() { T::one() } else { -T::one() };
                        r[k] / (z + epsilon * sign)
                    })
                    .collect();
                (0..weights.cols())
                    .map(|j| {
                        let mut acc = T::zero();
                        for (k, sk) in s.iter().enumerate() {
                            acc += weights.get(k, j) * *sk;
                        }
                        a[j] * acc
                    })
                    .collect()
            }
        };
        positions[l] = Some(r.clone());
    }
    Ok(RelevanceTrace {
        target_class: target,
        epsilon,
        output_relevance,
        positions,
        stop_position,
    })
}

/// Relevance at the output of the inspect layer.
pub fn inspect_layer_relevance<T: Scalar>(
    model: &Mlp<T>,
    input: &[T],
    trace: &ActivationTrace<T>,
    target: usize,
    epsilon: T,
) -> Result<RelevanceTrace<T>> {
    propagate(model, input, trace, target, epsilon, model.inspect_layer() + 1)
}
