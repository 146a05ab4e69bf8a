//! Small deterministic feedforward network used to warp deep-kernel inputs.
//!
//! Parameters live in one flat buffer with a stable order (per transition:
//! weight matrix row-major, then bias), so the same container doubles as the
//! gradient holder and optimizers can treat the network as a plain vector.

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rng_from_seed, Seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths (input first) plus one activation per transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    layer_widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl NetSpec {
    pub fn new(layer_widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::InvalidInput(
                "network needs at least one layer transition".into(),
            ));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidInput("layer widths must be >= 1".into()));
        }
        if activations.len() != layer_widths.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: "NetSpec::new activations",
                expected: layer_widths.len() - 1,
                got: activations.len(),
            });
        }
        Ok(Self {
            layer_widths,
            activations,
        })
    }

    /// Tanh on hidden transitions, identity on the output transition.
    pub fn tanh_mlp(layer_widths: Vec<usize>) -> Result<Self> {
        let transitions = layer_widths.len().saturating_sub(1);
        let mut activations = vec![Activation::Tanh; transitions];
        if let Some(last) = activations.last_mut() {
            *last = Activation::Identity;
        }
        Self::new(layer_widths, activations)
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn transitions(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        (0..self.transitions())
            .map(|t| self.layer_widths[t + 1] * (self.layer_widths[t] + 1))
            .sum()
    }

    /// Flat offset of the start of transition `t`'s block.
    fn block_offset(&self, t: usize) -> usize {
        (0..t)
            .map(|s| self.layer_widths[s + 1] * (self.layer_widths[s] + 1))
            .sum()
    }
}

/// Network parameters (or a same-shaped gradient) in flat form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetWeights {
    spec: NetSpec,
    params: Vec<f64>,
}

impl NetWeights {
    pub fn from_flat(spec: NetSpec, params: Vec<f64>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                context: "NetWeights::from_flat",
                expected: spec.param_count(),
                got: params.len(),
            });
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("network weights must be finite".into()));
        }
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: NetSpec) -> Self {
        let params = vec![0.0; spec.param_count()];
        Self { spec, params }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn flat(&self) -> &[f64] {
        &self.params
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.params
    }

    #[inline]
    fn weight(&self, t: usize, out: usize, inp: usize) -> f64 {
        let d_in = self.spec.layer_widths[t];
        self.params[self.spec.block_offset(t) + out * d_in + inp]
    }

    #[inline]
    fn bias(&self, t: usize, out: usize) -> f64 {
        let d_in = self.spec.layer_widths[t];
        let d_out = self.spec.layer_widths[t + 1];
        self.params[self.spec.block_offset(t) + d_out * d_in + out]
    }
}

/// Glorot-uniform weights (`a = sqrt(6 / (fan_in + fan_out))`), zero biases.
pub fn net_init(spec: &NetSpec, seed: Seed) -> NetWeights {
    let mut rng = rng_from_seed(seed);
    let mut params = Vec::with_capacity(spec.param_count());
    for t in 0..spec.transitions() {
        let (d_in, d_out) = (spec.layer_widths[t], spec.layer_widths[t + 1]);
        let a = (6.0 / (d_in + d_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        for _ in 0..d_out * d_in {
            params.push(dist.sample(&mut rng));
        }
        params.extend(std::iter::repeat(0.0).take(d_out));
    }
    NetWeights {
        spec: spec.clone(),
        params,
    }
}

/// Affine-then-activation composition.
pub fn net_forward(w: &NetWeights, x: &[f64]) -> Result<Vec<f64>> {
    let (acts, _) = forward_trace(w, x)?;
    Ok(acts.into_iter().last().unwrap())
}

/// Forward pass keeping every layer's output for backprop.
fn forward_trace(w: &NetWeights, x: &[f64]) -> Result<(Vec<Vec<f64>>, ())> {
    let spec = &w.spec;
    if x.len() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "net_forward input",
            expected: spec.input_dim(),
            got: x.len(),
        });
    }
    let mut acts = Vec::with_capacity(spec.transitions() + 1);
    acts.push(x.to_vec());
    for t in 0..spec.transitions() {
        let (d_in, d_out) = (spec.layer_widths[t], spec.layer_widths[t + 1]);
        let act = spec.activations[t];
        let prev = &acts[t];
        let mut next = Vec::with_capacity(d_out);
        for o in 0..d_out {
            let mut s = w.bias(t, o);
            for i in 0..d_in {
                s += w.weight(t, o, i) * prev[i];
            }
            next.push(act.apply(s));
        }
        acts.push(next);
    }
    Ok((acts, ()))
}

/// Exact reverse-mode gradients of `upstream . net_forward(w, x)` with
/// respect to the weights and the input.
pub fn net_vjp(w: &NetWeights, x: &[f64], upstream: &[f64]) -> Result<(NetWeights, Vec<f64>)> {
    let spec = &w.spec;
    if upstream.len() != spec.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "net_vjp upstream",
            expected: spec.output_dim(),
            got: upstream.len(),
        });
    }
    let (acts, ()) = forward_trace(w, x)?;

    let mut grad = vec![0.0; spec.param_count()];
    let mut delta = upstream.to_vec();
    for t in (0..spec.transitions()).rev() {
        let (d_in, d_out) = (spec.layer_widths[t], spec.layer_widths[t + 1]);
        let act = spec.activations[t];
        let out_layer = &acts[t + 1];
        let in_layer = &acts[t];

        // through the activation
        for o in 0..d_out {
            delta[o] *= act.derivative_from_output(out_layer[o]);
        }

        let base = spec.block_offset(t);
        for o in 0..d_out {
            for i in 0..d_in {
                grad[base + o * d_in + i] = delta[o] * in_layer[i];
            }
            grad[base + d_out * d_in + o] = delta[o];
        }

        // through the affine map, onto the previous layer
        let mut prev_delta = vec![0.0; d_in];
        for i in 0..d_in {
            let mut s = 0.0;
            for o in 0..d_out {
                s += w.weight(t, o, i) * delta[o];
            }
            prev_delta[i] = s;
        }
        delta = prev_delta;
    }

    let grad_w = NetWeights {
        spec: spec.clone(),
        params: grad,
    };
    Ok((grad_w, delta))
}
