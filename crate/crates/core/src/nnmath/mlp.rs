use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamStore, TensorId};
use super::tape::{Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Zero the final layer so the network starts as the zero map.
    pub final_zero_init: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation: Activation::Tanh,
            final_zero_init: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "MLP dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Consecutive `(fan_in, fan_out)` pairs.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// An MLP whose weights live in a shared [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Mlp {
    name: String,
    spec: MlpSpec,
    layers: Vec<(TensorId, TensorId)>,
}

impl Mlp {
    /// Registers the weights and initializes them: Glorot-uniform weights,
    /// zero biases, and a zero final layer when `final_zero_init` is set.
    pub fn register<R: Rng + ?Sized>(
        name: &str,
        spec: MlpSpec,
        params: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let mut layers = Vec::with_capacity(dims.len());
        for (k, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w = params.register(format!("{name}.w{k}"), fan_in, fan_out);
            let b = params.register(format!("{name}.b{k}"), 1, fan_out);
            if !(k == last && spec.final_zero_init) {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in params.tensor_mut(w) {
                    *v = rng.random_range(-limit..limit);
                }
            }
            layers.push((w, b));
        }
        Ok(Self {
            name: name.to_string(),
            spec,
            layers,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `(weight, bias)` handles, input side first.
    pub fn tensors(&self) -> &[(TensorId, TensorId)] {
        &self.layers
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamStore, x: Var) -> Result<Var> {
        if tape.cols(x) != self.spec.input_dim {
            return Err(Error::dim(
                format!("{}.input", self.name),
                self.spec.input_dim,
                tape.cols(x),
            ));
        }
        let dims = self.spec.layer_dims();
        let mut h = x;
        for (k, ((w, b), (fan_in, fan_out))) in self.layers.iter().zip(dims).enumerate() {
            for (id, rows, cols, tag) in [(w, fan_in, fan_out, 'w'), (b, 1, fan_out, 'b')] {
                if id.rows != rows || id.cols != cols || id.range().end > params.len() {
                    return Err(Error::InvalidArgument(format!(
                        "tensor {}.{tag}{k} missing or misshapen in parameter store",
                        self.name
                    )));
                }
            }
            let wv = tape.param(params, *w);
            let bv = tape.param(params, *b);
            h = tape.affine(h, wv, bv);
            if k + 1 < self.layers.len() {
                h = match self.spec.activation {
                    Activation::Tanh => tape.tanh(h),
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        Ok(h)
    }

    /// Single-vector convenience wrapper around [`Mlp::forward`].
    pub fn eval(&self, params: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let xv = tape.leaf(1, x.len(), x.to_vec());
        let y = self.forward(&mut tape, params, xv)?;
        Ok(tape.value(y).to_vec())
    }
}
