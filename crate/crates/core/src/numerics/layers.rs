//! Parameterised building blocks shared by the model modules.

use super::params::{ParamId, ParamStore};
use super::rng::SeededRng;
use super::tape::{Tape, Var};

pub const LN_EPS: f64 = 1e-5;

/// Affine map `x·W (+ b)` with `W` stored as `[in × out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut SeededRng,
    ) -> Self {
        let weight = store.normal(format!("{name}.w"), &[input, output], 1.0 / (input as f64).sqrt(), rng);
        let bias = bias.then(|| store.zeros(format!("{name}.b"), &[output]));
        Self { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let w = tape.param(self.weight);
        let y = tape.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = tape.param(b);
                tape.add_row(y, b)
            }
            None => y,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

/// Two-layer perceptron with a GELU between the layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut SeededRng,
    ) -> Self {
        Self::with_output_bias(store, name, input, hidden, output, true, rng)
    }

    pub fn with_output_bias(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        output_bias: bool,
        rng: &mut SeededRng,
    ) -> Self {
        Self {
            first: Linear::new(store, &format!("{name}.fc1"), input, hidden, true, rng),
            second: Linear::new(store, &format!("{name}.fc2"), hidden, output, output_bias, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let h = self.first.forward(tape, x);
        let h = tape.gelu(h);
        self.second.forward(tape, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.first.params();
        p.extend(self.second.params());
        p
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.ones(format!("{name}.gain"), &[dim]),
            bias: store.zeros(format!("{name}.bias"), &[dim]),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let (g, b) = (tape.param(self.gain), tape.param(self.bias));
        tape.layer_norm(x, g, b, LN_EPS)
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.gain, self.bias]
    }
}
