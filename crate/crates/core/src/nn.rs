//! Affine layers and small MLPs over tape variables.

use rand::Rng;

use crate::autodiff::{Activation, Tape, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// `x · W + b` with `W: d_in × d_out` and optional `b: 1 × d_out`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add_weight(
            format!("{name}.weight"),
            Tensor::glorot(d_in, d_out, d_in, d_out, rng),
        )?;
        let bias = if with_bias {
            Some(store.add_bias(format!("{name}.bias"), Tensor::zeros(1, d_out))?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let y = x.matmul(tape.param(store, self.weight))?;
        match self.bias {
            Some(b) => y.add_row_bias(tape.param(store, b)),
            None => Ok(y),
        }
    }

    pub fn in_dim(&self, store: &ParamStore) -> usize {
        store.value(self.weight).rows()
    }

    pub fn out_dim(&self, store: &ParamStore) -> usize {
        store.value(self.weight).cols()
    }
}

/// Two affine layers with a hidden activation and an output activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Dense,
    pub output: Dense,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Mlp {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            hidden: Dense::new(store, &format!("{name}.0"), d_in, d_hidden, true, rng)?,
            output: Dense::new(store, &format!("{name}.1"), d_hidden, d_out, true, rng)?,
            hidden_activation,
            output_activation,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let h = self
            .hidden
            .forward(tape, store, x)?
            .activation(self.hidden_activation);
        Ok(self
            .output
            .forward(tape, store, h)?
            .activation(self.output_activation))
    }
}
