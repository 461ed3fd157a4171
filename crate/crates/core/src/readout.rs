//! Classification heads mapping a pooled representation to class logits.
//!
//! [`CnnClassifier`] reads a `k × D` grid as a single-channel signal of
//! length `k·D`. Its first convolution has kernel and stride `D`, so each
//! output position sees exactly one node slot:
//!
//! ```text
//! 1 × kD ─conv1(16, D, D)→ 16 × k ─maxpool(2, 2)→ 16 × ⌊k/2⌋
//!        ─conv2(32, 5, 1)→ 32 × (⌊k/2⌋ − 4) ─flatten→ dense(100) ─dropout→ dense(C)
//! ```
//!
//! [`MlpHead`] is used for the sum readout, whose output is a single row.

use rand::Rng;

use crate::autodiff::{Activation, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Dense;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const CONV1_CHANNELS: usize = 16;
pub const CONV2_CHANNELS: usize = 32;
pub const CONV2_KERNEL: usize = 5;
pub const POOL_KERNEL: usize = 2;
pub const HIDDEN_UNITS: usize = 100;
pub const DROPOUT_RATE: f64 = 0.5;
/// Smallest `k` leaving at least one position after the second convolution.
pub const MIN_K: usize = 10;

/// Lengths along the CNN head for a `k × D` grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShapeChain {
    pub input_len: usize,
    pub conv1_len: usize,
    pub pool_len: usize,
    pub conv2_len: usize,
    pub dense1_in: usize,
}

impl ShapeChain {
    pub fn new(k: usize, d: usize) -> Result<Self> {
        if k < MIN_K {
            return Err(Error::Config(format!(
                "k = {k} is too small for the CNN head; the minimum is {MIN_K}"
            )));
        }
        if d == 0 {
            return Err(Error::Config(
                "CNN head needs a grid with at least one column".into(),
            ));
        }
        let pool_len = k / POOL_KERNEL;
        let conv2_len = pool_len + 1 - CONV2_KERNEL;
        Ok(Self {
            input_len: k * d,
            conv1_len: k,
            pool_len,
            conv2_len,
            dense1_in: CONV2_CHANNELS * conv2_len,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CnnClassifier {
    pub k: usize,
    pub width: usize,
    pub conv1_filters: ParamId,
    pub conv1_bias: ParamId,
    pub conv2_filters: ParamId,
    pub conv2_bias: ParamId,
    pub dense1: Dense,
    pub dense2: Dense,
    pub dropout: f64,
}

/// Intermediate values of one CNN forward pass.
#[derive(Clone, Copy, Debug)]
pub struct CnnTrace<'t> {
    pub conv1: Var<'t>,
    pub pooled: Var<'t>,
    pub conv2: Var<'t>,
    pub hidden: Var<'t>,
    pub logits: Var<'t>,
}

fn conv_filters<R: Rng + ?Sized>(c_out: usize, c_in: usize, kernel: usize, rng: &mut R) -> Tensor {
    Tensor::glorot(c_out, c_in * kernel, c_in * kernel, c_out * kernel, rng)
}

impl CnnClassifier {
    /// Head for a `k × width` grid and `classes` outputs.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        k: usize,
        width: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let chain = ShapeChain::new(k, width)?;
        let conv1_filters = store.add_weight(
            format!("{name}.conv1.filters"),
            conv_filters(CONV1_CHANNELS, 1, width, rng),
        )?;
        let conv1_bias = store.add_bias(
            format!("{name}.conv1.bias"),
            Tensor::zeros(1, CONV1_CHANNELS),
        )?;
        let conv2_filters = store.add_weight(
            format!("{name}.conv2.filters"),
            conv_filters(CONV2_CHANNELS, CONV1_CHANNELS, CONV2_KERNEL, rng),
        )?;
        let conv2_bias = store.add_bias(
            format!("{name}.conv2.bias"),
            Tensor::zeros(1, CONV2_CHANNELS),
        )?;
        let dense1 = Dense::new(
            store,
            &format!("{name}.dense1"),
            chain.dense1_in,
            HIDDEN_UNITS,
            true,
            rng,
        )?;
        let dense2 = Dense::new(
            store,
            &format!("{name}.dense2"),
            HIDDEN_UNITS,
            classes,
            true,
            rng,
        )?;
        Ok(Self {
            k,
            width,
            conv1_filters,
            conv1_bias,
            conv2_filters,
            conv2_bias,
            dense1,
            dense2,
            dropout: DROPOUT_RATE,
        })
    }

    pub fn shape_chain(&self) -> ShapeChain {
        ShapeChain::new(self.k, self.width).expect("validated at construction")
    }

    pub fn forward_traced<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        grid: Var<'t>,
        training: bool,
        rng: &mut R,
    ) -> Result<CnnTrace<'t>> {
        if grid.shape() != (self.k, self.width) {
            return Err(Error::Dimension {
                op: "cnn head",
                lhs: grid.shape(),
                rhs: (self.k, self.width),
            });
        }
        let signal = grid.reshape(1, self.k * self.width)?;
        let conv1 = signal
            .conv1d(
                tape.param(store, self.conv1_filters),
                tape.param(store, self.conv1_bias),
                self.width,
                self.width,
            )?
            .activation(Activation::Relu);
        let pooled = conv1.maxpool1d(POOL_KERNEL, POOL_KERNEL)?;
        let conv2 = pooled
            .conv1d(
                tape.param(store, self.conv2_filters),
                tape.param(store, self.conv2_bias),
                CONV2_KERNEL,
                1,
            )?
            .activation(Activation::Relu);
        let (c, l) = conv2.shape();
        let hidden = self
            .dense1
            .forward(tape, store, conv2.reshape(1, c * l)?)?
            .activation(Activation::Relu);
        let dropped = hidden.dropout(self.dropout, training, rng)?;
        let logits = self.dense2.forward(tape, store, dropped)?;
        Ok(CnnTrace {
            conv1,
            pooled,
            conv2,
            hidden,
            logits,
        })
    }

    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        grid: Var<'t>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t>> {
        Ok(self
            .forward_traced(tape, store, grid, training, rng)?
            .logits)
    }
}

/// `dense(100, relu) → dropout → dense(C)` over a single row.
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub dense1: Dense,
    pub dense2: Dense,
    pub dropout: f64,
}

impl MlpHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            dense1: Dense::new(
                store,
                &format!("{name}.dense1"),
                width,
                HIDDEN_UNITS,
                true,
                rng,
            )?,
            dense2: Dense::new(
                store,
                &format!("{name}.dense2"),
                HIDDEN_UNITS,
                classes,
                true,
                rng,
            )?,
            dropout: DROPOUT_RATE,
        })
    }

    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t>> {
        let h = self
            .dense1
            .forward(tape, store, x)?
            .activation(Activation::Relu);
        let h = h.dropout(self.dropout, training, rng)?;
        self.dense2.forward(tape, store, h)
    }
}

#[derive(Clone, Debug)]
pub enum Head {
    Cnn(CnnClassifier),
    Mlp(MlpHead),
}

impl Head {
    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t>> {
        match self {
            Head::Cnn(h) => h.forward(tape, store, x, training, rng),
            Head::Mlp(h) => h.forward(tape, store, x, training, rng),
        }
    }
}
