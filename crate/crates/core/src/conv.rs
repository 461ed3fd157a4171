//! Graph convolutions.
//!
//! - [`CatAggLayer`]: transform every node, then concatenate each node's
//!   transformed feature with a pooled summary of its neighbours' and map
//!   the result through `M`. Keeping the centre node in its own slot is what
//!   separates it from its neighbourhood.
//! - [`GinLayer`]: `MLP((1+ε)·z_i + Σ_{j∈N(i)} z_j)`.
//! - [`NormAdjLayer`]: `f(D̃^{-1/2}(A+I)D̃^{-1/2} Z W)`.
//!
//! All aggregation iterates adjacency lists in ascending node order.

use rand::Rng;

use crate::autodiff::{Activation, Reduce, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::Mlp;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    CatAgg,
    Gin,
    NormAdj,
}

impl ConvKind {
    pub fn name(self) -> &'static str {
        match self {
            ConvKind::CatAgg => "catagg",
            ConvKind::Gin => "gin",
            ConvKind::NormAdj => "normadj",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "catagg" => Some(ConvKind::CatAgg),
            "gin" => Some(ConvKind::Gin),
            "normadj" => Some(ConvKind::NormAdj),
            _ => None,
        }
    }
}

/// `concat(selected, pool(others))`, the vector Cat-Agg feeds into `M`.
pub fn cat_agg_input<'t>(selected: Var<'t>, others: Var<'t>, pool: Reduce) -> Result<Var<'t>> {
    let (sr, sc) = selected.shape();
    let (_, oc) = others.shape();
    if sr != 1 || sc != oc {
        return Err(Error::Dimension {
            op: "cat_agg",
            lhs: selected.shape(),
            rhs: others.shape(),
        });
    }
    selected.concat_cols(others.reduce_rows(pool))
}

/// `σ(concat(selected, pool(others)) · M)` for one element and its set.
pub fn cat_agg<'t>(
    selected: Var<'t>,
    others: Var<'t>,
    m: Var<'t>,
    pool: Reduce,
    activation: Activation,
) -> Result<Var<'t>> {
    Ok(cat_agg_input(selected, others, pool)?
        .matmul(m)?
        .activation(activation))
}

#[derive(Clone, Debug)]
pub struct CatAggLayer {
    pub w: ParamId,
    pub m: ParamId,
    pub inner_pool: Reduce,
    pub activation: Activation,
}

impl CatAggLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        inner_pool: Reduce,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add_weight(
            format!("{name}.W"),
            Tensor::glorot(d_in, d_out, d_in, d_out, rng),
        )?;
        let m = store.add_weight(
            format!("{name}.M"),
            Tensor::glorot(2 * d_out, d_out, 2 * d_out, d_out, rng),
        )?;
        Ok(Self {
            w,
            m,
            inner_pool,
            activation,
        })
    }

    /// The transformed node features `σ(Z·W)`.
    pub fn transform<'t>(&self, tape: &'t Tape, store: &ParamStore, z: Var<'t>) -> Result<Var<'t>> {
        Ok(z.matmul(tape.param(store, self.w))?
            .activation(self.activation))
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        g: &Graph,
        z: Var<'t>,
    ) -> Result<Var<'t>> {
        let y = self.transform(tape, store, z)?;
        // The centre node is excluded from its own pooled set.
        let pooled = y.neighbor_pool(g.shared_adjacency(), self.inner_pool)?;
        Ok(y.concat_cols(pooled)?
            .matmul(tape.param(store, self.m))?
            .activation(self.activation))
    }
}

#[derive(Clone, Debug)]
pub enum Epsilon {
    Fixed(f64),
    Learned(ParamId),
}

#[derive(Clone, Debug)]
pub struct GinLayer {
    pub epsilon: Epsilon,
    pub mlp: Mlp,
}

impl GinLayer {
    /// MLP widths `d_in → d_out → d_out` with ReLU on both layers.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        learn_epsilon: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let epsilon = if learn_epsilon {
            Epsilon::Learned(store.add_bias(format!("{name}.eps"), Tensor::scalar(0.0))?)
        } else {
            Epsilon::Fixed(0.0)
        };
        let mlp = Mlp::new(
            store,
            &format!("{name}.mlp"),
            d_in,
            d_out,
            d_out,
            Activation::Relu,
            Activation::Relu,
            rng,
        )?;
        Ok(Self { epsilon, mlp })
    }

    /// `(1+ε)·Z + A·Z`, the input to the MLP.
    pub fn aggregate<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        g: &Graph,
        z: Var<'t>,
    ) -> Result<Var<'t>> {
        let neighbours = z.neighbor_pool(g.shared_adjacency(), Reduce::Sum)?;
        let centre = match self.epsilon {
            Epsilon::Fixed(e) => z.scale(1.0 + e),
            Epsilon::Learned(p) => z.add(z.mul_scalar(tape.param(store, p))?)?,
        };
        centre.add(neighbours)
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        g: &Graph,
        z: Var<'t>,
    ) -> Result<Var<'t>> {
        let agg = self.aggregate(tape, store, g, z)?;
        self.mlp.forward(tape, store, agg)
    }
}

#[derive(Clone, Debug)]
pub struct NormAdjLayer {
    pub w: ParamId,
    pub activation: Activation,
}

impl NormAdjLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add_weight(
            format!("{name}.W"),
            Tensor::glorot(d_in, d_out, d_in, d_out, rng),
        )?;
        Ok(Self { w, activation })
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        g: &Graph,
        z: Var<'t>,
    ) -> Result<Var<'t>> {
        let y = z.matmul(tape.param(store, self.w))?;
        Ok(y.norm_adj(g.shared_adjacency())?
            .activation(self.activation))
    }
}

#[derive(Clone, Debug)]
pub enum ConvLayer {
    CatAgg(CatAggLayer),
    Gin(GinLayer),
    NormAdj(NormAdjLayer),
}

impl ConvLayer {
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        g: &Graph,
        z: Var<'t>,
    ) -> Result<Var<'t>> {
        if z.shape().0 != g.num_nodes() {
            return Err(Error::Dimension {
                op: "graph convolution",
                lhs: z.shape(),
                rhs: (g.num_nodes(), 0),
            });
        }
        match self {
            ConvLayer::CatAgg(l) => l.forward(tape, store, g, z),
            ConvLayer::Gin(l) => l.forward(tape, store, g, z),
            ConvLayer::NormAdj(l) => l.forward(tape, store, g, z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_case_returns_selected() {
        let tape = Tape::new();
        let selected = tape.constant(Tensor::from_rows(&[[0.3, -1.2]]));
        let others = tape.constant(Tensor::from_rows(&[[5.0, 6.0], [7.0, 8.0]]));
        let mut stack = Tensor::zeros(4, 2);
        stack.set(0, 0, 1.0);
        stack.set(1, 1, 1.0);
        let m = tape.constant(stack);
        let out = cat_agg(selected, others, m, Reduce::Sum, Activation::Identity).unwrap();
        assert_eq!(*out.value(), *selected.value());
    }

    #[test]
    fn cat_agg_width_mismatch() {
        let tape = Tape::new();
        let s = tape.constant(Tensor::zeros(1, 2));
        let o = tape.constant(Tensor::zeros(3, 3));
        assert!(matches!(
            cat_agg_input(s, o, Reduce::Sum),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn isolated_node_sees_zero_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let layer = CatAggLayer::new(
            &mut store,
            "c",
            2,
            3,
            Reduce::Max,
            Activation::Tanh,
            &mut rng,
        )
        .unwrap();
        let g = Graph::from_edges(1, &[], vec![0], 1, 0).unwrap();
        let tape = Tape::new();
        let z = tape.constant(Tensor::from_rows(&[[0.4, -0.7]]));
        let out = layer.forward(&tape, &store, &g, z).unwrap();
        let y = layer.transform(&tape, &store, z).unwrap();
        let zero = tape.constant(Tensor::zeros(1, 3));
        let expect = y
            .concat_cols(zero)
            .unwrap()
            .matmul(tape.param(&store, layer.m))
            .unwrap()
            .activation(Activation::Tanh);
        assert_eq!(*out.value(), *expect.value());
    }

    #[test]
    fn gin_isolated_node_with_zero_epsilon_is_plain_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let layer = GinLayer::new(&mut store, "g", 2, 4, false, &mut rng).unwrap();
        let g = Graph::from_edges(1, &[], vec![0], 1, 0).unwrap();
        let tape = Tape::new();
        let z = tape.constant(Tensor::from_rows(&[[0.4, -0.7]]));
        let out = layer.forward(&tape, &store, &g, z).unwrap();
        let direct = layer.mlp.forward(&tape, &store, z).unwrap();
        assert_eq!(*out.value(), *direct.value());
    }

    #[test]
    fn fixed_epsilon_gets_no_parameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        GinLayer::new(&mut store, "g", 2, 4, false, &mut rng).unwrap();
        assert!(store.id("g.eps").is_none());
    }

    #[test]
    fn norm_adj_single_node_is_dense_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let layer = NormAdjLayer::new(&mut store, "n", 3, 2, Activation::Tanh, &mut rng).unwrap();
        let g = Graph::from_edges(1, &[], vec![0], 1, 0).unwrap();
        let tape = Tape::new();
        let z = tape.constant(Tensor::from_rows(&[[1.0, 0.5, -0.5]]));
        let out = layer.forward(&tape, &store, &g, z).unwrap();
        let expect = z
            .matmul(tape.param(&store, layer.w))
            .unwrap()
            .activation(Activation::Tanh);
        assert_eq!(*out.value(), *expect.value());
    }

    #[test]
    fn norm_adj_symmetric_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let layer = NormAdjLayer::new(&mut store, "n", 2, 3, Activation::Tanh, &mut rng).unwrap();
        let g = Graph::from_edges(2, &[(0, 1)], vec![0, 0], 1, 0).unwrap();
        let tape = Tape::new();
        let z = tape.constant(Tensor::from_rows(&[[0.2, 0.9], [0.2, 0.9]]));
        let out = layer.forward(&tape, &store, &g, z).unwrap().value();
        assert_eq!(out.row(0), out.row(1));
    }
}
