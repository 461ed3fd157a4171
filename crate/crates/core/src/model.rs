//! Assembled networks: a stack of graph convolutions, a readout and a
//! classification head, all owning their parameters in one [`ParamStore`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, Reduce, Tape, Var};
use crate::conv::{CatAggLayer, ConvKind, ConvLayer, GinLayer, NormAdjLayer};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::params::ParamStore;
use crate::pool::{PoolKind, Pooled, PooledRepresentation, Pooling, TieBreak, WlSortPool};
use crate::readout::{CnnClassifier, Head, MlpHead};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub conv: ConvKind,
    pub pool: PoolKind,
    /// Neighbourhood pooling inside Cat-Agg.
    pub inner_pool: Reduce,
    pub layers: usize,
    pub width: usize,
    pub k: usize,
    pub include_importance_channel: bool,
    pub learn_epsilon: bool,
    pub activation: Activation,
    pub tie_break: TieBreak,
}

impl Default for ModelConfig {
    /// Four Cat-Agg layers of width 32 with sum inner pooling, WL-SortPool
    /// with `k = 30`, and the CNN head.
    fn default() -> Self {
        Self {
            conv: ConvKind::CatAgg,
            pool: PoolKind::WlSortPool,
            inner_pool: Reduce::Sum,
            layers: 4,
            width: 32,
            k: 30,
            include_importance_channel: false,
            learn_epsilon: false,
            activation: Activation::Tanh,
            tie_break: TieBreak::Content,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got `{value}`"
        ))),
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| {
        Error::Config(format!(
            "{key}: expected a non-negative integer, got `{value}`"
        ))
    })
}

impl ModelConfig {
    pub const KEYS: [&'static str; 10] = [
        "conv",
        "pool",
        "inner_pool",
        "layers",
        "width",
        "k",
        "importance_channel",
        "learn_epsilon",
        "activation",
        "tie_break",
    ];

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let pairs: [(&str, String); 10] = [
            ("conv", self.conv.name().into()),
            ("pool", self.pool.name().into()),
            ("inner_pool", self.inner_pool.name().into()),
            ("layers", self.layers.to_string()),
            ("width", self.width.to_string()),
            ("k", self.k.to_string()),
            (
                "importance_channel",
                self.include_importance_channel.to_string(),
            ),
            ("learn_epsilon", self.learn_epsilon.to_string()),
            ("activation", self.activation.name().into()),
            ("tie_break", self.tie_break.name().into()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Sets one key. Returns `Ok(false)` if the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = |what: &str| Error::Config(format!("{key}: unknown {what} `{value}`"));
        match key {
            "conv" => self.conv = ConvKind::parse(value).ok_or_else(|| bad("convolution"))?,
            "pool" => self.pool = PoolKind::parse(value).ok_or_else(|| bad("pooling"))?,
            "inner_pool" => {
                self.inner_pool = Reduce::parse(value).ok_or_else(|| bad("reduction"))?
            }
            "layers" => self.layers = parse_usize(key, value)?,
            "width" => self.width = parse_usize(key, value)?,
            "k" => self.k = parse_usize(key, value)?,
            "importance_channel" => self.include_importance_channel = parse_bool(key, value)?,
            "learn_epsilon" => self.learn_epsilon = parse_bool(key, value)?,
            "activation" => {
                self.activation = Activation::parse(value).ok_or_else(|| bad("activation"))?
            }
            "tie_break" => {
                self.tie_break = TieBreak::parse(value).ok_or_else(|| bad("tie-break"))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 {
            return Err(Error::Config("layers and width must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }

    /// Column count of the pooled grid.
    pub fn grid_width(&self) -> usize {
        let extra =
            usize::from(self.pool == PoolKind::WlSortPool && self.include_importance_channel);
        self.layers * (self.width + extra)
    }
}

/// All values produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward<'t> {
    pub layers: Vec<Var<'t>>,
    pub pooled: Pooled<'t>,
    pub logits: Var<'t>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub convs: Vec<ConvLayer>,
    pub pooling: Pooling,
    pub head: Head,
    pub in_dim: usize,
    pub num_classes: usize,
}

impl Model {
    /// Builds a freshly initialised model; all randomness comes from `seed`.
    pub fn new(config: ModelConfig, in_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if in_dim == 0 || num_classes < 2 {
            return Err(Error::Config(format!(
                "model needs input features and at least two classes (got {in_dim} features, {num_classes} classes)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut convs = Vec::with_capacity(config.layers);
        let mut d = in_dim;
        for l in 0..config.layers {
            let name = format!("conv{l}");
            let w = config.width;
            convs.push(match config.conv {
                ConvKind::CatAgg => ConvLayer::CatAgg(CatAggLayer::new(
                    &mut store,
                    &name,
                    d,
                    w,
                    config.inner_pool,
                    config.activation,
                    &mut rng,
                )?),
                ConvKind::Gin => ConvLayer::Gin(GinLayer::new(
                    &mut store,
                    &name,
                    d,
                    w,
                    config.learn_epsilon,
                    &mut rng,
                )?),
                ConvKind::NormAdj => ConvLayer::NormAdj(NormAdjLayer::new(
                    &mut store,
                    &name,
                    d,
                    w,
                    config.activation,
                    &mut rng,
                )?),
            });
            d = w;
        }
        let widths = vec![config.width; config.layers];
        let pooling = match config.pool {
            PoolKind::WlSortPool => {
                let mut p = WlSortPool::new(
                    &mut store,
                    &widths,
                    config.k,
                    config.include_importance_channel,
                    &mut rng,
                )?;
                p.tie_break = config.tie_break;
                Pooling::WlSortPool(p)
            }
            PoolKind::SortPool => Pooling::SortPool { k: config.k },
            PoolKind::SumPool => Pooling::Sum,
        };
        let head = match config.pool {
            PoolKind::SumPool => Head::Mlp(MlpHead::new(
                &mut store,
                "head",
                config.grid_width(),
                num_classes,
                &mut rng,
            )?),
            _ => Head::Cnn(CnnClassifier::new(
                &mut store,
                "head",
                config.k,
                config.grid_width(),
                num_classes,
                &mut rng,
            )?),
        };
        Ok(Self {
            config,
            store,
            convs,
            pooling,
            head,
            in_dim,
            num_classes,
        })
    }

    /// Forward pass using parameter values from `store` (which must share
    /// this model's layout).
    pub fn forward_with<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        g: &Graph,
        training: bool,
        rng: &mut R,
    ) -> Result<Forward<'t>> {
        if g.feature_dim() != self.in_dim {
            return Err(Error::Dimension {
                op: "model input",
                lhs: g.features().shape(),
                rhs: (g.num_nodes(), self.in_dim),
            });
        }
        let mut z = tape.constant(g.features().clone());
        let mut layers = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            z = conv.forward(tape, store, g, z)?;
            layers.push(z);
        }
        let pooled = self.pooling.forward(tape, store, &layers)?;
        let logits = self.head.forward(tape, store, pooled.grid, training, rng)?;
        Ok(Forward {
            layers,
            pooled,
            logits,
        })
    }

    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        g: &Graph,
        training: bool,
        rng: &mut R,
    ) -> Result<Forward<'t>> {
        self.forward_with(tape, &self.store, g, training, rng)
    }

    /// The pooled representation of `g` (no head, no dropout).
    pub fn pooled(&self, g: &Graph) -> Result<PooledRepresentation> {
        let tape = Tape::new();
        let mut z = tape.constant(g.features().clone());
        let mut layers = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            z = conv.forward(&tape, &self.store, g, z)?;
            layers.push(z);
        }
        Ok(self.pooling.forward(&tape, &self.store, &layers)?.detach())
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, g: &Graph) -> Result<Vec<f64>> {
        let tape = Tape::new();
        // Dropout is the identity in evaluation mode, so the generator is unused.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = self.forward(&tape, g, false, &mut rng)?;
        Ok(f.logits.value().data().to_vec())
    }

    /// Arg-max class; ties go to the lowest class index.
    pub fn predict(&self, g: &Graph) -> Result<usize> {
        let logits = self.logits(g)?;
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (2, 0)], vec![0, 1, 0], 2, 1).unwrap()
    }

    #[test]
    fn default_grid_width() {
        assert_eq!(ModelConfig::default().grid_width(), 128);
        let cfg = ModelConfig {
            include_importance_channel: true,
            ..ModelConfig::default()
        };
        assert_eq!(cfg.grid_width(), 132);
    }

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig {
            conv: ConvKind::Gin,
            pool: PoolKind::SortPool,
            k: 12,
            ..ModelConfig::default()
        };
        let mut back = ModelConfig::default();
        for (k, v) in cfg.to_kv() {
            assert!(back.set(&k, &v).unwrap());
        }
        assert_eq!(back, cfg);
        assert!(!back.set("nope", "1").unwrap());
        assert!(back.set("conv", "gcn").is_err());
    }

    #[test]
    fn every_wiring_produces_logits() {
        for conv in [ConvKind::CatAgg, ConvKind::Gin, ConvKind::NormAdj] {
            for pool in [PoolKind::WlSortPool, PoolKind::SortPool, PoolKind::SumPool] {
                let cfg = ModelConfig {
                    conv,
                    pool,
                    layers: 2,
                    width: 4,
                    k: 10,
                    ..ModelConfig::default()
                };
                let model = Model::new(cfg, 2, 3, 7).unwrap();
                let logits = model.logits(&triangle()).unwrap();
                assert_eq!(logits.len(), 3);
                assert!(logits.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::new(ModelConfig::default(), 2, 2, 3).unwrap();
        let b = Model::new(ModelConfig::default(), 2, 2, 3).unwrap();
        for (p, q) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(p.value(), q.value());
        }
    }

    #[test]
    fn feature_width_is_checked() {
        let model = Model::new(ModelConfig::default(), 5, 2, 3).unwrap();
        assert!(model.logits(&triangle()).is_err());
    }
}
