//! Analytic gradients against central finite differences (`h = 1e-6`).

mod common;

use common::{project, rand_tensor, random_graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spgnn::autodiff::{Activation, Reduce, Tape, Var};
use spgnn::conv::{CatAggLayer, GinLayer, NormAdjLayer};
use spgnn::gradcheck::{check_inputs, check_params, GradCheckReport};
use spgnn::graph::Graph;
use spgnn::model::{Model, ModelConfig};
use spgnn::nn::Mlp;
use spgnn::params::ParamStore;
use spgnn::pool::{node_importance, WlSortPool};
use spgnn::readout::CnnClassifier;
use spgnn::{Result, Tensor};

const H: f64 = 1e-6;
const OP_TOL: f64 = 1e-6;
const NET_TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn assert_ok(r: GradCheckReport, tol: f64) {
    assert!(r.checked > 0, "nothing was checked");
    assert!(
        r.max_relative_error < tol,
        "max relative error {:e} ≥ {tol:e} at {}",
        r.max_relative_error,
        r.worst
    );
}

fn check_op<F>(inputs: &[Tensor], f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    assert_ok(check_inputs(inputs, H, f).unwrap(), OP_TOL);
}

/// Entries bounded away from zero, so ReLU kinks and max ties are avoided.
fn off_zero(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Tensor {
    let mut t = rand_tensor(rows, cols, r);
    for v in t.data_mut() {
        *v = v.signum() * (0.1 + v.abs());
    }
    t
}

fn five_node_graph() -> Graph {
    Graph::from_edges(
        5,
        &[(0, 1), (1, 2), (2, 3), (3, 0), (3, 4)],
        vec![0, 1, 2, 1, 0],
        3,
        1,
    )
    .unwrap()
}

#[test]
fn matmul_sum() {
    let mut r = rng(1);
    check_op(
        &[rand_tensor(3, 4, &mut r), rand_tensor(4, 2, &mut r)],
        |_, v| Ok(v[0].matmul(v[1])?.sum_all()),
    );
}

#[test]
fn concat_columns() {
    let mut r = rng(2);
    let c = rand_tensor(2, 5, &mut r);
    check_op(
        &[rand_tensor(2, 3, &mut r), rand_tensor(2, 2, &mut r)],
        |_, v| project(v[0].concat_cols(v[1])?, &c),
    );
}

#[test]
fn activations() {
    let mut r = rng(3);
    let c = rand_tensor(3, 3, &mut r);
    for act in [
        Activation::Tanh,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Identity,
    ] {
        check_op(&[off_zero(3, 3, &mut r)], |_, v| {
            project(v[0].activation(act), &c)
        });
    }
}

#[test]
fn row_reductions() {
    let mut r = rng(4);
    let c = rand_tensor(1, 2, &mut r);
    for kind in [Reduce::Sum, Reduce::Mean, Reduce::Max] {
        check_op(&[rand_tensor(4, 2, &mut r)], |_, v| {
            project(v[0].reduce_rows(kind), &c)
        });
    }
}

#[test]
fn bias_scalar_and_constant_products() {
    let mut r = rng(5);
    let c = rand_tensor(3, 2, &mut r);
    let k = rand_tensor(3, 2, &mut r);
    check_op(
        &[
            rand_tensor(3, 2, &mut r),
            rand_tensor(1, 2, &mut r),
            rand_tensor(1, 1, &mut r),
        ],
        |_, v| {
            let y = v[0]
                .add_row_bias(v[1])?
                .mul_scalar(v[2])?
                .mul_const(k.clone())?;
            project(y.add(v[0].scale(-0.7))?, &c)
        },
    );
}

#[test]
fn gather_pad_reshape() {
    let mut r = rng(6);
    let c = rand_tensor(1, 12, &mut r);
    check_op(&[rand_tensor(4, 3, &mut r)], |_, v| {
        let y = v[0].gather_rows(&[2, 0])?.pad_rows(4)?.reshape(1, 12)?;
        project(y, &c)
    });
}

#[test]
fn conv1d_and_maxpool() {
    let mut r = rng(7);
    let c = rand_tensor(2, 6, &mut r);
    check_op(
        &[
            rand_tensor(1, 8, &mut r),
            rand_tensor(2, 3, &mut r),
            rand_tensor(1, 2, &mut r),
        ],
        |_, v| project(v[0].conv1d(v[1], v[2], 3, 1)?, &c),
    );
    let c2 = rand_tensor(3, 2, &mut r);
    check_op(
        &[
            rand_tensor(2, 9, &mut r),
            rand_tensor(3, 6, &mut r),
            rand_tensor(1, 3, &mut r),
        ],
        |_, v| project(v[0].conv1d(v[1], v[2], 3, 2)?.maxpool1d(2, 2)?, &c2),
    );
}

#[test]
fn softmax_cross_entropy() {
    let mut r = rng(8);
    for label in 0..5 {
        check_op(&[rand_tensor(1, 5, &mut r)], |_, v| {
            v[0].softmax_cross_entropy(label)
        });
    }
}

#[test]
fn dropout_with_fixed_mask() {
    let mut r = rng(9);
    let c = rand_tensor(4, 4, &mut r);
    check_op(&[rand_tensor(4, 4, &mut r)], |_, v| {
        let mut mask_rng = rng(99);
        project(v[0].dropout(0.5, true, &mut mask_rng)?, &c)
    });
}

#[test]
fn neighbourhood_pooling_and_norm_adj() {
    let mut r = rng(10);
    let g = five_node_graph();
    let c = rand_tensor(5, 3, &mut r);
    for kind in [Reduce::Sum, Reduce::Mean, Reduce::Max] {
        check_op(&[rand_tensor(5, 3, &mut r)], |_, v| {
            project(v[0].neighbor_pool(g.shared_adjacency(), kind)?, &c)
        });
    }
    check_op(&[rand_tensor(5, 3, &mut r)], |_, v| {
        project(v[0].norm_adj(g.shared_adjacency())?, &c)
    });
}

fn check_layer<F>(store: &ParamStore, input: &Tensor, f: F)
where
    F: for<'t> Fn(&'t Tape, &ParamStore, Var<'t>) -> Result<Var<'t>>,
{
    let by_params =
        check_params(store, H, |tape, s| f(tape, s, tape.constant(input.clone()))).unwrap();
    assert_ok(by_params, NET_TOL);
    let by_input = check_inputs(std::slice::from_ref(input), H, |tape, v| {
        f(tape, store, v[0])
    })
    .unwrap();
    assert_ok(by_input, NET_TOL);
}

#[test]
fn cat_agg_layer() {
    let g = five_node_graph();
    for (seed, pool) in [(11, Reduce::Sum), (12, Reduce::Mean), (13, Reduce::Max)] {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let layer =
            CatAggLayer::new(&mut store, "c", 3, 4, pool, Activation::Tanh, &mut r).unwrap();
        let c = rand_tensor(5, 4, &mut r);
        check_layer(&store, &rand_tensor(5, 3, &mut r), |t, s, z| {
            project(layer.forward(t, s, &g, z)?, &c)
        });
    }
}

#[test]
fn gin_layer_with_learned_epsilon() {
    let g = five_node_graph();
    let mut r = rng(14);
    let mut store = ParamStore::new();
    let layer = GinLayer::new(&mut store, "g", 3, 4, true, &mut r).unwrap();
    // Move ε and the biases off zero so no ReLU sits on its kink.
    for p in store.iter_mut() {
        if !p.decays() {
            let shape = p.value().shape();
            *p.value_mut() = Tensor::uniform(shape.0, shape.1, 0.3, &mut r);
        }
    }
    let c = rand_tensor(5, 4, &mut r);
    check_layer(&store, &rand_tensor(5, 3, &mut r), |t, s, z| {
        project(layer.forward(t, s, &g, z)?, &c)
    });
}

#[test]
fn norm_adj_layer() {
    let g = five_node_graph();
    let mut r = rng(15);
    let mut store = ParamStore::new();
    let layer = NormAdjLayer::new(&mut store, "n", 3, 4, Activation::Tanh, &mut r).unwrap();
    let c = rand_tensor(5, 4, &mut r);
    check_layer(&store, &rand_tensor(5, 3, &mut r), |t, s, z| {
        project(layer.forward(t, s, &g, z)?, &c)
    });
}

#[test]
fn importance_mlp() {
    let mut r = rng(16);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(
        &mut store,
        "imp",
        4,
        16,
        1,
        Activation::Tanh,
        Activation::Identity,
        &mut r,
    )
    .unwrap();
    let c = rand_tensor(6, 1, &mut r);
    check_layer(&store, &rand_tensor(6, 4, &mut r), |t, s, z| {
        project(node_importance(&mlp, t, s, z)?, &c)
    });
}

#[test]
fn wl_sortpool_path() {
    // Two layers, n = 6 above k = 4 so truncation is exercised, and the
    // importance column kept so the scoring MLPs receive gradient.
    let mut r = rng(17);
    let mut store = ParamStore::new();
    let pool = WlSortPool::new(&mut store, &[3, 2], 4, true, &mut r).unwrap();
    let z1 = rand_tensor(6, 3, &mut r);
    let z2 = rand_tensor(6, 2, &mut r);
    let c = rand_tensor(4, 7, &mut r);
    let by_params = check_params(&store, H, |tape, s| {
        let p = pool.forward(
            tape,
            s,
            &[tape.constant(z1.clone()), tape.constant(z2.clone())],
        )?;
        project(p.grid, &c)
    })
    .unwrap();
    assert_ok(by_params, NET_TOL);
    let by_inputs = check_inputs(&[z1.clone(), z2.clone()], H, |tape, v| {
        project(pool.forward(tape, &store, v)?.grid, &c)
    })
    .unwrap();
    assert_ok(by_inputs, NET_TOL);
}

#[test]
fn cnn_head() {
    let mut r = rng(18);
    let mut store = ParamStore::new();
    let head = CnnClassifier::new(&mut store, "head", 12, 3, 3, &mut r).unwrap();
    for p in store.iter_mut() {
        if !p.decays() {
            let shape = p.value().shape();
            *p.value_mut() = Tensor::uniform(shape.0, shape.1, 0.2, &mut r);
        }
    }
    check_layer(&store, &rand_tensor(12, 3, &mut r), |t, s, grid| {
        let mut mask = rng(5);
        head.forward(t, s, grid, true, &mut mask)?
            .softmax_cross_entropy(2)
    });
}

fn full_model_check(config: ModelConfig, seed: u64) {
    let g = five_node_graph();
    let mut model = Model::new(config, 3, 2, seed).unwrap();
    let mut r = rng(seed + 100);
    // Non-zero biases keep zero-padded slots off the ReLU kink.
    for p in model.store.iter_mut() {
        if !p.decays() {
            let shape = p.value().shape();
            *p.value_mut() = Tensor::uniform(shape.0, shape.1, 0.2, &mut r);
        }
    }
    let report = check_params(&model.store, H, |tape, s| {
        let mut mask = rng(7);
        model
            .forward_with(tape, s, &g, true, &mut mask)?
            .logits
            .softmax_cross_entropy(g.label())
    })
    .unwrap();
    assert_eq!(report.checked, model.store.num_scalars());
    assert_ok(report, NET_TOL);
}

#[test]
fn full_spgnn_default_configuration() {
    full_model_check(ModelConfig::default(), 19);
}

#[test]
fn full_spgnn_with_importance_channel() {
    full_model_check(
        ModelConfig {
            include_importance_channel: true,
            layers: 2,
            width: 8,
            k: 10,
            ..ModelConfig::default()
        },
        20,
    );
}

#[test]
fn random_graphs_through_every_conv() {
    use spgnn::conv::ConvKind;
    use spgnn::pool::PoolKind;
    let mut r = rng(21);
    for conv in [ConvKind::CatAgg, ConvKind::Gin, ConvKind::NormAdj] {
        for pool in [PoolKind::WlSortPool, PoolKind::SortPool, PoolKind::SumPool] {
            let g = random_graph(7, 0.4, 3, 0, &mut r);
            let mut model = Model::new(
                ModelConfig {
                    conv,
                    pool,
                    layers: 2,
                    width: 5,
                    k: 10,
                    ..ModelConfig::default()
                },
                3,
                2,
                22,
            )
            .unwrap();
            for p in model.store.iter_mut() {
                if !p.decays() {
                    let shape = p.value().shape();
                    *p.value_mut() = Tensor::uniform(shape.0, shape.1, 0.2, &mut r);
                }
            }
            let report = check_params(&model.store, H, |tape, s| {
                let mut mask = rng(3);
                model
                    .forward_with(tape, s, &g, false, &mut mask)?
                    .logits
                    .softmax_cross_entropy(1)
            })
            .unwrap();
            assert_ok(report, NET_TOL);
        }
    }
}
