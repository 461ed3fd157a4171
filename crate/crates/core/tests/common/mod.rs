#![allow(dead_code)]

use rand::Rng;
use spgnn::autodiff::Var;
use spgnn::graph::Graph;
use spgnn::{Result, Tensor};

/// Erdős–Rényi graph with uniformly random node labels.
pub fn random_graph<R: Rng>(
    n: usize,
    p: f64,
    num_labels: usize,
    label: usize,
    rng: &mut R,
) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let labels = (0..n).map(|_| rng.gen_range(0..num_labels)).collect();
    Graph::from_edges(n, &edges, labels, num_labels, label).unwrap()
}

pub fn rand_tensor<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::uniform(rows, cols, 1.0, rng)
}

/// `sum(x ⊙ c)`: a scalar whose gradient with respect to `x` is `c`, so
/// every output entry is weighted differently.
pub fn project<'t>(x: Var<'t>, c: &Tensor) -> Result<Var<'t>> {
    Ok(x.mul_const(c.clone())?.sum_all())
}

pub fn path(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (i - 1, i)).collect()
}

pub fn cycle(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}
