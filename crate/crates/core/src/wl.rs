//! 1-WL colour refinement and node-permutation utilities.
//!
//! Colour ids are local to a refinement session: each round, every node's
//! signature `(own colour, sorted neighbour colours)` is collected over all
//! graphs of the session, the distinct signatures are sorted
//! lexicographically, and each is assigned its rank as the new colour.
//! Colourings from different sessions are therefore not comparable;
//! [`wl_distinguishable`] refines both graphs in one session.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WlColoring {
    pub colors: Vec<usize>,
    pub round: usize,
    /// Sorted `(colour, count)` pairs.
    pub histogram: Vec<(usize, usize)>,
}

impl WlColoring {
    fn new(colors: Vec<usize>, round: usize) -> Self {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in &colors {
            *counts.entry(c).or_default() += 1;
        }
        Self {
            colors,
            round,
            histogram: counts.into_iter().collect(),
        }
    }

    pub fn num_colors(&self) -> usize {
        self.histogram.len()
    }
}

type Signature = (usize, Vec<usize>);

fn signature(g: &Graph, colors: &[usize], i: usize) -> Signature {
    let mut nb: Vec<usize> = g.neighbors(i).iter().map(|&j| colors[j]).collect();
    nb.sort_unstable();
    (colors[i], nb)
}

fn distinct(colorings: &[Vec<usize>]) -> usize {
    let mut all: Vec<usize> = colorings.iter().flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}

/// Refines all `graphs` jointly. Element `r` of the result holds every
/// graph's colouring after `r` rounds; round 0 is the node labels.
/// Refinement stops after `rounds` rounds or once the partition is stable.
pub fn wl_refine_joint(graphs: &[&Graph], rounds: usize) -> Vec<Vec<WlColoring>> {
    let mut current: Vec<Vec<usize>> = graphs.iter().map(|g| g.node_labels().to_vec()).collect();
    let mut history = vec![current
        .iter()
        .map(|c| WlColoring::new(c.clone(), 0))
        .collect::<Vec<_>>()];
    for round in 1..=rounds {
        let sigs: Vec<Vec<Signature>> = graphs
            .iter()
            .zip(&current)
            .map(|(g, c)| (0..g.num_nodes()).map(|i| signature(g, c, i)).collect())
            .collect();
        let mut palette: Vec<&Signature> = sigs.iter().flatten().collect();
        palette.sort();
        palette.dedup();
        let next: Vec<Vec<usize>> = sigs
            .iter()
            .map(|gs| {
                gs.iter()
                    .map(|s| palette.binary_search(&s).expect("present"))
                    .collect()
            })
            .collect();
        let stable = distinct(&next) == distinct(&current);
        current = next;
        history.push(
            current
                .iter()
                .map(|c| WlColoring::new(c.clone(), round))
                .collect(),
        );
        if stable {
            break;
        }
    }
    history
}

/// Colouring of `g` after at most `rounds` rounds of refinement.
pub fn wl_refine(g: &Graph, rounds: usize) -> WlColoring {
    let mut history = wl_refine_joint(&[g], rounds);
    history
        .pop()
        .expect("round 0 always present")
        .pop()
        .expect("one graph")
}

/// True iff the colour histograms differ at some round up to
/// `min(max_rounds, max(n₁, n₂))`.
pub fn wl_distinguishable(g1: &Graph, g2: &Graph, max_rounds: usize) -> bool {
    let rounds = max_rounds.min(g1.num_nodes().max(g2.num_nodes()));
    wl_refine_joint(&[g1, g2], rounds)
        .iter()
        .any(|r| r[0].histogram != r[1].histogram)
}

/// Relabels node `i` as `perm[i]`; the graph label is unchanged.
pub fn permute_graph(g: &Graph, perm: &[usize]) -> Result<Graph> {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    if perm.len() != n
        || perm
            .iter()
            .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
    {
        return Err(Error::Contract(format!(
            "{perm:?} is not a permutation of 0..{n}"
        )));
    }
    let mut adj = vec![Vec::new(); n];
    let mut labels = vec![0; n];
    for i in 0..n {
        let mut list: Vec<usize> = g.neighbors(i).iter().map(|&j| perm[j]).collect();
        list.sort_unstable();
        adj[perm[i]] = list;
        labels[perm[i]] = g.node_labels()[i];
    }
    Graph::from_adjacency(adj, labels, g.feature_dim(), g.label())
}

/// Inverse of a permutation.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub trials: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the pooled grid of `g` with those of `trials` random
/// relabelings of it.
pub fn check_invariance<R: Rng + ?Sized>(
    model: &Model,
    g: &Graph,
    trials: usize,
    tol: f64,
    rng: &mut R,
) -> Result<InvarianceReport> {
    let base = model.pooled(g)?;
    let mut max_deviation: f64 = 0.0;
    for _ in 0..trials {
        let perm = random_permutation(g.num_nodes(), rng);
        let other = model.pooled(&permute_graph(g, &perm)?)?;
        max_deviation = max_deviation.max(base.grid.max_abs_diff(&other.grid));
    }
    Ok(InvarianceReport {
        trials,
        max_deviation,
        tolerance: tol,
        passed: max_deviation <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::degree_labels;

    fn cycle(n: usize) -> Vec<(usize, usize)> {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    }

    fn degree_labelled(graphs: Vec<Graph>) -> Vec<Graph> {
        degree_labels(&graphs).unwrap().0
    }

    #[test]
    fn round_zero_is_node_labels() {
        let g = Graph::from_edges(3, &[(0, 1)], vec![2, 0, 1], 3, 0).unwrap();
        assert_eq!(wl_refine(&g, 0).colors, vec![2, 0, 1]);
    }

    #[test]
    fn hexagon_and_two_triangles_are_indistinguishable() {
        let mut two = cycle(3);
        two.extend(cycle(3).into_iter().map(|(a, b)| (a + 3, b + 3)));
        let gs = degree_labelled(vec![
            Graph::from_edges(6, &cycle(6), vec![0; 6], 1, 0).unwrap(),
            Graph::from_edges(6, &two, vec![0; 6], 1, 0).unwrap(),
        ]);
        assert!(!wl_distinguishable(&gs[0], &gs[1], 10));
    }

    #[test]
    fn path_and_triangle_are_distinguishable() {
        let gs = degree_labelled(vec![
            Graph::from_edges(3, &[(0, 1), (1, 2)], vec![0; 3], 1, 0).unwrap(),
            Graph::from_edges(3, &cycle(3), vec![0; 3], 1, 0).unwrap(),
        ]);
        let h = wl_refine_joint(&[&gs[0], &gs[1]], 0);
        assert_ne!(h[0][0].histogram, h[0][1].histogram);
        assert!(wl_distinguishable(&gs[0], &gs[1], 3));
    }

    #[test]
    fn permutation_round_trip() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], vec![0, 1, 2, 3], 4, 1).unwrap();
        let perm = vec![2, 0, 3, 1];
        let p = permute_graph(&g, &perm).unwrap();
        assert_eq!(p.node_labels(), &[1, 3, 0, 2]);
        assert_eq!(permute_graph(&p, &invert_permutation(&perm)).unwrap(), g);
        assert!(permute_graph(&g, &[0, 0, 1, 2]).is_err());
        assert!(permute_graph(&g, &[0, 1, 2]).is_err());
    }
}
