//! Graph readouts turning per-layer node representations into a
//! fixed-size graph representation.
//!
//! [`WlSortPool`] scores nodes separately in every layer with a small MLP,
//! sorts each layer's rows by that score and keeps the top `k` (zero-padding
//! small graphs), then concatenates the layers column-wise into a `k × D`
//! grid. [`dgcnn_sortpool`] uses one ordering, taken from the last layer,
//! for every layer. [`sum_readout`] is the order-free baseline.
//!
//! Sorting compares exact stored values. Ties in the score fall back to a
//! descending lexicographic comparison of the whole row, so tied rows are
//! either identical or ordered by content; the final tie-break on the
//! original index only decides between identical rows.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::Rng;

use crate::autodiff::{Activation, Reduce, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const IMPORTANCE_HIDDEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    WlSortPool,
    SortPool,
    SumPool,
}

impl PoolKind {
    pub fn name(self) -> &'static str {
        match self {
            PoolKind::WlSortPool => "wlsortpool",
            PoolKind::SortPool => "sortpool",
            PoolKind::SumPool => "sumpool",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wlsortpool" => Some(PoolKind::WlSortPool),
            "sortpool" => Some(PoolKind::SortPool),
            "sumpool" => Some(PoolKind::SumPool),
            _ => None,
        }
    }
}

/// How rows with equal scores are ordered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Row content (descending), then original index.
    #[default]
    Content,
    /// Original index only. Not permutation invariant; exists as a
    /// negative control for invariance tests.
    IndexOnly,
}

impl TieBreak {
    pub fn name(self) -> &'static str {
        match self {
            TieBreak::Content => "content",
            TieBreak::IndexOnly => "index",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "content" => Some(TieBreak::Content),
            "index" => Some(TieBreak::IndexOnly),
            _ => None,
        }
    }
}

/// Pooled output still attached to the tape.
#[derive(Clone, Debug)]
pub struct Pooled<'t> {
    pub grid: Var<'t>,
    /// Starting column of each layer's block; the last entry is the width.
    pub layer_offsets: Vec<usize>,
    /// Original indices of the kept rows, per layer.
    pub selected: Vec<Vec<usize>>,
}

/// Detached copy of a [`Pooled`] value.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledRepresentation {
    pub grid: Tensor,
    pub layer_offsets: Vec<usize>,
    pub selected: Vec<Vec<usize>>,
}

impl Pooled<'_> {
    pub fn detach(&self) -> PooledRepresentation {
        PooledRepresentation {
            grid: (*self.grid.value()).clone(),
            layer_offsets: self.layer_offsets.clone(),
            selected: self.selected.clone(),
        }
    }
}

/// Descending total order on values in which `-0.0` equals `0.0`.
fn desc(x: f64, y: f64) -> Ordering {
    // Adding +0.0 maps -0.0 to +0.0 and leaves every other value unchanged.
    (y + 0.0).total_cmp(&(x + 0.0))
}

fn desc_lex(a: &[f64], b: &[f64]) -> Ordering {
    for (&x, &y) in a.iter().zip(b) {
        match desc(x, y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Row order: descending `score`, then descending lexicographic row
/// content (unless `tie_break` is [`TieBreak::IndexOnly`]), then index.
pub fn importance_order(rows: &Tensor, score: &[f64], tie_break: TieBreak) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.rows()).collect();
    order.sort_by(|&a, &b| {
        desc(score[a], score[b])
            .then_with(|| match tie_break {
                TieBreak::Content => desc_lex(rows.row(a), rows.row(b)),
                TieBreak::IndexOnly => Ordering::Equal,
            })
            .then(a.cmp(&b))
    });
    order
}

/// `I = MLP(Z)`, one score per node.
pub fn node_importance<'t>(
    mlp: &Mlp,
    tape: &'t Tape,
    store: &ParamStore,
    z: Var<'t>,
) -> Result<Var<'t>> {
    let d_in = mlp.hidden.in_dim(store);
    if z.shape().1 != d_in {
        return Err(Error::Dimension {
            op: "node_importance",
            lhs: z.shape(),
            rhs: (d_in, IMPORTANCE_HIDDEN),
        });
    }
    mlp.forward(tape, store, z)
}

/// Keeps the first `min(n, k)` rows of `src` in `order` and zero-pads to `k`.
fn sort_k<'t>(src: Var<'t>, order: &[usize], k: usize) -> Result<(Var<'t>, Vec<usize>)> {
    let keep: Vec<usize> = order.iter().copied().take(k).collect();
    let rows = src.gather_rows(&keep)?.pad_rows(k)?;
    Ok((rows, keep))
}

fn concat_blocks<'t>(blocks: Vec<Var<'t>>) -> Result<(Var<'t>, Vec<usize>)> {
    let mut offsets = vec![0];
    let mut iter = blocks.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Config("pooling needs at least one layer".into()))?;
    offsets.push(first.shape().1);
    let mut grid = first;
    for b in iter {
        offsets.push(offsets.last().unwrap() + b.shape().1);
        grid = grid.concat_cols(b)?;
    }
    Ok((grid, offsets))
}

fn check_rows(zs: &[Var<'_>]) -> Result<usize> {
    let n = zs
        .first()
        .ok_or_else(|| Error::Config("pooling needs at least one layer".into()))?
        .shape()
        .0;
    for z in zs {
        if z.shape().0 != n {
            return Err(Error::Dimension {
                op: "pooling",
                lhs: zs[0].shape(),
                rhs: z.shape(),
            });
        }
    }
    Ok(n)
}

/// Layer-wise learned-importance sort pooling.
#[derive(Clone, Debug)]
pub struct WlSortPool {
    pub k: usize,
    pub importance: Vec<Mlp>,
    pub include_importance_channel: bool,
    pub tie_break: TieBreak,
}

impl WlSortPool {
    /// One `d_l → 16 → 1` importance MLP (tanh hidden, linear output) per
    /// layer width in `widths`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        widths: &[usize],
        k: usize,
        include_importance_channel: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("pooling size k must be at least 1".into()));
        }
        let importance = widths
            .iter()
            .enumerate()
            .map(|(l, &d)| {
                Mlp::new(
                    store,
                    &format!("importance{l}"),
                    d,
                    IMPORTANCE_HIDDEN,
                    1,
                    Activation::Tanh,
                    Activation::Identity,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k,
            importance,
            include_importance_channel,
            tie_break: TieBreak::Content,
        })
    }

    /// Columns contributed by a layer of width `d`.
    pub fn block_width(&self, d: usize) -> usize {
        d + usize::from(self.include_importance_channel)
    }

    /// `sort-k(concat(Z, I))` for one layer, minus the score column unless
    /// it is kept. Returns the `k`-row block and the kept original indices.
    pub fn pool_layer<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        layer: usize,
        z: Var<'t>,
    ) -> Result<(Var<'t>, Vec<usize>)> {
        let mlp = self.importance.get(layer).ok_or_else(|| {
            Error::Config(format!(
                "layer {layer} has no importance MLP ({} configured)",
                self.importance.len()
            ))
        })?;
        let scores = node_importance(mlp, tape, store, z)?;
        let h = z.concat_cols(scores)?;
        let order = importance_order(&z.value(), scores.value().data(), self.tie_break);
        let src = if self.include_importance_channel {
            h
        } else {
            z
        };
        sort_k(src, &order, self.k)
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        zs: &[Var<'t>],
    ) -> Result<Pooled<'t>> {
        if zs.len() != self.importance.len() {
            return Err(Error::Config(format!(
                "{} layer outputs for {} importance MLPs",
                zs.len(),
                self.importance.len()
            )));
        }
        check_rows(zs)?;
        let mut blocks = Vec::with_capacity(zs.len());
        let mut selected = Vec::with_capacity(zs.len());
        for (l, &z) in zs.iter().enumerate() {
            let (block, keep) = self.pool_layer(tape, store, l, z)?;
            blocks.push(block);
            selected.push(keep);
        }
        let (grid, layer_offsets) = concat_blocks(blocks)?;
        Ok(Pooled {
            grid,
            layer_offsets,
            selected,
        })
    }
}

/// Single-ordering sort pooling: all layers are concatenated and the rows
/// sorted by the last layer's columns, last channel most significant.
pub fn dgcnn_sortpool<'t>(k: usize, zs: &[Var<'t>]) -> Result<Pooled<'t>> {
    if k == 0 {
        return Err(Error::Config("pooling size k must be at least 1".into()));
    }
    check_rows(zs)?;
    let (all, layer_offsets) = concat_blocks(zs.to_vec())?;
    let last = zs.last().unwrap().value();
    let all_v = all.value();
    let n = last.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let reversed_key = |i: usize| last.row(i).iter().rev().copied().collect::<Vec<f64>>();
    let keys: Vec<Vec<f64>> = (0..n).map(reversed_key).collect();
    order.sort_by(|&a, &b| {
        desc_lex(&keys[a], &keys[b])
            .then_with(|| desc_lex(all_v.row(a), all_v.row(b)))
            .then(a.cmp(&b))
    });
    let (grid, keep) = sort_k(all, &order, k)?;
    Ok(Pooled {
        grid,
        selected: vec![keep; zs.len()],
        layer_offsets,
    })
}

/// Per-layer column sums over all nodes, concatenated into one row.
pub fn sum_readout<'t>(zs: &[Var<'t>]) -> Result<Pooled<'t>> {
    check_rows(zs)?;
    let blocks = zs.iter().map(|z| z.reduce_rows(Reduce::Sum)).collect();
    let (grid, layer_offsets) = concat_blocks(blocks)?;
    Ok(Pooled {
        grid,
        layer_offsets,
        selected: Vec::new(),
    })
}

#[derive(Clone, Debug)]
pub enum Pooling {
    WlSortPool(WlSortPool),
    SortPool { k: usize },
    Sum,
}

impl Pooling {
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        zs: &[Var<'t>],
    ) -> Result<Pooled<'t>> {
        match self {
            Pooling::WlSortPool(p) => p.forward(tape, store, zs),
            Pooling::SortPool { k } => dgcnn_sortpool(*k, zs),
            Pooling::Sum => sum_readout(zs),
        }
    }
}

/// How often each node of one graph was kept across layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionCounts {
    /// Number of layers in which each node was kept.
    pub counts: Vec<usize>,
    /// Nodes by descending count, ties by ascending index.
    pub ranking: Vec<usize>,
}

impl SelectionCounts {
    /// 1-based rank of every node.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.counts.len()];
        for (pos, &node) in self.ranking.iter().enumerate() {
            ranks[node] = pos + 1;
        }
        ranks
    }

    pub fn top(&self, m: usize) -> &[usize] {
        &self.ranking[..m.min(self.ranking.len())]
    }
}

pub fn selection_frequency(selected: &[Vec<usize>], num_nodes: usize) -> SelectionCounts {
    let mut counts = vec![0; num_nodes];
    for layer in selected {
        for &node in layer {
            counts[node] += 1;
        }
    }
    let mut ranking: Vec<usize> = (0..num_nodes).collect();
    ranking.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    SelectionCounts { counts, ranking }
}

pub const SELECTION_CSV_HEADER: &str = "graph_id,node_id,count,rank";

/// Renders `(graph_id, counts)` records as `graph_id,node_id,count,rank`.
pub fn selection_csv(records: &[(usize, SelectionCounts)]) -> String {
    let mut out = String::from(SELECTION_CSV_HEADER);
    out.push('\n');
    for (gid, sc) in records {
        let ranks = sc.ranks();
        for (node, (&count, &rank)) in sc.counts.iter().zip(&ranks).enumerate() {
            let _ = writeln!(out, "{gid},{node},{count},{rank}");
        }
    }
    out
}

/// Inverse of [`selection_csv`].
pub fn parse_selection_csv(text: &str) -> Result<Vec<(usize, SelectionCounts)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SELECTION_CSV_HEADER => {}
        _ => {
            return Err(Error::Config(
                "selection CSV lacks the expected header".into(),
            ))
        }
    }
    let mut rows: Vec<(usize, usize, usize, usize)> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<usize> = line
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                Error::Config(format!("selection CSV line {}: bad integer", lineno + 1))
            })?;
        if f.len() != 4 {
            return Err(Error::Config(format!(
                "selection CSV line {}: expected 4 fields",
                lineno + 1
            )));
        }
        rows.push((f[0], f[1], f[2], f[3]));
    }
    let mut out: Vec<(usize, SelectionCounts)> = Vec::new();
    for (gid, node, count, rank) in rows {
        if out.last().map(|(g, _)| *g) != Some(gid) {
            out.push((
                gid,
                SelectionCounts {
                    counts: Vec::new(),
                    ranking: Vec::new(),
                },
            ));
        }
        let sc = &mut out.last_mut().unwrap().1;
        if node != sc.counts.len() {
            return Err(Error::Config(format!(
                "selection CSV: graph {gid} node {node} out of order"
            )));
        }
        sc.counts.push(count);
        sc.ranking.push(rank);
    }
    // `ranking` temporarily holds ranks; invert it into node order.
    for (_, sc) in &mut out {
        let ranks = std::mem::take(&mut sc.ranking);
        let mut ranking = vec![usize::MAX; ranks.len()];
        for (node, r) in ranks.into_iter().enumerate() {
            if r == 0 || r > ranking.len() || ranking[r - 1] != usize::MAX {
                return Err(Error::Config(
                    "selection CSV: ranks are not a permutation".into(),
                ));
            }
            ranking[r - 1] = node;
        }
        sc.ranking = ranking;
    }
    Ok(out)
}
