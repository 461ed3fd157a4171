//! Optimisation, evaluation and cross-validation.
//!
//! Each fold trains a fresh model seeded with `seed + fold_id` for the
//! largest candidate epoch count, snapshotting parameters at every
//! candidate. The candidate (and, when searching, the pooling size `k`)
//! with the best mean validation accuracy across folds is chosen, and each
//! fold's test accuracy is then measured on its snapshot from that epoch.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::{is_large_graph_dataset, stratified_kfold, Dataset, Graph};
use crate::model::{Model, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// L2 strength used under the large-graph rule.
pub const LARGE_GRAPH_L2: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Ascending candidate epoch counts.
    pub epoch_candidates: Vec<usize>,
    pub l2_lambda: f64,
    /// Base seed for model initialisation, shuffling and dropout.
    pub seed: u64,
    /// Seed of the stratified fold assignment.
    pub folds_seed: u64,
    pub folds: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 50,
            epoch_candidates: vec![50, 100, 150, 200],
            l2_lambda: 0.0,
            seed: 0,
            folds_seed: 0,
            folds: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 10] = [
        "lr",
        "batch_size",
        "epochs",
        "l2",
        "seed",
        "folds_seed",
        "folds",
        "beta1",
        "beta2",
        "adam_eps",
    ];

    /// The default configuration with L2 switched on for large graphs.
    pub fn for_dataset(d: &Dataset) -> Self {
        Self {
            l2_lambda: default_l2(d),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epoch_candidates.is_empty()
            || self.epoch_candidates[0] == 0
            || self.epoch_candidates.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(format!(
                "epochs must be a non-empty strictly ascending list of positive counts, got {:?}",
                self.epoch_candidates
            )));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config(format!(
                "l2 must be non-negative, got {}",
                self.l2_lambda
            )));
        }
        if self.folds < 3 {
            return Err(Error::Config(format!(
                "folds must be at least 3, got {}",
                self.folds
            )));
        }
        Ok(())
    }

    pub fn max_epochs(&self) -> usize {
        self.epoch_candidates.last().copied().unwrap_or(0)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let epochs = self
            .epoch_candidates
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        [
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", epochs),
            ("l2", self.l2_lambda.to_string()),
            ("seed", self.seed.to_string()),
            ("folds_seed", self.folds_seed.to_string()),
            ("folds", self.folds.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.eps.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Sets one key. Returns `Ok(false)` if the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "lr" => self.lr = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => {
                self.epoch_candidates = value
                    .split(',')
                    .map(|t| parse_num(key, t))
                    .collect::<Result<Vec<usize>>>()?
            }
            "l2" => self.l2_lambda = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "folds_seed" => self.folds_seed = parse_num(key, value)?,
            "folds" => self.folds = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "adam_eps" => self.eps = parse_num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// 0.05 for datasets under the large-graph rule, otherwise 0.
pub fn default_l2(d: &Dataset) -> f64 {
    if is_large_graph_dataset(d) {
        LARGE_GRAPH_L2
    } else {
        0.0
    }
}

/// Adam with bias correction. L2 adds `λ·θ` to the gradient of every
/// decaying parameter (weights, not biases) before the moment update.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2_lambda: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: &TrainConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Tensor::zeros(p.value().rows(), p.value().cols()))
                .collect::<Vec<_>>()
        };
        Self {
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            l2_lambda: config.l2_lambda,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let decay = if p.decays() { self.l2_lambda } else { 0.0 };
            let grad = p.grad().data().to_vec();
            let theta = p.value_mut().data_mut();
            for i in 0..theta.len() {
                let g = grad[i] + decay * theta[i];
                let mi = &mut m.data_mut()[i];
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                let vi = &mut v.data_mut()[i];
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = m.data()[i] / c1;
                let v_hat = v.data()[i] / c2;
                theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.grad_mut().fill(0.0);
        }
    }
}

/// Forward and backward for one graph; adds its gradients to the model's
/// store and returns the loss.
pub fn accumulate_graph<R: Rng + ?Sized>(model: &mut Model, g: &Graph, rng: &mut R) -> Result<f64> {
    let tape = Tape::new();
    let f = model.forward(&tape, g, true, rng)?;
    let loss = f.logits.softmax_cross_entropy(g.label())?;
    let value = loss.value().data()[0];
    tape.backward(loss)?.accumulate_into(&mut model.store);
    Ok(value)
}

/// One pass over `indices` in a seeded shuffled order, one Adam step per
/// batch with gradients averaged over the batch. Returns the mean loss.
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut Model,
    adam: &mut Adam,
    graphs: &[Graph],
    indices: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Config("cannot train on an empty graph list".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order = indices.to_vec();
    order.shuffle(rng);
    model.store.zero_grad();
    let mut total = 0.0;
    for batch in order.chunks(batch_size) {
        for &i in batch {
            total += accumulate_graph(model, &graphs[i], rng)?;
        }
        let scale = 1.0 / batch.len() as f64;
        for p in model.store.iter_mut() {
            p.grad_mut().scale_in_place(scale);
        }
        adam.step(&mut model.store);
    }
    Ok(total / order.len() as f64)
}

/// Fraction of `indices` whose arg-max logit equals the label.
pub fn evaluate(model: &Model, graphs: &[Graph], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Config(
            "cannot evaluate on an empty graph list".into(),
        ));
    }
    let mut correct = 0usize;
    for &i in indices {
        if model.predict(&graphs[i])? == graphs[i].label() {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Per-epoch training record of one fold.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub fold: usize,
    pub train_loss: f64,
    pub valid_acc: f64,
}

/// Index bookkeeping of one fold as actually used.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldUsage {
    pub fold_id: usize,
    /// Graphs that contributed gradients.
    pub trained_on: Vec<usize>,
    /// Graphs used for epoch (and `k`) selection.
    pub validated_on: Vec<usize>,
    pub tested_on: Vec<usize>,
}

/// Mean validation accuracy of one `(k, epochs)` candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateScore {
    pub k: usize,
    pub epochs: usize,
    pub mean_valid_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub dataset: String,
    pub k: usize,
    pub chosen_epochs: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the test accuracies.
    pub std: f64,
    pub fold_valid_accuracies: Vec<f64>,
    pub valid_mean: f64,
    /// Sample standard deviation of the validation accuracies at the
    /// chosen epoch.
    pub valid_std: f64,
    pub candidates: Vec<CandidateScore>,
    pub config_echo: Vec<(String, String)>,
    /// Records for the chosen `k`, ordered by fold then epoch.
    pub epochs: Vec<EpochRecord>,
    pub folds: Vec<FoldUsage>,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); 0 for fewer than two
/// values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub const EPOCHS_CSV_HEADER: &str = "epoch,fold,train_loss,valid_acc";

impl CvReport {
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset={}", self.dataset);
        let _ = writeln!(out, "k={}", self.k);
        let _ = writeln!(out, "chosen_epochs={}", self.chosen_epochs);
        let _ = writeln!(out, "mean={}", self.mean);
        let _ = writeln!(out, "std={}", self.std);
        let _ = writeln!(out, "fold_accuracies={}", join_f64(&self.fold_accuracies));
        let _ = writeln!(out, "valid_mean={}", self.valid_mean);
        let _ = writeln!(out, "valid_std={}", self.valid_std);
        let _ = writeln!(
            out,
            "fold_valid_accuracies={}",
            join_f64(&self.fold_valid_accuracies)
        );
        for c in &self.candidates {
            let _ = writeln!(
                out,
                "candidate.k{}.epochs{}={}",
                c.k, c.epochs, c.mean_valid_acc
            );
        }
        for (k, v) in &self.config_echo {
            let _ = writeln!(out, "config.{k}={v}");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset        {}", self.dataset);
        let _ = writeln!(out, "k              {}", self.k);
        let _ = writeln!(out, "chosen epochs  {}", self.chosen_epochs);
        let _ = writeln!(out, "test accuracy  {:.4} ± {:.4}", self.mean, self.std);
        let _ = writeln!(
            out,
            "valid accuracy {:.4} ± {:.4}",
            self.valid_mean, self.valid_std
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "fold  test    valid");
        for (f, (t, v)) in self
            .fold_accuracies
            .iter()
            .zip(&self.fold_valid_accuracies)
            .enumerate()
        {
            let _ = writeln!(out, "{f:>4}  {t:.4}  {v:.4}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "   k  epochs  mean valid");
        for c in &self.candidates {
            let _ = writeln!(out, "{:>4}  {:>6}  {:.4}", c.k, c.epochs, c.mean_valid_acc);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "configuration");
        for (k, v) in &self.config_echo {
            let _ = writeln!(out, "  {k} = {v}");
        }
        out
    }

    pub fn epochs_csv(&self) -> String {
        let mut out = String::from(EPOCHS_CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.epoch, r.fold, r.train_loss, r.valid_acc
            );
        }
        out
    }
}

/// Checkpoint file name for a fold and epoch.
pub fn checkpoint_name(fold: usize, epoch: usize) -> String {
    format!("fold{fold}_epoch{epoch}")
}

/// Metadata stored alongside parameters so a checkpoint can rebuild its
/// model.
pub fn checkpoint_meta(model: &Model) -> Vec<(String, String)> {
    let mut meta = model.config.to_kv();
    meta.push(("in_dim".into(), model.in_dim.to_string()));
    meta.push(("num_classes".into(), model.num_classes.to_string()));
    meta
}

/// Rebuilds a model from a checkpoint written by [`cross_validate`].
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<Model> {
    let mut config = ModelConfig::default();
    let mut in_dim = None;
    let mut classes = None;
    for (k, v) in &ck.meta {
        match k.as_str() {
            "in_dim" => in_dim = Some(parse_num::<usize>(k, v)?),
            "num_classes" => classes = Some(parse_num::<usize>(k, v)?),
            _ => {
                if !config.set(k, v)? {
                    return Err(Error::Contract(format!(
                        "unknown checkpoint metadata key `{k}`"
                    )));
                }
            }
        }
    }
    let missing = |what: &str| Error::Contract(format!("checkpoint metadata lacks `{what}`"));
    let mut model = Model::new(
        config,
        in_dim.ok_or_else(|| missing("in_dim"))?,
        classes.ok_or_else(|| missing("num_classes"))?,
        0,
    )?;
    ck.restore_into(&mut model.store)?;
    Ok(model)
}

struct FoldRun {
    records: Vec<EpochRecord>,
    /// Validation accuracy at each candidate epoch.
    valid_at: Vec<f64>,
    snapshots: Vec<Checkpoint>,
    model: Model,
}

fn run_fold(
    dataset: &Dataset,
    config: &ModelConfig,
    train: &TrainConfig,
    fold: usize,
    train_idx: &[usize],
    valid_idx: &[usize],
) -> Result<FoldRun> {
    let seed = train.seed.wrapping_add(fold as u64);
    let mut model = Model::new(
        config.clone(),
        dataset.num_node_labels(),
        dataset.num_classes(),
        seed,
    )?;
    let mut adam = Adam::new(&model.store, train);
    // Separate stream from initialisation so changing one never shifts the other.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut records = Vec::with_capacity(train.max_epochs());
    let mut valid_at = Vec::new();
    let mut snapshots = Vec::new();
    for epoch in 1..=train.max_epochs() {
        let loss = train_epoch(
            &mut model,
            &mut adam,
            dataset.graphs(),
            train_idx,
            train.batch_size,
            &mut rng,
        )?;
        let valid_acc = evaluate(&model, dataset.graphs(), valid_idx)?;
        records.push(EpochRecord {
            epoch,
            fold,
            train_loss: loss,
            valid_acc,
        });
        if train.epoch_candidates.contains(&epoch) {
            valid_at.push(valid_acc);
            snapshots.push(Checkpoint::capture(&model.store, checkpoint_meta(&model)));
        }
    }
    Ok(FoldRun {
        records,
        valid_at,
        snapshots,
        model,
    })
}

/// Stratified cross-validation with epoch search, and a search over `ks`
/// when more than one pooling size is given. Snapshots are written under
/// `checkpoint_dir` as `fold{i}_epoch{e}` when a directory is supplied.
pub fn cross_validate(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train: &TrainConfig,
    ks: &[usize],
    checkpoint_dir: Option<&Path>,
) -> Result<CvReport> {
    train.validate()?;
    model_config.validate()?;
    if ks.is_empty() {
        return Err(Error::Config("no pooling size candidates".into()));
    }
    let splits = stratified_kfold(&dataset.labels(), train.folds, train.folds_seed)?;

    let mut best: Option<(f64, usize, usize)> = None; // (score, k index, epoch index)
    let mut candidates = Vec::new();
    let mut runs_per_k: Vec<Vec<FoldRun>> = Vec::with_capacity(ks.len());
    for (ki, &k) in ks.iter().enumerate() {
        let config = ModelConfig {
            k,
            ..model_config.clone()
        };
        let runs = splits
            .iter()
            .map(|s| {
                run_fold(
                    dataset,
                    &config,
                    train,
                    s.fold_id,
                    &s.train_idx,
                    &s.valid_idx,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for (ei, &epochs) in train.epoch_candidates.iter().enumerate() {
            let score = mean(&runs.iter().map(|r| r.valid_at[ei]).collect::<Vec<_>>());
            candidates.push(CandidateScore {
                k,
                epochs,
                mean_valid_acc: score,
            });
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, ki, ei));
            }
        }
        runs_per_k.push(runs);
    }
    let (_, ki, ei) = best.expect("at least one candidate");
    let runs = runs_per_k.swap_remove(ki);

    let mut fold_accuracies = Vec::with_capacity(runs.len());
    let mut fold_valid = Vec::with_capacity(runs.len());
    let mut records = Vec::new();
    let mut folds = Vec::with_capacity(runs.len());
    for (run, split) in runs.into_iter().zip(&splits) {
        if let Some(dir) = checkpoint_dir {
            for (snap, &e) in run.snapshots.iter().zip(&train.epoch_candidates) {
                snap.save(dir.join(checkpoint_name(split.fold_id, e)))?;
            }
        }
        let mut model = run.model;
        let chosen = match checkpoint_dir {
            Some(dir) => Checkpoint::load(
                dir.join(checkpoint_name(split.fold_id, train.epoch_candidates[ei])),
            )?,
            None => run.snapshots[ei].clone(),
        };
        chosen.restore_into(&mut model.store)?;
        fold_accuracies.push(evaluate(&model, dataset.graphs(), &split.test_idx)?);
        fold_valid.push(run.valid_at[ei]);
        records.extend(run.records);
        folds.push(FoldUsage {
            fold_id: split.fold_id,
            trained_on: split.train_idx.clone(),
            validated_on: split.valid_idx.clone(),
            tested_on: split.test_idx.clone(),
        });
    }

    let mut config_echo = vec![("dataset".to_string(), dataset.name().to_string())];
    let chosen_config = ModelConfig {
        k: ks[ki],
        ..model_config.clone()
    };
    config_echo.extend(chosen_config.to_kv());
    config_echo.push((
        "k_candidates".into(),
        ks.iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(","),
    ));
    config_echo.extend(train.to_kv());

    Ok(CvReport {
        dataset: dataset.name().to_string(),
        k: ks[ki],
        chosen_epochs: train.epoch_candidates[ei],
        mean: mean(&fold_accuracies),
        std: sample_std(&fold_accuracies),
        valid_mean: mean(&fold_valid),
        valid_std: sample_std(&fold_valid),
        fold_accuracies,
        fold_valid_accuracies: fold_valid,
        candidates,
        config_echo,
        epochs: records,
        folds,
    })
}
