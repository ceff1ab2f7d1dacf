//! Training loop and cross-validation.

use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reorder_autodiff::{Tape, Tensor};
use reorder_core::dataset::split_folds;
use reorder_core::{AdjacencyMatrix, Dataset, Graph, MatrixVariant, Permutation};

use crate::config::{ModelConfig, LATENT_DIM};
use crate::loss::{directions, error_rate};
use crate::net::{LossInputs, Model};
use crate::optim::Adamax;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Record-weighted mean reconstruction loss over the epoch.
    pub reconstruction: f64,
    /// Record-weighted mean sliced Wasserstein loss.
    pub latent: f64,
    pub wall_ms: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,L_X,L_Z,wall_ms";

    pub fn total(&self, lambda: f64) -> f64 {
        self.reconstruction + lambda * self.latent
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.3}",
            self.epoch, self.reconstruction, self.latent, self.wall_ms
        )
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub optimizer: Adamax,
    pub history: Vec<EpochLog>,
}

/// `reorder(A, p)` for each order.
pub fn targets(adjacency: &AdjacencyMatrix, orders: &[Permutation]) -> Result<Vec<AdjacencyMatrix>> {
    orders.iter().map(|p| Ok(adjacency.reorder(p)?)).collect()
}

/// Uniform samples in `[-1, 1]²` as a `[b, 2]` tensor.
pub fn prior_batch(rng: &mut impl Rng, b: usize) -> Tensor {
    Tensor::from_fn(&[b, LATENT_DIM], |_| rng.random_range(-1.0..=1.0))
}

pub fn random_directions(rng: &mut impl Rng, l: usize) -> Tensor {
    let angles: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    directions(&angles)
}

/// Stacks matrices into a `[B, n, n]` tensor of 0/1 values.
pub fn stack(matrices: &[&AdjacencyMatrix]) -> Result<Tensor> {
    let n = matrices.first().map_or(0, |a| a.n());
    let mut data = Vec::with_capacity(matrices.len() * n * n);
    for a in matrices {
        if a.n() != n {
            return Err(Error::Shape(format!("batch mixes n = {n} and n = {}", a.n())));
        }
        data.extend(a.to_f64());
    }
    Ok(Tensor::new(&[matrices.len(), n, n], data)?)
}

fn param_norms(model: &Model) -> String {
    model
        .params()
        .iter()
        .map(|p| {
            let norm = p.value.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            format!("{}={norm:.4e}", p.name)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Trains a fresh model on the reorderings `orders` of `adjacency`.
///
/// Each epoch shuffles the records with a generator seeded from
/// `config.seed`, walks them in mini-batches (the last may be short), draws
/// fresh prior samples and projection directions per batch and takes one
/// Adamax step per batch. `observer` sees each epoch's log as it completes.
pub fn train(
    adjacency: &AdjacencyMatrix,
    orders: &[Permutation],
    config: &ModelConfig,
    observer: impl FnMut(&EpochLog),
) -> Result<Trained> {
    let model = Model::new(config.clone())?;
    let optimizer = Adamax::new(config.learning_rate, model.params());
    train_model(model, optimizer, adjacency, orders, observer)
}

/// Continues training `model` for `model.config().epochs` epochs.
pub fn train_model(
    mut model: Model,
    mut optimizer: Adamax,
    adjacency: &AdjacencyMatrix,
    orders: &[Permutation],
    mut observer: impl FnMut(&EpochLog),
) -> Result<Trained> {
    let config = model.config().clone();
    if orders.is_empty() {
        return Err(Error::Config("no training records".into()));
    }
    if adjacency.n() != config.n {
        return Err(Error::Shape(format!(
            "graph has n = {}, config says {}",
            adjacency.n(),
            config.n
        )));
    }
    let data = targets(adjacency, orders)?;
    let a = Tensor::new(&[config.n, config.n], adjacency.to_f64())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut index: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let start = Instant::now();
        index.shuffle(&mut rng);
        let (mut lx, mut lz) = (0.0, 0.0);
        for (batch, chunk) in index.chunks(config.batch_size).enumerate() {
            let b = chunk.len();
            let batch_targets: Vec<&AdjacencyMatrix> = chunk.iter().map(|&i| &data[i]).collect();
            let inputs = LossInputs {
                targets: stack(&batch_targets)?,
                adjacency: a.clone(),
                prior: prior_batch(&mut rng, b),
                directions: random_directions(&mut rng, config.sw_projections),
            };
            let mut tape = Tape::new();
            let vars = model.record(&mut tape, true);
            let loss = model.loss_on(&mut tape, &vars, &inputs)?;
            let total = tape.value(loss.total).item()?;
            if !total.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch,
                    norms: param_norms(&model),
                });
            }
            lx += tape.value(loss.reconstruction).item()? * b as f64;
            lz += tape.value(loss.latent).item()? * b as f64;
            tape.backward(loss.total)?;
            let grads: Vec<Option<&[f64]>> = vars.iter().map(|&v| tape.grad(v)).collect();
            optimizer.step(model.params_mut(), &grads);
        }
        let count = data.len() as f64;
        let log = EpochLog {
            epoch,
            reconstruction: lx / count,
            latent: lz / count,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        log::debug!(
            "epoch {epoch}: L_X={:.6} L_Z={:.6} ({:.0} ms)",
            log.reconstruction,
            log.latent,
            log.wall_ms
        );
        observer(&log);
        history.push(log);
    }
    Ok(Trained {
        model,
        optimizer,
        history,
    })
}

/// [`train`] on a corpus, checking that it belongs to `graph`.
pub fn train_dataset(
    graph: &Graph,
    dataset: &Dataset,
    config: &ModelConfig,
    observer: impl FnMut(&EpochLog),
) -> Result<Trained> {
    dataset.check_graph(graph)?;
    let orders: Vec<Permutation> = dataset.orders().cloned().collect();
    train(&graph.adjacency(MatrixVariant::Raw), &orders, config, observer)
}

/// Mean error rate between each `reorder(A, p)` and its hardened
/// reconstruction through `model`.
pub fn reconstruction_error(model: &Model, adjacency: &AdjacencyMatrix, orders: &[Permutation]) -> Result<f64> {
    if orders.is_empty() {
        return Err(Error::Config("no records to evaluate".into()));
    }
    let inputs = targets(adjacency, orders)?;
    let decoded = model.reconstruct(adjacency, &inputs)?;
    let mut sum = 0.0;
    for (x, d) in inputs.iter().zip(&decoded) {
        sum += error_rate(x, &d.matrix)?;
    }
    Ok(sum / orders.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub k: usize,
    /// `fold_errors[trial][fold]`: mean held-out error rate.
    pub fold_errors: Vec<Vec<f64>>,
    /// Training-set error of each fold's model, same layout.
    pub train_errors: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn trial_means(&self) -> Vec<f64> {
        self.fold_errors.iter().map(|f| f.iter().sum::<f64>() / f.len() as f64).collect()
    }

    pub fn mean(&self) -> f64 {
        let t = self.trial_means();
        t.iter().sum::<f64>() / t.len() as f64
    }

    pub fn mean_train(&self) -> f64 {
        let all: Vec<f64> = self.train_errors.iter().flatten().copied().collect();
        all.iter().sum::<f64>() / all.len() as f64
    }

    /// `trial,fold,train_error,test_error` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,fold,train_error,test_error\n");
        for (t, (test, train)) in self.fold_errors.iter().zip(&self.train_errors).enumerate() {
            for (f, (e, r)) in test.iter().zip(train).enumerate() {
                out.push_str(&format!("{t},{f},{r},{e}\n"));
            }
        }
        out.push_str(&format!("mean,,{},{}\n", self.mean_train(), self.mean()));
        out
    }
}

/// Repeated `k`-fold cross-validation. Trial `t` splits with seed
/// `config.seed + t`; each fold trains a fresh model on the other folds.
/// `progress(trial, fold, test_error)` is called as folds finish.
pub fn evaluate(
    graph: &Graph,
    dataset: &Dataset,
    config: &ModelConfig,
    k: usize,
    trials: usize,
    mut progress: impl FnMut(usize, usize, f64),
) -> Result<Evaluation> {
    dataset.check_graph(graph)?;
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let adjacency = graph.adjacency(MatrixVariant::Raw);
    let orders: Vec<Permutation> = dataset.orders().cloned().collect();
    let pick = |idx: &[usize]| idx.iter().map(|&i| orders[i].clone()).collect::<Vec<_>>();
    let mut fold_errors = Vec::with_capacity(trials);
    let mut train_errors = Vec::with_capacity(trials);
    for t in 0..trials {
        let split = split_folds(dataset, k, config.seed.wrapping_add(t as u64))?;
        let (mut test_row, mut train_row) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for f in 0..k {
            let train_set = pick(&split.complement(f));
            let test_set = pick(&split.fold(f));
            let trained = train(&adjacency, &train_set, config, |_| {})?;
            let err = reconstruction_error(&trained.model, &adjacency, &test_set)?;
            train_row.push(reconstruction_error(&trained.model, &adjacency, &train_set)?);
            progress(t, f, err);
            test_row.push(err);
        }
        fold_errors.push(test_row);
        train_errors.push(train_row);
    }
    Ok(Evaluation {
        k,
        fold_errors,
        train_errors,
    })
}
