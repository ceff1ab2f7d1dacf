//! Self-checks on random small instances: end-to-end gradients and loss
//! evaluation with a fixed model state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reorder_autodiff::{grad_check_with, GradCheck, Stencil, Tape, Tensor};
use reorder_core::dataset::initial_order;
use reorder_core::{AdjacencyMatrix, Graph, MatrixVariant, Permutation};

use crate::config::{DecoderKind, ModelConfig};
use crate::net::{LossInputs, Model};
use crate::train::{prior_batch, random_directions, stack, targets};
use crate::Result;

/// Initial step of the Ridders difference used by [`end_to_end_grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-3;

/// Erdős–Rényi graph `G(n, p)`.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).expect("valid edges")
}

/// Loss inputs for `orders` of `adjacency`, with prior samples and
/// directions drawn from `rng`.
pub fn loss_inputs(
    adjacency: &AdjacencyMatrix,
    orders: &[Permutation],
    projections: usize,
    rng: &mut impl Rng,
) -> Result<LossInputs> {
    let xs = targets(adjacency, orders)?;
    let refs: Vec<_> = xs.iter().collect();
    let n = adjacency.n();
    Ok(LossInputs {
        targets: stack(&refs)?,
        adjacency: Tensor::new(&[n, n], adjacency.to_f64())?,
        prior: prior_batch(rng, orders.len()),
        directions: random_directions(rng, projections),
    })
}

/// A random graph on `n` nodes, `batch` random reorderings of it and a model
/// whose LayerNorm gains and biases are also randomized (at their initial
/// values 1 and 0 they would put ELU exactly on its kink).
pub fn gradient_instance(kind: DecoderKind, n: usize, batch: usize, seed: u64) -> Result<(Model, LossInputs)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_graph(n, 0.4, &mut rng).adjacency(MatrixVariant::Raw);
    let orders: Vec<_> = (0..batch as u64).map(|k| initial_order(n, seed.wrapping_mul(1000) + k)).collect();
    let mut config = ModelConfig::new(n, kind);
    config.seed = seed;
    config.sw_projections = 8;
    let inputs = loss_inputs(&a, &orders, config.sw_projections, &mut rng)?;
    let mut model = Model::new(config)?;
    for p in model.params_mut() {
        if p.name.contains(".norm.") {
            let base = if p.name.ends_with("gain") { 1.0 } else { 0.0 };
            p.value.data_mut().iter_mut().for_each(|x| *x = base + rng.random_range(-0.5..0.5));
        }
    }
    Ok((model, inputs))
}

/// Compares the tape gradient of the total loss with respect to every
/// parameter against Ridders-extrapolated central differences, on an
/// 8-node instance with a batch of 2.
pub fn end_to_end_grad_check(kind: DecoderKind, seed: u64) -> Result<GradCheck> {
    let (model, inputs) = gradient_instance(kind, 8, 2, seed)?;
    let params: Vec<Tensor> = model.params().iter().map(|p| p.value.clone()).collect();
    let mut failure = None;
    let report = grad_check_with(
        |tape, vars| match model.loss_on(tape, vars, &inputs) {
            Ok(l) => Ok(l.total),
            Err(e) => {
                failure = Some(e.to_string());
                Err(reorder_autodiff::Error::NotScalar(Vec::new()))
            }
        },
        &params,
        GRAD_CHECK_STEP,
        Stencil::Ridders,
    );
    match (report, failure) {
        (_, Some(msg)) => Err(crate::Error::Shape(msg)),
        (r, None) => Ok(r?),
    }
}

/// Total loss of `model` on `inputs`.
pub fn total_loss(model: &Model, inputs: &LossInputs) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = model.record(&mut tape, false);
    let l = model.loss_on(&mut tape, &vars, inputs)?;
    Ok(tape.value(l.total).item()?)
}

/// Every permutation of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(Permutation::new(cur.clone()).expect("permutation"));
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// Automorphisms of `adjacency` by exhaustive search (`n ≤ 9` is practical).
pub fn automorphisms(adjacency: &AdjacencyMatrix) -> Vec<Permutation> {
    all_permutations(adjacency.n())
        .into_iter()
        .filter(|p| adjacency.reorder(p).is_ok_and(|m| &m == adjacency))
        .collect()
}
