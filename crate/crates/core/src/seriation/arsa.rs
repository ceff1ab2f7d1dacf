//! Anti-Robinson seriation by simulated annealing.
//!
//! Minimizes the linear seriation criterion
//! `LS(π) = Σ_{i<j} (n - (j - i)) · D[π(i)][π(j)]`, which rewards placing
//! small distances close to the diagonal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distances::DistanceMatrix;
use crate::permutation::Permutation;

#[derive(Debug, Clone, PartialEq)]
pub struct ArsaSchedule {
    /// Random swaps sampled to size the initial temperature.
    pub probe_swaps: usize,
    /// Geometric cooling factor applied after each temperature stage.
    pub cooling: f64,
    /// Moves per temperature stage, as a multiple of `n`.
    pub moves_per_node: usize,
    /// Stop once `T < stop_ratio * T0`.
    pub stop_ratio: f64,
}

impl Default for ArsaSchedule {
    fn default() -> Self {
        Self {
            probe_swaps: 100,
            cooling: 0.95,
            moves_per_node: 100,
            stop_ratio: 1e-6,
        }
    }
}

pub fn linear_seriation(d: &DistanceMatrix, order: &[usize]) -> f64 {
    let n = order.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += (n - (j - i)) as f64 * d.get(order[i], order[j]);
        }
    }
    total
}

#[inline]
fn weight(n: usize, i: usize, j: usize) -> f64 {
    (n - i.abs_diff(j)) as f64
}

/// LS change from swapping positions `a` and `b`.
fn swap_delta(d: &DistanceMatrix, order: &[usize], a: usize, b: usize) -> f64 {
    let n = order.len();
    let (x, y) = (order[a], order[b]);
    let mut delta = 0.0;
    for (k, &z) in order.iter().enumerate() {
        if k == a || k == b {
            continue;
        }
        let diff = d.get(y, z) - d.get(x, z);
        delta += (weight(n, k, a) - weight(n, k, b)) * diff;
    }
    delta
}

/// LS change from reversing positions `a..=b`. Pairs inside the segment
/// keep their separation; an outside position `k` sees the weight to inside
/// position `p` change by `a + b - 2p` (right of the segment) or its negation
/// (left of it).
fn reverse_delta(d: &DistanceMatrix, order: &[usize], a: usize, b: usize) -> f64 {
    let mut delta = 0.0;
    for p in a..=b {
        let shift = (a + b) as f64 - 2.0 * p as f64;
        if shift == 0.0 {
            continue;
        }
        let x = order[p];
        let left: f64 = order[..a].iter().map(|&z| d.get(x, z)).sum();
        let right: f64 = order[b + 1..].iter().map(|&z| d.get(x, z)).sum();
        delta += shift * (right - left);
    }
    delta
}

/// Seeded simulated annealing from the identity order, mixing random
/// pairwise swaps and segment reversals. Returns the best order visited.
pub fn arsa_order(d: &DistanceMatrix, seed: u64, schedule: &ArsaSchedule) -> Permutation {
    let n = d.n();
    if n <= 2 {
        return Permutation::identity(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut current = linear_seriation(d, &order);

    let pick_pair = |rng: &mut ChaCha8Rng| {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        (a.min(b), a.max(b))
    };

    // T0: spread of LS over random single swaps of the starting order.
    let probes: Vec<f64> = (0..schedule.probe_swaps)
        .map(|_| {
            let (a, b) = pick_pair(&mut rng);
            current + swap_delta(d, &order, a, b)
        })
        .collect();
    let t0 = std_dev(&probes);
    if !(t0 > 0.0) {
        return Permutation::new(order).expect("identity");
    }

    let mut best = (current, order.clone());
    let moves = schedule.moves_per_node * n;
    let mut temperature = t0;
    while temperature >= schedule.stop_ratio * t0 {
        for _ in 0..moves {
            let (a, b) = pick_pair(&mut rng);
            let reverse = rng.random_bool(0.5);
            let delta = if reverse {
                reverse_delta(d, &order, a, b)
            } else {
                swap_delta(d, &order, a, b)
            };
            if delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp() {
                if reverse {
                    order[a..=b].reverse();
                } else {
                    order.swap(a, b);
                }
                current += delta;
                if current < best.0 - 1e-9 {
                    // resync to avoid drift from accumulated deltas
                    current = linear_seriation(d, &order);
                    if current < best.0 {
                        best = (current, order.clone());
                    }
                }
            }
        }
        temperature *= schedule.cooling;
    }
    Permutation::new(best.1).expect("annealing only swaps and reverses")
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
