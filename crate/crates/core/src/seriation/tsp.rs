use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distances::DistanceMatrix;
use crate::permutation::Permutation;

/// Open Hamiltonian path length `Σ D[order[i]][order[i+1]]`.
pub fn path_length(d: &DistanceMatrix, order: &[usize]) -> f64 {
    order.windows(2).map(|w| d.get(w[0], w[1])).sum()
}

/// Greedy path from `start`, always stepping to the nearest unvisited node
/// (lowest index on ties).
pub fn nearest_neighbor_path(d: &DistanceMatrix, start: usize) -> Vec<usize> {
    let n = d.n();
    let mut visited = vec![false; n];
    let mut path = Vec::with_capacity(n);
    let mut current = start;
    visited[current] = true;
    path.push(current);
    while path.len() < n {
        let mut next = (f64::INFINITY, usize::MAX);
        for k in 0..n {
            if !visited[k] && d.get(current, k) < next.0 {
                next = (d.get(current, k), k);
            }
        }
        current = next.1;
        visited[current] = true;
        path.push(current);
    }
    path
}

/// First-improvement 2-opt on an open path: reverse `path[i..=j]` whenever
/// that shortens the path, until no reversal does. Reversing a prefix or a
/// suffix moves an endpoint.
pub fn two_opt(d: &DistanceMatrix, path: &mut [usize]) {
    let n = path.len();
    if n < 3 {
        return;
    }
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let mut delta = 0.0;
                if i > 0 {
                    delta += d.get(path[i - 1], path[j]) - d.get(path[i - 1], path[i]);
                }
                if j + 1 < n {
                    delta += d.get(path[i], path[j + 1]) - d.get(path[j], path[j + 1]);
                }
                if delta < -1e-12 {
                    path[i..=j].reverse();
                    improved = true;
                }
            }
        }
    }
}

/// Nearest-neighbour construction from a seeded random start, refined by
/// 2-opt. Position order along the path is the returned permutation.
pub fn tsp_order(d: &DistanceMatrix, seed: u64) -> Permutation {
    let n = d.n();
    if n <= 1 {
        return Permutation::identity(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);
    let mut path = nearest_neighbor_path(d, start);
    two_opt(d, &mut path);
    Permutation::new(path).expect("path visits every node once")
}
