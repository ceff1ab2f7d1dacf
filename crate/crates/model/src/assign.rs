//! Rounding soft permutation matrices to exact permutations.

use reorder_core::Permutation;

use crate::config::DecoderKind;

/// Maximum-weight perfect assignment on a row-major `n × n` weight matrix
/// (Hungarian method with potentials, O(n³)). Returns `σ` with row `i`
/// assigned to column `σ[i]`. Non-finite weights are treated as 0.
pub fn hungarian(weights: &[f64], n: usize) -> Permutation {
    assert_eq!(weights.len(), n * n, "weight matrix must be n × n");
    if n == 0 {
        return Permutation::identity(0);
    }
    let cost = |i: usize, j: usize| {
        let w = weights[i * n + j];
        if w.is_finite() {
            -w
        } else {
            0.0
        }
    };
    // 1-based potentials; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut order = vec![0; n];
    for j in 1..=n {
        order[owner[j] - 1] = j - 1;
    }
    Permutation::new(order).expect("perfect matching")
}

/// Row-wise argmax made into a bijection: rows are visited by descending
/// confidence (their maximum entry; lower row index first on ties) and each
/// takes its best column not yet claimed (lowest column index on ties).
/// When the row argmaxes are already distinct this is the plain argmax.
pub fn greedy_argmax(weights: &[f64], n: usize) -> Permutation {
    assert_eq!(weights.len(), n * n, "weight matrix must be n × n");
    let w = |i: usize, j: usize| {
        let x = weights[i * n + j];
        if x.is_nan() {
            f64::NEG_INFINITY
        } else {
            x
        }
    };
    let best_in_row = |i: usize, taken: &[bool]| {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !taken[j] && best.is_none_or(|b| w(i, j) > w(i, b)) {
                best = Some(j);
            }
        }
        best
    };
    let none_taken = vec![false; n];
    let confidence: Vec<f64> = (0..n)
        .map(|i| best_in_row(i, &none_taken).map_or(f64::NEG_INFINITY, |j| w(i, j)))
        .collect();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]).then(a.cmp(&b)));
    let mut taken = vec![false; n];
    let mut order = vec![0; n];
    for i in rows {
        let j = best_in_row(i, &taken).expect("a free column remains");
        taken[j] = true;
        order[i] = j;
    }
    Permutation::new(order).expect("each column claimed once")
}

/// Exact permutation from a soft one: Hungarian for Sinkhorn output,
/// collision-resolved row argmax for SoftSort output.
pub fn harden(p_soft: &[f64], n: usize, kind: DecoderKind) -> Permutation {
    match kind {
        DecoderKind::Sinkhorn => hungarian(p_soft, n),
        DecoderKind::SoftSort => greedy_argmax(p_soft, n),
    }
}
