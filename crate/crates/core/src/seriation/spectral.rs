use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};
use crate::permutation::Permutation;

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 10_000;

/// Fiedler vector of the similarity graph `W = max(D) - D` (zero diagonal).
///
/// Uses power iteration on `cI - L`, with `c` a Gershgorin bound on the
/// spectrum of `L`, while projecting out the known null vector of `L`
/// (constant for the combinatorial Laplacian, `sqrt(deg)` for the normalized
/// one).
pub fn fiedler_vector(d: &DistanceMatrix, normalized: bool) -> Result<Vec<f64>> {
    let n = d.n();
    let dmax = d.max();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i * n + j] = dmax - d.get(i, j);
            }
        }
    }
    let degree: Vec<f64> = (0..n).map(|i| w[i * n..(i + 1) * n].iter().sum()).collect();
    if degree.iter().all(|&g| g == 0.0) {
        // No similarity structure: L = 0 and every vector is an eigenvector.
        return Ok(vec![0.0; n]);
    }

    // Laplacian (dense, symmetric).
    let mut lap = vec![0.0; n * n];
    if normalized {
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|&g| if g > 0.0 { 1.0 / g.sqrt() } else { 0.0 })
            .collect();
        for i in 0..n {
            for j in 0..n {
                let v = -w[i * n + j] * inv_sqrt[i] * inv_sqrt[j];
                lap[i * n + j] = if i == j { f64::from(u8::from(degree[i] > 0.0)) } else { v };
            }
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                lap[i * n + j] = if i == j { degree[i] } else { -w[i * n + j] };
            }
        }
    }

    let shift = (0..n)
        .map(|i| lap[i * n..(i + 1) * n].iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);

    let mut null = if normalized {
        degree.iter().map(|g| g.sqrt()).collect::<Vec<_>>()
    } else {
        vec![1.0; n]
    };
    normalize(&mut null);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f1ed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    deflate(&mut v, &null);
    normalize(&mut v);

    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        // next = (cI - L) v
        for i in 0..n {
            let row = &lap[i * n..(i + 1) * n];
            next[i] = shift * v[i] - row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        }
        deflate(&mut next, &null);
        let rayleigh: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
        residual = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - rayleigh * b).powi(2))
            .sum::<f64>()
            .sqrt()
            / shift;
        if normalize(&mut next) == 0.0 {
            // Only the null direction survives: W has no structure to order.
            return Ok(vec![0.0; n]);
        }
        std::mem::swap(&mut v, &mut next);
        if residual < TOLERANCE {
            return Ok(canonical_sign(v));
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn deflate(v: &mut [f64], unit: &[f64]) {
    let dot: f64 = v.iter().zip(unit).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(unit).for_each(|(a, b)| *a -= dot * b);
}

/// Eigenvectors are defined up to sign; make the largest-magnitude component
/// positive (first such index on ties).
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut pivot = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[pivot].abs() + 1e-9 {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Nodes sorted ascending by Fiedler component. Components equal up to
/// iteration noise count as ties and fall back to node index.
pub fn spectral_order(d: &DistanceMatrix, normalized: bool) -> Result<Permutation> {
    let n = d.n();
    if n < 2 {
        return Ok(Permutation::identity(n));
    }
    let v = fiedler_vector(d, normalized)?;
    let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let keys: Vec<i64> = v.iter().map(|x| (x / scale * 1e8).round() as i64).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (keys[i], i));
    Permutation::new(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, |i, j| (i as f64 - j as f64).abs()).unwrap()
    }

    #[test]
    fn line_is_monotone() {
        for normalized in [false, true] {
            let p = spectral_order(&line(4), normalized).unwrap();
            let fwd = [0, 1, 2, 3];
            let rev = [3, 2, 1, 0];
            assert!(p.as_slice() == fwd || p.as_slice() == rev, "{p:?}");
        }
    }

    #[test]
    fn longer_line_is_monotone() {
        let p = spectral_order(&line(12), false).unwrap();
        let s = p.as_slice();
        assert!(s.windows(2).all(|w| w[0] < w[1]) || s.windows(2).all(|w| w[0] > w[1]), "{s:?}");
    }

    #[test]
    fn two_nodes() {
        let d = line(2);
        let p = spectral_order(&d, false).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn duplicate_rows_tie_break_by_index() {
        // nodes 1 and 2 are exact duplicates, as are 3 and 4
        let pos = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0];
        let d = DistanceMatrix::from_fn(6, |i, j| (pos[i] - pos[j] as f64).abs()).unwrap();
        let p = spectral_order(&d, false).unwrap();
        let at = p.positions();
        assert_eq!(at[1] + 1, at[2], "{p:?}");
        assert_eq!(at[3] + 1, at[4], "{p:?}");
    }

    #[test]
    fn constant_distances_keep_identity() {
        let d = DistanceMatrix::from_fn(5, |_, _| 1.0).unwrap();
        assert_eq!(spectral_order(&d, false).unwrap(), Permutation::identity(5));
    }

    #[test]
    fn fiedler_vector_is_orthogonal_to_constant() {
        let d = DistanceMatrix::from_fn(9, |i, j| ((i * j) % 4) as f64 + (i + j) as f64).unwrap();
        let v = fiedler_vector(&d, false).unwrap();
        assert!(v.iter().sum::<f64>().abs() < 1e-8);
    }
}
