//! Differentiable relaxations of permutation matrices.

use reorder_autodiff::{Tape, Tensor, Var};

use crate::Result;

/// Sinkhorn normalization of `x: [.., n, n]`. Works in log space on `x / τ`;
/// each iteration normalizes rows and then columns.
pub fn sinkhorn(tape: &mut Tape, x: Var, tau: f64, iters: usize) -> Result<Var> {
    let rank = tape.shape(x).len();
    let mut y = tape.scale(x, 1.0 / tau);
    for _ in 0..iters {
        y = tape.log_softmax(y, rank - 1)?;
        y = tape.log_softmax(y, rank - 2)?;
    }
    Ok(tape.exp(y))
}

/// SoftSort of scores `s: [.., n]`:
/// `P[i][j] = softmax_j(-|sort_desc(s)[i] - s[j]| / τ)`.
pub fn softsort(tape: &mut Tape, s: Var, tau: f64) -> Result<Var> {
    let sorted = tape.sort(s, true)?;
    let diff = tape.pairwise_diff(sorted, s)?;
    let dist = tape.abs(diff);
    let logits = tape.scale(dist, -1.0 / tau);
    let rank = tape.shape(logits).len();
    Ok(tape.softmax(logits, rank - 1)?)
}

/// [`sinkhorn`] on a plain matrix.
pub fn sinkhorn_matrix(x: &Tensor, tau: f64, iters: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let out = sinkhorn(&mut tape, v, tau, iters)?;
    Ok(tape.value(out).clone())
}

/// [`softsort`] on a plain score vector.
pub fn softsort_matrix(s: &Tensor, tau: f64) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.constant(s.clone());
    let out = softsort(&mut tape, v, tau)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(n: usize, data: &[f64]) -> Tensor {
        Tensor::new(&[n, n], data.to_vec()).unwrap()
    }

    #[test]
    fn sinkhorn_examples() {
        let p = sinkhorn_matrix(&m(2, &[0.0; 4]), 1.0, 20).unwrap();
        assert_eq!(p.data(), &[0.5; 4]);
        let p = sinkhorn_matrix(&m(1, &[3.7]), 1.0, 20).unwrap();
        assert_eq!(p.data(), &[1.0]);
        let n = 5;
        let x = Tensor::from_fn(&[n, n], |k| if k / n == k % n { 10.0 } else { 0.0 });
        let p = sinkhorn_matrix(&x, 1.0, 20).unwrap();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert!(p.data()[i * n + j] < 1e-4);
                }
            }
        }
    }

    #[test]
    fn softsort_examples() {
        let s = Tensor::new(&[3], vec![3.0, 1.0, 2.0]).unwrap();
        let p = softsort_matrix(&s, 0.01).unwrap();
        let argmax: Vec<usize> = p
            .data()
            .chunks(3)
            .map(|row| (0..3).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap())
            .collect();
        assert_eq!(argmax, vec![0, 2, 1]);
        let p = softsort_matrix(&Tensor::new(&[1], vec![4.0]).unwrap(), 1.0).unwrap();
        assert_eq!(p.data(), &[1.0]);
        let p = softsort_matrix(&Tensor::new(&[2], vec![2.0, 2.0]).unwrap(), 1.0).unwrap();
        assert_eq!(p.data(), &[0.5; 4]);
    }

    #[test]
    fn batched_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[3, 4, 4], |k| (k as f64 * 0.37).sin()));
        let p = sinkhorn(&mut tape, x, 1.0, 20).unwrap();
        assert_eq!(tape.shape(p), &[3, 4, 4]);
        let s = tape.constant(Tensor::from_fn(&[3, 4], |k| (k as f64 * 1.3).cos()));
        let q = softsort(&mut tape, s, 1.0).unwrap();
        assert_eq!(tape.shape(q), &[3, 4, 4]);
    }
}
