use reorder_autodiff::{Tape, Tensor, Var};
use reorder_core::AdjacencyMatrix;

use crate::{Error, Result};

pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy between targets `y` and predictions `p`, with
/// `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(tape: &mut Tape, y: Var, p: Var) -> Result<Var> {
    let p = tape.clamp(p, BCE_CLAMP, 1.0 - BCE_CLAMP);
    let log_p = tape.log(p);
    let neg_p = tape.neg(p);
    let one_minus_p = tape.add_scalar(neg_p, 1.0);
    let log_q = tape.log(one_minus_p);
    let neg_y = tape.neg(y);
    let one_minus_y = tape.add_scalar(neg_y, 1.0);
    let a = tape.mul(y, log_p)?;
    let b = tape.mul(one_minus_y, log_q)?;
    let s = tape.add(a, b)?;
    let m = tape.mean(s);
    Ok(tape.neg(m))
}

/// Sliced Wasserstein distance between a batch `z: [B, 2]` and prior samples
/// `prior: [B, 2]` along the unit directions in `theta: [2, L]`: the mean
/// over directions and batch positions of the squared difference between the
/// sorted projections.
pub fn sliced_wasserstein(tape: &mut Tape, z: Var, prior: Var, theta: Var) -> Result<Var> {
    let (zs, ps) = (tape.shape(z).to_vec(), tape.shape(prior).to_vec());
    if zs != ps {
        return Err(Error::Shape(format!("latent batch {zs:?} vs prior batch {ps:?}")));
    }
    if zs.first().copied().unwrap_or(0) == 0 {
        return Err(Error::Shape("sliced Wasserstein needs a non-empty batch".into()));
    }
    let sorted = |tape: &mut Tape, x: Var| -> Result<Var> {
        let proj = tape.matmul(x, theta)?;
        let by_direction = tape.transpose(proj)?;
        Ok(tape.sort(by_direction, false)?)
    };
    let a = sorted(tape, z)?;
    let b = sorted(tape, prior)?;
    let d = tape.sub(a, b)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

/// `L` unit directions at uniformly random angles, as a `[2, L]` tensor.
pub fn directions(angles: &[f64]) -> Tensor {
    let l = angles.len();
    Tensor::from_fn(&[2, l], |k| {
        let a = angles[k % l];
        if k < l {
            a.cos()
        } else {
            a.sin()
        }
    })
}

/// Fraction of cells where two binary matrices differ.
pub fn error_rate(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::Shape(format!("{}×{} vs {}×{}", a.n(), a.n(), b.n(), b.n())));
    }
    let n2 = (a.n() * a.n()) as f64;
    let diff = a.cells().iter().zip(b.cells()).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / n2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use reorder_core::MatrixVariant;

    fn bce_value(y: &[f64], p: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let yv = tape.constant(Tensor::new(&[y.len()], y.to_vec()).unwrap());
        let pv = tape.constant(Tensor::new(&[p.len()], p.to_vec()).unwrap());
        let l = bce(&mut tape, yv, pv).unwrap();
        tape.value(l).item().unwrap()
    }

    #[test]
    fn bce_examples() {
        assert!((bce_value(&[0.0, 1.0, 1.0], &[0.5, 0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
        assert!((bce_value(&[1.0], &[1e-7]) - 16.118_095_650_958_32).abs() < 1e-9);
        assert!(bce_value(&[0.0, 1.0], &[0.0, 1.0]) < 1.1e-7);
    }

    fn sw(z: &[f64], prior: &[f64], angles: &[f64]) -> f64 {
        let b = z.len() / 2;
        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::new(&[b, 2], z.to_vec()).unwrap());
        let pv = tape.constant(Tensor::new(&[b, 2], prior.to_vec()).unwrap());
        let th = tape.constant(directions(angles));
        let l = sliced_wasserstein(&mut tape, zv, pv, th).unwrap();
        tape.value(l).item().unwrap()
    }

    #[test]
    fn sliced_wasserstein_examples() {
        let prior = [0.1, -0.4, 0.7, 0.2, -0.9, 0.5];
        assert_eq!(sw(&prior, &prior, &[0.3, 1.1, 2.0]), 0.0);
        let shuffled = [0.7, 0.2, -0.9, 0.5, 0.1, -0.4];
        assert_eq!(sw(&shuffled, &prior, &[0.3, 1.1, 2.0]), 0.0);
        assert_eq!(sw(&[0.0, 0.0], &[1.0, 0.0], &[0.0]), 1.0);
    }

    #[test]
    fn error_rate_examples() {
        let a = AdjacencyMatrix::from_cells(2, vec![0, 1, 1, 0], MatrixVariant::Raw).unwrap();
        let b = AdjacencyMatrix::from_cells(2, vec![1, 0, 0, 1], MatrixVariant::SelfLoops).unwrap();
        assert_eq!(error_rate(&a, &a).unwrap(), 0.0);
        assert_eq!(error_rate(&a, &b).unwrap(), 1.0);
        let k = reorder_core::Graph::karate();
        let mut edges: Vec<_> = k.edges().collect();
        edges.pop();
        let g = reorder_core::Graph::new(34, edges).unwrap();
        let e = error_rate(&k.adjacency(MatrixVariant::Raw), &g.adjacency(MatrixVariant::Raw)).unwrap();
        assert_eq!(e, 2.0 / 1156.0);
    }
}
