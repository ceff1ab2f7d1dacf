use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reorder_autodiff::{grad_check, Result, Tape, Tensor, Var};

const TOL: f64 = 1e-6;
const EPS: f64 = 1e-5;
/// Round-off in a central difference is about `ulp(f) / EPS`, so gradients
/// near zero cannot be resolved to TOL relative error; like `allclose`, a
/// coordinate also passes when its absolute error is below this.
const ATOL: f64 = 1e-8;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.2..2.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Reduces an arbitrary tensor to a scalar with non-uniform weights so every
/// output coordinate matters.
fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let w = random(&mut rng, tape.shape(y), -1.0, 1.0);
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

/// Largest relative error over coordinates that miss the absolute bound.
fn check(params: &[Tensor], seed: u64, f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let r = grad_check(
        |tape, v| {
            let y = f(tape, v)?;
            weighted_sum(tape, y, seed)
        },
        params,
        EPS,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for &(_, _, a, n) in &r.coords {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(1e-8);
        let err = if abs < ATOL { 0.0 } else { rel };
        worst = worst.max(err);
    }
    if worst >= TOL {
        eprintln!("{:?} {r:?}", params.iter().map(Tensor::shape).collect::<Vec<_>>());
    }
    worst
}

/// Values whose pairwise gaps exceed the finite-difference step, so sorting
/// is locally constant.
fn spaced(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    use rand::seq::SliceRandom;
    let len: usize = shape.iter().product();
    let mut ranks: Vec<usize> = (0..len).collect();
    ranks.shuffle(rng);
    Tensor::from_fn(shape, |i| ranks[i] as f64 * 0.1 + rng.random_range(0.0..0.05))
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_and_bmm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k, n) = dims(&mut rng);
        let a = random(&mut rng, &[m, k], -1.0, 1.0);
        let b = random(&mut rng, &[k, n], -1.0, 1.0);
        prop_assert!(check(&[a, b], seed, |t, v| t.matmul(v[0], v[1])) < TOL);
        let bs = rng.random_range(1..4);
        let a = random(&mut rng, &[bs, m, k], -1.0, 1.0);
        let b = random(&mut rng, &[bs, k, n], -1.0, 1.0);
        prop_assert!(check(&[a, b], seed, |t, v| t.bmm(v[0], v[1])) < TOL);
    }

    #[test]
    fn elementwise_binary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n, _) = dims(&mut rng);
        let a = random(&mut rng, &[m, n], -2.0, 2.0);
        let b = random(&mut rng, &[m, n], -2.0, 2.0);
        let row = random(&mut rng, &[n], -2.0, 2.0);
        prop_assert!(check(&[a.clone(), b.clone()], seed, |t, v| t.add(v[0], v[1])) < TOL);
        prop_assert!(check(&[a.clone(), row], seed, |t, v| t.add(v[0], v[1])) < TOL);
        prop_assert!(check(&[a.clone(), b.clone()], seed, |t, v| t.sub(v[0], v[1])) < TOL);
        prop_assert!(check(&[a.clone(), b], seed, |t, v| t.mul(v[0], v[1])) < TOL);
        prop_assert!(check(&[a], seed, |t, v| t.mul(v[0], v[0])) < TOL);
    }

    #[test]
    fn elementwise_unary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n, _) = dims(&mut rng);
        let x = random(&mut rng, &[m, n], -2.0, 2.0);
        let pos = random(&mut rng, &[m, n], 0.1, 3.0);
        let kinked = away_from_zero(&mut rng, &[m, n]);
        prop_assert!(check(&[x.clone()], seed, |t, v| Ok(t.scale(v[0], -1.7))) < TOL);
        prop_assert!(check(&[x.clone()], seed, |t, v| Ok(t.neg(v[0]))) < TOL);
        prop_assert!(check(&[x.clone()], seed, |t, v| Ok(t.add_scalar(v[0], 0.3))) < TOL);
        prop_assert!(check(&[x.clone()], seed, |t, v| Ok(t.exp(v[0]))) < TOL);
        prop_assert!(check(&[pos], seed, |t, v| Ok(t.log(v[0]))) < TOL);
        prop_assert!(check(&[kinked.clone()], seed, |t, v| Ok(t.abs(v[0]))) < TOL);
        prop_assert!(check(&[kinked.clone()], seed, |t, v| Ok(t.elu(v[0], 1.0))) < TOL);
        // interior of [-1.1, 1.1] is away from the clamp kinks
        prop_assert!(check(&[x.clone()], seed, |t, v| Ok(t.clamp(v[0], -3.0, 3.0))) < TOL);
        prop_assert!(check(&[x.clone()], seed, |t, v| Ok(t.sum(v[0]))) < TOL);
        prop_assert!(check(&[x], seed, |t, v| Ok(t.mean(v[0]))) < TOL);
    }

    #[test]
    fn shape_ops(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = dims(&mut rng);
        let x = random(&mut rng, &[a, b, c], -1.0, 1.0);
        let y = random(&mut rng, &[2, b, c], -1.0, 1.0);
        prop_assert!(check(&[x.clone()], seed, |t, v| t.reshape(v[0], &[a * b, c])) < TOL);
        prop_assert!(check(&[x.clone()], seed, |t, v| t.transpose(v[0])) < TOL);
        prop_assert!(check(&[x.clone(), y], seed, |t, v| t.concat(&[v[0], v[1], v[0]])) < TOL);
        let distinct = spaced(&mut rng, &[a, b, c]);
        prop_assert!(check(&[distinct.clone()], seed, |t, v| t.sort(v[0], false)) < TOL);
        prop_assert!(check(&[distinct], seed, |t, v| t.sort(v[0], true)) < TOL);
        let p = random(&mut rng, &[a, b], -1.0, 1.0);
        let q = random(&mut rng, &[a, c], -1.0, 1.0);
        prop_assert!(check(&[p, q], seed, |t, v| t.pairwise_diff(v[0], v[1])) < TOL);
    }

    #[test]
    fn normalizers(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = dims(&mut rng);
        let x = random(&mut rng, &[a, b, c + 1], -3.0, 3.0);
        for axis in 0..3 {
            prop_assert!(check(&[x.clone()], seed, |t, v| t.softmax(v[0], axis)) < TOL);
            prop_assert!(check(&[x.clone()], seed, |t, v| t.log_softmax(v[0], axis)) < TOL);
        }
        // width 2 makes the output a near-constant ±1 whose true gradient is
        // at the finite-difference noise floor
        let d = c + 2;
        let x = random(&mut rng, &[a, b, d], -3.0, 3.0);
        let gain = random(&mut rng, &[d], 0.5, 1.5);
        let bias = random(&mut rng, &[d], -0.5, 0.5);
        prop_assert!(check(&[x, gain, bias], seed, |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)) < TOL);
    }

    #[test]
    fn layer_norm_standardizes_rows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, d) = (rng.random_range(1..6), rng.random_range(2..40));
        let x = random(&mut rng, &[rows, d], -5.0, 5.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let g = tape.constant(Tensor::filled(&[d], 1.0));
        let b = tape.constant(Tensor::zeros(&[d]));
        let y = tape.layer_norm(xv, g, b, 1e-5).unwrap();
        let moments = |row: &[f64]| {
            let mean = row.iter().sum::<f64>() / d as f64;
            (mean, row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64)
        };
        for (row, raw) in tape.value(y).data().chunks(d).zip(x.data().chunks(d)) {
            let (mean, var) = moments(row);
            let (_, raw_var) = moments(raw);
            prop_assert!(mean.abs() < 1e-12);
            // ε shrinks the variance to v / (v + ε)
            prop_assert!((var - raw_var / (raw_var + 1e-5)).abs() < 1e-10, "{var}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, d) = (rng.random_range(1..6), rng.random_range(1..40));
        let mut tape = Tape::new();
        let x = tape.constant(random(&mut rng, &[rows, d], -30.0, 30.0));
        let y = tape.row_softmax(x).unwrap();
        for row in tape.value(y).data().chunks(d) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn sum_of_squares_example() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
}
