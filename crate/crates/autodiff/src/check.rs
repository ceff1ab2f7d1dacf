use crate::{Result, Tape, Tensor, Var};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `max |a - b| / max(|a|, |b|, 1e-8)` over all coordinates.
    pub max_rel_error: f64,
    /// `(param, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    /// Every compared coordinate as `(param, index, analytic, numeric)`.
    pub coords: Vec<(usize, usize, f64, f64)>,
}

/// Central difference formula used for the numeric gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error O(h²).
    #[default]
    ThreePoint,
    /// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`, error O(h⁴). Allows
    /// a larger `h` and so less cancellation on tiny gradients.
    FivePoint,
    /// Ridders' extrapolation: central differences at steps `eps`,
    /// `eps / 1.4`, … combined by Richardson extrapolation, keeping the
    /// estimate whose internal error estimate is smallest. Copes with both
    /// cancellation on tiny gradients and kinks near the probe point. A
    /// poor error estimate triggers a second pass from `eps / 10`.
    Ridders,
}

const RIDDERS_SHRINK: f64 = 1.4;
const RIDDERS_LEVELS: usize = 10;
const RIDDERS_SAFE: f64 = 2.0;

fn ridders(central: &mut impl FnMut(f64) -> Result<f64>, h0: f64) -> Result<(f64, f64)> {
    let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
    let mut prev: Vec<f64> = vec![central(h0)?];
    let mut best = prev[0];
    let mut err = f64::INFINITY;
    let mut h = h0;
    for i in 1..RIDDERS_LEVELS {
        h /= RIDDERS_SHRINK;
        let mut row = vec![central(h)?];
        let mut fac = c2;
        for j in 1..=i {
            let v = (row[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            fac *= c2;
            let e = (v - row[j - 1]).abs().max((v - prev[j - 1]).abs());
            if e <= err {
                err = e;
                best = v;
            }
            row.push(v);
        }
        if (row[i] - prev[i - 1]).abs() >= RIDDERS_SAFE * err {
            break;
        }
        prev = row;
    }
    Ok((best, err))
}

/// Ridders from `h0`; when its own error estimate is poor relative to the
/// value (typically a kink within reach of the larger steps), retries from
/// `h0 / 10` and keeps the estimate with the smaller error.
fn ridders_adaptive(mut central: impl FnMut(f64) -> Result<f64>, h0: f64) -> Result<f64> {
    let (v, e) = ridders(&mut central, h0)?;
    if e <= 1e-7 * v.abs() + 1e-13 {
        return Ok(v);
    }
    let (w, f) = ridders(&mut central, h0 / 10.0)?;
    Ok(if f < e { w } else { v })
}

/// Compares tape gradients of `f` at `params` with central differences of
/// step `eps`. `f` receives a fresh tape with the parameters already
/// recorded as trainable leaves and returns its scalar loss.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with(f, params, eps, Stencil::ThreePoint)
}

/// [`grad_check`] with an explicit difference stencil.
pub fn grad_check_with<F>(mut f: F, params: &[Tensor], eps: f64, stencil: Stencil) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut eval = |ps: &[Tensor], want_grad: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone(), want_grad)).collect();
        let loss = f(&mut tape, &vars)?;
        let value = tape.value(loss).item()?;
        if !want_grad {
            return Ok((value, Vec::new()));
        }
        tape.backward(loss)?;
        let grads = vars
            .iter()
            .zip(ps)
            .map(|(&v, p)| tape.grad(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
            .collect();
        Ok((value, grads))
    };

    let (_, analytic) = eval(params, true)?;
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coords: Vec::new(),
    };
    let mut probe = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.len() {
            let x = p.data()[k];
            let mut at = |h: f64| -> Result<f64> {
                probe[pi].data_mut()[k] = x + h;
                let v = eval(&probe, false)?.0;
                probe[pi].data_mut()[k] = x;
                Ok(v)
            };
            let numeric = match stencil {
                Stencil::ThreePoint => (at(eps)? - at(-eps)?) / (2.0 * eps),
                Stencil::FivePoint => {
                    let (p2, p1, m1, m2) = (at(2.0 * eps)?, at(eps)?, at(-eps)?, at(-2.0 * eps)?);
                    (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps)
                }
                Stencil::Ridders => ridders_adaptive(|h| Ok((at(h)? - at(-h)?) / (2.0 * h)), eps)?,
            };
            let a = analytic[pi][k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coords.push((pi, k, a, numeric));
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, k);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let x = Tensor::new(&[3], vec![0.5, -1.5, 2.0]).unwrap();
        let r = grad_check(
            |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                let s = tape.scale(sq, 3.0);
                Ok(tape.sum(s))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn five_point_on_a_cubic() {
        let x = Tensor::new(&[2], vec![0.7, -1.3]).unwrap();
        let r = grad_check_with(
            |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                let cube = tape.mul(sq, v[0])?;
                Ok(tape.sum(cube))
            },
            &[x],
            1e-2,
            Stencil::FivePoint,
        )
        .unwrap();
        // the O(h⁴) term vanishes for polynomials of degree < 5
        assert!(r.max_rel_error < 1e-12, "{r:?}");
    }

    #[test]
    fn ridders_on_exp() {
        let x = Tensor::new(&[3], vec![0.1, -2.0, 1.5]).unwrap();
        let r = grad_check_with(
            |tape, v| {
                let e = tape.exp(v[0]);
                Ok(tape.sum(e))
            },
            &[x],
            0.1,
            Stencil::Ridders,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-12, "{r:?}");
    }

    #[test]
    fn constant_function() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let r = grad_check(
            |tape, _| Ok(tape.constant(Tensor::scalar(4.0))),
            &[x],
            1e-5,
        )
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }
}
