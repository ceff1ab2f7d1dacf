//! Seriation quality of a node order against a dissimilarity matrix.
//!
//! All three read `E[i][j] = D[p(i)][p(j)]`, the dissimilarities in display
//! order.

use std::fmt;
use std::str::FromStr;

use reorder_core::{DistanceMatrix, Permutation};

use crate::{Error, Result};

fn check(d: &DistanceMatrix, p: &Permutation) -> Result<()> {
    if d.n() != p.len() {
        return Err(Error::Invalid(format!(
            "order of length {} for a {}-node distance matrix",
            p.len(),
            d.n()
        )));
    }
    Ok(())
}

fn permuted(d: &DistanceMatrix, p: &Permutation) -> Vec<f64> {
    let n = d.n();
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            e[i * n + j] = d.get(p.at(i), p.at(j));
        }
    }
    e
}

/// Anti-Robinson violations among triples `i < j < k` with `k - i <= band`:
/// one for `E[i][j] > E[i][k]` (row) and one for `E[j][k] > E[i][k]`
/// (column).
fn violations(e: &[f64], n: usize, band: usize) -> u64 {
    let mut count = 0;
    for i in 0..n {
        for k in i + 2..n.min(i + band + 1) {
            let outer = e[i * n + k];
            for j in i + 1..k {
                count += u64::from(e[i * n + j] > outer) + u64::from(e[j * n + k] > outer);
            }
        }
    }
    count
}

/// Number of anti-Robinson events.
pub fn ar_events(d: &DistanceMatrix, p: &Permutation) -> Result<u64> {
    check(d, p)?;
    let n = d.n();
    Ok(violations(&permuted(d, p), n, n))
}

pub fn default_band(n: usize) -> usize {
    n / 5
}

/// Banded anti-Robinson measure; lower is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    /// AR violations among triples spanning at most `band` positions.
    pub violations: u64,
    /// `Σ E[i][j]` over `0 < |i - j| <= band`.
    pub band_weight: f64,
    /// `Σ E[i][j]` over all cells.
    pub total_weight: f64,
}

impl Bar {
    /// `violations + band_weight / (1 + total_weight)`. The fraction is below
    /// one, so it only orders reorderings with equal violation counts.
    pub fn value(&self) -> f64 {
        self.violations as f64 + self.band_weight / (1.0 + self.total_weight)
    }
}

pub fn bar_measure(d: &DistanceMatrix, p: &Permutation, band: usize) -> Result<Bar> {
    check(d, p)?;
    let n = d.n();
    if band == 0 || band >= n {
        return Err(Error::Invalid(format!("band {band} outside 1..{n}")));
    }
    let e = permuted(d, p);
    let mut band_weight = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && i.abs_diff(j) <= band {
                band_weight += e[i * n + j];
            }
        }
    }
    Ok(Bar {
        violations: violations(&e, n, band),
        band_weight,
        total_weight: e.iter().sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cor {
    pub value: f64,
    /// Set when the permuted dissimilarities have zero variance; `value` is
    /// then 0.
    pub degenerate: bool,
}

/// Pearson correlation between `E[i][j]` and `|i - j|` over pairs `i < j`.
pub fn cor_measure(d: &DistanceMatrix, p: &Permutation) -> Result<Cor> {
    check(d, p)?;
    let n = d.n();
    if n < 3 {
        return Err(Error::Invalid(format!("correlation needs n >= 3, got {n}")));
    }
    let e = permuted(d, p);
    let mut xs = Vec::with_capacity(n * (n - 1) / 2);
    let mut ys = Vec::with_capacity(xs.capacity());
    for i in 0..n {
        for j in i + 1..n {
            xs.push(e[i * n + j]);
            ys.push((j - i) as f64);
        }
    }
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Ok(Cor {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Cor {
        value: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QualityMetric {
    Ar,
    Bar,
    Cor,
}

impl QualityMetric {
    pub const ALL: [QualityMetric; 3] = [QualityMetric::Ar, QualityMetric::Bar, QualityMetric::Cor];

    pub fn token(self) -> &'static str {
        match self {
            QualityMetric::Ar => "ar",
            QualityMetric::Bar => "bar",
            QualityMetric::Cor => "cor",
        }
    }

    pub fn lower_is_better(self) -> bool {
        !matches!(self, QualityMetric::Cor)
    }

    /// Raw metric value of order `p`.
    pub fn evaluate(self, d: &DistanceMatrix, p: &Permutation) -> Result<f64> {
        match self {
            QualityMetric::Ar => Ok(ar_events(d, p)? as f64),
            QualityMetric::Bar => {
                let band = default_band(d.n()).max(1);
                Ok(bar_measure(d, p, band)?.value())
            }
            QualityMetric::Cor => Ok(cor_measure(d, p)?.value),
        }
    }
}

impl fmt::Display for QualityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for QualityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ar" => Ok(QualityMetric::Ar),
            "bar" => Ok(QualityMetric::Bar),
            "cor" => Ok(QualityMetric::Cor),
            _ => Err(Error::Invalid(format!("unknown metric `{s}` (expected ar, bar or cor)"))),
        }
    }
}

/// Min-max normalization to `[0, 1]` with 1 the best value. Loss-type
/// metrics are inverted. A constant surface maps to 0.5 everywhere.
pub fn normalize(raw: &[f64], metric: QualityMetric) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return vec![0.5; raw.len()];
    }
    raw.iter()
        .map(|&v| {
            let t = (v - lo) / range;
            if metric.lower_is_better() {
                1.0 - t
            } else {
                t
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, |i, j| i.abs_diff(j) as f64).unwrap()
    }

    fn perm(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ar_examples() {
        assert_eq!(ar_events(&line(7), &Permutation::identity(7)).unwrap(), 0);
        for n in 0..3 {
            let d = DistanceMatrix::from_fn(n, |i, j| (i + j) as f64 * f64::from(u8::from(i != j))).unwrap();
            assert_eq!(ar_events(&d, &Permutation::identity(n)).unwrap(), 0);
        }
        // E = [[0,1,1],[1,0,2],[1,2,0]]: only the column test E[1][2] > E[0][2] fires.
        assert_eq!(ar_events(&line(3), &perm(&[1, 0, 2])).unwrap(), 1);
    }

    #[test]
    fn ar_rejects_length_mismatch() {
        assert!(ar_events(&line(4), &Permutation::identity(3)).is_err());
    }

    #[test]
    fn bar_full_band_counts_all_violations() {
        let d = line(6);
        let p = perm(&[3, 0, 5, 1, 4, 2]);
        let bar = bar_measure(&d, &p, 5).unwrap();
        assert_eq!(bar.violations, ar_events(&d, &p).unwrap());
        assert_eq!(bar_measure(&d, &p, 2).unwrap(), bar_measure(&d, &p, 2).unwrap());
        assert!(bar_measure(&d, &p, 0).is_err());
        assert!(bar_measure(&d, &p, 6).is_err());
    }

    fn all_perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_perms(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identity_minimizes_band_weight_on_a_line() {
        for n in [5, 6] {
            let d = line(n);
            let b = default_band(n);
            let best = bar_measure(&d, &Permutation::identity(n), b).unwrap();
            for p in all_perms(n) {
                let other = bar_measure(&d, &perm(&p), b).unwrap();
                assert!(best.band_weight <= other.band_weight);
                assert!(best.value() <= other.value());
            }
        }
    }

    #[test]
    fn cor_examples() {
        let d = line(8);
        let c = cor_measure(&d, &Permutation::identity(8)).unwrap();
        assert!((c.value - 1.0).abs() < 1e-12 && !c.degenerate);
        let r = cor_measure(&d, &Permutation::identity(8).reverse()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let flat = DistanceMatrix::from_fn(5, |i, j| if i == j { 0.0 } else { 3.0 }).unwrap();
        assert_eq!(
            cor_measure(&flat, &Permutation::identity(5)).unwrap(),
            Cor {
                value: 0.0,
                degenerate: true
            }
        );
        assert!(cor_measure(&line(2), &Permutation::identity(2)).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize(&[2.0, 4.0, 3.0], QualityMetric::Ar), vec![1.0, 0.0, 0.5]);
        assert_eq!(normalize(&[2.0, 4.0, 3.0], QualityMetric::Cor), vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize(&[7.0; 4], QualityMetric::Bar), vec![0.5; 4]);
    }

    #[test]
    fn metric_tokens() {
        for m in QualityMetric::ALL {
            assert_eq!(m.token().parse::<QualityMetric>().unwrap(), m);
        }
        assert!("stress".parse::<QualityMetric>().is_err());
    }
}
