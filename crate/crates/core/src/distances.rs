//! Node dissimilarities.
//!
//! Rows of an adjacency matrix serve as node feature vectors. Twelve vector
//! metrics are available on either the raw matrix or the self-loop variant,
//! plus unweighted shortest-path hop counts: 25 distance specs in all.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, Graph, MatrixVariant};
use crate::permutation::Permutation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Euclidean,
    Manhattan,
    Cosine,
    Dice,
    Hamming,
    Jaccard,
    Kulsinski,
    RogersTanimoto,
    RussellRao,
    SokalMichener,
    SokalSneath,
    Yule,
    ShortestPath,
}

impl Metric {
    /// The twelve row-vector metrics (everything but shortest paths).
    pub const VECTOR: [Metric; 12] = [
        Metric::Euclidean,
        Metric::Manhattan,
        Metric::Cosine,
        Metric::Dice,
        Metric::Hamming,
        Metric::Jaccard,
        Metric::Kulsinski,
        Metric::RogersTanimoto,
        Metric::RussellRao,
        Metric::SokalMichener,
        Metric::SokalSneath,
        Metric::Yule,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
            Metric::Cosine => "cosine",
            Metric::Dice => "dice",
            Metric::Hamming => "hamming",
            Metric::Jaccard => "jaccard",
            Metric::Kulsinski => "kulsinski",
            Metric::RogersTanimoto => "rogerstanimoto",
            Metric::RussellRao => "russellrao",
            Metric::SokalMichener => "sokalmichener",
            Metric::SokalSneath => "sokalsneath",
            Metric::Yule => "yule",
            Metric::ShortestPath => "shortestpath",
        }
    }

    pub fn from_token(token: &str) -> Result<Self> {
        Self::VECTOR
            .iter()
            .chain(std::iter::once(&Metric::ShortestPath))
            .copied()
            .find(|m| m.token() == token)
            .ok_or_else(|| Error::UnknownToken {
                kind: "distance metric",
                token: token.into(),
            })
    }

    /// Metrics defined on real-valued vectors; the rest need 0/1 input.
    fn accepts_reals(self) -> bool {
        matches!(self, Metric::Euclidean | Metric::Manhattan | Metric::Cosine)
    }
}

/// A metric paired with the adjacency variant its rows are taken from.
/// `ShortestPath` always carries `Raw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DistanceSpec {
    metric: Metric,
    variant: MatrixVariant,
}

impl DistanceSpec {
    pub fn new(metric: Metric, variant: MatrixVariant) -> Self {
        let variant = if metric == Metric::ShortestPath {
            MatrixVariant::Raw
        } else {
            variant
        };
        Self { metric, variant }
    }

    pub fn shortest_path() -> Self {
        Self::new(Metric::ShortestPath, MatrixVariant::Raw)
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn variant(&self) -> MatrixVariant {
        self.variant
    }

    /// Variant token, or `None` for shortest paths where it does not apply.
    pub fn variant_token(&self) -> Option<&'static str> {
        (self.metric != Metric::ShortestPath).then(|| self.variant.token())
    }

    /// All 25 admissible specs in canonical order.
    pub fn all() -> Vec<DistanceSpec> {
        let mut specs = Vec::with_capacity(25);
        for variant in [MatrixVariant::Raw, MatrixVariant::SelfLoops] {
            for metric in Metric::VECTOR {
                specs.push(DistanceSpec::new(metric, variant));
            }
        }
        specs.push(DistanceSpec::shortest_path());
        specs.sort();
        specs
    }
}

impl fmt::Display for DistanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variant_token() {
            Some(v) => write!(f, "{}:{}", self.metric.token(), v),
            None => f.write_str(self.metric.token()),
        }
    }
}

impl FromStr for DistanceSpec {
    type Err = Error;

    /// `metric:variant`, e.g. `jaccard:selfloops`; `shortestpath` takes no
    /// variant.
    fn from_str(s: &str) -> Result<Self> {
        let (metric, variant) = match s.split_once(':') {
            Some((m, v)) => (Metric::from_token(m)?, Some(MatrixVariant::from_token(v)?)),
            None => (Metric::from_token(s)?, None),
        };
        match (metric, variant) {
            (Metric::ShortestPath, None) => Ok(Self::shortest_path()),
            (Metric::ShortestPath, Some(_)) => Err(Error::Validation(
                "shortestpath does not take a matrix variant".into(),
            )),
            (m, Some(v)) => Ok(Self::new(m, v)),
            (m, None) => Err(Error::Validation(format!(
                "distance `{}` needs a variant (`{}:raw` or `{}:selfloops`)",
                m.token(),
                m.token(),
                m.token()
            ))),
        }
    }
}

/// Dense symmetric dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    cells: Vec<f64>,
}

impl DistanceMatrix {
    /// Checks symmetry, zero diagonal and finiteness/non-negativity.
    pub fn new(n: usize, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: cells.len(),
            });
        }
        for i in 0..n {
            if cells[i * n + i] != 0.0 {
                return Err(Error::Validation(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let d = cells[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Validation(format!("entry ({i}, {j}) = {d} is invalid")));
                }
                if d != cells[j * n + i] {
                    return Err(Error::Validation(format!("entry ({i}, {j}) breaks symmetry")));
                }
            }
        }
        Ok(Self { n, cells })
    }

    /// Builds `D[i][j] = f(i, j)` for `i < j`, mirrored, with zero diagonal.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut cells = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                cells[i * n + j] = d;
                cells[j * n + i] = d;
            }
        }
        Self::new(n, cells)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.n..(i + 1) * self.n]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn max(&self) -> f64 {
        self.cells.iter().copied().fold(0.0, f64::max)
    }

    /// `result[i][j] = D[order[i]][order[j]]`.
    pub fn reorder(&self, p: &Permutation) -> Result<DistanceMatrix> {
        if p.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: p.len(),
            });
        }
        let n = self.n;
        let o = p.as_slice();
        let mut cells = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                cells[i * n + j] = self.get(o[i], o[j]);
            }
        }
        Ok(DistanceMatrix { n, cells })
    }

    /// Adds `c` to every off-diagonal entry.
    pub fn shifted(&self, c: f64) -> Result<DistanceMatrix> {
        let n = self.n;
        Self::from_fn(n, |i, j| self.get(i, j) + c)
    }
}

/// `(N00, N01, N10, N11)` where `Nab` counts positions with `u = a, v = b`.
pub fn contingency(u: &[u8], v: &[u8]) -> Result<(usize, usize, usize, usize)> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let mut c = [0usize; 4];
    for (&a, &b) in u.iter().zip(v) {
        c[(usize::from(a != 0) << 1) | usize::from(b != 0)] += 1;
    }
    Ok((c[0], c[1], c[2], c[3]))
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn binary_distance(n00: usize, n01: usize, n10: usize, n11: usize, metric: Metric) -> f64 {
    let [n00, n01, n10, n11] = [n00, n01, n10, n11].map(|x| x as f64);
    let n = n00 + n01 + n10 + n11;
    let diff = n01 + n10;
    match metric {
        Metric::Dice => ratio_or_zero(diff, 2.0 * n11 + diff),
        Metric::Hamming => ratio_or_zero(diff, n),
        Metric::Jaccard => ratio_or_zero(diff, n11 + diff),
        Metric::Kulsinski => ratio_or_zero(diff - n11 + n, diff + n),
        Metric::RogersTanimoto => ratio_or_zero(2.0 * diff, n00 + n11 + 2.0 * diff),
        Metric::RussellRao => ratio_or_zero(n - n11, n),
        Metric::SokalMichener => ratio_or_zero(2.0 * diff, 2.0 * (n00 + n11) + 2.0 * diff),
        Metric::SokalSneath => ratio_or_zero(2.0 * diff, n11 + 2.0 * diff),
        Metric::Yule => ratio_or_zero(2.0 * n01 * n10, n00 * n11 + n01 * n10),
        _ => unreachable!("not a binary metric"),
    }
}

/// Distance between two feature vectors. Binary metrics require 0/1 entries;
/// degenerate denominators resolve to 0 (or 1 for cosine with a zero vector).
pub fn vector_distance(u: &[f64], v: &[f64], metric: Metric) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let d = match metric {
        Metric::Euclidean => u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        Metric::Manhattan => u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum(),
        Metric::Cosine => {
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
            if nu == 0.0 || nv == 0.0 {
                1.0
            } else {
                (1.0 - dot / (nu * nv)).max(0.0)
            }
        }
        Metric::ShortestPath => {
            return Err(Error::Validation(
                "shortest-path distance is not a vector metric".into(),
            ))
        }
        m => {
            let to_bits = |x: &[f64]| -> Result<Vec<u8>> {
                x.iter()
                    .map(|&a| match a {
                        0.0 => Ok(0),
                        1.0 => Ok(1),
                        _ => Err(Error::Validation(format!(
                            "{} expects binary vectors, found {a}",
                            m.token()
                        ))),
                    })
                    .collect()
            };
            let (n00, n01, n10, n11) = contingency(&to_bits(u)?, &to_bits(v)?)?;
            binary_distance(n00, n01, n10, n11, m)
        }
    };
    debug_assert!(metric.accepts_reals() || (0.0..=2.0).contains(&d));
    Ok(d)
}

/// Pairwise node distances under `spec`, reading rows of `graph`'s adjacency
/// matrix of the spec's variant.
pub fn pairwise(graph: &Graph, spec: DistanceSpec) -> DistanceMatrix {
    if spec.metric() == Metric::ShortestPath {
        return shortest_path_distances(graph).matrix;
    }
    pairwise_rows(&graph.adjacency(spec.variant()), spec.metric())
}

/// Pairwise distances between the rows of `a` under a vector metric.
pub fn pairwise_rows(a: &AdjacencyMatrix, metric: Metric) -> DistanceMatrix {
    let n = a.n();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| a.row(i).iter().map(|&c| f64::from(c)).collect())
        .collect();
    DistanceMatrix::from_fn(n, |i, j| {
        vector_distance(&rows[i], &rows[j], metric).expect("rows are binary and equal length")
    })
    .expect("vector metrics are finite, symmetric and non-negative")
}

#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub matrix: DistanceMatrix,
    /// Set when some pair was unreachable and received the
    /// `diameter + 1` sentinel.
    pub disconnected: bool,
}

/// Breadth-first hop counts. Unreachable pairs get one more than the largest
/// finite distance.
pub fn shortest_path_distances(graph: &Graph) -> ShortestPaths {
    let n = graph.n();
    let mut adj = vec![Vec::new(); n];
    for (u, v) in graph.edges() {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut hops = vec![usize::MAX; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut hops[s * n..(s + 1) * n];
        row[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if row[w] == usize::MAX {
                    row[w] = row[u] + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    let diameter = hops.iter().copied().filter(|&h| h != usize::MAX).max().unwrap_or(0);
    let disconnected = hops.contains(&usize::MAX);
    if disconnected {
        log::warn!(
            "graph `{}` is disconnected; unreachable pairs set to {}",
            graph.name(),
            diameter + 1
        );
    }
    let cells = hops
        .into_iter()
        .map(|h| if h == usize::MAX { (diameter + 1) as f64 } else { h as f64 })
        .collect();
    ShortestPaths {
        matrix: DistanceMatrix::new(n, cells).expect("hop counts form a valid distance matrix"),
        disconnected,
    }
}
