//! Simple undirected graphs and their adjacency matrices.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::digest::digest64;
use crate::error::{Error, Result};
use crate::permutation::Permutation;

const KARATE: &str = include_str!("../data/karate.txt");

/// A simple, undirected, unlabeled graph. Edges are stored as `(u, v)` with
/// `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    name: String,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("graph must have at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::Validation(format!("self-loop on node {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) out of range for n = {n}"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self {
            n,
            edges: set,
            name: "graph".into(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
            .expect("path edges are valid")
            .with_name(format!("path{n}"))
    }

    /// Zachary's karate club (34 nodes, 78 edges).
    pub fn karate() -> Self {
        parse_edge_list(KARATE)
            .expect("bundled karate edge list parses")
            .with_name("karate")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Canonical edge-list text: `# nodes: n` header, then sorted `u v` lines.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes: {}\n", self.n);
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    /// Content hash of [`Graph::to_edge_list`]. The name does not contribute.
    pub fn digest(&self) -> u64 {
        digest64(self.to_edge_list().as_bytes())
    }

    pub fn adjacency(&self, variant: MatrixVariant) -> AdjacencyMatrix {
        let n = self.n;
        let mut cells = vec![0u8; n * n];
        for &(u, v) in &self.edges {
            cells[u * n + v] = 1;
            cells[v * n + u] = 1;
        }
        if variant == MatrixVariant::SelfLoops {
            for i in 0..n {
                cells[i * n + i] = 1;
            }
        }
        AdjacencyMatrix { n, cells, variant }
    }
}

/// Parses the plain edge-list format: one `u v` pair per line, blank lines
/// and `#` comments ignored. A `# nodes: k` comment raises the node count to
/// `k` so isolated trailing nodes survive a round trip.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut declared = 0usize;
    let mut max_id = None::<usize>;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(count) = comment.trim().strip_prefix("nodes:") {
                declared = count.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad node count `{}`", count.trim()),
                })?;
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        let mut next_id = |what: &str| -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("missing {what} node id"),
            })?;
            tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("malformed node id `{tok}`"),
            })
        };
        let u = next_id("first")?;
        let v = next_id("second")?;
        if let Some(extra) = tokens.next() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unexpected token `{extra}`"),
            });
        }
        if u == v {
            return Err(Error::Validation(format!(
                "line {line_no}: self-loop on node {u}"
            )));
        }
        max_id = Some(max_id.unwrap_or(0).max(u).max(v));
        edges.push((u, v));
    }
    let n = declared.max(max_id.map_or(0, |m| m + 1));
    Graph::new(n, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatrixVariant {
    /// Zero diagonal.
    Raw,
    /// All-ones diagonal; used only for computing node distances.
    SelfLoops,
}

impl MatrixVariant {
    pub fn token(self) -> &'static str {
        match self {
            MatrixVariant::Raw => "raw",
            MatrixVariant::SelfLoops => "selfloops",
        }
    }

    pub fn from_token(token: &str) -> Result<Self> {
        match token {
            "raw" => Ok(MatrixVariant::Raw),
            "selfloops" => Ok(MatrixVariant::SelfLoops),
            _ => Err(Error::UnknownToken {
                kind: "matrix variant",
                token: token.into(),
            }),
        }
    }
}

/// Dense symmetric 0/1 matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AdjacencyMatrix {
    n: usize,
    cells: Vec<u8>,
    variant: MatrixVariant,
}

impl AdjacencyMatrix {
    /// Builds a matrix from raw cells, checking symmetry, binarity and the
    /// diagonal required by `variant`.
    pub fn from_cells(n: usize, cells: Vec<u8>, variant: MatrixVariant) -> Result<Self> {
        if cells.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: cells.len(),
            });
        }
        let want_diag = u8::from(variant == MatrixVariant::SelfLoops);
        for i in 0..n {
            if cells[i * n + i] != want_diag {
                return Err(Error::Validation(format!("diagonal cell {i} is not {want_diag}")));
            }
            for j in 0..n {
                let c = cells[i * n + j];
                if c > 1 {
                    return Err(Error::Validation(format!("cell ({i}, {j}) is not binary")));
                }
                if c != cells[j * n + i] {
                    return Err(Error::Validation(format!("cell ({i}, {j}) breaks symmetry")));
                }
            }
        }
        Ok(Self { n, cells, variant })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn variant(&self) -> MatrixVariant {
        self.variant
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.cells[i * self.n..(i + 1) * self.n]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Number of 1-cells (twice the edge count for `Raw`).
    pub fn ones(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    /// Number of undirected off-diagonal edges.
    pub fn edge_count(&self) -> usize {
        let diag: usize = (0..self.n).map(|i| self.get(i, i) as usize).sum();
        (self.ones() - diag) / 2
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|&c| c as usize).sum())
            .collect()
    }

    /// Row sums in ascending order.
    pub fn degree_multiset(&self) -> Vec<usize> {
        let mut d = self.row_sums();
        d.sort_unstable();
        d
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| f64::from(c)).collect()
    }

    /// `A_P = P A Pᵀ`, i.e. `result[i][j] = A[order[i]][order[j]]`.
    pub fn reorder(&self, p: &Permutation) -> Result<AdjacencyMatrix> {
        if p.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: p.len(),
            });
        }
        let n = self.n;
        let order = p.as_slice();
        let mut cells = vec![0u8; n * n];
        for (i, &oi) in order.iter().enumerate() {
            let src = self.row(oi);
            let dst = &mut cells[i * n..(i + 1) * n];
            for (d, &oj) in dst.iter_mut().zip(order) {
                *d = src[oj];
            }
        }
        Ok(AdjacencyMatrix {
            n,
            cells,
            variant: self.variant,
        })
    }

    /// Cell-wise equality; errors on a dimension mismatch.
    pub fn matrices_equal(&self, other: &AdjacencyMatrix) -> Result<bool> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: other.n,
            });
        }
        Ok(self.cells == other.cells)
    }

    /// Row-major bit packing, 64 cells per word.
    pub fn bit_packed(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.cells.len().div_ceil(64)];
        for (k, &c) in self.cells.iter().enumerate() {
            if c != 0 {
                words[k / 64] |= 1 << (k % 64);
            }
        }
        words
    }

    /// Binary PGM ("P5") dump: 0-cells white, 1-cells black, `scale` pixels
    /// per cell.
    pub fn to_pgm(&self, scale: usize) -> Vec<u8> {
        let scale = scale.max(1);
        let side = self.n * scale;
        let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
        out.reserve(side * side);
        for i in 0..self.n {
            let row: Vec<u8> = self
                .row(i)
                .iter()
                .flat_map(|&c| std::iter::repeat_n(if c == 0 { 255 } else { 0 }, scale))
                .collect();
            for _ in 0..scale {
                out.extend_from_slice(&row);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        parse_edge_list("0 1\n1 2").unwrap()
    }

    fn perm(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn parses_simple_list() {
        let g = path3();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn reversed_duplicates_collapse() {
        let g = parse_edge_list("1 0\n0 1").unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn node_header_adds_isolated_nodes() {
        let g = parse_edge_list("# nodes: 5\n0 1\n").unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(parse_edge_list(&g.to_edge_list()).unwrap(), g);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_edge_list("0 1\n\n1 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_edge_list("0 1 2"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_edge_list("0"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_edge_list("2 2"), Err(Error::Validation(_))));
    }

    #[test]
    fn karate_shape() {
        let g = Graph::karate();
        assert_eq!((g.n(), g.edge_count()), (34, 78));
        let a = g.adjacency(MatrixVariant::Raw);
        assert_eq!(a.ones(), 156);
        let degrees: Vec<usize> = g.degrees();
        assert_eq!(a.row_sums(), degrees);
        assert_eq!(degrees[0], 16);
        assert_eq!(degrees[33], 17);
    }

    #[test]
    fn adjacency_variants() {
        let g = path3();
        assert_eq!(g.adjacency(MatrixVariant::Raw).cells(), &[0, 1, 0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(
            g.adjacency(MatrixVariant::SelfLoops).cells(),
            &[1, 1, 0, 1, 1, 1, 0, 1, 1]
        );
    }

    #[test]
    fn reorder_examples() {
        let a = path3().adjacency(MatrixVariant::Raw);
        assert_eq!(a.reorder(&Permutation::identity(3)).unwrap(), a);
        let swapped = a.reorder(&perm(&[1, 0, 2])).unwrap();
        assert_eq!(swapped.cells(), &[0, 1, 1, 1, 0, 0, 1, 0, 0]);
        let reversed = a.reorder(&perm(&[2, 1, 0])).unwrap();
        assert!(reversed.matrices_equal(&a).unwrap());
        assert!(!swapped.matrices_equal(&a).unwrap());
        assert!(a.reorder(&Permutation::identity(4)).is_err());
    }

    #[test]
    fn from_cells_validates() {
        assert!(AdjacencyMatrix::from_cells(2, vec![0, 1, 0, 0], MatrixVariant::Raw).is_err());
        assert!(AdjacencyMatrix::from_cells(2, vec![1, 1, 1, 0], MatrixVariant::Raw).is_err());
        assert!(AdjacencyMatrix::from_cells(2, vec![1, 1, 1, 1], MatrixVariant::SelfLoops).is_ok());
    }

    #[test]
    fn pgm_dump() {
        let a = path3().adjacency(MatrixVariant::Raw);
        let pgm = a.to_pgm(2);
        let header = b"P5\n6 6\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        let body = &pgm[header.len()..];
        assert_eq!(body.len(), 36);
        // first pixel row: cell (0,0)=0 white, (0,1)=1 black, (0,2)=0 white
        assert_eq!(&body[..6], &[255, 255, 0, 0, 255, 255]);
        assert_eq!(&body[6..12], &body[..6]);
    }

    #[test]
    fn digest_ignores_name_and_edge_order() {
        let a = parse_edge_list("0 1\n1 2").unwrap();
        let b = parse_edge_list("2 1\n1 0").unwrap().with_name("other");
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), parse_edge_list("0 1\n0 2").unwrap().digest());
    }
}
