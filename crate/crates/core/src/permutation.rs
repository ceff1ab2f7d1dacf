//! Node orderings.
//!
//! A [`Permutation`] stores the order array: `order[i]` is the original node
//! placed at position `i`. Its matrix form `P` has `P[i][order[i]] = 1`, so
//! that `(P A Pᵀ)[i][j] = A[order[i]][order[j]]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    /// Validates that `order` is a bijection on `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &v in &order {
            if v >= n {
                return Err(Error::Validation(format!(
                    "permutation entry {v} out of range for n = {n}"
                )));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::Validation(format!("permutation repeats node {v}")));
            }
        }
        Ok(Self { order })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.order
    }

    /// Node at position `i`.
    pub fn at(&self, i: usize) -> usize {
        self.order[i]
    }

    /// `inverse()[node]` is the position of `node`.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.order.len()];
        for (pos, &node) in self.order.iter().enumerate() {
            inv[node] = pos;
        }
        Self { order: inv }
    }

    pub fn reverse(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Self { order }
    }

    /// Applies `self` then `then`: reordering by `self` and then by `then`
    /// equals reordering once by `self.compose(then)`.
    pub fn compose(&self, then: &Permutation) -> Result<Self> {
        if then.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: then.len(),
            });
        }
        Ok(Self {
            order: then.order.iter().map(|&i| self.order[i]).collect(),
        })
    }

    /// Row-major `n × n` 0/1 matrix with `P[i][order[i]] = 1`.
    pub fn to_matrix(&self) -> Vec<u8> {
        let n = self.len();
        let mut m = vec![0u8; n * n];
        for (i, &j) in self.order.iter().enumerate() {
            m[i * n + j] = 1;
        }
        m
    }

    /// Inverse of [`Permutation::to_matrix`]; rejects anything that is not an
    /// exact 0/1 permutation matrix.
    pub fn from_matrix(cells: &[u8], n: usize) -> Result<Self> {
        if cells.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: cells.len(),
            });
        }
        let mut order = Vec::with_capacity(n);
        for i in 0..n {
            let row = &cells[i * n..(i + 1) * n];
            let mut hit = None;
            for (j, &c) in row.iter().enumerate() {
                match c {
                    0 => {}
                    1 if hit.is_none() => hit = Some(j),
                    _ => {
                        return Err(Error::Validation(format!(
                            "row {i} is not a permutation-matrix row"
                        )))
                    }
                }
            }
            order.push(hit.ok_or_else(|| Error::Validation(format!("row {i} has no 1")))?);
        }
        Self::new(order)
    }

    /// Position vector: `positions()[node]` is where `node` sits.
    pub fn positions(&self) -> Vec<usize> {
        self.inverse().order
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(order: Vec<usize>) -> Result<Self> {
        Self::new(order)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.order
    }
}
