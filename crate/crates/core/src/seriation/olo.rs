//! Optimal leaf ordering (Bar-Joseph, Gifford & Jaakkola).
//!
//! A dendrogram with `n` leaves admits `2^(n-1)` leaf orders (one flip per
//! internal node). The dynamic program below finds one minimizing the sum of
//! distances between adjacent leaves.
//!
//! Every leaf pair `(a, b)` has a unique lowest common ancestor, so one
//! `n × n` table suffices: `best[a][b]` is the cheapest ordering of the LCA's
//! subtree that starts at `a` and ends at `b`.

use super::hclust::Dendrogram;
use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};
use crate::permutation::Permutation;

/// Sum of distances between adjacent positions.
pub fn leaf_order_cost(d: &DistanceMatrix, order: &Permutation) -> f64 {
    order.as_slice().windows(2).map(|w| d.get(w[0], w[1])).sum()
}

pub fn olo_order(d: &DistanceMatrix, tree: &Dendrogram) -> Result<Permutation> {
    let n = d.n();
    if tree.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: tree.n(),
        });
    }
    if n <= 2 {
        return Ok(tree.leaf_order());
    }

    let total = 2 * n - 1;
    let mut leaves: Vec<Vec<usize>> = vec![Vec::new(); total];
    for (leaf, slot) in leaves.iter_mut().enumerate().take(n) {
        slot.push(leaf);
    }
    // best[a*n+b]: cost of the LCA(a,b) subtree ordered from a to b.
    // inner[a*n+b]: the adjacent pair (k, m) joining the two child blocks.
    let mut best = vec![f64::INFINITY; n * n];
    let mut inner = vec![(usize::MAX, usize::MAX); n * n];
    for a in 0..n {
        best[a * n + a] = 0.0;
    }

    // Leaves of the child of `id` that does *not* contain `x`; for a leaf
    // child that is `x` itself.
    let far_side = |leaves: &[Vec<usize>], id: usize, x: usize| -> Vec<usize> {
        match tree.children(id) {
            None => vec![x],
            Some((l, r)) => {
                if leaves[l].contains(&x) {
                    leaves[r].clone()
                } else {
                    leaves[l].clone()
                }
            }
        }
    };

    for (t, merge) in tree.merges().iter().enumerate() {
        let (l, r) = (merge.left, merge.right);
        let left = leaves[l].clone();
        let right = leaves[r].clone();

        // Split the search: first fix a (left end) and m (inner right end).
        // via[a][m] = min_k best[a][k] + D[k][m], k ranging over the far
        // side of l from a.
        let mut via = vec![(f64::INFINITY, usize::MAX); left.len() * right.len()];
        for (ai, &a) in left.iter().enumerate() {
            let ks = far_side(&leaves, l, a);
            for (mi, &m) in right.iter().enumerate() {
                let mut cand = (f64::INFINITY, usize::MAX);
                for &k in &ks {
                    let c = best[a * n + k] + d.get(k, m);
                    if c < cand.0 {
                        cand = (c, k);
                    }
                }
                via[ai * right.len() + mi] = cand;
            }
        }
        let mut right_index = vec![usize::MAX; n];
        for (i, &x) in right.iter().enumerate() {
            right_index[x] = i;
        }
        for (ai, &a) in left.iter().enumerate() {
            for &b in &right {
                let ms = far_side(&leaves, r, b);
                let mut cand = (f64::INFINITY, usize::MAX, usize::MAX);
                for &m in &ms {
                    let (c, k) = via[ai * right.len() + right_index[m]];
                    let c = c + best[m * n + b];
                    if c < cand.0 {
                        cand = (c, k, m);
                    }
                }
                best[a * n + b] = cand.0;
                best[b * n + a] = cand.0;
                inner[a * n + b] = (cand.1, cand.2);
                inner[b * n + a] = (cand.2, cand.1);
            }
        }
        let id = n + t;
        let mut all = left;
        all.extend(right);
        leaves[id] = all;
    }

    let root = tree.root();
    let (rl, rr) = tree.children(root).expect("root is internal for n > 1");
    let mut start = (f64::INFINITY, 0, 0);
    for &a in &leaves[rl] {
        for &b in &leaves[rr] {
            if best[a * n + b] < start.0 {
                start = (best[a * n + b], a, b);
            }
        }
    }

    let mut order = Vec::with_capacity(n);
    emit(start.1, start.2, n, &inner, &mut order);
    Permutation::new(order)
}

/// Appends the optimal ordering from `a` to `b` of their LCA subtree.
fn emit(a: usize, b: usize, n: usize, inner: &[(usize, usize)], out: &mut Vec<usize>) {
    if a == b {
        out.push(a);
        return;
    }
    let (k, m) = inner[a * n + b];
    emit(a, k, n, inner, out);
    emit(m, b, n, inner, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seriation::hclust::{hc_order, Linkage};

    /// All 2^(n-1) flip combinations of the tree's internal nodes.
    fn consistent_orders(tree: &Dendrogram) -> Vec<Vec<usize>> {
        fn rec(tree: &Dendrogram, id: usize) -> Vec<Vec<usize>> {
            match tree.children(id) {
                None => vec![vec![id]],
                Some((l, r)) => {
                    let (ls, rs) = (rec(tree, l), rec(tree, r));
                    let mut out = Vec::new();
                    for x in &ls {
                        for y in &rs {
                            out.push(x.iter().chain(y).copied().collect());
                            out.push(y.iter().chain(x).copied().collect());
                        }
                    }
                    out
                }
            }
        }
        rec(tree, tree.root())
    }

    fn brute_force_cost(d: &DistanceMatrix, tree: &Dendrogram) -> f64 {
        consistent_orders(tree)
            .into_iter()
            .map(|o| o.windows(2).map(|w| d.get(w[0], w[1])).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn balanced_four_leaf_tree_matches_brute_force() {
        let d = DistanceMatrix::from_fn(4, |i, j| [[0., 3., 1., 7.], [3., 0., 6., 2.], [1., 6., 0., 5.], [7., 2., 5., 0.]][i][j]).unwrap();
        let tree = Dendrogram::from_merges(4, vec![(0, 1, 1.0), (2, 3, 1.0), (4, 5, 2.0)]).unwrap();
        assert_eq!(consistent_orders(&tree).len(), 8);
        let p = olo_order(&d, &tree).unwrap();
        assert_eq!(leaf_order_cost(&d, &p), brute_force_cost(&d, &tree));
        assert!(consistent_orders(&tree).contains(&p.as_slice().to_vec()));
    }

    #[test]
    fn two_leaves() {
        let d = DistanceMatrix::from_fn(2, |_, _| 4.0).unwrap();
        let tree = Dendrogram::from_merges(2, vec![(1, 0, 4.0)]).unwrap();
        assert_eq!(leaf_order_cost(&d, &olo_order(&d, &tree).unwrap()), 4.0);
    }

    #[test]
    fn left_comb_on_a_line_is_identity() {
        let d = DistanceMatrix::from_fn(5, |i, j| (i as f64 - j as f64).abs()).unwrap();
        let tree = Dendrogram::from_merges(5, vec![(0, 1, 1.0), (5, 2, 2.0), (6, 3, 3.0), (7, 4, 4.0)]).unwrap();
        assert_eq!(olo_order(&d, &tree).unwrap(), Permutation::identity(5));
    }

    #[test]
    fn never_worse_than_plain_leaf_order() {
        let d = DistanceMatrix::from_fn(15, |i, j| ((i * 13 + j * 7) % 10) as f64 + ((i * j) % 3) as f64).unwrap();
        let (tree, plain) = hc_order(&d, Linkage::Average);
        let opt = olo_order(&d, &tree).unwrap();
        assert!(leaf_order_cost(&d, &opt) <= leaf_order_cost(&d, &plain) + 1e-12);
    }
}
