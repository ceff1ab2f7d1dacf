use crate::distances::DistanceMatrix;
use crate::permutation::Permutation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Single,
    Complete,
    Average,
    /// Ward's criterion with Lance–Williams updates on squared distances
    /// (the "Ward.D2" convention); merge heights are reported unsquared.
    Ward,
}

/// One agglomeration step. Ids below `n` are leaves; merge `t` creates id
/// `n + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Builds a dendrogram from explicit merges, e.g. for tests or imported
    /// trees. Each id must be used exactly once as a child.
    pub fn from_merges(n: usize, merges: Vec<(usize, usize, f64)>) -> crate::Result<Self> {
        if n == 0 || merges.len() + 1 != n {
            return Err(crate::Error::Validation(format!(
                "{n} leaves need {} merges, got {}",
                n.saturating_sub(1),
                merges.len()
            )));
        }
        let mut used = vec![false; 2 * n - 1];
        let mut size = vec![1usize; 2 * n - 1];
        let mut out = Vec::with_capacity(merges.len());
        for (t, (l, r, h)) in merges.into_iter().enumerate() {
            let id = n + t;
            for c in [l, r] {
                if c >= id || std::mem::replace(&mut used[c], true) {
                    return Err(crate::Error::Validation(format!(
                        "merge {t} uses invalid or repeated child {c}"
                    )));
                }
            }
            size[id] = size[l] + size[r];
            out.push(Merge {
                left: l,
                right: r,
                height: h,
                size: size[id],
            });
        }
        Ok(Self { n, merges: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn root(&self) -> usize {
        2 * self.n - 2
    }

    /// Children of an internal id, `None` for leaves.
    pub fn children(&self, id: usize) -> Option<(usize, usize)> {
        (id >= self.n).then(|| {
            let m = &self.merges[id - self.n];
            (m.left, m.right)
        })
    }

    /// Leaves under `id`, left to right.
    pub fn leaves(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            match self.children(x) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(x),
            }
        }
        out
    }

    pub fn leaf_order(&self) -> Permutation {
        Permutation::new(self.leaves(self.root())).expect("dendrogram leaves form a permutation")
    }
}

/// Agglomerative clustering with Lance–Williams updates; returns the tree and
/// its left-to-right leaf order.
///
/// The closest pair of active clusters is merged at each step, ties going to
/// the lowest slot indices. The merged cluster takes the lower slot and
/// becomes the left child.
pub fn hc_order(d: &DistanceMatrix, linkage: Linkage) -> (Dendrogram, Permutation) {
    let n = d.n();
    if n <= 1 {
        let tree = Dendrogram { n, merges: Vec::new() };
        return (tree, Permutation::identity(n));
    }
    let squared = linkage == Linkage::Ward;
    let mut dist: Vec<f64> = d.cells().iter().map(|&x| if squared { x * x } else { x }).collect();
    let mut active = vec![true; n];
    let mut id = (0..n).collect::<Vec<_>>();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && dist[i * n + j] < best.0 {
                    best = (dist[i * n + j], i, j);
                }
            }
        }
        let (h, i, j) = best;
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let (dik, djk) = (dist[i * n + k], dist[j * n + k]);
            let sk = size[k] as f64;
            let updated = match linkage {
                Linkage::Single => dik.min(djk),
                Linkage::Complete => dik.max(djk),
                Linkage::Average => (si * dik + sj * djk) / (si + sj),
                Linkage::Ward => ((si + sk) * dik + (sj + sk) * djk - sk * h) / (si + sj + sk),
            };
            dist[i * n + k] = updated;
            dist[k * n + i] = updated;
        }
        merges.push(Merge {
            left: id[i],
            right: id[j],
            height: if squared { h.max(0.0).sqrt() } else { h },
            size: size[i] + size[j],
        });
        active[j] = false;
        size[i] += size[j];
        id[i] = n + step;
    }
    let tree = Dendrogram { n, merges };
    let order = tree.leaf_order();
    (tree, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d3() -> DistanceMatrix {
        let v = [[0.0, 1.0, 5.0], [1.0, 0.0, 4.0], [5.0, 4.0, 0.0]];
        DistanceMatrix::from_fn(3, |i, j| v[i][j]).unwrap()
    }

    #[test]
    fn hand_run_single_linkage() {
        let (tree, order) = hc_order(&d3(), Linkage::Single);
        assert_eq!(order.as_slice(), &[0, 1, 2]);
        assert_eq!(tree.merges()[0].left, 0);
        assert_eq!(tree.merges()[0].right, 1);
        assert_eq!(tree.merges()[0].height, 1.0);
        assert_eq!(tree.merges()[1].height, 4.0);
    }

    #[test]
    fn linkage_heights() {
        assert_eq!(hc_order(&d3(), Linkage::Complete).0.merges()[1].height, 5.0);
        assert_eq!(hc_order(&d3(), Linkage::Average).0.merges()[1].height, 4.5);
        // Ward.D2: sqrt(((1+1)*25 + (1+1)*16 - 1*1) / 3) = sqrt(27)
        let ward = hc_order(&d3(), Linkage::Ward).0;
        assert!((ward.merges()[1].height - 27f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_leaf() {
        let d = DistanceMatrix::new(1, vec![0.0]).unwrap();
        assert_eq!(hc_order(&d, Linkage::Average).1.as_slice(), &[0]);
    }

    #[test]
    fn all_equal_is_deterministic() {
        let d = DistanceMatrix::from_fn(5, |_, _| 2.0).unwrap();
        let (tree, order) = hc_order(&d, Linkage::Complete);
        // lowest-index ties: (0,1), then (01,2), then (012,3), ...
        assert_eq!(order.as_slice(), &[0, 1, 2, 3, 4]);
        assert_eq!(tree.merges()[1].left, 5);
        assert_eq!(hc_order(&d, Linkage::Complete).1, order);
    }

    #[test]
    fn heights_monotone_for_reducible_linkages() {
        let d = DistanceMatrix::from_fn(12, |i, j| ((i * 31 + j * 17) % 11) as f64 + ((i + j) % 3) as f64).unwrap();
        for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
            let (tree, _) = hc_order(&d, linkage);
            let h: Vec<f64> = tree.merges().iter().map(|m| m.height).collect();
            assert!(h.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{linkage:?}: {h:?}");
        }
    }

    #[test]
    fn from_merges_validates() {
        assert!(Dendrogram::from_merges(3, vec![(0, 1, 1.0), (3, 2, 2.0)]).is_ok());
        assert!(Dendrogram::from_merges(3, vec![(0, 1, 1.0), (0, 2, 2.0)]).is_err());
        assert!(Dendrogram::from_merges(3, vec![(0, 1, 1.0)]).is_err());
    }
}
