use proptest::prelude::*;
use reorder_core::dataset::{canonicalize_reversal, dedup, ReorderingRecord};
use reorder_core::distances::{pairwise, pairwise_rows, vector_distance};
use reorder_core::seriation::{
    hc_order, leaf_order_cost, nearest_neighbor_path, olo_order, path_length, run_method, tsp_order, vat_order,
    Linkage,
};
use reorder_core::{
    AdjacencyMatrix, DistanceMatrix, DistanceSpec, Graph, MatrixVariant, Method, MethodSpec, Metric, Permutation,
};

fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..12).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
            let mut edges = Vec::new();
            let mut k = 0;
            for u in 0..n {
                for v in u + 1..n {
                    if bits[k] {
                        edges.push((u, v));
                    }
                    k += 1;
                }
            }
            Graph::new(n, edges).unwrap()
        })
    })
}

fn arb_perm(n: usize) -> impl Strategy<Value = Permutation> {
    Just((0..n).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| Permutation::new(v).unwrap())
}

fn arb_graph_and_perm() -> impl Strategy<Value = (Graph, Permutation)> {
    arb_graph().prop_flat_map(|g| {
        let n = g.n();
        (Just(g), arb_perm(n))
    })
}

/// Symmetric, zero-diagonal, non-negative.
fn arb_distances(min: usize, max: usize) -> impl Strategy<Value = DistanceMatrix> {
    (min..=max).prop_flat_map(|n| {
        prop::collection::vec(0.0f64..10.0, n * (n - 1) / 2).prop_map(move |upper| {
            let mut cells = vec![0.0; n * n];
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    cells[i * n + j] = upper[k];
                    cells[j * n + i] = upper[k];
                    k += 1;
                }
            }
            DistanceMatrix::new(n, cells).unwrap()
        })
    })
}

/// Every ordering of `0..n` (Heap's algorithm).
fn all_orders(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    let mut out = vec![a.clone()];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            a.swap(if i % 2 == 0 { 0 } else { c[i] }, i);
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn reorder_preserves_ones_and_degrees((g, p) in arb_graph_and_perm()) {
        for variant in [MatrixVariant::Raw, MatrixVariant::SelfLoops] {
            let a = g.adjacency(variant);
            let b = a.reorder(&p).unwrap();
            prop_assert_eq!(a.ones(), b.ones());
            prop_assert_eq!(a.degree_multiset(), b.degree_multiset());
            prop_assert!(b.reorder(&p.inverse()).unwrap().matrices_equal(&a).unwrap());
        }
    }

    #[test]
    fn distances_are_symmetric_with_zero_diagonal(g in arb_graph()) {
        for spec in DistanceSpec::all() {
            let d = pairwise(&g, spec);
            for i in 0..g.n() {
                prop_assert_eq!(d.get(i, i), 0.0, "{}", spec);
                for j in 0..g.n() {
                    prop_assert!(d.get(i, j).is_finite(), "{}", spec);
                    prop_assert_eq!(d.get(i, j), d.get(j, i), "{}", spec);
                }
            }
        }
    }

    #[test]
    fn binary_distance_identities(g in arb_graph()) {
        for variant in [MatrixVariant::Raw, MatrixVariant::SelfLoops] {
            let a = g.adjacency(variant);
            let n = a.n() as f64;
            let rows: Vec<Vec<f64>> = (0..a.n()).map(|i| a.row(i).iter().map(|&c| f64::from(c)).collect()).collect();
            for u in &rows {
                for v in &rows {
                    let ham = vector_distance(u, v, Metric::Hamming).unwrap();
                    let man = vector_distance(u, v, Metric::Manhattan).unwrap();
                    let euc = vector_distance(u, v, Metric::Euclidean).unwrap();
                    prop_assert!((ham - man / n).abs() < 1e-12);
                    prop_assert!((man - euc * euc).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn every_method_returns_a_bijection(d in arb_distances(1, 12), seed in 0u64..1000) {
        for m in Method::ALL {
            let p = run_method(&d, MethodSpec::new(m, seed)).unwrap();
            prop_assert_eq!(p.len(), d.n());
            prop_assert!(Permutation::new(p.into_vec()).is_ok());
        }
    }

    #[test]
    fn olo_never_worse_than_tree_order(d in arb_distances(2, 14)) {
        let (tree, plain) = hc_order(&d, Linkage::Average);
        let opt = olo_order(&d, &tree).unwrap();
        prop_assert!(leaf_order_cost(&d, &opt) <= leaf_order_cost(&d, &plain) + 1e-9);
    }

    #[test]
    fn tsp_improves_on_nearest_neighbor(d in arb_distances(2, 14), seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let p = tsp_order(&d, seed);
        let start = rand_chacha::ChaCha8Rng::seed_from_u64(seed).random_range(0..d.n());
        let nn = nearest_neighbor_path(&d, start);
        prop_assert!(path_length(&d, p.as_slice()) <= path_length(&d, &nn) + 1e-9);
    }

    #[test]
    fn tsp_reaches_optimum_within_five_restarts(d in arb_distances(2, 8), first in 0u64..1000) {
        let best = all_orders(d.n())
            .iter()
            .map(|o| path_length(&d, o))
            .fold(f64::INFINITY, f64::min);
        let got = (first..first + 5)
            .map(|s| path_length(&d, tsp_order(&d, s).as_slice()))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(got <= best + 1e-9, "2-opt {got} vs optimum {best}");
    }

    #[test]
    fn shift_invariant_orders(d in arb_distances(2, 12), c in 0.1f64..50.0) {
        let shifted = d.shifted(c).unwrap();
        prop_assert_eq!(vat_order(&d), vat_order(&shifted));
        for linkage in [Linkage::Single, Linkage::Complete] {
            prop_assert_eq!(hc_order(&d, linkage).1, hc_order(&shifted, linkage).1);
        }
    }

    #[test]
    fn reversal_canonicalization_is_idempotent(
        (p, r) in (1usize..15).prop_flat_map(|n| (arb_perm(n), arb_perm(n)))
    ) {
        let (once, _) = canonicalize_reversal(&p, &r);
        let (twice, flag) = canonicalize_reversal(&once, &r);
        prop_assert_eq!(&twice, &once);
        prop_assert!(!flag);
    }

    #[test]
    fn dedup_leaves_pairwise_distinct_matrices(
        (g, perms) in arb_graph().prop_flat_map(|g| {
            let n = g.n();
            (Just(g), prop::collection::vec(arb_perm(n), 1..20))
        })
    ) {
        let records: Vec<ReorderingRecord> = perms
            .into_iter()
            .map(|order| ReorderingRecord {
                order,
                method: Method::Vat,
                distance: DistanceSpec::shortest_path(),
                seed: 0,
                reversed: false,
            })
            .collect();
        let total = records.len();
        let ds = dedup(&g, records.clone()).unwrap();
        prop_assert!(ds.unique);
        let a = g.adjacency(MatrixVariant::Raw);
        let mats: Vec<AdjacencyMatrix> = ds.orders().map(|o| a.reorder(o).unwrap()).collect();
        for i in 0..mats.len() {
            for j in i + 1..mats.len() {
                prop_assert!(!mats[i].matrices_equal(&mats[j]).unwrap());
            }
        }
        // every dropped record duplicates a survivor
        for r in &records {
            let m = a.reorder(&r.order).unwrap();
            prop_assert!(mats.iter().any(|s| s.matrices_equal(&m).unwrap()));
        }
        prop_assert!(ds.len() <= total);
    }
}

#[test]
fn shortest_path_rows_do_not_depend_on_variant() {
    let g = Graph::karate();
    let d = pairwise(&g, DistanceSpec::shortest_path());
    assert_eq!(d.max(), 5.0);
    let rows = pairwise_rows(&g.adjacency(MatrixVariant::Raw), Metric::Jaccard);
    assert_eq!(rows, pairwise(&g, DistanceSpec::new(Metric::Jaccard, MatrixVariant::Raw)));
}
