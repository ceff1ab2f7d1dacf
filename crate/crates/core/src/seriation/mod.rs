//! Matrix reordering (seriation) methods over a [`DistanceMatrix`].
//!
//! Every method returns a [`Permutation`] whose entry `i` is the node placed
//! at position `i`. Ties are always broken towards the lowest node index so
//! that deterministic methods give identical output on identical input.

mod arsa;
mod hclust;
mod olo;
mod spectral;
mod tsp;
mod vat;

use std::fmt;
use std::str::FromStr;

pub use arsa::{arsa_order, linear_seriation, ArsaSchedule};
pub use hclust::{hc_order, Dendrogram, Linkage, Merge};
pub use olo::{leaf_order_cost, olo_order};
pub use spectral::{fiedler_vector, spectral_order};
pub use tsp::{nearest_neighbor_path, path_length, tsp_order, two_opt};
pub use vat::vat_order;

use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};
use crate::permutation::Permutation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Spectral,
    SpectralNorm,
    HcSingle,
    HcComplete,
    HcAverage,
    HcWard,
    OloAverage,
    Vat,
    Tsp,
    Arsa,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Spectral,
        Method::SpectralNorm,
        Method::HcSingle,
        Method::HcComplete,
        Method::HcAverage,
        Method::HcWard,
        Method::OloAverage,
        Method::Vat,
        Method::Tsp,
        Method::Arsa,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Method::Spectral => "spectral",
            Method::SpectralNorm => "spectral_norm",
            Method::HcSingle => "hc_single",
            Method::HcComplete => "hc_complete",
            Method::HcAverage => "hc_average",
            Method::HcWard => "hc_ward",
            Method::OloAverage => "olo_average",
            Method::Vat => "vat",
            Method::Tsp => "tsp",
            Method::Arsa => "arsa",
        }
    }

    /// Whether the method consumes its seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Tsp | Method::Arsa)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.token() == s)
            .ok_or_else(|| Error::UnknownToken {
                kind: "reordering method",
                token: s.into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodSpec {
    pub method: Method,
    /// Used by TSP restarts and ARSA; ignored by deterministic methods.
    pub seed: u64,
}

impl MethodSpec {
    pub fn new(method: Method, seed: u64) -> Self {
        Self { method, seed }
    }
}

/// Runs one reordering method.
pub fn run_method(d: &DistanceMatrix, spec: MethodSpec) -> Result<Permutation> {
    let n = d.n();
    if n == 0 {
        return Err(Error::Validation("empty distance matrix".into()));
    }
    if n == 1 {
        return Ok(Permutation::identity(1));
    }
    let order = match spec.method {
        Method::Spectral => spectral_order(d, false)?,
        Method::SpectralNorm => spectral_order(d, true)?,
        Method::HcSingle => hc_order(d, Linkage::Single).1,
        Method::HcComplete => hc_order(d, Linkage::Complete).1,
        Method::HcAverage => hc_order(d, Linkage::Average).1,
        Method::HcWard => hc_order(d, Linkage::Ward).1,
        Method::OloAverage => {
            let (tree, _) = hc_order(d, Linkage::Average);
            olo_order(d, &tree)?
        }
        Method::Vat => vat_order(d),
        Method::Tsp => tsp_order(d, spec.seed),
        Method::Arsa => arsa_order(d, spec.seed, &ArsaSchedule::default()),
    };
    debug_assert_eq!(order.len(), n);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, |i, j| (i as f64 - j as f64).abs()).unwrap()
    }

    #[test]
    fn tokens_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.token().parse::<Method>().unwrap(), m);
        }
        assert!("mds_metric".parse::<Method>().is_err());
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let d = DistanceMatrix::from_fn(7, |i, j| ((i * 7 + j * 3) % 5) as f64 + 1.0).unwrap();
        assert_eq!(
            run_method(&d, MethodSpec::new(Method::Spectral, 0)).unwrap(),
            spectral_order(&d, false).unwrap()
        );
        assert_eq!(
            run_method(&d, MethodSpec::new(Method::HcAverage, 0)).unwrap(),
            hc_order(&d, Linkage::Average).1
        );
        let a = run_method(&d, MethodSpec::new(Method::Arsa, 7)).unwrap();
        let b = run_method(&d, MethodSpec::new(Method::Arsa, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_node() {
        let d = DistanceMatrix::new(1, vec![0.0]).unwrap();
        for m in Method::ALL {
            assert_eq!(run_method(&d, MethodSpec::new(m, 3)).unwrap().as_slice(), &[0]);
        }
    }

    #[test]
    fn every_method_on_a_line() {
        let d = line(6);
        for m in Method::ALL {
            let p = run_method(&d, MethodSpec::new(m, 1)).unwrap();
            assert_eq!(p.len(), 6, "{m}");
        }
    }
}
