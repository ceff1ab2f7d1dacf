//! Reordering corpora: generation, reversal canonicalization, deduplication,
//! JSON-lines persistence and cross-validation folds.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::{format_digest, parse_digest};
use crate::distances::{pairwise, DistanceSpec, Metric};
use crate::error::{Error, Result};
use crate::graph::{Graph, MatrixVariant};
use crate::permutation::Permutation;
use crate::seriation::{run_method, spectral_order, Method, MethodSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReorderingRecord {
    pub order: Permutation,
    pub method: Method,
    pub distance: DistanceSpec,
    pub seed: u64,
    pub reversed: bool,
}

impl ReorderingRecord {
    fn sort_key(&self) -> (DistanceSpec, Method, u64) {
        (self.distance, self.method, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph_digest: u64,
    pub n: usize,
    pub records: Vec<ReorderingRecord>,
    /// Set once [`dedup`] has run.
    pub unique: bool,
    pub graph_name: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn orders(&self) -> impl Iterator<Item = &Permutation> {
        self.records.iter().map(|r| &r.order)
    }

    pub fn check_graph(&self, graph: &Graph) -> Result<()> {
        if graph.digest() != self.graph_digest || graph.n() != self.n {
            return Err(Error::Validation(format!(
                "dataset was built for graph {} (n = {}), not {} (n = {})",
                format_digest(self.graph_digest),
                self.n,
                format_digest(graph.digest()),
                graph.n()
            )));
        }
        Ok(())
    }

    /// Dataset restricted to the given record indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            ..self.clone_header()
        }
    }

    /// Seeded random subset of `count` records, kept in corpus order.
    pub fn subsample(&self, count: usize, seed: u64) -> Result<Dataset> {
        if count > self.len() {
            return Err(Error::Validation(format!(
                "cannot sample {count} records from {}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(count);
        idx.sort_unstable();
        Ok(self.select(&idx))
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            graph_digest: self.graph_digest,
            n: self.n,
            records: Vec::new(),
            unique: self.unique,
            graph_name: self.graph_name.clone(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            schema: SCHEMA_VERSION,
            graph_digest: format_digest(self.graph_digest),
            n: self.n,
            unique: self.unique,
            graph: self.graph_name.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            let line = RecordLine {
                method: r.method.token().to_string(),
                distance: r.distance.metric().token().to_string(),
                variant: r.distance.variant_token().map(str::to_string),
                seed: r.seed,
                reversed: r.reversed,
                order: r.order.as_slice().to_vec(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Dataset> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty dataset file".into(),
        })?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| Error::Parse {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
        if header.schema != SCHEMA_VERSION {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported schema version {}", header.schema),
            });
        }
        let graph_digest = parse_digest(&header.graph_digest).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("bad graph digest `{}`", header.graph_digest),
        })?;
        let mut records = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let parse_err = |message: String| Error::Parse { line: lineno, message };
            let raw: RecordLine = serde_json::from_str(&line?).map_err(|e| parse_err(e.to_string()))?;
            let method: Method = raw.method.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let metric = Metric::from_token(&raw.distance).map_err(|e| parse_err(e.to_string()))?;
            let distance = match (metric, raw.variant.as_deref()) {
                (Metric::ShortestPath, None) => DistanceSpec::shortest_path(),
                (Metric::ShortestPath, Some(_)) => {
                    return Err(parse_err("shortestpath records carry a null variant".into()))
                }
                (m, Some(v)) => DistanceSpec::new(m, MatrixVariant::from_token(v).map_err(|e| parse_err(e.to_string()))?),
                (_, None) => return Err(parse_err("missing matrix variant".into())),
            };
            if raw.order.len() != header.n {
                return Err(parse_err(format!(
                    "order has {} entries, graph has {} nodes",
                    raw.order.len(),
                    header.n
                )));
            }
            let order = Permutation::new(raw.order).map_err(|e| parse_err(e.to_string()))?;
            records.push(ReorderingRecord {
                order,
                method,
                distance,
                seed: raw.seed,
                reversed: raw.reversed,
            });
        }
        Ok(Dataset {
            graph_digest,
            n: header.n,
            records,
            unique: header.unique,
            graph_name: header.graph,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Dataset::read_jsonl(std::io::BufReader::new(file))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: u32,
    graph_digest: String,
    n: usize,
    unique: bool,
    #[serde(default)]
    graph: String,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    method: String,
    distance: String,
    variant: Option<String>,
    seed: u64,
    reversed: bool,
    order: Vec<usize>,
}

/// Spearman rank correlation between the position vectors of two orders.
/// Positions are already ranks, so this is the closed form
/// `1 - 6 Σ d² / (n (n² - 1))`.
pub fn spearman(a: &Permutation, b: &Permutation) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let (pa, pb) = (a.positions(), b.positions());
    let d2: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    let n = n as f64;
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Returns `p` or its reverse, whichever correlates better with `reference`;
/// ties keep `p`.
pub fn canonicalize_reversal(p: &Permutation, reference: &Permutation) -> (Permutation, bool) {
    let reversed = p.reverse();
    if spearman(&reversed, reference) > spearman(p, reference) {
        (reversed, true)
    } else {
        (p.clone(), false)
    }
}

/// The reference used for reversal canonicalization: Spectral on
/// shortest-path distances.
pub fn reference_order(graph: &Graph) -> Result<Permutation> {
    spectral_order(&pairwise(graph, DistanceSpec::shortest_path()), false)
}

/// Keeps the first record for each distinct reordered adjacency matrix.
pub fn dedup(graph: &Graph, records: Vec<ReorderingRecord>) -> Result<Dataset> {
    let a = graph.adjacency(MatrixVariant::Raw);
    let mut seen: HashMap<u64, Vec<(Vec<u64>, usize)>> = HashMap::new();
    let mut kept = Vec::new();
    for r in records {
        if r.order.len() != graph.n() {
            return Err(Error::DimensionMismatch {
                expected: graph.n(),
                actual: r.order.len(),
            });
        }
        let packed = a.reorder(&r.order)?.bit_packed();
        let bytes: Vec<u8> = packed.iter().flat_map(|w| w.to_le_bytes()).collect();
        let bucket = seen.entry(crate::digest::digest64(&bytes)).or_default();
        if bucket.iter().any(|(other, _)| *other == packed) {
            continue;
        }
        bucket.push((packed, kept.len()));
        kept.push(r);
    }
    Ok(Dataset {
        graph_digest: graph.digest(),
        n: graph.n(),
        records: kept,
        unique: true,
        graph_name: graph.name().to_string(),
    })
}

/// Seed-derived random initial node ordering.
pub fn initial_order(n: usize, seed: u64) -> Permutation {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Permutation::new(order).expect("shuffle of identity")
}

#[derive(Debug, Clone, Default)]
pub struct Collected {
    /// Successful jobs, sorted by (distance, method, seed).
    pub records: Vec<ReorderingRecord>,
    pub jobs: usize,
    pub failures: Vec<(DistanceSpec, Method, u64, String)>,
}

/// Runs every (distance, method, seed) job without deduplicating.
pub fn collect_records(
    graph: &Graph,
    methods: &[Method],
    distances: &[DistanceSpec],
    seeds: &[u64],
) -> Result<Collected> {
    if methods.is_empty() || distances.is_empty() || seeds.is_empty() {
        return Err(Error::Validation(
            "methods, distances and seeds must all be non-empty".into(),
        ));
    }
    let reference = reference_order(graph)?;
    let n = graph.n();

    let mut distances = distances.to_vec();
    distances.sort();
    distances.dedup();
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let mut seeds = seeds.to_vec();
    seeds.sort();
    seeds.dedup();

    let matrices: Vec<_> = distances.par_iter().map(|&s| pairwise(graph, s)).collect();
    let initial: Vec<Permutation> = seeds.iter().map(|&s| initial_order(n, s)).collect();

    let mut jobs = Vec::with_capacity(distances.len() * methods.len() * seeds.len());
    for di in 0..distances.len() {
        for &m in &methods {
            for si in 0..seeds.len() {
                jobs.push((di, m, si));
            }
        }
    }

    let outcomes: Vec<std::result::Result<ReorderingRecord, String>> = jobs
        .par_iter()
        .map(|&(di, method, si)| {
            let pre = &initial[si];
            let shuffled = matrices[di].reorder(pre).map_err(|e| e.to_string())?;
            let local = run_method(&shuffled, MethodSpec::new(method, seeds[si])).map_err(|e| e.to_string())?;
            let order = pre.compose(&local).map_err(|e| e.to_string())?;
            let (order, reversed) = canonicalize_reversal(&order, &reference);
            Ok(ReorderingRecord {
                order,
                method,
                distance: distances[di],
                seed: seeds[si],
                reversed,
            })
        })
        .collect();

    let mut out = Collected {
        jobs: jobs.len(),
        ..Collected::default()
    };
    for (&(di, method, si), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => out.records.push(r),
            Err(msg) => {
                log::warn!("job {} / {} / seed {} failed: {msg}", distances[di], method, seeds[si]);
                out.failures.push((distances[di], method, seeds[si], msg));
            }
        }
    }
    if out.records.is_empty() {
        return Err(Error::AllJobsFailed {
            jobs: out.jobs,
            first: out.failures.first().map(|f| f.3.clone()).unwrap_or_default(),
        });
    }
    out.records.sort_by_key(ReorderingRecord::sort_key);
    Ok(out)
}

pub fn build_dataset(
    graph: &Graph,
    methods: &[Method],
    distances: &[DistanceSpec],
    seeds: &[u64],
) -> Result<Dataset> {
    let collected = collect_records(graph, methods, distances, seeds)?;
    let dataset = dedup(graph, collected.records)?;
    log::info!(
        "{} jobs, {} failed, {} unique reorderings",
        collected.jobs,
        collected.failures.len(),
        dataset.len()
    );
    Ok(dataset)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    /// `assignment[record] = fold`.
    pub assignment: Vec<usize>,
    pub trial_seed: u64,
}

impl FoldSplit {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == f).collect()
    }

    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }
}

/// Uniform random partition of the records into `k` folds whose sizes
/// differ by at most one.
pub fn split_folds(dataset: &Dataset, k: usize, trial_seed: u64) -> Result<FoldSplit> {
    if !dataset.unique {
        return Err(Error::Validation("folds need a deduplicated dataset".into()));
    }
    if k == 0 || k > dataset.len() {
        return Err(Error::Validation(format!(
            "cannot split {} records into {k} folds",
            dataset.len()
        )));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(trial_seed));
    let mut assignment = vec![0; dataset.len()];
    for (pos, &i) in idx.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldSplit {
        k,
        assignment,
        trial_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(order: Vec<usize>) -> ReorderingRecord {
        ReorderingRecord {
            order: Permutation::new(order).unwrap(),
            method: Method::Vat,
            distance: DistanceSpec::shortest_path(),
            seed: 0,
            reversed: false,
        }
    }

    fn dummy(n_records: usize) -> Dataset {
        Dataset {
            graph_digest: 0,
            n: 1,
            records: (0..n_records).map(|_| rec(vec![0])).collect(),
            unique: true,
            graph_name: String::new(),
        }
    }

    #[test]
    fn reversal_examples() {
        let r = Permutation::new(vec![2, 0, 3, 1, 4]).unwrap();
        assert_eq!(canonicalize_reversal(&r, &r), (r.clone(), false));
        assert_eq!(canonicalize_reversal(&r.reverse(), &r), (r.clone(), true));
    }

    #[test]
    fn reversal_tie_keeps_input() {
        // zero correlation with the reference, so the reverse ties
        let p = Permutation::new(vec![1, 3, 0, 2]).unwrap();
        let reference = Permutation::identity(4);
        assert_eq!(spearman(&p, &reference), 0.0);
        assert_eq!(canonicalize_reversal(&p, &reference), (p.clone(), false));
    }

    #[test]
    fn spearman_bounds() {
        let r = Permutation::new(vec![3, 1, 0, 2]).unwrap();
        assert!((spearman(&r, &r) - 1.0).abs() < 1e-15);
        assert!((spearman(&r.reverse(), &r) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn path_automorphism_dedups() {
        let g = Graph::path(3);
        let ds = dedup(&g, vec![rec(vec![0, 1, 2]), rec(vec![2, 1, 0])]).unwrap();
        assert_eq!(ds.len(), 1);
        let ds = dedup(&g, vec![rec(vec![0, 1, 2]), rec(vec![0, 1, 2])]).unwrap();
        assert_eq!(ds.len(), 1);
        let ds = dedup(&g, vec![rec(vec![0, 1, 2]), rec(vec![1, 0, 2])]).unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn fold_sizes() {
        let s = split_folds(&dummy(100), 5, 1).unwrap();
        assert_eq!(s.sizes(), vec![20; 5]);
        let s = split_folds(&dummy(101), 5, 1).unwrap();
        let mut sizes = s.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![20, 20, 20, 20, 21]);
        assert_eq!(split_folds(&dummy(101), 5, 1).unwrap(), s);
        assert!(split_folds(&dummy(4), 5, 1).is_err());
        assert!(split_folds(&dummy(4), 0, 1).is_err());
    }

    #[test]
    fn folds_need_unique_dataset() {
        let mut d = dummy(10);
        d.unique = false;
        assert!(split_folds(&d, 5, 0).is_err());
    }

    #[test]
    fn single_job() {
        let g = Graph::karate();
        let c = collect_records(&g, &[Method::Vat], &["jaccard:raw".parse().unwrap()], &[1]).unwrap();
        assert_eq!(c.jobs, 1);
        assert_eq!(c.records.len(), 1);
    }

    #[test]
    fn jsonl_round_trip() {
        let g = Graph::karate();
        let ds = build_dataset(
            &g,
            &[Method::Spectral, Method::Vat],
            &[DistanceSpec::shortest_path(), "cosine:selfloops".parse().unwrap()],
            &[1, 2],
        )
        .unwrap();
        let text = ds.to_jsonl_string();
        assert!(text.lines().nth(1).unwrap().contains("\"variant\""));
        let back = Dataset::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_jsonl_string(), text);
    }

    #[test]
    fn rejects_bad_lines() {
        let header = r#"{"schema":1,"graph_digest":"0000000000000001","n":2,"unique":true,"graph":""}"#;
        let bad_order = format!("{header}\n{}\n", r#"{"method":"vat","distance":"shortestpath","variant":null,"seed":0,"reversed":false,"order":[0,0]}"#);
        assert!(matches!(Dataset::read_jsonl(bad_order.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let sp_variant = format!("{header}\n{}\n", r#"{"method":"vat","distance":"shortestpath","variant":"raw","seed":0,"reversed":false,"order":[0,1]}"#);
        assert!(Dataset::read_jsonl(sp_variant.as_bytes()).is_err());
        let ok = format!("{header}\n{}\n", r#"{"method":"vat","distance":"jaccard","variant":"raw","seed":0,"reversed":false,"order":[1,0]}"#);
        assert_eq!(Dataset::read_jsonl(ok.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn subsample_is_seeded_subset() {
        let mut d = dummy(0);
        d.n = 3;
        d.records = vec![rec(vec![0, 1, 2]), rec(vec![1, 0, 2]), rec(vec![2, 1, 0]), rec(vec![0, 2, 1])];
        let s = d.subsample(2, 9).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s, d.subsample(2, 9).unwrap());
        assert!(d.subsample(5, 9).is_err());
    }
}
