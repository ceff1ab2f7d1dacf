//! The `reorder` command line.
//!
//! Every command except `serve` and `replay` writes a run manifest next to
//! its primary output (`<out>.manifest.json` unless `--manifest` says
//! otherwise). `reorder replay <manifest>` re-runs the recorded command line
//! and fails unless every output comes back byte-identical.
//!
//! Exit status: 0 on success, 1 when inputs fail validation or a run fails,
//! 2 for usage errors.

pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use reorder_atlas::{build_grid, build_heatmap, render_matrix, QualityMetric};
use reorder_core::dataset::collect_records;
use reorder_core::graph::parse_edge_list;
use reorder_core::{dataset, Dataset, DistanceSpec, Graph, MatrixVariant, Method};
use reorder_model::train::reconstruction_error;
use reorder_model::{evaluate, train_dataset, Checkpoint, DecoderKind, EpochLog, ModelConfig};
use reorder_service::ServiceState;
use serde_json::json;

pub use manifest::{FileDigest, RunManifest};

/// Name accepted by `--graph` for the built-in karate club graph when no
/// file of that name exists.
pub const BUILTIN_KARATE: &str = "karate";

#[derive(Debug, Parser)]
#[command(name = "reorder", version, about = "Learn and explore a latent space of graph matrix reorderings")]
pub struct Cli {
    /// Worker threads for dataset and heatmap jobs (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Where to write the run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run seriation jobs on a graph and write the deduplicated corpus.
    Dataset(DatasetArgs),
    /// Train a model on a corpus and write a checkpoint.
    Train(TrainArgs),
    /// Repeated k-fold cross-validation; writes a CSV report.
    Evaluate(EvaluateArgs),
    /// Decode a k × k lattice over [-1, 1]² into PNGs plus a manifest.
    Grid(GridArgs),
    /// Quality-metric field over [-1, 1]² as JSON and PNG.
    Heatmap(HeatmapArgs),
    /// Decode one latent point into an order (JSON) and a matrix (PNG).
    Decode(DecodeArgs),
    /// Serve the HTTP API for a checkpoint.
    Serve(ServeArgs),
    /// Re-run a recorded command and check its outputs are unchanged.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Edge-list file (or `karate` for the built-in graph).
    pub graph: String,
    /// Comma-separated method tokens, or `all`.
    #[arg(long, default_value = "all")]
    pub methods: String,
    /// Comma-separated `metric:variant` tokens (`shortestpath` alone), or `all`.
    #[arg(long, default_value = "all")]
    pub distances: String,
    /// Comma-separated seeds; `a..b` ranges are allowed.
    #[arg(long, default_value = "0..20")]
    pub seeds: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Edge-list file the corpus was built from (or `karate`).
    #[arg(long, default_value = BUILTIN_KARATE)]
    pub graph: String,
    #[arg(long, value_enum, default_value_t = Decoder::Sinkhorn)]
    pub decoder: Decoder,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on a seeded random subset of this many records.
    #[arg(long)]
    pub subsample: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Decoder {
    Sinkhorn,
    Softsort,
}

impl From<Decoder> for DecoderKind {
    fn from(d: Decoder) -> Self {
        match d {
            Decoder::Sinkhorn => DecoderKind::Sinkhorn,
            Decoder::Softsort => DecoderKind::SoftSort,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus written by `dataset`.
    pub corpus: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss log (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    pub checkpoint: PathBuf,
    /// Graph the checkpoint was trained on (or `karate`).
    #[arg(long, default_value = BUILTIN_KARATE)]
    pub graph: String,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub source: CheckpointArgs,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Pixels per matrix cell.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub source: CheckpointArgs,
    #[arg(long)]
    pub metric: String,
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    /// `raw` or `selfloops`; not allowed with `shortestpath`.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, default_value_t = 32)]
    pub res: usize,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// JSON output; the PNG goes next to it with a `.png` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub source: CheckpointArgs,
    /// Latent point as `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    pub z: String,
    #[arg(long, default_value_t = 8)]
    pub scale: usize,
    /// Output prefix: writes `<out>.json` and `<out>.png`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub source: CheckpointArgs,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Directory with the built explorer bundle.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Parses `argv` (program name first) and runs the command; returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let arguments = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, arguments) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

struct Run {
    manifest: RunManifest,
    path: Option<PathBuf>,
}

impl Run {
    fn new(command: &str, arguments: Vec<String>, path: Option<PathBuf>) -> Self {
        Self {
            manifest: RunManifest {
                tool: format!("reorder {}", env!("CARGO_PKG_VERSION")),
                command: command.into(),
                arguments,
                seeds: Vec::new(),
                started_at: manifest::now(),
                finished_at: String::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
            path,
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    fn finish(mut self, primary: &Path) -> Result<()> {
        self.manifest.finished_at = manifest::now();
        let path = self.path.unwrap_or_else(|| manifest::default_path(primary));
        self.manifest.save(&path)?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }
}

fn execute(cli: Cli, arguments: Vec<String>) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let name = match &cli.command {
        Command::Dataset(_) => "dataset",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Grid(_) => "grid",
        Command::Heatmap(_) => "heatmap",
        Command::Decode(_) => "decode",
        Command::Serve(_) => "serve",
        Command::Replay(_) => "replay",
    };
    let mut r = Run::new(name, arguments, cli.manifest);
    let primary = match cli.command {
        Command::Dataset(a) => cmd_dataset(a, &mut r)?,
        Command::Train(a) => cmd_train(a, &mut r)?,
        Command::Evaluate(a) => cmd_evaluate(a, &mut r)?,
        Command::Grid(a) => cmd_grid(a, &mut r)?,
        Command::Heatmap(a) => cmd_heatmap(a, &mut r)?,
        Command::Decode(a) => cmd_decode(a, &mut r)?,
        Command::Serve(a) => return cmd_serve(a, &mut r),
        Command::Replay(a) => return cmd_replay(a),
    };
    r.finish(&primary)
}

/// Reads an edge list, or the built-in karate graph for `karate` when no
/// such file exists.
pub fn load_graph(spec: &str) -> Result<Graph> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        let name = path.file_stem().map_or(spec.into(), |s| s.to_string_lossy().into_owned());
        let g = parse_edge_list(&text)
            .with_context(|| format!("parsing {spec}"))?
            .with_name(name);
        return Ok(g);
    }
    if spec == BUILTIN_KARATE {
        return Ok(Graph::karate());
    }
    bail!("graph file {spec} not found")
}

fn load_graph_input(spec: &str, r: &mut Run) -> Result<Graph> {
    let g = load_graph(spec)?;
    if Path::new(spec).exists() {
        r.input(Path::new(spec))?;
    }
    Ok(g)
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s == "all" {
        return Ok(Method::ALL.to_vec());
    }
    split_list(s)
        .map(|t| t.parse::<Method>().map_err(|e| anyhow!("--methods: {e}")))
        .collect()
}

pub fn parse_distances(s: &str) -> Result<Vec<DistanceSpec>> {
    if s == "all" {
        return Ok(DistanceSpec::all());
    }
    split_list(s)
        .map(|t| t.parse::<DistanceSpec>().map_err(|e| anyhow!("--distances: {e}")))
        .collect()
}

/// `1,2,5..8` → `[1, 2, 5, 6, 7]`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for t in split_list(s) {
        match t.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (
                    a.trim().parse().map_err(|_| anyhow!("--seeds: bad range start `{a}`"))?,
                    b.trim().parse().map_err(|_| anyhow!("--seeds: bad range end `{b}`"))?,
                );
                if a >= b {
                    bail!("--seeds: empty range `{t}`");
                }
                out.extend(a..b);
            }
            None => out.push(t.parse().map_err(|_| anyhow!("--seeds: bad seed `{t}`"))?),
        }
    }
    if out.is_empty() {
        bail!("--seeds is empty");
    }
    Ok(out)
}

pub fn parse_z(s: &str) -> Result<[f64; 2]> {
    let (x, y) = s.split_once(',').ok_or_else(|| anyhow!("--z must be `x,y`, got `{s}`"))?;
    let parse = |v: &str| -> Result<f64> {
        let f: f64 = v.trim().parse().map_err(|_| anyhow!("--z: `{v}` is not a number"))?;
        if !f.is_finite() {
            bail!("--z: `{v}` is not finite");
        }
        Ok(f)
    };
    Ok([parse(x)?, parse(y)?])
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_dataset(a: DatasetArgs, r: &mut Run) -> Result<PathBuf> {
    let graph = load_graph_input(&a.graph, r)?;
    let methods = parse_methods(&a.methods)?;
    let distances = parse_distances(&a.distances)?;
    let seeds = parse_seeds(&a.seeds)?;
    r.manifest.seeds = seeds.clone();
    let collected = collect_records(&graph, &methods, &distances, &seeds)?;
    let raw = collected.records.len();
    let ds = dataset::dedup(&graph, collected.records)?;
    log::info!(
        "{} jobs, {} failed, {raw} records, {} unique",
        collected.jobs,
        collected.failures.len(),
        ds.len()
    );
    write_file(&a.out, ds.to_jsonl_string().as_bytes())?;
    r.output(&a.out)?;
    Ok(a.out)
}

fn load_corpus(path: &Path, m: &ModelArgs, r: &mut Run) -> Result<(Graph, Dataset, ModelConfig)> {
    let graph = load_graph_input(&m.graph, r)?;
    let mut ds = Dataset::load(path).with_context(|| format!("loading corpus {}", path.display()))?;
    r.input(path)?;
    ds.check_graph(&graph)?;
    if let Some(count) = m.subsample {
        ds = ds.subsample(count, m.seed)?;
        log::info!("training on {count} sampled records");
    }
    let mut c = ModelConfig::new(graph.n(), m.decoder.into());
    c.epochs = m.epochs;
    c.learning_rate = m.lr;
    c.tau = m.tau;
    c.lambda = m.lambda;
    c.batch_size = m.batch;
    c.seed = m.seed;
    c.validate()?;
    r.manifest.seeds = vec![m.seed];
    Ok((graph, ds, c))
}

fn cmd_train(a: TrainArgs, r: &mut Run) -> Result<PathBuf> {
    let (graph, ds, config) = load_corpus(&a.corpus, &a.model, r)?;
    let mut log_rows = vec![EpochLog::CSV_HEADER.to_string()];
    let every = (config.epochs / 10).max(1);
    let trained = train_dataset(&graph, &ds, &config, |e| {
        log_rows.push(e.csv_row());
        if (e.epoch + 1) % every == 0 {
            log::info!(
                "epoch {}/{}: L_X = {:.5}, L_Z = {:.5}",
                e.epoch + 1,
                config.epochs,
                e.reconstruction,
                e.latent
            );
        }
    })?;
    let adjacency = graph.adjacency(MatrixVariant::Raw);
    let orders: Vec<_> = ds.orders().cloned().collect();
    let err = reconstruction_error(&trained.model, &adjacency, &orders)?;
    log::info!("training-set error rate {err:.4}");
    let ck = Checkpoint::new(graph.digest(), trained.model, trained.optimizer);
    write_file(&a.out, &ck.to_bytes()?)?;
    r.output(&a.out)?;
    if let Some(p) = &a.log {
        log_rows.push(String::new());
        write_file(p, log_rows.join("\n").as_bytes())?;
        r.output(p)?;
    }
    Ok(a.out)
}

fn cmd_evaluate(a: EvaluateArgs, r: &mut Run) -> Result<PathBuf> {
    let (graph, ds, config) = load_corpus(&a.corpus, &a.model, r)?;
    r.manifest.seeds = (0..a.trials as u64).map(|t| config.seed.wrapping_add(t)).collect();
    let report = evaluate(&graph, &ds, &config, a.folds, a.trials, |t, f, e| {
        log::info!("trial {} fold {}: held-out error {e:.4}", t + 1, f + 1);
    })?;
    log::info!(
        "mean held-out error {:.4}, mean training error {:.4}",
        report.mean(),
        report.mean_train()
    );
    write_file(&a.out, report.to_csv().as_bytes())?;
    r.output(&a.out)?;
    Ok(a.out)
}

fn load_checkpoint(src: &CheckpointArgs, r: &mut Run) -> Result<(Graph, Checkpoint)> {
    let graph = load_graph_input(&src.graph, r)?;
    let ck = Checkpoint::load(&src.checkpoint)
        .with_context(|| format!("loading checkpoint {}", src.checkpoint.display()))?;
    r.input(&src.checkpoint)?;
    if ck.graph_digest != graph.digest() {
        bail!(
            "checkpoint {} was trained on a different graph than {}",
            src.checkpoint.display(),
            src.graph
        );
    }
    r.manifest.seeds = vec![ck.config().seed];
    Ok((graph, ck))
}

fn cmd_grid(a: GridArgs, r: &mut Run) -> Result<PathBuf> {
    let (graph, ck) = load_checkpoint(&a.source, r)?;
    if a.k == 0 || a.scale == 0 {
        bail!("--k and --scale must be positive");
    }
    let grid = build_grid(&ck.model, &graph.adjacency(MatrixVariant::Raw), a.k)?;
    grid.write_dir(&a.out, a.scale)?;
    log::info!("{} decoded views written to {}", grid.cells.len(), a.out.display());
    for c in &grid.cells {
        r.output(&a.out.join(c.file_name()))?;
    }
    r.output(&a.out.join("manifest.json"))?;
    Ok(a.out)
}

fn cmd_heatmap(a: HeatmapArgs, r: &mut Run) -> Result<PathBuf> {
    let (graph, ck) = load_checkpoint(&a.source, r)?;
    let metric: QualityMetric = a.metric.parse().map_err(|e| anyhow!("--metric: {e}"))?;
    let spec_text = match &a.variant {
        Some(v) => format!("{}:{v}", a.distance),
        None if a.distance == "shortestpath" => a.distance.clone(),
        None => format!("{}:raw", a.distance),
    };
    let spec: DistanceSpec = spec_text.parse().map_err(|e| anyhow!("--distance/--variant: {e}"))?;
    if a.res < 2 || a.scale == 0 {
        bail!("--res must be at least 2 and --scale positive");
    }
    let h = build_heatmap(&ck.model, &graph, metric, spec, a.res)?;
    let (lo, hi) = h.min_max();
    log::info!("{} over {}: normalized range [{lo}, {hi}]", metric.token(), spec);
    let mut text = serde_json::to_string(&h.to_json())?;
    text.push('\n');
    write_file(&a.out, text.as_bytes())?;
    let png = a.out.with_extension("png");
    write_file(&png, &h.to_png(a.scale)?)?;
    r.output(&a.out)?;
    r.output(&png)?;
    Ok(a.out)
}

fn cmd_decode(a: DecodeArgs, r: &mut Run) -> Result<PathBuf> {
    let (graph, ck) = load_checkpoint(&a.source, r)?;
    let z = parse_z(&a.z)?;
    if a.scale == 0 {
        bail!("--scale must be positive");
    }
    let adjacency = graph.adjacency(MatrixVariant::Raw);
    let d = ck
        .model
        .decode(&adjacency, &[z])?
        .pop()
        .ok_or_else(|| anyhow!("decoder returned nothing"))?;
    if !d.preserves_structure(&adjacency) {
        bail!("decoded order at {z:?} does not preserve the graph");
    }
    let body = json!({
        "z": z,
        "order": d.order.as_slice(),
        "edge_count": d.matrix.edge_count(),
    });
    let (json_path, png_path) = (with_suffix(&a.out, ".json"), with_suffix(&a.out, ".png"));
    let mut text = serde_json::to_string(&body)?;
    text.push('\n');
    write_file(&json_path, text.as_bytes())?;
    write_file(&png_path, &render_matrix(&d.matrix, a.scale)?)?;
    r.output(&json_path)?;
    r.output(&png_path)?;
    Ok(json_path)
}

fn cmd_serve(a: ServeArgs, r: &mut Run) -> Result<()> {
    let (graph, ck) = load_checkpoint(&a.source, r)?;
    let mut state = ServiceState::new(graph, ck)?;
    if let Some(dir) = &a.static_dir {
        if !dir.is_dir() {
            bail!("--static {} is not a directory", dir.display());
        }
        state = state.with_static_dir(dir);
    }
    if let Some(p) = &r.path {
        r.manifest.save(p)?;
    }
    log::info!("run: {}", serde_json::to_string(&r.manifest)?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")?;
    rt.block_on(reorder_service::serve(state, SocketAddr::new(a.host, a.port)))
        .with_context(|| format!("serving on {}:{}", a.host, a.port))
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let m = RunManifest::load(&a.manifest)?;
    if m.command == "replay" || m.command == "serve" {
        bail!("`{}` runs cannot be replayed", m.command);
    }
    let mut argv = vec!["reorder".to_string()];
    argv.extend(m.arguments.iter().cloned());
    let mut cli = Cli::try_parse_from(&argv).map_err(|e| anyhow!("recorded arguments no longer parse: {e}"))?;
    // The replayed run must not overwrite the manifest being checked.
    cli.manifest = Some(with_suffix(&a.manifest, ".replay"));
    execute(cli, m.arguments.clone())?;
    m.verify_outputs_in(Path::new("."))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{} outputs reproduced", m.outputs.len())?;
    Ok(())
}
