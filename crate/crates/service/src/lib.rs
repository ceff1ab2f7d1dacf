//! Read-only HTTP API over a trained checkpoint.
//!
//! | route | response |
//! |---|---|
//! | `GET /api/info` | graph summary, decoder, τ and checkpoint digest |
//! | `GET /api/decode?x=&y=` | order, edge count and a PNG of the decoded matrix |
//! | `GET /api/grid?k=` | `k × k` lattice manifest with thumbnail URLs |
//! | `GET /api/thumbnail?k=&row=&col=` | PNG of one grid cell |
//! | `GET /api/heatmap?metric=&distance=&variant=&res=` | normalized metric field |
//!
//! Anything else under `/api` is a JSON 404; other paths are served from the
//! static directory when one is configured.

use std::collections::HashMap;
use std::hash::Hash;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::Engine;
use reorder_atlas::{build_grid, build_heatmap, render_matrix, AtlasGrid, QualityMetric};
use reorder_core::digest::sha256_hex;
use reorder_core::{AdjacencyMatrix, DistanceSpec, Graph, MatrixVariant};
use reorder_model::Checkpoint;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

/// Latent inputs beyond this magnitude are rejected.
pub const LATENT_LIMIT: f64 = 3.0;
pub const MAX_GRID_K: usize = 32;
pub const MAX_HEATMAP_RES: usize = 256;
const DECODE_CACHE_CAP: usize = 4096;
const GRID_CACHE_CAP: usize = 32;
const HEATMAP_CACHE_CAP: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("checkpoint was trained on a different graph (digest {checkpoint:016x}, graph {graph:016x})")]
    GraphMismatch { checkpoint: u64, graph: u64 },

    #[error(transparent)]
    Model(#[from] reorder_model::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append-only map with a size bound: once full, new entries are computed
/// but not stored. Values are complete before they become visible.
#[derive(Debug)]
struct Cache<K, V> {
    map: RwLock<HashMap<K, Arc<V>>>,
    cap: usize,
}

impl<K: Eq + Hash, V> Cache<K, V> {
    fn new(cap: usize) -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            cap,
        }
    }

    fn get(&self, k: &K) -> Option<Arc<V>> {
        self.map.read().unwrap_or_else(|e| e.into_inner()).get(k).cloned()
    }

    fn insert(&self, k: K, v: V) -> Arc<V> {
        let v = Arc::new(v);
        let mut map = self.map.write().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = map.get(&k) {
            return existing.clone();
        }
        if map.len() < self.cap {
            map.insert(k, v.clone());
        }
        v
    }

    fn len(&self) -> usize {
        self.map.read().unwrap_or_else(|e| e.into_inner()).len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct HeatmapKey {
    metric: QualityMetric,
    distance: DistanceSpec,
    res: usize,
}

#[derive(Debug)]
pub struct ServiceState {
    graph: Graph,
    adjacency: AdjacencyMatrix,
    checkpoint: Checkpoint,
    digest: String,
    png_scale: usize,
    static_dir: Option<PathBuf>,
    decodes: Cache<(u64, u64), Value>,
    grids: Cache<usize, AtlasGrid>,
    heatmaps: Cache<HeatmapKey, Value>,
}

impl ServiceState {
    /// Checks that `checkpoint` belongs to `graph`.
    pub fn new(graph: Graph, checkpoint: Checkpoint) -> Result<Self, Error> {
        if checkpoint.graph_digest != graph.digest() {
            return Err(Error::GraphMismatch {
                checkpoint: checkpoint.graph_digest,
                graph: graph.digest(),
            });
        }
        let digest = sha256_hex(&checkpoint.to_bytes()?);
        Ok(Self {
            adjacency: graph.adjacency(MatrixVariant::Raw),
            graph,
            checkpoint,
            digest,
            png_scale: 8,
            static_dir: None,
            decodes: Cache::new(DECODE_CACHE_CAP),
            grids: Cache::new(GRID_CACHE_CAP),
            heatmaps: Cache::new(HEATMAP_CACHE_CAP),
        })
    }

    /// Directory served for non-API paths (the built explorer bundle).
    pub fn with_static_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.static_dir = Some(dir.into());
        self
    }

    /// Pixels per matrix cell in returned PNGs.
    pub fn with_png_scale(mut self, scale: usize) -> Self {
        self.png_scale = scale.max(1);
        self
    }

    pub fn checkpoint_digest(&self) -> &str {
        &self.digest
    }

    /// Number of cached decode, grid and heatmap responses.
    pub fn cache_sizes(&self) -> (usize, usize, usize) {
        (self.decodes.len(), self.grids.len(), self.heatmaps.len())
    }

    fn info(&self) -> Value {
        let c = self.checkpoint.config();
        json!({
            "graph": self.graph.name(),
            "n": self.graph.n(),
            "m": self.graph.edge_count(),
            "decoder": c.decoder.token(),
            "tau": c.tau,
            "checkpoint_digest": self.digest,
        })
    }

    fn decode(&self, x: f64, y: f64) -> Result<Arc<Value>, ApiError> {
        let key = (x.to_bits(), y.to_bits());
        if let Some(hit) = self.decodes.get(&key) {
            return Ok(hit);
        }
        let d = self
            .checkpoint
            .model
            .decode(&self.adjacency, &[[x, y]])
            .map_err(ApiError::internal)?
            .pop()
            .ok_or_else(|| ApiError::internal("empty decode"))?;
        if !d.preserves_structure(&self.adjacency) {
            return Err(ApiError::internal(format!(
                "decoded order at ({x}, {y}) does not preserve the graph"
            )));
        }
        let png = render_matrix(&d.matrix, self.png_scale).map_err(ApiError::internal)?;
        let body = json!({
            "z": [x, y],
            "order": d.order.as_slice(),
            "matrix_png_base64": base64::engine::general_purpose::STANDARD.encode(png),
            "edge_count": d.matrix.edge_count(),
        });
        Ok(self.decodes.insert(key, body))
    }

    fn grid(&self, k: usize) -> Result<Arc<AtlasGrid>, ApiError> {
        if let Some(hit) = self.grids.get(&k) {
            return Ok(hit);
        }
        let grid = build_grid(&self.checkpoint.model, &self.adjacency, k).map_err(ApiError::internal)?;
        Ok(self.grids.insert(k, grid))
    }

    fn heatmap(&self, key: HeatmapKey) -> Result<Arc<Value>, ApiError> {
        if let Some(hit) = self.heatmaps.get(&key) {
            return Ok(hit);
        }
        let h = build_heatmap(&self.checkpoint.model, &self.graph, key.metric, key.distance, key.res)
            .map_err(ApiError::internal)?;
        Ok(self.heatmaps.insert(key, h.to_json()))
    }
}

/// JSON error body with a status code.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn internal(e: impl ToString) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}", self.message);
        }
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Params = Query<HashMap<String, String>>;
type Shared = Arc<ServiceState>;

fn required<'a>(q: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    q.get(name)
        .map(String::as_str)
        .ok_or_else(|| ApiError::bad_request(format!("missing query parameter `{name}`")))
}

fn parse_latent(q: &HashMap<String, String>, name: &str) -> Result<f64, ApiError> {
    let raw = required(q, name)?;
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| ApiError::bad_request(format!("`{name}` must be a number, got `{raw}`")))?;
    if !v.is_finite() {
        return Err(ApiError::bad_request(format!("`{name}` must be finite")));
    }
    if v.abs() > LATENT_LIMIT {
        return Err(ApiError::bad_request(format!(
            "`{name}` = {v} is outside [-{LATENT_LIMIT}, {LATENT_LIMIT}]"
        )));
    }
    Ok(v)
}

fn parse_count(q: &HashMap<String, String>, name: &str, default: Option<usize>, range: (usize, usize)) -> Result<usize, ApiError> {
    let v = match (q.get(name), default) {
        (Some(raw), _) => raw
            .trim()
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request(format!("`{name}` must be a non-negative integer, got `{raw}`")))?,
        (None, Some(d)) => d,
        (None, None) => return Err(ApiError::bad_request(format!("missing query parameter `{name}`"))),
    };
    if v < range.0 || v > range.1 {
        return Err(ApiError::bad_request(format!(
            "`{name}` = {v} is outside {}..={}",
            range.0, range.1
        )));
    }
    Ok(v)
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

async fn info(State(s): State<Shared>) -> Json<Value> {
    Json(s.info())
}

async fn decode(State(s): State<Shared>, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let x = parse_latent(&q, "x")?;
    let y = parse_latent(&q, "y")?;
    let body = blocking(move || s.decode(x, y)).await?;
    Ok(Json(body.as_ref().clone()))
}

async fn grid(State(s): State<Shared>, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let k = parse_count(&q, "k", None, (1, MAX_GRID_K))?;
    let g = blocking(move || s.grid(k)).await?;
    let cells: Vec<Value> = g
        .cells
        .iter()
        .map(|c| {
            json!({
                "row": c.row,
                "col": c.col,
                "z": c.z,
                "order": c.order.as_slice(),
                "thumbnail": format!("/api/thumbnail?k={k}&row={}&col={}", c.row, c.col),
            })
        })
        .collect();
    Ok(Json(json!({ "k": k, "cells": cells })))
}

async fn thumbnail(State(s): State<Shared>, Query(q): Params) -> Result<Response, ApiError> {
    let k = parse_count(&q, "k", None, (1, MAX_GRID_K))?;
    let row = parse_count(&q, "row", None, (0, k - 1))?;
    let col = parse_count(&q, "col", None, (0, k - 1))?;
    let scale = s.png_scale;
    let png = blocking(move || {
        let g = s.grid(k)?;
        render_matrix(&g.cells[row * k + col].matrix, scale).map_err(ApiError::internal)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn heatmap(State(s): State<Shared>, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let metric: QualityMetric = required(&q, "metric")?
        .parse()
        .map_err(|e: reorder_atlas::Error| ApiError::bad_request(e.to_string()))?;
    let distance = q.get("distance").map_or("euclidean", String::as_str);
    let spec_text = match q.get("variant") {
        Some(v) => format!("{distance}:{v}"),
        None if distance == "shortestpath" => distance.to_string(),
        None => format!("{distance}:raw"),
    };
    let spec: DistanceSpec = spec_text
        .parse()
        .map_err(|e: reorder_core::Error| ApiError::bad_request(e.to_string()))?;
    let res = parse_count(&q, "res", Some(32), (2, MAX_HEATMAP_RES))?;
    let key = HeatmapKey {
        metric,
        distance: spec,
        res,
    };
    let body = blocking(move || s.heatmap(key)).await?;
    Ok(Json(body.as_ref().clone()))
}

async fn api_not_found(uri: Uri) -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        message: format!("no route for {}", uri.path()),
    }
}

fn cors() -> CorsLayer {
    CorsLayer::new()
        .allow_methods([Method::GET])
        .allow_origin(AllowOrigin::predicate(|origin: &HeaderValue, _| {
            let o = origin.as_bytes();
            [&b"http://localhost"[..], b"http://127.0.0.1", b"http://[::1]"]
                .iter()
                .any(|p| o.strip_prefix(*p).is_some_and(|rest| rest.is_empty() || rest[0] == b':'))
        }))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    let api = Router::new()
        .route("/api/info", get(info))
        .route("/api/decode", get(decode))
        .route("/api/grid", get(grid))
        .route("/api/thumbnail", get(thumbnail))
        .route("/api/heatmap", get(heatmap))
        .route("/api", get(api_not_found))
        .route("/api/{*rest}", get(api_not_found));
    let app = match &state.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(api_not_found),
    };
    app.layer(cors()).with_state(state)
}

/// Serves until interrupted (Ctrl-C).
pub async fn serve(state: ServiceState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
