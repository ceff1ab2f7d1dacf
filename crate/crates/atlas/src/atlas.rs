//! Grids and heatmaps over the latent square `[-1, 1]²`.

use std::path::Path;

use rayon::prelude::*;
use reorder_core::distances::pairwise;
use reorder_core::{AdjacencyMatrix, DistanceSpec, Graph, MatrixVariant, Permutation};
use reorder_model::{Decoded, Model};
use serde_json::json;

use crate::metrics::{normalize, QualityMetric};
use crate::render::{render_field, render_matrix};
use crate::{Error, Result};

/// Latent point of lattice cell `(row, col)` on a `k × k` grid. Row 0 is the
/// top (`y = 1`) and column 0 the left (`x = -1`); `k = 1` gives the origin.
pub fn lattice_point(row: usize, col: usize, k: usize) -> [f64; 2] {
    if k <= 1 {
        return [0.0, 0.0];
    }
    let step = 2.0 / (k - 1) as f64;
    [-1.0 + step * col as f64, 1.0 - step * row as f64]
}

fn lattice(k: usize) -> Vec<[f64; 2]> {
    (0..k * k).map(|i| lattice_point(i / k, i % k, k)).collect()
}

fn verified(adjacency: &AdjacencyMatrix, decoded: Vec<Decoded>) -> Result<Vec<Decoded>> {
    for d in &decoded {
        if !d.preserves_structure(adjacency) {
            return Err(Error::Structure {
                z: d.z,
                order: d.order.as_slice().to_vec(),
            });
        }
    }
    Ok(decoded)
}

/// Decodes `zs` with bounded parallelism (one chunk per worker).
fn decode_all(model: &Model, adjacency: &AdjacencyMatrix, zs: &[[f64; 2]]) -> Result<Vec<Decoded>> {
    let chunk = zs.len().div_ceil(rayon::current_num_threads().max(1)).max(1);
    let parts: Vec<Vec<Decoded>> = zs
        .par_chunks(chunk)
        .map(|c| model.decode(adjacency, c).map_err(Error::from))
        .collect::<Result<_>>()?;
    verified(adjacency, parts.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
    pub z: [f64; 2],
    pub order: Permutation,
    pub matrix: AdjacencyMatrix,
}

impl GridCell {
    pub fn file_name(&self) -> String {
        format!("cell_r{}_c{}.png", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtlasGrid {
    pub k: usize,
    /// Row-major, `k²` cells.
    pub cells: Vec<GridCell>,
}

pub fn build_grid(model: &Model, adjacency: &AdjacencyMatrix, k: usize) -> Result<AtlasGrid> {
    if k == 0 {
        return Err(Error::Invalid("grid side k must be at least 1".into()));
    }
    let decoded = decode_all(model, adjacency, &lattice(k))?;
    let cells = decoded
        .into_iter()
        .enumerate()
        .map(|(i, d)| GridCell {
            row: i / k,
            col: i % k,
            z: d.z,
            order: d.order,
            matrix: d.matrix,
        })
        .collect();
    Ok(AtlasGrid { k, cells })
}

impl AtlasGrid {
    pub fn manifest(&self) -> serde_json::Value {
        json!({
            "k": self.k,
            "cells": self.cells.iter().map(|c| json!({
                "row": c.row,
                "col": c.col,
                "z": c.z,
                "order": c.order.as_slice(),
                "file": c.file_name(),
            })).collect::<Vec<_>>(),
        })
    }

    /// Writes one PNG per cell and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path, scale: usize) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for c in &self.cells {
            std::fs::write(dir.join(c.file_name()), render_matrix(&c.matrix, scale)?)?;
        }
        let mut manifest = serde_json::to_string_pretty(&self.manifest())?;
        manifest.push('\n');
        std::fs::write(dir.join("manifest.json"), manifest)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricHeatmap {
    pub metric: QualityMetric,
    pub distance: DistanceSpec,
    pub res: usize,
    /// Raw metric values, row-major over the lattice.
    pub raw: Vec<f64>,
    /// Normalized to `[0, 1]`, brighter = better.
    pub values: Vec<f64>,
}

/// Decodes a `res × res` lattice and scores each order with `metric` on the
/// dissimilarities of `graph` under `distance`.
pub fn build_heatmap(
    model: &Model,
    graph: &Graph,
    metric: QualityMetric,
    distance: DistanceSpec,
    res: usize,
) -> Result<MetricHeatmap> {
    if res < 2 {
        return Err(Error::Invalid(format!("heatmap resolution must be at least 2, got {res}")));
    }
    let adjacency = graph.adjacency(MatrixVariant::Raw);
    let d = pairwise(graph, distance);
    let decoded = decode_all(model, &adjacency, &lattice(res))?;
    let raw: Vec<f64> = decoded
        .par_iter()
        .map(|x| metric.evaluate(&d, &x.order))
        .collect::<Result<_>>()?;
    if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("metric produced a non-finite value {bad}")));
    }
    let values = normalize(&raw, metric);
    Ok(MetricHeatmap {
        metric,
        distance,
        res,
        raw,
        values,
    })
}

impl MetricHeatmap {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "metric": self.metric.token(),
            "distance": self.distance.metric().token(),
            "variant": self.distance.variant_token(),
            "res": self.res,
            "values": self.values,
        })
    }

    pub fn to_png(&self, scale: usize) -> Result<Vec<u8>> {
        render_field(&self.values, self.res, scale)
    }

    pub fn min_max(&self) -> (f64, f64) {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}
