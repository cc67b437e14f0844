//! Feature extraction from samples and Q-Q rasters, and top-d selection by a
//! Welch-type separability score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qq::{qq_points, rasterize, QqRaster, POINT_INTENSITY, RASTER_SIZE};
use crate::stats::sorted_standardized;

const GRID_CELLS: usize = 8;
const CELL: usize = RASTER_SIZE / GRID_CELLS;
pub const IMAGE_FEATURES: usize = GRID_CELLS * GRID_CELLS * 3 + 4;
const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Extractor {
    /// Sorted standardized sample.
    RawOrder,
    /// Hand-built statistics over an 8x8 grid of the Q-Q raster.
    ImageGrid,
}

impl Extractor {
    pub fn as_str(self) -> &'static str {
        match self {
            Extractor::RawOrder => "raw",
            Extractor::ImageGrid => "image",
        }
    }

    /// Feature length for samples of size `n`.
    pub fn dimension(self, n: usize) -> usize {
        match self {
            Extractor::RawOrder => n,
            Extractor::ImageGrid => IMAGE_FEATURES,
        }
    }

    pub fn extract(self, x: &[f64]) -> Result<FeatureVector> {
        match self {
            Extractor::RawOrder => extract_raw(x),
            Extractor::ImageGrid => extract_image(&rasterize(&qq_points(x)?)?),
        }
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Extractor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" | "raworder" | "raw-order" => Ok(Extractor::RawOrder),
            "image" | "imagegrid" | "image-grid" => Ok(Extractor::ImageGrid),
            _ => Err(Error::Domain(format!("unknown extractor `{s}` (expected raw or image)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub extractor: Extractor,
    /// Indices kept by a [`SelectionModel`], if one was applied.
    pub selected: Option<Vec<usize>>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn extract_raw(x: &[f64]) -> Result<FeatureVector> {
    Ok(FeatureVector {
        values: sorted_standardized(x)?,
        extractor: Extractor::RawOrder,
        selected: None,
    })
}

/// Per 16x16 cell: mean intensity, mean |horizontal forward difference| and
/// mean |vertical forward difference| (differences taken inside the cell).
/// Then global mean, population sd, and the mean row and column index of
/// full-intensity pixels.
pub fn extract_image(r: &QqRaster) -> Result<FeatureVector> {
    if r.width() != RASTER_SIZE || r.height() != RASTER_SIZE {
        return Err(Error::DimensionMismatch {
            expected: RASTER_SIZE,
            got: if r.width() != RASTER_SIZE { r.width() } else { r.height() },
        });
    }
    let mut values = Vec::with_capacity(IMAGE_FEATURES);
    let diff_count = (CELL * (CELL - 1)) as f64;
    for gr in 0..GRID_CELLS {
        for gc in 0..GRID_CELLS {
            let (r0, c0) = (gr * CELL, gc * CELL);
            let mut sum = 0.0;
            let mut horiz = 0.0;
            let mut vert = 0.0;
            for row in r0..r0 + CELL {
                for col in c0..c0 + CELL {
                    let v = r.get(row, col);
                    sum += v;
                    if col + 1 < c0 + CELL {
                        horiz += (r.get(row, col + 1) - v).abs();
                    }
                    if row + 1 < r0 + CELL {
                        vert += (r.get(row + 1, col) - v).abs();
                    }
                }
            }
            values.push(sum / (CELL * CELL) as f64);
            values.push(horiz / diff_count);
            values.push(vert / diff_count);
        }
    }

    let px = r.pixels();
    let total = px.len() as f64;
    let mean = px.iter().sum::<f64>() / total;
    let var = px.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / total;
    let (mut weight, mut row_acc, mut col_acc) = (0.0, 0.0, 0.0);
    for (i, &v) in px.iter().enumerate() {
        if v == POINT_INTENSITY {
            weight += v;
            row_acc += v * (i / r.width()) as f64;
            col_acc += v * (i % r.width()) as f64;
        }
    }
    let (mean_row, mean_col) = if weight > 0.0 {
        (row_acc / weight, col_acc / weight)
    } else {
        (0.0, 0.0)
    };
    values.extend([mean, var.sqrt(), mean_row, mean_col]);
    Ok(FeatureVector {
        values,
        extractor: Extractor::ImageGrid,
        selected: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub scores: Vec<f64>,
    /// Ascending indices of the d best-scoring features.
    pub mask: Vec<usize>,
    pub d: usize,
}

fn column_stats(vectors: &[FeatureVector], j: usize) -> (f64, f64) {
    let n = vectors.len() as f64;
    let mean = vectors.iter().map(|v| v.values[j]).sum::<f64>() / n;
    let var = vectors
        .iter()
        .map(|v| (v.values[j] - mean) * (v.values[j] - mean))
        .sum::<f64>()
        / (n - 1.0);
    (mean, var)
}

/// Scores every feature by `|mean0 - mean1| / sqrt(var0/n0 + var1/n1 + eps)`
/// (unbiased variances) and keeps the top `d`, ties to the lower index.
pub fn fit_selection(h0: &[FeatureVector], h1: &[FeatureVector], d: usize) -> Result<SelectionModel> {
    if h0.len() < 2 || h1.len() < 2 {
        return Err(Error::ClassTooSmall(format!(
            "selection needs at least 2 vectors per class, got {} and {}",
            h0.len(),
            h1.len()
        )));
    }
    let m = h0[0].len();
    let extractor = h0[0].extractor;
    for v in h0.iter().chain(h1) {
        if v.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: v.len() });
        }
        if v.extractor != extractor {
            return Err(Error::Domain("feature vectors come from different extractors".into()));
        }
    }
    if d == 0 || d > m {
        return Err(Error::Domain(format!("selected dimension {d} must lie in 1..={m}")));
    }
    let (n0, n1) = (h0.len() as f64, h1.len() as f64);
    let scores: Vec<f64> = (0..m)
        .map(|j| {
            let (m0, v0) = column_stats(h0, j);
            let (m1, v1) = column_stats(h1, j);
            (m0 - m1).abs() / (v0 / n0 + v1 / n1 + SCORE_EPS).sqrt()
        })
        .collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("separability score".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut mask = order[..d].to_vec();
    mask.sort_unstable();
    Ok(SelectionModel { scores, mask, d })
}

pub fn apply_selection(v: &FeatureVector, s: &SelectionModel) -> Result<FeatureVector> {
    if v.len() != s.scores.len() {
        return Err(Error::DimensionMismatch {
            expected: s.scores.len(),
            got: v.len(),
        });
    }
    Ok(FeatureVector {
        values: s.mask.iter().map(|&j| v.values[j]).collect(),
        extractor: v.extractor,
        selected: Some(s.mask.clone()),
    })
}
