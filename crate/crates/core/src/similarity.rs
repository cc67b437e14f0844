//! PSNR and Gaussian-window SSIM between rasters, and the similarity-based
//! normality statistic that compares a sample's Q-Q raster to the ideal one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qq::{ideal_raster, qq_points, rasterize, QqPoints, QqRaster};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimilarityMetric {
    Psnr,
    Ssim,
}

impl SimilarityMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityMetric::Psnr => "PSNR",
            SimilarityMetric::Ssim => "SSIM",
        }
    }

    pub fn score(self, a: &QqRaster, b: &QqRaster) -> Result<SimilarityScore> {
        let value = match self {
            SimilarityMetric::Psnr => psnr(a, b)?,
            SimilarityMetric::Ssim => ssim(a, b)?,
        };
        Ok(SimilarityScore { metric: self, value })
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PSNR" => Ok(SimilarityMetric::Psnr),
            "SSIM" => Ok(SimilarityMetric::Ssim),
            _ => Err(Error::Domain(format!("unknown similarity metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub metric: SimilarityMetric,
    /// dB for PSNR (possibly +inf), [-1, 1] for SSIM.
    pub value: f64,
}

fn check_dims(a: &QqRaster, b: &QqRaster) -> Result<()> {
    if a.width() != b.width() {
        return Err(Error::DimensionMismatch {
            expected: a.width(),
            got: b.width(),
        });
    }
    if a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            expected: a.height(),
            got: b.height(),
        });
    }
    Ok(())
}

/// `10 log10(1 / MSE)` for unit-range intensities.
pub fn psnr(a: &QqRaster, b: &QqRaster) -> Result<f64> {
    check_dims(a, b)?;
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.pixels().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *w = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

/// Separable "valid" Gaussian filter; output is (h - 10) x (w - 10).
fn filter_valid(img: &[f64], width: usize, height: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; height * ow];
    for r in 0..height {
        let row = &img[r * width..(r + 1) * width];
        for c in 0..ow {
            horiz[r * ow + c] = kernel.iter().zip(&row[c..c + SSIM_WINDOW]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (t, k) in kernel.iter().enumerate() {
                acc += k * horiz[(r + t) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Mean SSIM over every 11x11 Gaussian window (sigma 1.5, stride 1).
pub fn ssim(a: &QqRaster, b: &QqRaster) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Domain(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let kernel = gaussian_kernel();
    let (pa, pb) = (a.pixels(), b.pixels());
    let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<f64>>();
    let cross: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(pa, w, h, &kernel);
    let mu_b = filter_valid(pb, w, h, &kernel);
    let ea2 = filter_valid(&sq(pa), w, h, &kernel);
    let eb2 = filter_valid(&sq(pb), w, h, &kernel);
    let eab = filter_valid(&cross, w, h, &kernel);

    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = ea2[i] - ma * ma;
            let vb = eb2[i] - mb * mb;
            let cov = eab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// Negated similarity of a rendered Q-Q plot to `reference`; larger means
/// less normal.
pub fn similarity_statistic_for_points(
    points: &QqPoints,
    metric: SimilarityMetric,
    reference: &QqRaster,
) -> Result<f64> {
    let raster = rasterize(points)?;
    Ok(-metric.score(&raster, reference)?.value)
}

pub fn similarity_test_statistic(x: &[f64], metric: SimilarityMetric, reference: &QqRaster) -> Result<f64> {
    similarity_statistic_for_points(&qq_points(x)?, metric, reference)
}

/// A similarity statistic bound to the ideal reference for one sample size.
#[derive(Debug, Clone)]
pub struct SimilarityTest {
    pub metric: SimilarityMetric,
    pub reference: QqRaster,
    pub n: usize,
}

impl SimilarityTest {
    pub fn new(metric: SimilarityMetric, n: usize) -> Result<Self> {
        Ok(Self {
            metric,
            reference: ideal_raster(n)?,
            n,
        })
    }

    pub fn statistic(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::SampleSizeMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        similarity_test_statistic(x, self.metric, &self.reference)
    }
}
