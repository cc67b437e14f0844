//! Normal Q-Q points and their rasterisation.
//!
//! The raster is a 128x128 grayscale canvas with three levels: background 0,
//! the y = x anchor line at 0.5 and data points at 1.0. Both axes share one
//! value range so the anchor line is always the main diagonal.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::{normal_quantile, sorted_standardized};

pub const RASTER_SIZE: usize = 128;
pub const BACKGROUND: f64 = 0.0;
pub const LINE_INTENSITY: f64 = 0.5;
pub const POINT_INTENSITY: f64 = 1.0;
const POINT_RADIUS: f64 = 1.5;
const RANGE_PADDING: f64 = 0.05;

/// Blom-type plotting positions `(i - a) / (n + 1 - 2a)` with `a = 3/8` for
/// `n <= 10` and `a = 1/2` otherwise.
pub fn plotting_positions(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("plotting positions need n >= 1".into()));
    }
    let a = if n <= 10 { 0.375 } else { 0.5 };
    let denom = n as f64 + 1.0 - 2.0 * a;
    Ok((1..=n).map(|i| (i as f64 - a) / denom).collect())
}

/// Theoretical normal quantiles against standardized order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct QqPoints {
    pub theoretical: Vec<f64>,
    pub empirical: Vec<f64>,
}

impl QqPoints {
    pub fn len(&self) -> usize {
        self.theoretical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theoretical.is_empty()
    }

    /// The perfect-fit plot: empirical quantiles equal to the theoretical ones.
    pub fn ideal(n: usize) -> Result<Self> {
        let theoretical = theoretical_quantiles(n)?;
        Ok(Self {
            empirical: theoretical.clone(),
            theoretical,
        })
    }
}

pub fn theoretical_quantiles(n: usize) -> Result<Vec<f64>> {
    plotting_positions(n)?
        .into_iter()
        .map(normal_quantile)
        .collect()
}

pub fn qq_points(x: &[f64]) -> Result<QqPoints> {
    let empirical = sorted_standardized(x)?;
    Ok(QqPoints {
        theoretical: theoretical_quantiles(x.len())?,
        empirical,
    })
}

/// A rendered Q-Q plot. Row 0 is the top of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct QqRaster {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    value_range: (f64, f64),
}

impl QqRaster {
    /// Wraps an arbitrary intensity grid, mostly for tests and noise studies.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("raster intensity".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            value_range: (0.0, 1.0),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.width + col] = v;
    }

    /// Binary PGM (P5, maxval 255), intensities scaled by 255 and rounded half up.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.pixels
                .iter()
                .map(|p| (p.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8),
        );
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Renders points onto a fresh 128x128 canvas.
pub fn rasterize(points: &QqPoints) -> Result<QqRaster> {
    let n = points.len();
    if n < 3 || points.empirical.len() != n {
        return Err(Error::Domain(format!(
            "rasterize needs at least 3 paired points, got {} and {}",
            n,
            points.empirical.len()
        )));
    }
    let all = points.theoretical.iter().chain(&points.empirical);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in all {
        if !v.is_finite() {
            return Err(Error::NonFinite("Q-Q coordinate".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (lo, hi) = (lo - RANGE_PADDING * span, hi + RANGE_PADDING * span);

    let size = RASTER_SIZE;
    let mut raster = QqRaster {
        width: size,
        height: size,
        pixels: vec![BACKGROUND; size * size],
        value_range: (lo, hi),
    };
    let last = (size - 1) as f64;
    let to_unit = |v: f64| (v - lo) / (hi - lo);

    // (lo, lo) is the bottom-left pixel, (hi, hi) the top-right one.
    draw_line(&mut raster, (0, size as i64 - 1), (size as i64 - 1, 0));

    for (&tx, &ey) in points.theoretical.iter().zip(&points.empirical) {
        let cx = to_unit(tx) * last;
        let cy = (1.0 - to_unit(ey)) * last;
        stamp_disc(&mut raster, cx, cy);
    }
    Ok(raster)
}

/// Ideal null raster for sample size `n`.
pub fn ideal_raster(n: usize) -> Result<QqRaster> {
    rasterize(&QqPoints::ideal(n)?)
}

/// Bresenham line between `(col, row)` endpoints.
fn draw_line(r: &mut QqRaster, from: (i64, i64), to: (i64, i64)) {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && (x as usize) < r.width && (y as usize) < r.height {
            r.set(y as usize, x as usize, LINE_INTENSITY);
        }
        if x == to.0 && y == to.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn stamp_disc(r: &mut QqRaster, cx: f64, cy: f64) {
    let r2 = POINT_RADIUS * POINT_RADIUS;
    let row_lo = (cy - POINT_RADIUS).ceil().max(0.0) as usize;
    let row_hi = (cy + POINT_RADIUS).floor().min((r.height - 1) as f64);
    let col_lo = (cx - POINT_RADIUS).ceil().max(0.0) as usize;
    let col_hi = (cx + POINT_RADIUS).floor().min((r.width - 1) as f64);
    if row_hi < 0.0 || col_hi < 0.0 {
        return;
    }
    for row in row_lo..=row_hi as usize {
        for col in col_lo..=col_hi as usize {
            let (dx, dy) = (col as f64 - cx, row as f64 - cy);
            if dx * dx + dy * dy <= r2 {
                r.set(row, col, POINT_INTENSITY);
            }
        }
    }
}
