//! End-to-end training of the distance-based normality test, Monte Carlo
//! cutoff calibration, and the model file format.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::Direction;
use crate::error::{Error, Result};
use crate::features::{apply_selection, fit_selection, Extractor, FeatureVector, SelectionModel};
use crate::metric::{train_metric, LmnnConfig, MetricMatrix};
use crate::stats::{purpose, DistributionSpec, SeedScheme, MIN_SAMPLE};

pub const MODEL_FORMAT: &str = "dnt-model";
pub const MODEL_VERSION: u64 = 1;
pub const MIN_CALIBRATION_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n: usize,
    /// Simulated N(0,1) samples; all of them feed the null distribution.
    pub h0_pool: usize,
    /// Share of the pool, nearest its mean, used for selection and metric learning.
    pub h0_keep_fraction: f64,
    pub h1_count: usize,
    pub h1_spec: DistributionSpec,
    /// Number of selected features.
    pub d: usize,
    pub lmnn: LmnnConfig,
    pub extractor: Extractor,
    pub alpha: f64,
    pub master_seed: u64,
    /// Calibrate on this many fresh null draws instead of the training pool.
    pub fresh_null_reps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n: 100,
            h0_pool: 50_000,
            h0_keep_fraction: 0.01,
            h1_count: 1_000,
            h1_spec: DistributionSpec::case(4).expect("t(50) case"),
            d: 100,
            lmnn: LmnnConfig::default(),
            extractor: Extractor::RawOrder,
            alpha: 0.05,
            master_seed: 20_240_601,
            fresh_null_reps: None,
        }
    }
}

impl TrainConfig {
    /// A tenth of the default pool and half the alternative samples.
    pub fn desk_scale() -> Self {
        Self {
            h0_pool: 5_000,
            h1_count: 500,
            ..Self::default()
        }
    }

    pub fn kept_count(&self) -> usize {
        (self.h0_keep_fraction * self.h0_pool as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n < MIN_SAMPLE {
            return fail(format!("n must be at least {MIN_SAMPLE}, got {}", self.n));
        }
        if self.h0_pool == 0 || self.h1_count < 2 {
            return fail("h0_pool must be positive and h1_count at least 2".into());
        }
        if !(self.h0_keep_fraction > 0.0 && self.h0_keep_fraction <= 1.0) {
            return fail(format!("h0_keep_fraction must lie in (0, 1], got {}", self.h0_keep_fraction));
        }
        if self.kept_count() < self.lmnn.k + 1 {
            return fail(format!(
                "h0_keep_fraction * h0_pool = {} must be at least k + 1 = {}",
                self.kept_count(),
                self.lmnn.k + 1
            ));
        }
        let dim = self.extractor.dimension(self.n);
        if self.d == 0 || self.d > dim {
            return fail(format!("d must lie in 1..={dim} for the {} extractor, got {}", self.extractor, self.d));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.fresh_null_reps == Some(0) {
            return fail("fresh_null_reps must be positive".into());
        }
        self.h1_spec.validate()?;
        self.lmnn.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DntModel {
    pub extractor: Extractor,
    pub selection: SelectionModel,
    pub metric: MetricMatrix,
    pub centroid: Vec<f64>,
    /// Squared distances of the null samples to the centroid, ascending.
    pub null_distances: Vec<f64>,
    pub cutoff: f64,
    pub alpha: f64,
    pub n: usize,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub cutoff: f64,
    pub reject: bool,
    pub alpha: f64,
}

impl DntModel {
    pub fn d(&self) -> usize {
        self.centroid.len()
    }

    /// Squared Mahalanobis distance from an already selected feature vector to the centroid.
    pub fn distance_to_centroid(&self, selected: &[f64]) -> Result<f64> {
        self.metric.squared_distance(selected, &self.centroid)
    }

    pub fn statistic(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::SampleSizeMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let selected = apply_selection(&self.extractor.extract(x)?, &self.selection)?;
        self.distance_to_centroid(&selected.values)
    }

    pub fn report(&self, statistic: f64) -> TestReport {
        TestReport {
            statistic,
            cutoff: self.cutoff,
            reject: statistic > self.cutoff,
            alpha: self.alpha,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        save_to_string(self)
    }
}

pub fn dnt_test(x: &[f64], model: &DntModel) -> Result<TestReport> {
    Ok(model.report(model.statistic(x)?))
}

/// Order statistic `ceil((1 - alpha) N)` (1-based) of an ascending sample.
pub fn empirical_cutoff(sorted: &[f64], alpha: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Domain("cannot take a quantile of an empty sample".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let rank = ((1.0 - alpha) * sorted.len() as f64 - 1e-9).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Scores of `statistic_fn` on `reps` fresh N(0,1) samples, mapped by
/// `direction` and sorted ascending.
pub fn null_scores<F>(statistic_fn: F, n: usize, reps: usize, seed: u64, direction: Direction) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if reps < MIN_CALIBRATION_REPS {
        return Err(Error::Config(format!(
            "calibration needs at least {MIN_CALIBRATION_REPS} replicates, got {reps}"
        )));
    }
    let seeds = SeedScheme::new(seed);
    let null = DistributionSpec::standard_normal();
    let mut scores = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let x = seeds.sample(&null, n, r, purpose::CALIBRATE)?;
            let v = statistic_fn(x.as_ref())?;
            if v.is_nan() {
                return Err(Error::NonFinite("calibration statistic".into()));
            }
            Ok(direction.score(v))
        })
        .collect::<Result<Vec<f64>>>()?;
    scores.sort_by(f64::total_cmp);
    Ok(scores)
}

/// Monte Carlo `(1 - alpha)` cutoff of a statistic under N(0,1).
pub fn calibrate_cutoff<F>(statistic_fn: F, n: usize, reps: usize, alpha: f64, seed: u64, direction: Direction) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    empirical_cutoff(&null_scores(statistic_fn, n, reps, seed, direction)?, alpha)
}

fn simulate_features(
    seeds: &SeedScheme,
    spec: &DistributionSpec,
    cfg: &TrainConfig,
    count: usize,
    tag: &str,
) -> Result<Vec<FeatureVector>> {
    (0..count as u64)
        .into_par_iter()
        .map(|r| cfg.extractor.extract(seeds.sample(spec, cfg.n, r, tag)?.as_ref()))
        .collect()
}

fn column_mean<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let count = rows.len() as f64;
    let mut acc = vec![0.0; dim];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / count).collect()
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn selected(vectors: &[FeatureVector], selection: &SelectionModel) -> Result<Vec<FeatureVector>> {
    vectors.iter().map(|v| apply_selection(v, selection)).collect()
}

pub fn train(cfg: &TrainConfig) -> Result<DntModel> {
    cfg.validate()?;
    let seeds = SeedScheme::new(cfg.master_seed);
    let null = DistributionSpec::standard_normal();
    let dim = cfg.extractor.dimension(cfg.n);

    let h0 = simulate_features(&seeds, &null, cfg, cfg.h0_pool, purpose::TRAIN_H0)?;
    let h1 = simulate_features(&seeds, &cfg.h1_spec, cfg, cfg.h1_count, purpose::TRAIN_H1)?;

    let pool_mean = column_mean(h0.iter().map(|v| v.values.as_slice()), dim);
    let mut ranked: Vec<(f64, usize)> = h0
        .iter()
        .enumerate()
        .map(|(i, v)| (squared_euclidean(&v.values, &pool_mean), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let kept: Vec<FeatureVector> = ranked[..cfg.kept_count()]
        .iter()
        .map(|&(_, i)| h0[i].clone())
        .collect();

    let selection = fit_selection(&kept, &h1, cfg.d)?;
    let kept_sel = selected(&kept, &selection)?;
    let h1_sel = selected(&h1, &selection)?;
    let points: Vec<Vec<f64>> = kept_sel.iter().chain(&h1_sel).map(|v| v.values.clone()).collect();
    let labels: Vec<u8> = std::iter::repeat_n(0, kept_sel.len())
        .chain(std::iter::repeat_n(1, h1_sel.len()))
        .collect();
    let metric = train_metric(&points, &labels, &cfg.lmnn)?.metric;
    let centroid = column_mean(kept_sel.iter().map(|v| v.values.as_slice()), cfg.d);

    let null_pool = match cfg.fresh_null_reps {
        Some(reps) => simulate_features(&seeds, &null, cfg, reps, purpose::FRESH_NULL)?,
        None => h0,
    };
    let mut null_distances = null_pool
        .par_iter()
        .map(|v| metric.squared_distance(&apply_selection(v, &selection)?.values, &centroid))
        .collect::<Result<Vec<f64>>>()?;
    null_distances.sort_by(f64::total_cmp);
    let cutoff = empirical_cutoff(&null_distances, cfg.alpha)?;

    Ok(DntModel {
        extractor: cfg.extractor,
        selection,
        metric,
        centroid,
        null_distances,
        cutoff,
        alpha: cfg.alpha,
        n: cfg.n,
        config: cfg.clone(),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u64,
    extractor: Extractor,
    n: usize,
    d: usize,
    alpha: f64,
    cutoff: f64,
    mask: Vec<usize>,
    scores: Vec<f64>,
    /// Row-major, d * d.
    metric: Vec<f64>,
    centroid: Vec<f64>,
    null_distances: Vec<f64>,
    config: TrainConfig,
}

impl ModelFile {
    fn from_model(m: &DntModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            extractor: m.extractor,
            n: m.n,
            d: m.d(),
            alpha: m.alpha,
            cutoff: m.cutoff,
            mask: m.selection.mask.clone(),
            scores: m.selection.scores.clone(),
            metric: m.metric.to_row_major(),
            centroid: m.centroid.clone(),
            null_distances: m.null_distances.clone(),
            config: m.config.clone(),
        }
    }

    fn into_model(self) -> Result<DntModel> {
        let d = self.d;
        let expect_len = |field: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::format(field, format!("expected {want} entries, found {got}")))
            }
        };
        if d == 0 {
            return Err(Error::format("d", "must be positive"));
        }
        expect_len("mask", self.mask.len(), d)?;
        expect_len("centroid", self.centroid.len(), d)?;
        expect_len("metric", self.metric.len(), d * d)?;
        expect_len("scores", self.scores.len(), self.extractor.dimension(self.n))?;
        if self.mask.windows(2).any(|w| w[0] >= w[1]) || self.mask.last().is_some_and(|&j| j >= self.scores.len()) {
            return Err(Error::format("mask", "indices must be strictly increasing and within the feature range"));
        }
        let finite = |field: &str, xs: &[f64]| {
            if xs.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::format(field, "non-finite value"))
            }
        };
        finite("scores", &self.scores)?;
        finite("centroid", &self.centroid)?;
        finite("null_distances", &self.null_distances)?;
        let metric = MetricMatrix::from_row_major(d, &self.metric).map_err(|e| Error::format("metric", e.to_string()))?;
        if self.null_distances.is_empty() || self.null_distances.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::format("null_distances", "must be non-empty and ascending"));
        }
        let cutoff = empirical_cutoff(&self.null_distances, self.alpha).map_err(|e| Error::format("alpha", e.to_string()))?;
        if cutoff.to_bits() != self.cutoff.to_bits() {
            return Err(Error::format(
                "cutoff",
                format!("{} is not the (1 - alpha) order statistic {cutoff} of null_distances", self.cutoff),
            ));
        }
        if self.config.n != self.n || self.config.extractor != self.extractor || self.config.d != d {
            return Err(Error::format("config", "n, extractor or d disagree with the model"));
        }
        Ok(DntModel {
            extractor: self.extractor,
            selection: SelectionModel {
                scores: self.scores,
                mask: self.mask,
                d,
            },
            metric,
            centroid: self.centroid,
            null_distances: self.null_distances,
            cutoff: self.cutoff,
            alpha: self.alpha,
            n: self.n,
            config: self.config,
        })
    }
}

/// Compact JSON with a trailing newline; floats use shortest round-trip form.
pub fn save_to_string(model: &DntModel) -> Result<String> {
    let mut text =
        serde_json::to_string(&ModelFile::from_model(model)).map_err(|e| Error::format("model", e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn load_from_str(text: &str) -> Result<DntModel> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::format(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
    let Some(object) = value.as_object() else {
        return Err(Error::format("(root)", "expected a JSON object"));
    };
    if object.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(Error::format("format", format!("expected \"{MODEL_FORMAT}\"")));
    }
    let version = object
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::format("version", "missing or not a non-negative integer"))?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_path_to_error::deserialize(value)
        .map_err(|e| Error::format(e.path().to_string(), e.inner().to_string()))?;
    file.into_model()
}

pub fn save_model(model: &DntModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, save_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DntModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_from_str(&text)
}
