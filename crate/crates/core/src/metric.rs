//! Mahalanobis metric learning with the large-margin nearest-neighbour loss.
//!
//! The metric `M = U U^T` is learned by full-batch projected gradient descent
//! on
//!
//! ```text
//! L(M) = sum_{(i,j) in S} d_M(i,j)^2 + mu * sum_{(i,j,l)} [margin + d_M(i,j)^2 - d_M(i,l)^2]_+
//! ```
//!
//! where `S` holds each point's k Euclidean-nearest same-class neighbours and
//! the triplets pair those with the different-class points of the point's
//! 3k-neighbourhood. Triplets are mined once, before optimisation, so the
//! loss is a fixed convex function of `M`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
const MIN_STEP: f64 = 1e-300;

/// A symmetric positive semidefinite matrix defining `d(a, b) = sqrt((a-b)^T M (a-b))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    m: DMatrix<f64>,
}

impl MetricMatrix {
    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
        }
    }

    /// Wraps a matrix after checking symmetry and positive semidefiniteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("metric entry".into()));
        }
        let asym = (&m - m.transpose()).amax();
        if asym >= SYMMETRY_TOL {
            return Err(Error::Domain(format!("metric is not symmetric (max asymmetry {asym:e})")));
        }
        let metric = Self { m };
        let min_eig = metric.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::Domain(format!("metric is not PSD (smallest eigenvalue {min_eig:e})")));
        }
        Ok(metric)
    }

    pub fn from_row_major(d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(d, d, data))
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.m.transpose().iter().copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.m.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.m - self.m.transpose()).amax()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    /// `(a-b)^T M (a-b)`, with tiny negative rounding clamped to zero.
    pub fn squared_distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let d = self.dim();
        for v in [a, b] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        let delta = DVector::from_iterator(d, a.iter().zip(b).map(|(x, y)| x - y));
        let q = (&self.m * &delta).dot(&delta);
        if q < 0.0 && q > -1e-10 {
            return Ok(0.0);
        }
        Ok(q)
    }

    /// The factor `U = Q sqrt(Lambda)` with `U U^T = M`.
    pub fn factor(&self) -> MetricFactor {
        let eig = SymmetricEigen::new(self.m.clone());
        let mut u = eig.eigenvectors;
        for (mut col, &lambda) in u.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= lambda.max(0.0).sqrt();
        }
        MetricFactor { ut: u.transpose() }
    }
}

impl Serialize for MetricMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let data = Vec::<f64>::deserialize(de)?;
        let d = (data.len() as f64).sqrt().round() as usize;
        Self::from_row_major(d, &data).map_err(serde::de::Error::custom)
    }
}

pub fn mahalanobis_distance(a: &FeatureVector, b: &FeatureVector, m: &MetricMatrix) -> Result<f64> {
    Ok(m.squared_distance(&a.values, &b.values)?.sqrt())
}

/// `U^T`, applied to map features into the learned Euclidean space.
#[derive(Debug, Clone)]
pub struct MetricFactor {
    ut: DMatrix<f64>,
}

impl MetricFactor {
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.ut.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ut.ncols(),
                got: v.len(),
            });
        }
        let out = &self.ut * DVector::from_column_slice(v);
        Ok(out.iter().copied().collect())
    }
}

pub fn transform(v: &FeatureVector, m: &MetricMatrix) -> Result<FeatureVector> {
    Ok(FeatureVector {
        values: m.factor().apply(&v.values)?,
        extractor: v.extractor,
        selected: v.selected.clone(),
    })
}

/// Nearest PSD matrix in Frobenius norm: symmetrise, clip negative eigenvalues.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (mut col, &lambda) in scaled.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col *= lambda.max(0.0);
    }
    let out = scaled * q.transpose();
    (&out + out.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub focal: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet {
    /// (focal, target neighbour) pairs of the pull term.
    pub targets: Vec<(usize, usize)>,
    pub triplets: Vec<Triplet>,
    pub k: usize,
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points(features: &[Vec<f64>], labels: &[u8]) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let d = features.first().map_or(0, Vec::len);
    for f in features {
        if f.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: f.len() });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature value".into()));
        }
    }
    Ok(d)
}

/// Mines target neighbours and impostor triplets under the Euclidean metric.
///
/// For each focal point the targets are its `k` nearest same-class points
/// (fewer if the class is smaller) and the negatives are the different-class
/// points among its `3k` nearest neighbours overall. Distance ties go to the
/// lower index.
pub fn build_triplets(features: &[Vec<f64>], labels: &[u8], k: usize) -> Result<TripletSet> {
    check_points(features, labels)?;
    if k == 0 {
        return Err(Error::Domain("neighbour count k must be positive".into()));
    }
    let n = features.len();
    let mut targets = Vec::new();
    let mut triplets = Vec::new();
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_euclidean(&features[i], &features[j]), j)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let positives: Vec<usize> = order
            .iter()
            .filter(|(_, j)| labels[*j] == labels[i])
            .take(k)
            .map(|&(_, j)| j)
            .collect();
        let negatives: Vec<usize> = order
            .iter()
            .take(3 * k)
            .filter(|(_, j)| labels[*j] != labels[i])
            .map(|&(_, j)| j)
            .collect();
        for &j in &positives {
            targets.push((i, j));
            triplets.extend(negatives.iter().map(|&l| Triplet {
                focal: i,
                positive: j,
                negative: l,
            }));
        }
    }
    if targets.is_empty() {
        return Err(Error::ClassTooSmall(
            "no point has a same-class neighbour; every class needs at least two members".into(),
        ));
    }
    Ok(TripletSet { targets, triplets, k })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmnnConfig {
    /// Target neighbours per point.
    pub k: usize,
    /// Weight of the hinge (push) term.
    pub push_weight: f64,
    pub margin: f64,
    /// Gradient evaluations, accepted or rejected.
    pub max_iters: usize,
    /// Initial step size; halved every time a step would raise the loss.
    pub step_size: f64,
    /// Stop once an accepted step improves the loss by less than this relative amount.
    pub tolerance: f64,
}

impl Default for LmnnConfig {
    fn default() -> Self {
        Self {
            k: 25,
            push_weight: 1.0,
            margin: 1.0,
            max_iters: 200,
            step_size: 1e-3,
            tolerance: 1e-6,
        }
    }
}

impl LmnnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.k > 0
            && self.push_weight > 0.0
            && self.margin > 0.0
            && self.step_size > 0.0
            && self.tolerance > 0.0;
        if !positive || !self.push_weight.is_finite() || !self.step_size.is_finite() {
            return Err(Error::Config(format!("LMNN settings must be positive and finite: {self:?}")));
        }
        Ok(())
    }
}

/// One optimisation event, reported to observers.
#[derive(Debug)]
pub struct Step<'a> {
    pub iteration: usize,
    pub candidate: &'a DMatrix<f64>,
    pub loss: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct MetricFit {
    pub metric: MetricMatrix,
    /// Loss at the initial identity metric followed by each accepted step.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub triplets: usize,
}

impl MetricFit {
    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history starts with the initial loss")
    }
}

/// Pair differences and index bookkeeping shared by loss and gradient.
struct Objective {
    deltas: DMatrix<f64>,
    pull: Vec<usize>,
    hinge: Vec<(usize, usize)>,
    push_weight: f64,
    margin: f64,
}

impl Objective {
    fn new(features: &[Vec<f64>], set: &TripletSet, cfg: &LmnnConfig) -> Self {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut id = |a: usize, b: usize| -> usize {
            let key = (a.min(b), a.max(b));
            *index.entry(key).or_insert_with(|| {
                pairs.push(key);
                pairs.len() - 1
            })
        };
        let pull: Vec<usize> = set.targets.iter().map(|&(i, j)| id(i, j)).collect();
        let hinge: Vec<(usize, usize)> = set
            .triplets
            .iter()
            .map(|t| (id(t.focal, t.positive), id(t.focal, t.negative)))
            .collect();
        let d = features[0].len();
        let deltas = DMatrix::from_fn(pairs.len(), d, |p, c| {
            let (a, b) = pairs[p];
            features[a][c] - features[b][c]
        });
        Self {
            deltas,
            pull,
            hinge,
            push_weight: cfg.push_weight,
            margin: cfg.margin,
        }
    }

    /// Loss at `m` and the per-pair weights whose weighted outer-product sum is the gradient.
    fn evaluate(&self, m: &DMatrix<f64>) -> (f64, DVector<f64>) {
        let q = (&self.deltas * m).component_mul(&self.deltas).column_sum();
        let mut weights = DVector::zeros(q.len());
        let mut pull_loss = 0.0;
        for &p in &self.pull {
            pull_loss += q[p];
            weights[p] += 1.0;
        }
        let mut hinge_loss = 0.0;
        for &(pos, neg) in &self.hinge {
            let slack = self.margin + q[pos] - q[neg];
            if slack > 0.0 {
                hinge_loss += slack;
                weights[pos] += self.push_weight;
                weights[neg] -= self.push_weight;
            }
        }
        (pull_loss + self.push_weight * hinge_loss, weights)
    }

    fn gradient(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        let mut weighted = self.deltas.clone();
        for mut col in weighted.column_iter_mut() {
            col.component_mul_assign(weights);
        }
        let g = self.deltas.tr_mul(&weighted);
        (&g + g.transpose()) * 0.5
    }
}

/// LMNN loss of metric `m` on a fixed triplet set.
pub fn lmnn_loss(features: &[Vec<f64>], set: &TripletSet, m: &MetricMatrix, cfg: &LmnnConfig) -> f64 {
    Objective::new(features, set, cfg).evaluate(m.matrix()).0
}

pub fn train_metric(features: &[Vec<f64>], labels: &[u8], cfg: &LmnnConfig) -> Result<MetricFit> {
    train_metric_observed(features, labels, cfg, |_| {})
}

/// Projected gradient descent from the identity; `observer` sees every
/// candidate after PSD projection, whether or not it is accepted.
pub fn train_metric_observed(
    features: &[Vec<f64>],
    labels: &[u8],
    cfg: &LmnnConfig,
    mut observer: impl FnMut(&Step<'_>),
) -> Result<MetricFit> {
    cfg.validate()?;
    let d = check_points(features, labels)?;
    let set = build_triplets(features, labels, cfg.k)?;
    let objective = Objective::new(features, &set, cfg);

    let mut current = DMatrix::identity(d, d);
    let (mut loss, mut weights) = objective.evaluate(&current);
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { iteration: 0 });
    }
    let mut history = vec![loss];
    let mut step = cfg.step_size;
    let mut iterations = 0;
    while iterations < cfg.max_iters && step > MIN_STEP {
        iterations += 1;
        let grad = objective.gradient(&weights);
        let candidate = project_psd(&(&current - grad * step));
        let (cand_loss, cand_weights) = objective.evaluate(&candidate);
        if !cand_loss.is_finite() {
            return Err(Error::TrainingDiverged { iteration: iterations });
        }
        let accepted = cand_loss <= loss;
        observer(&Step {
            iteration: iterations,
            candidate: &candidate,
            loss: cand_loss,
            accepted,
        });
        if !accepted {
            step *= 0.5;
            continue;
        }
        let improvement = (loss - cand_loss) / loss.abs().max(f64::MIN_POSITIVE);
        current = candidate;
        loss = cand_loss;
        weights = cand_weights;
        history.push(loss);
        if improvement < cfg.tolerance {
            break;
        }
    }
    Ok(MetricFit {
        metric: MetricMatrix::new(current)?,
        loss_history: history,
        iterations,
        triplets: set.triplets.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            values,
            extractor: crate::features::Extractor::RawOrder,
            selected: None,
        }
    }

    fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> MetricMatrix {
        let a = DMatrix::from_fn(d, d + 1, |_, _| rng.random::<f64>() - 0.5);
        let m = &a * a.transpose();
        MetricMatrix::new((&m + m.transpose()) * 0.5).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = fv(vec![3.0, 4.0]);
        let b = fv(vec![0.0, 0.0]);
        assert_eq!(mahalanobis_distance(&a, &b, &MetricMatrix::identity(2)).unwrap(), 5.0);
        assert_eq!(mahalanobis_distance(&a, &a, &MetricMatrix::identity(2)).unwrap(), 0.0);
        let m = MetricMatrix::from_row_major(2, &[4.0, 0.0, 0.0, 1.0]).unwrap();
        let c = fv(vec![1.0, 0.0]);
        assert_eq!(mahalanobis_distance(&c, &b, &m).unwrap(), 2.0);
        assert!(mahalanobis_distance(&c, &fv(vec![1.0]), &m).is_err());
    }

    #[test]
    fn invalid_metrics_are_rejected() {
        assert!(MetricMatrix::from_row_major(2, &[1.0, 0.5, 0.0, 1.0]).is_err());
        assert!(MetricMatrix::from_row_major(2, &[1.0, 0.0, 0.0, -1.0]).is_err());
        assert!(MetricMatrix::from_row_major(2, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn transform_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = fv((0..5).map(|_| rng.random::<f64>()).collect());
        let b = fv((0..5).map(|_| rng.random::<f64>()).collect());
        let id = MetricMatrix::identity(5);
        let (ta, tb) = (transform(&a, &id).unwrap(), transform(&b, &id).unwrap());
        let e = squared_euclidean(&ta.values, &tb.values).sqrt();
        assert!((e - mahalanobis_distance(&a, &b, &id).unwrap()).abs() < 1e-12);
        let zero = MetricMatrix::from_row_major(5, &[0.0; 25]).unwrap();
        let (za, zb) = (transform(&a, &zero).unwrap(), transform(&b, &zero).unwrap());
        assert_eq!(squared_euclidean(&za.values, &zb.values), 0.0);
        assert!(transform(&fv(vec![1.0]), &id).is_err());
    }

    #[test]
    fn factored_distance_matches_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let d = rng.random_range(1..12);
            let m = random_psd(&mut rng, d);
            let a = fv((0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect());
            let b = fv((0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect());
            let f = m.factor();
            let ta = f.apply(&a.values).unwrap();
            let tb = f.apply(&b.values).unwrap();
            let direct = mahalanobis_distance(&a, &b, &m).unwrap();
            assert!((squared_euclidean(&ta, &tb).sqrt() - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_clips_negative_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = project_psd(&m);
        let metric = MetricMatrix::new(p.clone()).unwrap();
        assert!(metric.min_eigenvalue() > -1e-12);
        assert!((p[(0, 0)] - 1.5).abs() < 1e-12 && (p[(0, 1)] - 1.5).abs() < 1e-12);
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((project_psd(&id) - id).amax() < 1e-14);
    }

    #[test]
    fn separated_clusters_have_no_inverted_triplets() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for class in 0..2u8 {
            for _ in 0..5 {
                let off = 100.0 * class as f64;
                pts.push(vec![off + rng.random::<f64>(), rng.random::<f64>()]);
                labels.push(class);
            }
        }
        let set = build_triplets(&pts, &labels, 2).unwrap();
        assert!(!set.triplets.is_empty());
        let mut brute = 0.0;
        for t in &set.triplets {
            let dp = squared_euclidean(&pts[t.focal], &pts[t.positive]);
            let dn = squared_euclidean(&pts[t.focal], &pts[t.negative]);
            assert!(dp < dn);
            brute += (1.0 + dp - dn).max(0.0);
        }
        assert_eq!(brute, 0.0);
        let pull: f64 = set.targets.iter().map(|&(i, j)| squared_euclidean(&pts[i], &pts[j])).sum();
        let cfg = LmnnConfig::default();
        let loss = lmnn_loss(&pts, &set, &MetricMatrix::identity(2), &cfg);
        assert!((loss - (pull + brute)).abs() < 1e-9);
    }

    #[test]
    fn three_point_enumeration() {
        let pts = vec![vec![0.0], vec![2.0], vec![1.2]];
        let set = build_triplets(&pts, &[0, 0, 1], 1).unwrap();
        assert_eq!(set.targets, vec![(0, 1), (1, 0)]);
        assert!(set.triplets.len() <= 2);
        assert_eq!(
            set.triplets,
            vec![
                Triplet { focal: 0, positive: 1, negative: 2 },
                Triplet { focal: 1, positive: 0, negative: 2 },
            ]
        );
    }

    #[test]
    fn triplets_do_not_depend_on_input_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 3 == 0) as u8).collect();
        let set = build_triplets(&pts, &labels, 3).unwrap();
        let perm: Vec<usize> = (0..20).rev().collect();
        let pts2: Vec<_> = perm.iter().map(|&i| pts[i].clone()).collect();
        let labels2: Vec<_> = perm.iter().map(|&i| labels[i]).collect();
        let set2 = build_triplets(&pts2, &labels2, 3).unwrap();
        let mut a: Vec<_> = set.triplets.iter().map(|t| (t.focal, t.positive, t.negative)).collect();
        let mut b: Vec<_> = set2
            .triplets
            .iter()
            .map(|t| (perm[t.focal], perm[t.positive], perm[t.negative]))
            .collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn build_triplets_errors() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(build_triplets(&pts, &[0, 1], 1), Err(Error::ClassTooSmall(_))));
        assert!(build_triplets(&pts, &[0, 0], 0).is_err());
        assert!(build_triplets(&pts, &[0], 1).is_err());
    }

    #[test]
    fn zero_iterations_returns_identity() {
        let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![3.0, 3.0], vec![4.0, 3.0]];
        let cfg = LmnnConfig {
            k: 1,
            max_iters: 0,
            ..LmnnConfig::default()
        };
        let fit = train_metric(&pts, &[0, 0, 1, 1], &cfg).unwrap();
        assert_eq!(fit.metric, MetricMatrix::identity(2));
        assert_eq!(fit.loss_history.len(), 1);
    }

    fn informative_problem(seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..80 {
            let class = (i % 2) as u8;
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            pts.push(vec![class as f64 * 1.5 + 0.5 * z1, 2.0 * z2]);
            labels.push(class);
        }
        (pts, labels)
    }

    #[test]
    fn informative_direction_is_upweighted() {
        let (pts, labels) = informative_problem(5);
        let cfg = LmnnConfig {
            k: 5,
            step_size: 1e-2,
            ..LmnnConfig::default()
        };
        let fit = train_metric(&pts, &labels, &cfg).unwrap();
        let m = fit.metric.matrix();
        assert!(m[(0, 0)] / m[(1, 1)] > 1.0, "{m}");
        assert!(fit.final_loss() <= fit.initial_loss());
        assert!(fit.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn every_candidate_is_symmetric_psd() {
        let (pts, labels) = informative_problem(6);
        let cfg = LmnnConfig {
            k: 4,
            step_size: 0.5,
            max_iters: 40,
            ..LmnnConfig::default()
        };
        let mut seen = 0;
        train_metric_observed(&pts, &labels, &cfg, |step| {
            seen += 1;
            let asym = (step.candidate - step.candidate.transpose()).amax();
            assert!(asym < 1e-10);
            let min_eig = SymmetricEigen::new(step.candidate.clone())
                .eigenvalues
                .min();
            assert!(min_eig >= -1e-8);
        })
        .unwrap();
        assert!(seen > 0);
    }

    #[test]
    fn single_class_training_shrinks_trace() {
        let (pts, _) = informative_problem(7);
        let labels = vec![0u8; pts.len()];
        let cfg = LmnnConfig {
            k: 3,
            step_size: 1e-2,
            max_iters: 30,
            ..LmnnConfig::default()
        };
        let mut prev_trace = 2.0;
        let fit = train_metric_observed(&pts, &labels, &cfg, |step| {
            if step.accepted {
                let t = step.candidate.trace();
                assert!(t <= prev_trace + 1e-12);
                prev_trace = t;
            }
        })
        .unwrap();
        assert!(fit.metric.trace() <= 2.0);
    }

    #[test]
    fn diverging_step_is_reported() {
        let pts = vec![vec![0.0], vec![1e200], vec![2e200], vec![3e200]];
        let cfg = LmnnConfig {
            k: 1,
            ..LmnnConfig::default()
        };
        assert!(matches!(
            train_metric(&pts, &[0, 0, 1, 1], &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }
}
