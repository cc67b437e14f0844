//! Numeric foundation: the fifteen simulation distributions, seeded substreams,
//! the standard normal CDF and quantile, and 1/n moments.
//!
//! Every random draw in the crate goes through [`SeedScheme`] so that a run is a
//! pure function of its master seed, independent of thread scheduling.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sample any statistic accepts.
pub const MIN_SAMPLE: usize = 3;

/// Case id of the standard normal null row.
pub const NULL_CASE: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistributionKind {
    Normal,
    StudentT,
    Uniform,
    Beta,
    Laplace,
    Gamma,
    ChiSquare,
}

/// One of the fifteen distributions of the power study.
///
/// Parameters are interpreted per kind: `(df, _)` for Student t and chi-square,
/// `(a, b)` for uniform and beta, `(shape, rate)` for gamma and
/// `(location, scale)` for normal and Laplace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub params: [f64; 2],
    pub case_id: u32,
}

impl DistributionSpec {
    /// The distribution of power-study case `case_id` (1..=15).
    pub fn case(case_id: u32) -> Result<Self> {
        use DistributionKind::*;
        let (kind, params) = match case_id {
            1 => (StudentT, [2.0, 0.0]),
            2 => (StudentT, [5.0, 0.0]),
            3 => (StudentT, [10.0, 0.0]),
            4 => (StudentT, [50.0, 0.0]),
            5 => (Uniform, [0.0, 1.0]),
            6 => (Beta, [2.0, 2.0]),
            7 => (Laplace, [0.0, 1.0]),
            8 => (Beta, [6.0, 2.0]),
            9 => (Beta, [3.0, 2.0]),
            10 => (Beta, [2.0, 1.0]),
            11 => (Gamma, [1.0, 5.0]),
            12 => (Gamma, [4.0, 5.0]),
            13 => (ChiSquare, [4.0, 0.0]),
            14 => (ChiSquare, [20.0, 0.0]),
            15 => (Normal, [0.0, 1.0]),
            other => return Err(Error::Domain(format!("case id {other} outside 1..=15"))),
        };
        Ok(Self {
            kind,
            params,
            case_id,
        })
    }

    pub fn standard_normal() -> Self {
        Self::case(NULL_CASE).expect("null case exists")
    }

    /// All fifteen cases in table order.
    pub fn all_cases() -> Vec<Self> {
        (1..=NULL_CASE)
            .map(|c| Self::case(c).expect("case in range"))
            .collect()
    }

    /// Checks that the parameters are admissible for the kind.
    pub fn validate(&self) -> Result<()> {
        use DistributionKind::*;
        let [a, b] = self.params;
        let ok = match self.kind {
            StudentT | ChiSquare => a > 0.0,
            Uniform => a < b,
            Beta | Gamma => a > 0.0 && b > 0.0,
            Normal | Laplace => a.is_finite() && b > 0.0,
        };
        if ok && a.is_finite() && b.is_finite() && (1..=NULL_CASE).contains(&self.case_id) {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid parameters for {self}")))
        }
    }

    /// Table label, e.g. `t(2)` or `Beta(6,2)`.
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Parses a table label (`t(5)`, `U(0,1)`, `chi2(20)`, ...), a `caseN`
    /// reference, or one of the aliases `normal`, `uniform`, `laplace`.
    pub fn parse_label(text: &str) -> Result<Self> {
        let key: String = text
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_lowercase();
        if let Some(num) = key.strip_prefix("case") {
            let id = num
                .parse::<u32>()
                .map_err(|_| Error::Domain(format!("bad case reference `{text}`")))?;
            return Self::case(id);
        }
        let alias = match key.as_str() {
            "normal" | "n(0,1)" | "norm" => Some(15),
            "uniform" | "u(0,1)" => Some(5),
            "laplace" | "laplace(0,1)" => Some(7),
            "chisq(4)" | "chi-square(4)" => Some(13),
            "chisq(20)" | "chi-square(20)" => Some(14),
            _ => None,
        };
        if let Some(id) = alias {
            return Self::case(id);
        }
        Self::all_cases()
            .into_iter()
            .find(|s| s.label().to_ascii_lowercase() == key)
            .ok_or_else(|| {
                let valid: Vec<String> = Self::all_cases().iter().map(|s| s.label()).collect();
                Error::Domain(format!(
                    "unknown distribution `{text}`; expected one of {}",
                    valid.join(", ")
                ))
            })
    }

    /// Draws one value. Inverse-CDF for uniform and Laplace, rand_distr
    /// samplers for the rest.
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        use DistributionKind::*;
        let [a, b] = self.params;
        match self.kind {
            Normal => {
                let z: f64 = StandardNormal.sample(rng);
                a + b * z
            }
            StudentT => rand_distr::StudentT::new(a).expect("validated").sample(rng),
            Uniform => {
                let u: f64 = Open01.sample(rng);
                a + (b - a) * u
            }
            Beta => rand_distr::Beta::new(a, b).expect("validated").sample(rng),
            Laplace => {
                let u: f64 = Open01.sample(rng);
                let centred = u - 0.5;
                a - b * centred.signum() * (1.0 - 2.0 * centred.abs()).ln()
            }
            // rand_distr parameterises gamma by scale.
            Gamma => rand_distr::Gamma::new(a, 1.0 / b).expect("validated").sample(rng),
            ChiSquare => ChiSquared::new(a).expect("validated").sample(rng),
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use DistributionKind::*;
        let [a, b] = self.params;
        match self.kind {
            Normal => write!(f, "N({a},{b})"),
            StudentT => write!(f, "t({a})"),
            Uniform => write!(f, "U({a},{b})"),
            Beta => write!(f, "Beta({a},{b})"),
            Laplace => write!(f, "Laplace({a},{b})"),
            Gamma => write!(f, "Gamma({a},{b})"),
            ChiSquare => write!(f, "chi2({a})"),
        }
    }
}

/// Purpose tags that keep training, calibration and test draws on disjoint substreams.
pub mod purpose {
    pub const TEST: &str = "test";
    pub const CALIBRATE: &str = "calibrate";
    pub const TRAIN_H0: &str = "train-h0";
    pub const TRAIN_H1: &str = "train-h1";
    pub const FRESH_NULL: &str = "fresh-null";
}

/// Keyed substream derivation from a single master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedScheme {
    pub master_seed: u64,
}

impl SeedScheme {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Substream seed for `(case, replicate, purpose)`.
    ///
    /// Each step is a splitmix64 finaliser applied to the running state xor-ed
    /// with the next key, so for a fixed prefix the map from replicate index to
    /// seed is a bijection.
    pub fn stream(&self, case_id: u32, replicate: u64, purpose: &str) -> u64 {
        let mut h = mix64(self.master_seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
        h = mix64(h ^ fnv1a64(purpose.as_bytes()));
        h = mix64(h ^ u64::from(case_id).wrapping_mul(0xA076_1D64_78BD_642F));
        mix64(h ^ replicate)
    }

    /// Draws a sample of `n` from `spec` on the given substream.
    pub fn sample(&self, spec: &DistributionSpec, n: usize, replicate: u64, purpose: &str) -> Result<Sample> {
        sample(spec, n, self.stream(spec.case_id, replicate, purpose))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A drawn sample together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub spec: DistributionSpec,
    pub seed: u64,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[f64]> for Sample {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Draws `n` i.i.d. values from `spec`; a pure function of `(spec, n, seed)`.
pub fn sample(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Sample> {
    spec.validate()?;
    if n < MIN_SAMPLE {
        return Err(Error::TooFewObservations {
            needed: MIN_SAMPLE,
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n).map(|_| spec.draw(&mut rng)).collect();
    Ok(Sample {
        values,
        spec: *spec,
        seed,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile probability {p} outside (0, 1)")));
    }
    if p > 0.5 {
        return Ok(-normal_quantile(1.0 - p)?);
    }
    // Lower half: start from the inverse erfc and polish with Newton steps
    // against the tail-accurate CDF.
    let mut x = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    for _ in 0..2 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density <= 0.0 {
            break;
        }
        x -= (normal_cdf(x) - p) / density;
    }
    Ok(x)
}

/// Sample moments with 1/n normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub skewness: f64,
    /// Non-excess kurtosis m4 / m2^2 (3 for the normal).
    pub kurtosis: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

pub(crate) fn check_values(x: &[f64]) -> Result<()> {
    check_len(x, MIN_SAMPLE)
}

fn check_len(x: &[f64], needed: usize) -> Result<()> {
    if x.len() < needed {
        return Err(Error::TooFewObservations {
            needed,
            got: x.len(),
        });
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sample value {bad}")));
    }
    Ok(())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean and population standard deviation, rejecting zero-variance input.
pub(crate) fn mean_sd(x: &[f64]) -> Result<(f64, f64)> {
    check_len(x, 2)?;
    let mu = mean(x);
    let m2 = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64;
    let sd = m2.sqrt();
    let scale = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if sd.is_nan() || sd <= 8.0 * f64::EPSILON * scale {
        return Err(Error::DegenerateSample);
    }
    Ok((mu, sd))
}

pub fn sample_moments(x: &[f64]) -> Result<Moments> {
    check_values(x)?;
    let (mean, sd) = mean_sd(x)?;
    let n = x.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    Ok(Moments {
        mean,
        sd,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
        m2,
        m3,
        m4,
    })
}

/// Shifts and scales to mean 0 and population standard deviation 1.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    let (mu, sd) = mean_sd(x)?;
    Ok(x.iter().map(|v| (v - mu) / sd).collect())
}

/// Ascending copy of the standardized sample.
pub fn sorted_standardized(x: &[f64]) -> Result<Vec<f64>> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    standardize(&sorted)
}

pub fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
