//! Six classical normality statistics: Kolmogorov-Smirnov (Lilliefors form),
//! Anderson-Darling, Jarque-Bera, Glen-Leemis-Barr, the robust Jarque-Bera of
//! Gel and Gastwirth, and the Bonett-Seier Geary-kurtosis z.
//!
//! All of them estimate location and scale from the sample (1/n moments), so
//! they are affine invariant. No analytic p-values are produced; cutoffs come
//! from [`crate::engine::calibrate_cutoff`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::stats::{check_values, mean_sd, median_of_sorted, normal_cdf, sample_moments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticName {
    Ks,
    Ad,
    Jb,
    Glb,
    Gg,
    Bs,
}

impl StatisticName {
    pub const ALL: [StatisticName; 6] = [
        StatisticName::Ks,
        StatisticName::Ad,
        StatisticName::Jb,
        StatisticName::Glb,
        StatisticName::Gg,
        StatisticName::Bs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StatisticName::Ks => "KS",
            StatisticName::Ad => "AD",
            StatisticName::Jb => "JB",
            StatisticName::Glb => "GLB",
            StatisticName::Gg => "GG",
            StatisticName::Bs => "BS",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            StatisticName::Bs => Direction::TwoSided,
            _ => Direction::Upper,
        }
    }

    pub fn compute(self, x: &[f64]) -> Result<TestStatistic> {
        match self {
            StatisticName::Ks => ks_statistic(x),
            StatisticName::Ad => ad_statistic(x),
            StatisticName::Jb => jb_statistic(x),
            StatisticName::Glb => glb_statistic(x),
            StatisticName::Gg => gg_statistic(x),
            StatisticName::Bs => bs_statistic(x),
        }
    }
}

impl fmt::Display for StatisticName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatisticName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Domain(format!("unknown statistic `{s}`")))
    }
}

/// Which tail of the null distribution leads to rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Reject when the statistic is large.
    Upper,
    /// Reject when the absolute value is large.
    TwoSided,
}

impl Direction {
    /// Maps a raw statistic onto the scale the cutoff lives on.
    pub fn score(self, value: f64) -> f64 {
        match self {
            Direction::Upper => value,
            Direction::TwoSided => value.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStatistic {
    pub name: StatisticName,
    pub value: f64,
    pub direction: Direction,
}

impl TestStatistic {
    fn new(name: StatisticName, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{name} statistic")));
        }
        Ok(Self {
            name,
            value,
            direction: name.direction(),
        })
    }

    pub fn rejection_score(&self) -> f64 {
        self.direction.score(self.value)
    }
}

/// Fitted normal CDF values at the ascending order statistics.
///
/// Both tails are kept separately: `upper[i] = 1 - lower[i]` is computed as
/// `Phi(-z)` when built from a sample, so logs stay finite for extreme points.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCdf {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl FittedCdf {
    pub fn from_sample(x: &[f64]) -> Result<Self> {
        check_values(x)?;
        let (mu, sd) = mean_sd(x)?;
        let mut z: Vec<f64> = x.iter().map(|v| (v - mu) / sd).collect();
        z.sort_by(f64::total_cmp);
        Ok(Self {
            lower: z.iter().map(|&t| normal_cdf(t)).collect(),
            upper: z.iter().map(|&t| normal_cdf(-t)).collect(),
        })
    }

    /// Test seam: statistics straight from a supplied ascending u-vector.
    pub fn from_u(u: &[f64]) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::TooFewObservations { needed: 1, got: 0 });
        }
        if u.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Domain("u-values must lie in (0, 1)".into()));
        }
        if u.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain("u-values must be ascending".into()));
        }
        Ok(Self {
            lower: u.to_vec(),
            upper: u.iter().map(|v| 1.0 - v).collect(),
        })
    }

    pub fn u(&self) -> &[f64] {
        &self.lower
    }

    fn n(&self) -> f64 {
        self.lower.len() as f64
    }

    /// `max_i max(i/n - u_i, u_i - (i-1)/n)`.
    pub fn ks(&self) -> f64 {
        let n = self.n();
        self.lower
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                let i = (k + 1) as f64;
                (i / n - u).max(u - (i - 1.0) / n)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Anderson-Darling A^2.
    pub fn ad(&self) -> f64 {
        let len = self.lower.len();
        let n = self.n();
        let s: f64 = (0..len)
            .map(|k| {
                let w = (2 * k + 1) as f64;
                w * (self.lower[k].ln() + self.upper[len - 1 - k].ln())
            })
            .sum();
        -n - s / n
    }

    /// Glen-Leemis-Barr P_s. Each `u_(i)` is mapped through the Beta(i, n-i+1)
    /// CDF of the i-th uniform order statistic, the results are sorted, and
    /// `P_s = -n - (1/n) sum_i [(2n+1-2i) ln p_[i] + (2i-1) ln(1 - p_[i])]`.
    pub fn glb(&self) -> f64 {
        let len = self.lower.len();
        let n = self.n();
        let mut p: Vec<(f64, f64)> = (0..len)
            .map(|k| {
                let (a, b) = ((k + 1) as f64, (len - k) as f64);
                let lo = beta_reg(a, b, self.lower[k]);
                let up = beta_reg(b, a, self.upper[k]);
                (lo.max(f64::MIN_POSITIVE), up.max(f64::MIN_POSITIVE))
            })
            .collect();
        p.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)));
        let s: f64 = p
            .iter()
            .enumerate()
            .map(|(k, &(lo, up))| {
                let i = (k + 1) as f64;
                (2.0 * n + 1.0 - 2.0 * i) * lo.ln() + (2.0 * i - 1.0) * up.ln()
            })
            .sum();
        -n - s / n
    }
}

pub fn ks_statistic(x: &[f64]) -> Result<TestStatistic> {
    TestStatistic::new(StatisticName::Ks, FittedCdf::from_sample(x)?.ks())
}

pub fn ad_statistic(x: &[f64]) -> Result<TestStatistic> {
    TestStatistic::new(StatisticName::Ad, FittedCdf::from_sample(x)?.ad())
}

pub fn glb_statistic(x: &[f64]) -> Result<TestStatistic> {
    TestStatistic::new(StatisticName::Glb, FittedCdf::from_sample(x)?.glb())
}

/// `(n/6) (S^2 + (K - 3)^2 / 4)`.
pub fn jarque_bera(n: usize, skewness: f64, kurtosis: f64) -> f64 {
    let excess = kurtosis - 3.0;
    n as f64 / 6.0 * (skewness * skewness + excess * excess / 4.0)
}

pub fn jb_statistic(x: &[f64]) -> Result<TestStatistic> {
    let m = sample_moments(x)?;
    TestStatistic::new(StatisticName::Jb, jarque_bera(x.len(), m.skewness, m.kurtosis))
}

/// Robust scale `sqrt(pi/2) * mean |x - median|`.
pub fn average_absolute_deviation_from_median(x: &[f64]) -> Result<f64> {
    check_values(x)?;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median_of_sorted(&sorted);
    let mad = x.iter().map(|v| (v - med).abs()).sum::<f64>() / x.len() as f64;
    Ok((std::f64::consts::PI / 2.0).sqrt() * mad)
}

const RJB_C1: f64 = 6.0;
const RJB_C2: f64 = 64.0;

pub fn gg_statistic(x: &[f64]) -> Result<TestStatistic> {
    let m = sample_moments(x)?;
    let j = average_absolute_deviation_from_median(x)?;
    if j.is_nan() || j <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    let n = x.len() as f64;
    let skew_term = m.m3 / j.powi(3);
    let kurt_term = m.m4 / j.powi(4) - 3.0;
    let value = n / RJB_C1 * skew_term * skew_term + n / RJB_C2 * kurt_term * kurt_term;
    TestStatistic::new(StatisticName::Gg, value)
}

/// Geary-type kurtosis estimate `13.29 (ln sigma - ln tau)`.
pub fn geary_omega(x: &[f64]) -> Result<f64> {
    check_values(x)?;
    let (mu, sigma) = mean_sd(x)?;
    let tau = x.iter().map(|v| (v - mu).abs()).sum::<f64>() / x.len() as f64;
    Ok(13.29 * (sigma.ln() - tau.ln()))
}

pub fn bs_statistic(x: &[f64]) -> Result<TestStatistic> {
    let omega = geary_omega(x)?;
    let n = x.len() as f64;
    TestStatistic::new(StatisticName::Bs, (n + 2.0).sqrt() * (omega - 3.0) / 3.54)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qq::plotting_positions;
    use crate::stats::{sample, DistributionSpec, SeedScheme};

    fn triple_u() -> Vec<f64> {
        let z = 1.5_f64.sqrt();
        vec![normal_cdf(-z), 0.5, normal_cdf(z)]
    }

    #[test]
    fn ks_examples() {
        let n = 100;
        let p: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let d = FittedCdf::from_u(&p).unwrap().ks();
        assert!((d - 0.005).abs() < 1e-12);
        // 1/n standardisation of [-1, 0, 1] puts the extremes at +-sqrt(3/2).
        let v = ks_statistic(&[-1.0, 0.0, 1.0]).unwrap().value;
        let u = triple_u();
        let oracle = (1.0 / 3.0 - u[0]).max(u[2] - 2.0 / 3.0);
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.2230).abs() < 1e-4);
    }

    #[test]
    fn ad_example() {
        let a = ad_statistic(&[-1.0, 0.0, 1.0]).unwrap().value;
        assert!((a - 0.246).abs() < 1e-3, "{a}");
        let seam = FittedCdf::from_u(&triple_u()).unwrap().ad();
        assert!((a - seam).abs() < 1e-12);
    }

    #[test]
    fn jb_examples() {
        let v = jb_statistic(&[-1.0, -1.0, 1.0, 1.0]).unwrap().value;
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(jarque_bera(100, 0.0, 3.0), 0.0);
    }

    #[test]
    fn glb_u_level_examples() {
        // Beta(a, b) CDF for integer parameters as a binomial tail.
        fn beta_cdf(a: usize, b: usize, x: f64) -> (f64, f64) {
            let m = a + b - 1;
            let term = |j: usize| {
                let c = (0..j).fold(1.0, |acc, t| acc * (m - t) as f64 / (t + 1) as f64);
                c * x.powi(j as i32) * (1.0 - x).powi((m - j) as i32)
            };
            ((a..=m).map(term).sum(), (0..a).map(term).sum())
        }
        let eps = 0.01;
        let u = [0.5 - eps, 0.5, 0.5 + eps];
        let g = FittedCdf::from_u(&u).unwrap().glb();
        let mut p: Vec<(f64, f64)> = (0..3).map(|k| beta_cdf(k + 1, 3 - k, u[k])).collect();
        p.sort_by(|x, y| x.0.total_cmp(&y.0));
        let oracle = -3.0
            - (5.0 * p[0].0.ln() + p[0].1.ln()
                + 3.0 * p[1].0.ln() + 3.0 * p[1].1.ln()
                + p[2].0.ln() + 5.0 * p[2].1.ln())
                / 3.0;
        assert!(g.is_finite());
        assert!((g - oracle).abs() < 1e-12, "{g} vs {oracle}");

        let n = 20;
        let even: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        let low: Vec<f64> = (1..=n).map(|i| 1e-4 * i as f64).collect();
        let high: Vec<f64> = (1..=n).map(|i| 1.0 - 1e-4 * (n + 1 - i) as f64).collect();
        let base = FittedCdf::from_u(&even).unwrap().glb();
        assert!(FittedCdf::from_u(&low).unwrap().glb() > base);
        assert!(FittedCdf::from_u(&high).unwrap().glb() > base);
    }

    #[test]
    fn gg_scale_converges_for_normal() {
        let x = sample(&DistributionSpec::standard_normal(), 100_000, 3).unwrap().values;
        let j = average_absolute_deviation_from_median(&x).unwrap();
        assert!((j - 1.0).abs() < 0.02, "{j}");
    }

    #[test]
    fn gg_symmetric_sample_has_no_skew_term() {
        let base = sample(&DistributionSpec::case(2).unwrap(), 30, 1).unwrap().values;
        let x: Vec<f64> = base.iter().flat_map(|v| [1.0 + v, 1.0 - v]).collect();
        let m = sample_moments(&x).unwrap();
        let j = average_absolute_deviation_from_median(&x).unwrap();
        assert!((m.m3 / j.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn bs_omega_and_sign() {
        let x = sample(&DistributionSpec::standard_normal(), 100_000, 4).unwrap().values;
        let w = geary_omega(&x).unwrap();
        assert!((w - 3.0).abs() < 0.05, "{w}");
        let heavy = sample(&DistributionSpec::case(7).unwrap(), 1000, 5).unwrap().values;
        let light = sample(&DistributionSpec::case(5).unwrap(), 1000, 6).unwrap().values;
        assert!(bs_statistic(&heavy).unwrap().value > 0.0);
        assert!(bs_statistic(&light).unwrap().value < 0.0);
        assert_eq!(bs_statistic(&light).unwrap().direction, Direction::TwoSided);
    }

    #[test]
    fn ad_positive_on_random_samples() {
        let scheme = SeedScheme::new(9);
        for rep in 0..1000 {
            let case = (rep % 15) as u32 + 1;
            let x = scheme
                .sample(&DistributionSpec::case(case).unwrap(), 12, rep, "unit")
                .unwrap();
            assert!(ad_statistic(&x.values).unwrap().value > 0.0);
        }
    }

    #[test]
    fn extreme_outlier_keeps_statistics_finite() {
        let mut x = vec![0.0; 99];
        for (i, v) in x.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin() * 1e-3;
        }
        x.push(1e6);
        for name in StatisticName::ALL {
            assert!(name.compute(&x).unwrap().value.is_finite(), "{name}");
        }
    }

    #[test]
    fn degenerate_and_short_samples_error() {
        for name in StatisticName::ALL {
            assert!(matches!(name.compute(&[2.0; 10]), Err(Error::DegenerateSample)));
            assert!(name.compute(&[1.0, 2.0]).is_err());
        }
    }

    #[test]
    fn u_seam_validates() {
        assert!(FittedCdf::from_u(&[0.2, 0.1]).is_err());
        assert!(FittedCdf::from_u(&[0.0, 0.5]).is_err());
        let p = plotting_positions(10).unwrap();
        assert!(FittedCdf::from_u(&p).is_ok());
    }

    #[test]
    fn names_parse() {
        for name in StatisticName::ALL {
            assert_eq!(name.as_str().to_lowercase().parse::<StatisticName>().unwrap(), name);
        }
        assert!("sw".parse::<StatisticName>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn statistics_are_affine_and_permutation_invariant(
            seed in 0u64..10_000,
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
            case in 1u32..=15,
        ) {
            let x = sample(&DistributionSpec::case(case).unwrap(), 40, seed).unwrap().values;
            let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let mut z = x.clone();
            z.reverse();
            for name in StatisticName::ALL {
                let a = name.compute(&x).unwrap().value;
                let b = name.compute(&y).unwrap().value;
                let c = name.compute(&z).unwrap().value;
                proptest::prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} {} {}", name, a, b);
                proptest::prop_assert!((a - c).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn jb_and_rjb_are_nonnegative(seed in 0u64..10_000, case in 1u32..=15) {
            let x = sample(&DistributionSpec::case(case).unwrap(), 25, seed).unwrap().values;
            proptest::prop_assert!(jb_statistic(&x).unwrap().value >= 0.0);
            proptest::prop_assert!(gg_statistic(&x).unwrap().value >= 0.0);
        }
    }
}
