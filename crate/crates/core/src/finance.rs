//! Two-asset portfolio data: simple returns, blends, binned return
//! distributions, mean-variance statistics and synthetic Gaussian assets.
//!
//! Dates are carried as [`Day`] counts so this module stays free of calendar
//! handling; the command-line crate converts ISO dates on the way in.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

// Needed without std; the unused-import lint misfires on recent toolchains.
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{bail, Result};
use crate::eval::FrontierPoint;

/// Lower edge of the return grid.
pub const RETURN_LOW: f64 = -0.1;
/// Upper edge of the return grid.
pub const RETURN_HIGH: f64 = 0.1;
/// Bins in a portfolio return distribution.
pub const NUM_BINS: usize = 16;
/// Grid-spaced blend weights in the training set.
pub const GRID_DATASETS: usize = 1000;
/// Randomly drawn blend weights in the training set.
pub const RANDOM_DATASETS: usize = 1000;

/// Midpoint of bin `i` when `[RETURN_LOW, RETURN_HIGH]` is split into `n` bins.
pub fn bin_midpoint(i: usize, n: usize) -> f64 {
    RETURN_LOW + (RETURN_HIGH - RETURN_LOW) * (i as f64 + 0.5) / n as f64
}

/// Bin holding `r`, with out-of-range returns clamped to the edge bins.
pub fn bin_index(r: f64) -> usize {
    let t = (r - RETURN_LOW) / (RETURN_HIGH - RETURN_LOW) * NUM_BINS as f64;
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(NUM_BINS - 1)
    }
}

/// Calendar day as a plain ordinal (days since any fixed origin).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Day(pub i32);

/// Daily simple returns of one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    asset_id: String,
    dates: Vec<Day>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(asset_id: impl Into<String>, dates: Vec<Day>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            bail!(Size, "{} dates but {} returns", dates.len(), returns.len());
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            bail!(Domain, "dates not strictly increasing at {:?} -> {:?}", w[0], w[1]);
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            bail!(NonFinite, "return {i} is {}", returns[i]);
        }
        Ok(Self {
            asset_id: asset_id.into(),
            dates,
            returns,
        })
    }

    pub fn asset_id(&self) -> &str {
        &self.asset_id
    }

    pub fn dates(&self) -> &[Day] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Returns `close_t / close_{t-1} - 1` dated at `t`; the first date is dropped.
pub fn returns_from_closes(asset_id: impl Into<String>, dates: &[Day], closes: &[f64]) -> Result<ReturnSeries> {
    if dates.len() != closes.len() {
        bail!(Size, "{} dates but {} closes", dates.len(), closes.len());
    }
    if let Some(i) = closes.iter().position(|&c| !(c > 0.0) || !c.is_finite()) {
        bail!(Domain, "close {} on {:?} must be positive", closes[i], dates[i]);
    }
    let returns = closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    ReturnSeries::new(asset_id, dates.iter().skip(1).copied().collect(), returns)
}

/// Pairs of returns on the dates both series share.
fn aligned(a: &ReturnSeries, b: &ReturnSeries) -> Result<(Vec<Day>, Vec<f64>, Vec<f64>)> {
    let (mut i, mut j) = (0, 0);
    let (mut dates, mut ra, mut rb) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                dates.push(a.dates[i]);
                ra.push(a.returns[i]);
                rb.push(b.returns[j]);
                i += 1;
                j += 1;
            }
        }
    }
    if dates.is_empty() {
        bail!(Alignment, "series {} and {} share no dates", a.asset_id, b.asset_id);
    }
    Ok((dates, ra, rb))
}

/// `alpha * r_a + (1 - alpha) * r_b` on the common dates.
pub fn blend_returns(alpha: f64, a: &ReturnSeries, b: &ReturnSeries) -> Result<ReturnSeries> {
    if !(0.0..=1.0).contains(&alpha) {
        bail!(Domain, "blend weight {alpha} outside [0, 1]");
    }
    let (dates, ra, rb) = aligned(a, b)?;
    let returns = ra.iter().zip(&rb).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
    ReturnSeries::new(format!("{alpha}*{}+{}", a.asset_id, b.asset_id), dates, returns)
}

/// A binned return distribution tagged with its blend weight.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PortfolioDistribution {
    pub alpha: f64,
    pub bins: Vec<f64>,
}

/// Histogram of a series over the 16-bin grid, normalized to probabilities.
pub fn discretize_returns(series: &ReturnSeries, alpha: f64) -> Result<PortfolioDistribution> {
    if series.is_empty() {
        bail!(Size, "cannot discretize an empty series");
    }
    let mut bins = vec![0.0; NUM_BINS];
    for &r in series.returns() {
        bins[bin_index(r)] += 1.0;
    }
    let n = series.len() as f64;
    bins.iter_mut().for_each(|b| *b /= n);
    Ok(PortfolioDistribution { alpha, bins })
}

/// Grid weights `(k + 0.5) / 1000` followed by 1000 weights drawn uniformly
/// from `[0, 1)`, each blended and discretized.
pub fn build_training_datasets<R: Rng + ?Sized>(
    a: &ReturnSeries,
    b: &ReturnSeries,
    rng: &mut R,
) -> Result<Vec<PortfolioDistribution>> {
    let grid = (0..GRID_DATASETS).map(|k| (k as f64 + 0.5) / GRID_DATASETS as f64);
    let random: Vec<f64> = (0..RANDOM_DATASETS).map(|_| rng.random::<f64>()).collect();
    grid.chain(random)
        .map(|alpha| discretize_returns(&blend_returns(alpha, a, b)?, alpha))
        .collect()
}

/// Per-asset moments for the two-asset variance formula. Variances and the
/// covariance use the population (1/n) convention.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssetStats {
    pub mean: f64,
    pub stdev: f64,
    pub covariance_with_partner: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

/// Empirical statistics of two series over their common dates.
pub fn asset_stats(a: &ReturnSeries, b: &ReturnSeries) -> Result<(AssetStats, AssetStats)> {
    let (_, ra, rb) = aligned(a, b)?;
    let cov = population_cov(&ra, &rb);
    let stats = |r: &[f64]| AssetStats {
        mean: mean(r),
        stdev: population_cov(r, r).sqrt(),
        covariance_with_partner: cov,
    };
    Ok((stats(&ra), stats(&rb)))
}

/// Portfolio standard deviation for weight `w_a` on asset A.
pub fn mpt_sigma(w_a: f64, a: &AssetStats, b: &AssetStats) -> Result<f64> {
    if !(0.0..=1.0).contains(&w_a) {
        bail!(Domain, "weight {w_a} outside [0, 1]");
    }
    let w_b = 1.0 - w_a;
    let var = w_a * w_a * a.stdev * a.stdev
        + w_b * w_b * b.stdev * b.stdev
        + 2.0 * w_a * w_b * a.covariance_with_partner;
    // A valid covariance keeps this non-negative up to rounding.
    let scale = (w_a * a.stdev + w_b * b.stdev).powi(2);
    if var < -1e-12 * scale.max(f64::MIN_POSITIVE) {
        bail!(Domain, "negative portfolio variance {var}");
    }
    Ok(var.max(0.0).sqrt())
}

/// Mean and population standard deviation of the blended series at each weight.
pub fn empirical_frontier(a: &ReturnSeries, b: &ReturnSeries, alphas: &[f64]) -> Result<Vec<FrontierPoint>> {
    alphas
        .iter()
        .map(|&alpha| {
            let r = blend_returns(alpha, a, b)?;
            let r = r.returns();
            Ok(FrontierPoint {
                code_or_alpha: alpha,
                mean: mean(r),
                stdev: population_cov(r, r).sqrt(),
            })
        })
        .collect()
}

/// Value path `initial * prod(1 + r_s)` of an investment.
pub fn cumulative_growth(series: &ReturnSeries, initial: f64) -> Result<Vec<f64>> {
    if !(initial > 0.0) {
        bail!(Domain, "initial value {initial} must be positive");
    }
    if let Some(r) = series.returns().iter().find(|&&r| r <= -1.0) {
        bail!(Domain, "return {r} wipes out the position");
    }
    let mut v = initial;
    Ok(series
        .returns()
        .iter()
        .map(|r| {
            v *= 1.0 + r;
            v
        })
        .collect())
}

/// Moments of a bivariate Gaussian daily-return model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticPair {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    pub cov: f64,
}

/// `n_days` of jointly Gaussian returns for assets "A" and "B", dated
/// `Day(1)..=Day(n_days)`, built from a Cholesky factor of the covariance.
pub fn synthetic_assets<R: Rng + ?Sized>(
    pair: &SyntheticPair,
    n_days: usize,
    rng: &mut R,
) -> Result<(ReturnSeries, ReturnSeries)> {
    let SyntheticPair {
        mu_a,
        sigma_a,
        mu_b,
        sigma_b,
        cov,
    } = *pair;
    if !(sigma_a >= 0.0 && sigma_b >= 0.0) || ![mu_a, mu_b, cov].iter().all(|v| v.is_finite()) {
        bail!(Domain, "invalid moments {pair:?}");
    }
    let bound = sigma_a * sigma_b;
    if cov.abs() > bound * (1.0 + 1e-12) {
        bail!(Domain, "covariance {cov} exceeds sigma_a * sigma_b = {bound}; matrix is not PSD");
    }
    let l21 = if sigma_a > 0.0 { cov / sigma_a } else { 0.0 };
    let l22 = (sigma_b * sigma_b - l21 * l21).max(0.0).sqrt();
    let (mut ra, mut rb) = (Vec::with_capacity(n_days), Vec::with_capacity(n_days));
    for _ in 0..n_days {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        ra.push(mu_a + sigma_a * e1);
        rb.push(mu_b + l21 * e1 + l22 * e2);
    }
    let dates: Vec<Day> = (1..=n_days as i32).map(Day).collect();
    Ok((
        ReturnSeries::new("A", dates.clone(), ra)?,
        ReturnSeries::new("B", dates, rb)?,
    ))
}
