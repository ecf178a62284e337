//! How well does a small number of measurements find a row's minimum RDT?
//!
//! Given a series of `M` measurements, a tester who keeps only `N` of them
//! (a uniformly random subset, drawn without replacement) may miss the true
//! minimum. Exact values come from hypergeometric and order-statistic
//! identities evaluated in any [`Scalar`]; Monte-Carlo estimates check them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::num::Scalar;
use crate::profiler::MeasurementSeries;
use crate::seed::{derive_seed, label_word, substream};
use crate::stats::{self, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("series has no numeric values")]
    Empty,
    #[error("subset size {n} must be in 1..={m}")]
    InvalidN { n: usize, m: usize },
    #[error("series minimum must be positive")]
    NonPositiveMin,
    #[error("margin must be non-negative")]
    NegativeMargin,
    #[error("Monte-Carlo needs at least one iteration")]
    NoIterations,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn check(values: &[u64], n: usize) -> Result<(), SamplingError> {
    if values.is_empty() {
        return Err(SamplingError::Empty);
    }
    if n == 0 || n > values.len() {
        return Err(SamplingError::InvalidN { n, m: values.len() });
    }
    Ok(())
}

/// P(an `n`-subset of `m` items contains at least one of `k` marked items)
/// `= 1 - C(m-k, n) / C(m, n)`.
pub fn prob_hit<S: Scalar>(m: usize, k: usize, n: usize) -> S {
    if k == 0 {
        return S::zero();
    }
    if n + k > m {
        return S::one();
    }
    // C(m-k, n)/C(m, n) = prod_{j<k} (m-n-j)/(m-j) = prod_{j<n} (m-k-j)/(m-j)
    let (terms, shift) = if k <= n { (k, n) } else { (n, k) };
    let miss = (0..terms).fold(S::one(), |acc, j| {
        acc * S::from_count((m - shift - j) as u64) / S::from_count((m - j) as u64)
    });
    S::one() - miss
}

/// Probability that a random `n`-subset contains the series minimum.
pub fn prob_find_min<S: Scalar>(values: &[u64], n: usize) -> Result<S, SamplingError> {
    check(values, n)?;
    let min = *values.iter().min().expect("nonempty");
    let k = values.iter().filter(|&&v| v == min).count();
    Ok(prob_hit(values.len(), k, n))
}

/// `E[min of a random n-subset] / min(series)`.
///
/// With the series sorted ascending, the subset minimum is the `i`-th
/// smallest value with probability `S_{i-1} - S_i`, where
/// `S_i = C(m-i, n) / C(m, n)` is the chance that all picks avoid the `i`
/// smallest values.
pub fn expected_normalized_min<S: Scalar>(values: &[u64], n: usize) -> Result<S, SamplingError> {
    check(values, n)?;
    let mut v = values.to_vec();
    v.sort_unstable();
    if v[0] == 0 {
        return Err(SamplingError::NonPositiveMin);
    }
    let m = v.len();
    let mut survival = S::one();
    let mut expected = S::zero();
    for (i, &x) in v.iter().enumerate().take(m - n + 1) {
        // S_{i+1} = S_i * (m - i - n) / (m - i)
        let next = survival.clone() * S::from_count((m - i - n) as u64) / S::from_count((m - i) as u64);
        expected = expected + S::from_count(x) * (survival - next.clone());
        survival = next;
    }
    Ok(expected / S::from_count(v[0]))
}

/// Probability that the minimum of a random `n`-subset is within
/// `(1 + margin) * min(series)`.
pub fn prob_min_within_margin<S: Scalar>(values: &[u64], n: usize, margin: S) -> Result<S, SamplingError> {
    check(values, n)?;
    if margin < S::zero() {
        return Err(SamplingError::NegativeMargin);
    }
    let min = *values.iter().min().expect("nonempty");
    let threshold = (S::one() + margin) * S::from_count(min);
    let k = values.iter().filter(|&&v| S::from_count(v) <= threshold).count();
    Ok(prob_hit(values.len(), k, n))
}

/// A per-subset quantity averaged by Monte-Carlo.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Metric {
    FindMin,
    NormalizedMin,
    WithinMargin(f64),
}

impl Metric {
    /// Exact value evaluated in `f64`.
    pub fn exact(self, values: &[u64], n: usize) -> Result<f64, SamplingError> {
        match self {
            Metric::FindMin => prob_find_min(values, n),
            Metric::NormalizedMin => expected_normalized_min(values, n),
            Metric::WithinMargin(m) => prob_min_within_margin(values, n, m),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::FindMin => f.write_str("find_min"),
            Metric::NormalizedMin => f.write_str("normalized_min"),
            Metric::WithinMargin(m) => write!(f, "within_margin:{m}"),
        }
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "find_min" => Ok(Metric::FindMin),
            "normalized_min" => Ok(Metric::NormalizedMin),
            other => other
                .strip_prefix("within_margin:")
                .and_then(|m| m.parse::<f64>().ok())
                .filter(|m| *m >= 0.0)
                .map(Metric::WithinMargin)
                .ok_or_else(|| format!("unknown metric `{s}`")),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub iterations: u64,
}

/// Monte-Carlo estimate of `metric` over `iterations` uniform `n`-subsets.
///
/// Iteration `i` draws from substream `i` of `seed`, so the result does not
/// depend on the number of worker threads.
pub fn monte_carlo_estimate(
    values: &[u64],
    n: usize,
    metric: Metric,
    iterations: u64,
    seed: u64,
) -> Result<McEstimate, SamplingError> {
    check(values, n)?;
    if iterations == 0 {
        return Err(SamplingError::NoIterations);
    }
    let min = *values.iter().min().expect("nonempty");
    if metric == Metric::NormalizedMin && min == 0 {
        return Err(SamplingError::NonPositiveMin);
    }
    if let Metric::WithinMargin(m) = metric {
        if m < 0.0 {
            return Err(SamplingError::NegativeMargin);
        }
    }
    let m = values.len();
    let samples: Vec<f64> = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let sub_min = index::sample(&mut rng, m, n).into_iter().map(|j| values[j]).min().expect("n >= 1");
            match metric {
                Metric::FindMin => f64::from(u8::from(sub_min == min)),
                Metric::NormalizedMin => sub_min as f64 / min as f64,
                Metric::WithinMargin(margin) => f64::from(u8::from(sub_min as f64 <= (1.0 + margin) * min as f64)),
            }
        })
        .collect();
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let stderr = if samples.len() < 2 {
        0.0
    } else {
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    };
    Ok(McEstimate { estimate: mean, stderr, iterations })
}

/// Subset sizes, margins, and Monte-Carlo budget for a sampling analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingQuery {
    pub n_values: Vec<usize>,
    pub margins: Vec<f64>,
    pub mc_iterations: u64,
}

impl Default for SamplingQuery {
    fn default() -> Self {
        SamplingQuery {
            n_values: vec![1, 3, 5, 10, 50, 500],
            margins: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            mc_iterations: 10_000,
        }
    }
}

impl SamplingQuery {
    pub fn metrics(&self) -> Vec<Metric> {
        let mut out = vec![Metric::FindMin, Metric::NormalizedMin];
        out.extend(self.margins.iter().map(|&m| Metric::WithinMargin(m)));
        out
    }
}

/// One line of the sampling CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingRecord {
    pub row: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub metric: Metric,
    pub exact: f64,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
}

/// Exact and Monte-Carlo values for every `(N, metric)` in the query.
/// Subset sizes larger than the series are skipped.
pub fn analyze_values(
    row: u64,
    values: &[u64],
    query: &SamplingQuery,
    seed: u64,
) -> Result<Vec<SamplingRecord>, SamplingError> {
    if values.is_empty() {
        return Err(SamplingError::Empty);
    }
    let mut out = Vec::new();
    for &n in query.n_values.iter().filter(|&&n| n >= 1 && n <= values.len()) {
        for metric in query.metrics() {
            let exact = metric.exact(values, n)?;
            let mc_seed = derive_seed(&[seed, n as u64, label_word(&metric.to_string())]);
            let mc = monte_carlo_estimate(values, n, metric, query.mc_iterations, mc_seed)?;
            out.push(SamplingRecord { row, n, metric, exact, mc_estimate: mc.estimate, mc_stderr: mc.stderr });
        }
    }
    Ok(out)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScurvePoint {
    pub row: u64,
    pub max_cv: f64,
}

/// Per-row maximum coefficient of variation over all series of that row,
/// sorted ascending.
pub fn cv_scurve(campaign: &[MeasurementSeries]) -> Result<Vec<ScurvePoint>, SamplingError> {
    if campaign.is_empty() {
        return Err(SamplingError::Empty);
    }
    let mut per_row: BTreeMap<u64, f64> = BTreeMap::new();
    for s in campaign {
        let cv = stats::summarize_series(s)?.cv;
        let e = per_row.entry(s.row_address).or_insert(cv);
        *e = e.max(cv);
    }
    let mut points: Vec<ScurvePoint> = per_row.into_iter().map(|(row, max_cv)| ScurvePoint { row, max_cv }).collect();
    points.sort_by(|a, b| a.max_cv.total_cmp(&b.max_cv).then(a.row.cmp(&b.row)));
    Ok(points)
}

/// Box-and-whisker summary of one metric at one subset size across rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPlotRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub metric: Metric,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub rows: usize,
}

/// Groups exact values by `(N, metric)`; whiskers are the extremes.
pub fn boxplot(records: &[SamplingRecord]) -> Result<Vec<BoxPlotRow>, SamplingError> {
    let mut groups: BTreeMap<(usize, String), (Metric, Vec<f64>)> = BTreeMap::new();
    for r in records {
        groups.entry((r.n, r.metric.to_string())).or_insert_with(|| (r.metric, Vec::new())).1.push(r.exact);
    }
    groups
        .into_iter()
        .map(|((n, _), (metric, xs))| {
            let q = stats::quartiles(&xs)?;
            let (min, max) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            Ok(BoxPlotRow {
                n,
                metric,
                min,
                q1: q.q1,
                median: q.median,
                q3: q.q3,
                max,
                mean: stats::mean(&xs),
                rows: xs.len(),
            })
        })
        .collect()
}
