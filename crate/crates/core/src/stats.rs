//! Descriptive and inferential statistics over RDT series.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::num::Real;
use crate::profiler::MeasurementSeries;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series has no numeric values")]
    Empty,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("mean must be positive for the coefficient of variation")]
    NonPositiveMean,
    #[error("series of length {len} is too short for lag {max_lag}")]
    TooShort { len: usize, max_lag: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("need at least two distinct values")]
    TooFewDistinct,
    #[error("only {0} bins remain after merging; at least 4 are needed")]
    TooFewBins(usize),
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles<F> {
    pub q1: F,
    pub median: F,
    pub q3: F,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin<F> {
    pub low: F,
    pub high: F,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats<F> {
    /// Numeric values summarized.
    pub count: usize,
    /// Sentinels excluded from every statistic.
    pub noflip: usize,
    pub mean: F,
    /// Population standard deviation.
    pub stddev: F,
    pub min: F,
    pub max: F,
    pub cv: F,
    pub quartiles: Quartiles<F>,
    pub unique_values: usize,
    pub histogram: Vec<HistogramBin<F>>,
}

fn check_finite<F: Real>(values: &[F]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn sorted<F: Real>(values: &[F]) -> Vec<F> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    v
}

pub fn mean<F: Real>(values: &[F]) -> F {
    values.iter().fold(F::zero(), |a, &v| a + v) / F::of_count(values.len())
}

/// Standard deviation with `ddof` degrees of freedom removed.
pub fn stddev<F: Real>(values: &[F], ddof: usize) -> F {
    let m = mean(values);
    let ss = values.iter().fold(F::zero(), |a, &v| a + (v - m) * (v - m));
    (ss / F::of_count(values.len() - ddof)).sqrt()
}

fn median_sorted<F: Real>(v: &[F]) -> F {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / F::of(2.0)
    }
}

/// Quartiles as medians of the lower and upper halves; for odd lengths the
/// middle element belongs to neither half.
pub fn quartiles<F: Real>(values: &[F]) -> Result<Quartiles<F>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(values)?;
    let v = sorted(values);
    let n = v.len();
    let median = median_sorted(&v);
    if n == 1 {
        return Ok(Quartiles { q1: median, median, q3: median });
    }
    let half = n / 2;
    Ok(Quartiles { q1: median_sorted(&v[..half]), median, q3: median_sorted(&v[n - half..]) })
}

/// Equal-width histogram over `[min, max]` with one bin per unique value.
pub fn histogram<F: Real>(values: &[F]) -> Vec<HistogramBin<F>> {
    if values.is_empty() {
        return Vec::new();
    }
    let v = sorted(values);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let mut unique = v.clone();
    unique.dedup();
    let bins = unique.len();
    if bins == 1 {
        return vec![HistogramBin { low: lo, high: hi, count: v.len() }];
    }
    let width = (hi - lo) / F::of_count(bins);
    let mut out: Vec<HistogramBin<F>> = (0..bins)
        .map(|i| HistogramBin {
            low: lo + width * F::of_count(i),
            high: if i + 1 == bins { hi } else { lo + width * F::of_count(i + 1) },
            count: 0,
        })
        .collect();
    for x in v {
        let idx = ((x - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1);
        out[idx].count += 1;
    }
    out
}

pub fn summarize<F: Real>(values: &[F]) -> Result<SeriesStats<F>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(values)?;
    let m = mean(values);
    if m <= F::zero() {
        return Err(StatsError::NonPositiveMean);
    }
    let sd = stddev(values, 0);
    let v = sorted(values);
    let mut unique = v.clone();
    unique.dedup();
    Ok(SeriesStats {
        count: values.len(),
        noflip: 0,
        mean: m,
        stddev: sd,
        min: v[0],
        max: v[v.len() - 1],
        cv: sd / m,
        quartiles: quartiles(values)?,
        unique_values: unique.len(),
        histogram: histogram(values),
    })
}

/// Summary of a measurement series; sentinels are counted, not analyzed.
pub fn summarize_series(series: &MeasurementSeries) -> Result<SeriesStats<f64>, StatsError> {
    let values: Vec<f64> = series.numeric().into_iter().map(|v| v as f64).collect();
    let mut s = summarize(&values)?;
    s.noflip = series.noflip_count();
    Ok(s)
}

/// Counts of maximal runs of equal consecutive values, keyed by run length.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLengthHistogram(pub BTreeMap<usize, usize>);

impl RunLengthHistogram {
    pub fn runs(&self) -> usize {
        self.0.values().sum()
    }

    /// Sum of `run_length * count`, the length of the series.
    pub fn series_len(&self) -> usize {
        self.0.iter().map(|(len, c)| len * c).sum()
    }

    pub fn count(&self, run_length: usize) -> usize {
        self.0.get(&run_length).copied().unwrap_or(0)
    }

    /// Fraction of runs that last a single measurement.
    pub fn fraction_single(&self) -> f64 {
        match self.runs() {
            0 => 0.0,
            r => self.count(1) as f64 / r as f64,
        }
    }
}

pub fn run_lengths<T: PartialEq>(values: &[T]) -> RunLengthHistogram {
    let mut hist = BTreeMap::new();
    let mut iter = values.iter();
    let Some(mut current) = iter.next() else {
        return RunLengthHistogram(hist);
    };
    let mut len = 1;
    for v in iter {
        if v == current {
            len += 1;
        } else {
            *hist.entry(len).or_insert(0) += 1;
            current = v;
            len = 1;
        }
    }
    *hist.entry(len).or_insert(0) += 1;
    RunLengthHistogram(hist)
}

/// Sample autocorrelation for lags `0..=max_lag`.
///
/// `r_k = sum_{t<n-k} (x_t - m)(x_{t+k} - m) / sum_t (x_t - m)^2`.
pub fn acf<F: Real>(values: &[F], max_lag: usize) -> Result<Vec<F>, StatsError> {
    let n = values.len();
    if n <= max_lag {
        return Err(StatsError::TooShort { len: n, max_lag });
    }
    check_finite(values)?;
    let m = mean(values);
    let dev: Vec<F> = values.iter().map(|&v| v - m).collect();
    let denom = dev.iter().fold(F::zero(), |a, &d| a + d * d);
    if denom == F::zero() {
        return Err(StatsError::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                return F::one();
            }
            let num = dev[..n - k].iter().zip(&dev[k..]).fold(F::zero(), |a, (&x, &y)| a + x * y);
            num / denom
        })
        .collect())
}

/// Binning and degrees-of-freedom convention for the normality test.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareOptions {
    /// Adjacent bins are merged until each expects at least this many.
    pub min_expected: f64,
    /// Parameters estimated from the data (subtracted from the dof).
    pub fitted_params: usize,
    /// Degrees of freedom removed when estimating the fitted stddev.
    pub stddev_ddof: usize,
}

impl Default for ChiSquareOptions {
    fn default() -> Self {
        ChiSquareOptions { min_expected: 5.0, fitted_params: 2, stddev_ddof: 1 }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareFit {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    pub bins: usize,
    pub reject: bool,
}

pub fn chi_square_normal_fit<F: Real>(values: &[F], alpha: f64) -> Result<ChiSquareFit, StatsError> {
    chi_square_normal_fit_with(values, alpha, &ChiSquareOptions::default())
}

/// Chi-square goodness of fit against a normal with the sample's mean and
/// standard deviation.
///
/// Each unique value starts as its own cell, bounded by the midpoints to its
/// neighbors (the outer cells extend to infinity), so a normal quantized to
/// the series' lattice fits exactly.
pub fn chi_square_normal_fit_with<F: Real>(
    values: &[F],
    alpha: f64,
    opts: &ChiSquareOptions,
) -> Result<ChiSquareFit, StatsError> {
    check_finite(values)?;
    let xs: Vec<f64> = sorted(values).iter().map(|v| v.to_f64().expect("finite")).collect();
    let n = xs.len();
    let mut cells: Vec<(f64, usize)> = Vec::new();
    for &x in &xs {
        match cells.last_mut() {
            Some((v, c)) if *v == x => *c += 1,
            _ => cells.push((x, 1)),
        }
    }
    if cells.len() < 2 {
        return Err(StatsError::TooFewDistinct);
    }
    let m = mean(&xs);
    let sd = stddev(&xs, opts.stddev_ddof);
    let normal = Normal::new(m, sd).map_err(|_| StatsError::ZeroVariance)?;
    let nf = n as f64;
    let mut prev_cdf = 0.0;
    let mut observed_expected: Vec<(f64, f64)> = Vec::with_capacity(cells.len());
    for (i, &(v, count)) in cells.iter().enumerate() {
        let cdf = match cells.get(i + 1) {
            Some(&(next, _)) => normal.cdf((v + next) / 2.0),
            None => 1.0,
        };
        observed_expected.push((count as f64, nf * (cdf - prev_cdf)));
        prev_cdf = cdf;
    }
    let merged = merge_bins(&observed_expected, opts.min_expected);
    let bins = merged.len();
    if bins < 4 || bins <= opts.fitted_params + 1 {
        return Err(StatsError::TooFewBins(bins));
    }
    let statistic: f64 = merged.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins - 1 - opts.fitted_params;
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(statistic).clamp(0.0, 1.0);
    Ok(ChiSquareFit { statistic, p_value, dof, bins, reject: p_value < alpha })
}

/// Left-to-right merge until every bin expects at least `min_expected`; a
/// short tail is folded into the last full bin.
fn merge_bins(cells: &[(f64, f64)], min_expected: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for &(co, ce) in cells {
        o += co;
        e += ce;
        if e >= min_expected {
            out.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match out.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => out.push((o, e)),
        }
    }
    out
}
