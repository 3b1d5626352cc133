//! Chain diagnostics: autocorrelation, integrated autocorrelation,
//! improvement factors, effective sample size and posterior summaries.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default maximum lag for the integrated autocorrelation.
pub const DEFAULT_IACT_CAP: usize = 100;

/// Cap on histogram bins so long-tailed draws cannot explode the output.
const MAX_HISTOGRAM_BINS: usize = 1000;
const MIN_HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcfResult {
    /// `acf[k]` for lags `0..=max_lag`.
    pub acf: Vec<f64>,
    /// First lag with a nonpositive value.
    pub first_zero_crossing: Option<usize>,
    /// Integrated autocorrelation with the cap set to `max_lag`.
    pub iact: f64,
}

impl AcfResult {
    pub fn max_lag(&self) -> usize {
        self.acf.len() - 1
    }
}

/// Biased sample autocorrelation, centred at `center` when given and at the
/// sample mean otherwise.
pub fn acf(series: &[f64], max_lag: usize, center: Option<f64>) -> Result<AcfResult> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::invalid(format!("series of length {n} is too short for lag {max_lag}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let mean = center.unwrap_or_else(|| series.iter().sum::<f64>() / n as f64);
    let centred: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = centred.iter().map(|v| v * v).sum();
    let spread = series.iter().any(|&v| v != series[0]);
    if !spread || !(c0 > 0.0) {
        return Err(Error::invalid("autocorrelation of a constant series is undefined"));
    }
    let acf: Vec<f64> = (0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                centred[..n - k].iter().zip(&centred[k..]).map(|(a, b)| a * b).sum::<f64>() / c0
            }
        })
        .collect();
    let first_zero_crossing = acf.iter().position(|&v| v <= 0.0);
    let mut r = AcfResult {
        acf,
        first_zero_crossing,
        iact: 0.0,
    };
    r.iact = integrated_acf(&r, max_lag);
    Ok(r)
}

/// Sum of the autocorrelations from lag 0 up to, not including, the first
/// nonpositive lag; without a crossing the sum runs through `cap`.
pub fn integrated_acf(result: &AcfResult, cap: usize) -> f64 {
    let cap = cap.min(result.max_lag());
    let end = match result.first_zero_crossing {
        Some(c) if c <= cap => c,
        _ => cap + 1,
    };
    result.acf[..end].iter().sum()
}

/// Integrated autocorrelation of a series with the default cap, or the
/// largest usable cap when the series is short.
pub fn iact(series: &[f64], center: Option<f64>) -> Result<f64> {
    let cap = DEFAULT_IACT_CAP.min(series.len().saturating_sub(1));
    Ok(acf(series, cap, center)?.iact)
}

/// `iact_baseline / iact_method`; above one means the method mixes better.
pub fn improvement_factor(iact_baseline: f64, iact_method: f64) -> Result<f64> {
    if !(iact_baseline > 0.0) || !(iact_method > 0.0) {
        return Err(Error::invalid("integrated autocorrelations must be positive"));
    }
    Ok(iact_baseline / iact_method)
}

/// Effective sample size `n / tau` with `tau = 2 * iact - 1`, the
/// two-sided autocorrelation time implied by a one-sided sum from lag 0.
pub fn effective_sample_size(series: &[f64]) -> Result<f64> {
    let tau = (2.0 * iact(series, None)? - 1.0).max(1.0 / series.len() as f64);
    Ok(series.len() as f64 / tau)
}

/// Monte Carlo standard error of the mean of a correlated series.
pub fn mcse(series: &[f64]) -> Result<f64> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((var / effective_sample_size(series)?).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`; zero for one draw).
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub histogram: Histogram,
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(draws: &[f64]) -> Result<Summary> {
    if draws.is_empty() {
        return Err(Error::invalid("no draws to summarize"));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("draws contain non-finite values"));
    }
    let n = draws.len();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p| quantile_sorted(&sorted, p);
    Ok(Summary {
        n,
        mean,
        sd,
        q025: q(0.025),
        q50: q(0.5),
        q975: q(0.975),
        histogram: histogram_sorted(&sorted),
    })
}

/// Freedman-Diaconis bin width, at least ten and at most a thousand bins.
fn histogram_sorted(sorted: &[f64]) -> Histogram {
    let n = sorted.len();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let range = hi - lo;
    if range == 0.0 {
        return Histogram {
            edges: vec![lo, hi],
            counts: vec![n as u64],
        };
    }
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let width = 2.0 * iqr / (n as f64).cbrt();
    let bins = if width > 0.0 {
        ((range / width).ceil() as usize).clamp(MIN_HISTOGRAM_BINS, MAX_HISTOGRAM_BINS)
    } else {
        MIN_HISTOGRAM_BINS
    };
    let step = range / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + step * i as f64).collect();
    edges.push(hi);
    let mut counts = vec![0u64; bins];
    for &v in sorted {
        let i = (((v - lo) / step) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram { edges, counts }
}
