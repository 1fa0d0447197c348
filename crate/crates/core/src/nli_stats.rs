//! Statistics of the per-block NLI cost: empirical cdf, lower-tail
//! exponent, cubic power scaling and a moment-matched gamma law.

use std::io::Write;

use crate::error::{config, shape, Error, Result};

/// Default upper quantile of the lower tail used by [`tail_exponent`].
pub const DEFAULT_TAIL_QUANTILE: f64 = 0.02;
/// Fewest tail points accepted by [`tail_exponent`].
pub const MIN_TAIL_POINTS: usize = 200;

/// Sorted sample with a right-continuous step cdf.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `F̂(x)`: fraction of samples `≤ x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample `v` with `F̂(v) ≥ q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalDistribution> {
    if samples.len() < 2 {
        return shape(format!("need at least two samples, got {}", samples.len()));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalDistribution { sorted })
}

/// Least-squares slope of `ln F̂(λ)` against `ln λ` over the sample points
/// whose cdf lies in `(lower_q, upper_q]`.
pub fn tail_exponent(dist: &EmpiricalDistribution, lower_q: f64, upper_q: f64) -> Result<f64> {
    if !(0.0 <= lower_q && lower_q < upper_q && upper_q <= 0.2) {
        return config(format!("tail range ({lower_q}, {upper_q}] must lie within (0, 0.2]"));
    }
    let n = dist.len() as f64;
    let mut pts = Vec::new();
    for (i, &v) in dist.sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        if f > upper_q {
            break;
        }
        // ties: use the cdf at the last copy of a value
        if f > lower_q && v > 0.0 && dist.sorted.get(i + 1) != Some(&v) {
            pts.push((v.ln(), f.ln()));
        }
    }
    if pts.len() < MIN_TAIL_POINTS {
        return shape(format!("only {} tail points, need {MIN_TAIL_POINTS}", pts.len()));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return Err(Error::Degenerate("tail points share one value".into()));
    }
    Ok(sxy / sxx)
}

/// Tail exponent over the default range.
pub fn default_tail_exponent(dist: &EmpiricalDistribution) -> Result<f64> {
    tail_exponent(dist, 0.0, DEFAULT_TAIL_QUANTILE)
}

/// Summary of per-pair cost ratios at two powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// `(P₂/P₁)³`.
    pub expected: f64,
    /// Median within ±10% of the expected ratio.
    pub pass: bool,
}

impl ScalingSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between order statistics
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Checks that costs grow with the cube of the power ratio.
pub fn cubic_scaling_check(costs_p1: &[f64], costs_p2: &[f64], power_ratio: f64) -> Result<ScalingSummary> {
    if costs_p1.len() != costs_p2.len() || costs_p1.is_empty() {
        return shape(format!("unpaired cost lists: {} vs {}", costs_p1.len(), costs_p2.len()));
    }
    if !(power_ratio > 1.0) {
        return config(format!("power ratio must exceed 1, got {power_ratio}"));
    }
    let mut r: Vec<f64> = costs_p1
        .iter()
        .zip(costs_p2)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| b / a)
        .collect();
    if r.is_empty() {
        return Err(Error::Degenerate("every cost at the lower power is zero".into()));
    }
    r.sort_by(f64::total_cmp);
    let expected = power_ratio.powi(3);
    let median = sorted_quantile(&r, 0.5);
    Ok(ScalingSummary {
        median,
        q1: sorted_quantile(&r, 0.25),
        q3: sorted_quantile(&r, 0.75),
        expected,
        pass: (median / expected - 1.0).abs() <= 0.1,
    })
}

/// Gamma law matched to the first two moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub shape: f64,
    pub mean: f64,
}

pub fn gamma_fit_moments(samples: &[f64]) -> Result<GammaFit> {
    if samples.len() < 2 {
        return shape("need at least two samples");
    }
    if samples.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("gamma fit needs positive finite samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 1e-24 * mean * mean {
        return Err(Error::Degenerate("samples have zero variance".into()));
    }
    Ok(GammaFit { shape: mean * mean / var, mean })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return shape("rank correlation needs two paired lists of at least two values");
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let m = (a.len() as f64 - 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - m) * (y - m);
        saa += (x - m) * (x - m);
        sbb += (y - m) * (y - m);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("constant list".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Writes `value,cdf` at `points` log-spaced quantiles from the smallest
/// positive sample to the largest.
pub fn write_cdf_csv<W: Write>(out: &mut W, dist: &EmpiricalDistribution, points: usize) -> Result<()> {
    writeln!(out, "value,cdf")?;
    let s = dist.sorted();
    let n = s.len();
    let mut last = usize::MAX;
    for j in 0..points.max(2) {
        // log-spaced ranks resolve the lower tail
        let frac = j as f64 / (points.max(2) - 1) as f64;
        let k = ((n as f64).powf(frac).round() as usize).clamp(1, n) - 1;
        if k != last {
            writeln!(out, "{},{}", s[k], (k + 1) as f64 / n as f64)?;
            last = k;
        }
    }
    Ok(())
}

/// Writes a `bin_lo,bin_hi,count` histogram with `bins` equal-width bins.
pub fn write_histogram_csv<W: Write>(out: &mut W, dist: &EmpiricalDistribution, bins: usize) -> Result<()> {
    writeln!(out, "bin_lo,bin_hi,count")?;
    let s = dist.sorted();
    let (lo, hi) = (s[0], s[s.len() - 1]);
    let bins = bins.max(1);
    let w = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in s {
        let b = (((v - lo) / w) as usize).min(bins - 1);
        counts[b] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        writeln!(out, "{},{},{}", lo + i as f64 * w, lo + (i + 1) as f64 * w, c)?;
    }
    Ok(())
}
