//! Achievable-rate estimation with a mismatched AWGN decoding metric.
//!
//! For input `x` and output `y` of `N` complex symbols (all polarizations
//! counted), the estimate is
//!
//! ```text
//! (1/N)·[log₂ q(y|x) − log₂ q_u(y)] − rate loss
//! ```
//!
//! where `q` is circular Gaussian with variance `σ²` around `x` and `q_u` is
//! the output law of an unbiased Gaussian source of power `P` through the
//! same auxiliary channel, i.e. zero-mean Gaussian with variance `P + σ²`.
//! The rate loss of a selection that accepted `N_a` of `N_p` proposals of
//! `n` symbols per polarization is `(1/n)·log₂(N_p/N_a)` per multi-pol
//! symbol, i.e. `(1/(n·pols))·log₂(N_p/N_a)` per complex dimension.

use std::f64::consts::{LOG2_E, PI};

use crate::error::{domain, Error, Result};
use crate::selection::rate_loss;
use crate::signal::SymbolSequence;

/// Smallest metric variance returned when input and output coincide.
pub const SIGMA2_FLOOR: f64 = 1e-300;

/// Auxiliary-channel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodingMetricParams {
    /// Metric variance per complex dimension.
    pub sigma2: f64,
    /// Power of the unbiased source, per complex dimension.
    pub power: f64,
}

impl DecodingMetricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return domain(format!("metric variance must be positive, got {}", self.sigma2));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return domain(format!("source power must be positive, got {}", self.power));
        }
        Ok(())
    }
}

/// Selection bookkeeping that feeds the rate loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionCounts {
    /// Block length per polarization.
    pub n: usize,
    pub n_proposed: u64,
    pub n_accepted: u64,
}

impl SelectionCounts {
    /// No selection: every proposal accepted.
    pub fn unbiased(n: usize) -> Self {
        Self { n, n_proposed: 1, n_accepted: 1 }
    }

    pub fn eta(&self) -> f64 {
        self.n_accepted as f64 / self.n_proposed as f64
    }
}

/// Rate estimate in bits per complex symbol (per polarization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirEstimate {
    /// `(1/N)·log₂(q(y|x)/q_u(y))`.
    pub gross: f64,
    /// Selection rate loss per complex symbol.
    pub rate_loss: f64,
    /// `gross − rate_loss`.
    pub air: f64,
    /// Complex symbols counted, all polarizations together.
    pub n_used: usize,
    pub pol_count: usize,
    pub eta: f64,
    pub sigma2: f64,
    /// Standard error of `gross` from the spread of the per-symbol
    /// information density.
    pub std_error: f64,
}

impl AirEstimate {
    /// Bits per 2D symbol, equal to bits/s/Hz/pol for Nyquist signaling.
    pub fn per_2d(&self) -> f64 {
        self.air
    }

    /// Bits per 4D (dual-polarization) symbol.
    pub fn per_4d(&self) -> f64 {
        2.0 * self.air
    }

    /// Bits per transmitted symbol over all polarizations.
    pub fn per_symbol(&self) -> f64 {
        self.pol_count as f64 * self.air
    }
}

fn log2_gauss(dist2: f64, var: f64, count: usize) -> f64 {
    -(count as f64) * (PI * var).log2() - dist2 / var * LOG2_E
}

/// `log₂ q(y|x)` summed over every complex dimension.
pub fn awgn_log_metric(y: &SymbolSequence, x: &SymbolSequence, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return domain(format!("metric variance must be positive, got {sigma2}"));
    }
    let d = y.distance_sqr(x)?;
    Ok(log2_gauss(d, sigma2, y.len() * y.pol_count()))
}

/// `log₂ q_u(y)` with per-dimension variance `P + σ²`.
pub fn unbiased_output_log(y: &SymbolSequence, power: f64, sigma2: f64) -> f64 {
    log2_gauss(y.total_energy(), power + sigma2, y.len() * y.pol_count())
}

/// Sufficient statistics `(D, S, N)`: mean squared error and mean output
/// energy per complex dimension, and the dimension count.
fn moments(x: &SymbolSequence, y: &SymbolSequence) -> Result<(f64, f64, usize)> {
    let n = y.len() * y.pol_count();
    if n == 0 {
        return Err(Error::Shape("empty sequences".into()));
    }
    Ok((y.distance_sqr(x)? / n as f64, y.total_energy() / n as f64, n))
}

fn gross_from_moments(d: f64, s: f64, power: f64, sigma2: f64) -> f64 {
    ((power + sigma2) / sigma2).log2() + LOG2_E * (s / (power + sigma2) - d / sigma2)
}

/// Rate estimate with the selection rate loss subtracted.
pub fn estimate_air(
    x: &SymbolSequence,
    y: &SymbolSequence,
    metric: &DecodingMetricParams,
    counts: &SelectionCounts,
) -> Result<AirEstimate> {
    metric.validate()?;
    x.same_shape(y)?;
    if counts.n_accepted == 0 || counts.n_accepted > counts.n_proposed || counts.n == 0 {
        return domain(format!(
            "invalid selection counts: N_p={}, N_a={}, n={}",
            counts.n_proposed, counts.n_accepted, counts.n
        ));
    }
    let n = y.len() * y.pol_count();
    let gross = (awgn_log_metric(y, x, metric.sigma2)? - unbiased_output_log(y, metric.power, metric.sigma2)) / n as f64;
    let std_error = density_std_error(x, y, metric, gross);
    let loss = rate_loss(counts.n, counts.n_proposed, counts.n_accepted) / y.pol_count() as f64;
    Ok(AirEstimate {
        gross,
        rate_loss: loss,
        air: gross - loss,
        n_used: n,
        pol_count: y.pol_count(),
        eta: counts.eta(),
        sigma2: metric.sigma2,
        std_error,
    })
}

/// Standard error of the mean of `log₂(q(yᵢ|xᵢ)/q_u(yᵢ))` over symbols,
/// polarizations of one time slot counted together.
fn density_std_error(x: &SymbolSequence, y: &SymbolSequence, m: &DecodingMetricParams, mean: f64) -> f64 {
    let (s2, t2) = (m.sigma2, m.power + m.sigma2);
    let pc = y.pol_count();
    let len = y.len();
    if len < 2 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for i in 0..len {
        let mut d = 0.0;
        for p in 0..pc {
            let (xi, yi) = (x.pol(p)[i], y.pol(p)[i]);
            d += (t2 / s2).log2() + LOG2_E * (yi.norm_sqr() / t2 - (yi - xi).norm_sqr() / s2);
        }
        let v = d / pc as f64 - mean;
        acc += v * v;
    }
    (acc / (len - 1) as f64 / len as f64).sqrt()
}

/// Metric variance maximizing the gross rate for source power `power`.
///
/// Starts from the moment estimate `(1/N)·‖y − x‖²` and refines it with a
/// golden-section search on `ln σ²` over a factor-4 bracket.
pub fn optimize_metric_variance(x: &SymbolSequence, y: &SymbolSequence, power: f64) -> Result<f64> {
    let (d, s, _) = moments(x, y)?;
    if d == 0.0 {
        return Ok(SIGMA2_FLOOR);
    }
    if !d.is_finite() || !s.is_finite() {
        return Err(Error::Numeric("non-finite error energy".into()));
    }
    let f = |t: f64| gross_from_moments(d, s, power, t.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (d.ln() - 4f64.ln(), d.ln() + 4f64.ln());
    let mut c = b - inv_phi * (b - a);
    let mut e = a + inv_phi * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc > fe {
            b = e;
            e = c;
            fe = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + inv_phi * (b - a);
            fe = f(e);
        }
    }
    let t = 0.5 * (a + b);
    // keep the moment estimate if the search did not improve on it
    Ok(if f(t) >= f(d.ln()) { t.exp() } else { d })
}

/// Estimate with the metric variance chosen by [`optimize_metric_variance`].
pub fn estimate_air_optimized(
    x: &SymbolSequence,
    y: &SymbolSequence,
    power: f64,
    counts: &SelectionCounts,
) -> Result<AirEstimate> {
    let sigma2 = optimize_metric_variance(x, y, power)?;
    estimate_air(x, y, &DecodingMetricParams { sigma2, power }, counts)
}
