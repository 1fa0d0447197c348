//! Closed-form rates for the block-memoryless nonlinear channel
//! `y = x + w + ξ`, where the per-block NLI energy `Λ = ‖ξ‖²/n` of an
//! unbiased Gaussian input is gamma distributed with shape `n′` and mean
//! `aP³`.
//!
//! All quantities here are in normalized units: `P` and variances share one
//! arbitrary power unit, rates are bits per complex symbol.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{config, domain, Error, Result};
use crate::rng::rng_from_seed;
use crate::signal::{energy_per_symbol, fill_unit_gaussian, SymbolSequence, C64};
use crate::special::{ln_gamma_fn, ln_lower_incomplete_gamma};

/// Parameters of the block-memoryless channel and its NLI-energy law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticChannelParams {
    /// NLI coefficient: unbiased NLI variance is `a·P³`.
    pub a: f64,
    /// AWGN variance `σ_w²`.
    pub sigma_w2: f64,
    /// Block length.
    pub n: usize,
    /// Gamma shape `n′`, `0 < n′ ≤ n`.
    pub n_prime: f64,
}

impl AnalyticChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return config(format!("a must be positive, got {}", self.a));
        }
        if !(self.sigma_w2 > 0.0 && self.sigma_w2.is_finite()) {
            return config(format!("sigma_w2 must be positive, got {}", self.sigma_w2));
        }
        if self.n == 0 {
            return config("block length n must be at least 1");
        }
        if !(self.n_prime > 0.0 && self.n_prime <= self.n as f64) {
            return config(format!("n' must lie in (0, n={}], got {}", self.n, self.n_prime));
        }
        Ok(())
    }

    /// Unbiased NLI variance `a·P³`.
    pub fn nli_variance(&self, power: f64) -> f64 {
        self.a * power.powi(3)
    }

    /// Argument `n′·γ_λ/(aP³)` of the incomplete gamma functions.
    fn gamma_arg(&self, gamma_lambda: f64, power: f64) -> f64 {
        self.n_prime * gamma_lambda / self.nli_variance(power)
    }
}

/// Assumed output power `E{|Y|²}` after selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputPowerConvention {
    /// `P + σ_w² + σ_ξ²(γ_λ)`: signal, noise and NLI uncorrelated.
    #[default]
    Additive,
    /// `P + σ_w²`: propagation preserves the signal energy.
    EnergyPreserving,
    /// `P + σ_w² − σ_ξ²(γ_λ)`: NLI anticorrelated with the signal.
    Anticorrelated,
}

/// Asymptotic behavior of the selected AIR as `P → ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeClass {
    UnboundedGrowth,
    Saturating,
    PeakyDecay,
}

/// One point of an AIR-vs-power curve with selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionCurvePoint {
    pub power: f64,
    pub gamma_lambda: f64,
    pub eta: f64,
    pub sigma_xi2: f64,
    pub air: f64,
}

/// Linear-channel capacity `log₂(1 + P/σ_w²)`.
pub fn linear_capacity(power: f64, sigma_w2: f64) -> f64 {
    (power / sigma_w2).ln_1p() / std::f64::consts::LN_2
}

/// AIR with Gaussian input and AWGN metric: `log₂(1 + P/(σ_w² + aP³))`.
pub fn gaussian_air(power: f64, params: &AnalyticChannelParams) -> Result<f64> {
    if !(power > 0.0) {
        return domain(format!("power must be positive, got {power}"));
    }
    Ok(linear_capacity(power, params.sigma_w2 + params.nli_variance(power)))
}

/// Power maximizing [`gaussian_air`]: `(σ_w²/(2a))^{1/3}`.
pub fn optimal_power(params: &AnalyticChannelParams) -> f64 {
    (params.sigma_w2 / (2.0 * params.a)).cbrt()
}

/// Acceptance rate `η(γ_λ) = γ(n′, n′γ_λ/(aP³))/Γ(n′)`.
pub fn acceptance_rate(gamma_lambda: f64, power: f64, params: &AnalyticChannelParams) -> Result<f64> {
    Ok(ln_acceptance_rate(gamma_lambda, power, params)?.exp().min(1.0))
}

/// `ln η(γ_λ)`, finite even when `η` underflows.
pub fn ln_acceptance_rate(gamma_lambda: f64, power: f64, params: &AnalyticChannelParams) -> Result<f64> {
    if gamma_lambda.is_nan() || gamma_lambda < 0.0 {
        return domain(format!("threshold must be non-negative, got {gamma_lambda}"));
    }
    if !(power > 0.0) {
        return domain(format!("power must be positive, got {power}"));
    }
    let x = params.gamma_arg(gamma_lambda, power);
    Ok((ln_lower_incomplete_gamma(params.n_prime, x)? - ln_gamma_fn(params.n_prime)).min(0.0))
}

/// Conditional NLI variance `E{Λ | Λ < γ_λ}` after selection.
pub fn post_selection_nli_variance(gamma_lambda: f64, power: f64, params: &AnalyticChannelParams) -> Result<f64> {
    if !(gamma_lambda > 0.0) {
        return domain("post-selection variance needs a positive threshold (conditioning on a null event)");
    }
    if !(power > 0.0) {
        return domain(format!("power must be positive, got {power}"));
    }
    let var = params.nli_variance(power);
    let x = params.gamma_arg(gamma_lambda, power);
    let s = params.n_prime;
    let ratio = (ln_lower_incomplete_gamma(s + 1.0, x)? - ln_lower_incomplete_gamma(s, x)?).exp();
    let v = var / s * ratio;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("post-selection variance not finite at γ={gamma_lambda}, P={power}")));
    }
    Ok(v.min(var).min(gamma_lambda))
}

/// Gross AIR `E{log₂ q(y|x)/q_u(y)}` for an AWGN metric with variance
/// `σ²`, a Gaussian unbiased source of power `P` and output power `S`.
/// Equals `log₂(1 + P/σ²)` when `S = P + σ²`.
pub fn gross_awgn_air(power: f64, sigma2: f64, output_power: f64) -> f64 {
    let log2e = std::f64::consts::LOG2_E;
    linear_capacity(power, sigma2) + log2e * (output_power / (power + sigma2) - 1.0)
}

/// AIR with sequence selection under the default output-power convention:
/// `log₂(1 + P/(σ_w² + σ_ξ²(γ_λ))) − (1/n)·log₂(1/η(γ_λ))`. May be negative.
pub fn air_with_selection(power: f64, gamma_lambda: f64, params: &AnalyticChannelParams) -> Result<f64> {
    air_with_selection_conv(power, gamma_lambda, params, OutputPowerConvention::Additive)
}

pub fn air_with_selection_conv(
    power: f64,
    gamma_lambda: f64,
    params: &AnalyticChannelParams,
    convention: OutputPowerConvention,
) -> Result<f64> {
    let sxi = post_selection_nli_variance(gamma_lambda, power, params)?;
    let ln_eta = ln_acceptance_rate(gamma_lambda, power, params)?;
    let sigma2 = params.sigma_w2 + sxi;
    let output = match convention {
        OutputPowerConvention::Additive => power + sigma2,
        OutputPowerConvention::EnergyPreserving => power + params.sigma_w2,
        OutputPowerConvention::Anticorrelated => power + params.sigma_w2 - sxi,
    };
    let rate_loss = -ln_eta / std::f64::consts::LN_2 / params.n as f64;
    Ok(gross_awgn_air(power, sigma2, output) - rate_loss)
}

/// Approximately optimal threshold `((n′+1)/(n−n′))·σ_w²`.
///
/// The power argument is accepted for interface symmetry; the closed form
/// does not depend on it.
pub fn optimal_threshold(_power: f64, params: &AnalyticChannelParams) -> Result<f64> {
    let n = params.n as f64;
    if params.n_prime >= n {
        return domain(format!("no finite optimal threshold for n'={} >= n={}", params.n_prime, params.n));
    }
    Ok((params.n_prime + 1.0) / (n - params.n_prime) * params.sigma_w2)
}

/// Classifies the high-power behavior by comparing `n′` with `n/3`.
pub fn classify_regime(params: &AnalyticChannelParams) -> RegimeClass {
    use std::cmp::Ordering;
    let np = params.n_prime;
    let ord = if np.fract() == 0.0 && np < u64::MAX as f64 {
        (3 * np as u128).cmp(&(params.n as u128))
    } else {
        let third = params.n as f64 / 3.0;
        if ((np - third) / third).abs() <= 1e-9 {
            Ordering::Equal
        } else {
            np.partial_cmp(&third).unwrap_or(Ordering::Equal)
        }
    };
    match ord {
        Ordering::Less => RegimeClass::UnboundedGrowth,
        Ordering::Equal => RegimeClass::Saturating,
        Ordering::Greater => RegimeClass::PeakyDecay,
    }
}

/// Selected-AIR curve over a power grid with the threshold of
/// [`optimal_threshold`].
pub fn selection_curve(powers: &[f64], params: &AnalyticChannelParams) -> Result<Vec<SelectionCurvePoint>> {
    params.validate()?;
    powers
        .iter()
        .map(|&p| {
            let g = optimal_threshold(p, params)?;
            Ok(SelectionCurvePoint {
                power: p,
                gamma_lambda: g,
                eta: acceptance_rate(g, p, params)?,
                sigma_xi2: post_selection_nli_variance(g, p, params)?,
                air: air_with_selection(p, g, params)?,
            })
        })
        .collect()
}

/// Draws the per-block NLI energy `Λ ~ Gamma(shape n′, mean aP³)`.
pub fn draw_nli_energy<R: Rng + ?Sized>(rng: &mut R, power: f64, params: &AnalyticChannelParams) -> Result<f64> {
    let scale = params.nli_variance(power) / params.n_prime;
    let g = Gamma::new(params.n_prime, scale).map_err(|e| Error::Domain(format!("gamma law: {e}")))?;
    Ok(g.sample(rng))
}

/// Output `x + w + ξ` for a given per-block NLI energy `Λ`: `w` is AWGN with
/// variance `σ_w²`, `ξ` is white Gaussian rescaled so that `‖ξ‖²/n = Λ`.
pub fn apply_block_channel<R: Rng + ?Sized>(
    rng: &mut R,
    x: &SymbolSequence,
    nli_energy: f64,
    sigma_w2: f64,
) -> Result<SymbolSequence> {
    let n = x.len();
    let pc = x.pol_count();
    let mut xi: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n]; pc];
    let mut w: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n]; pc];
    for v in w.iter_mut() {
        fill_unit_gaussian(rng, v);
    }
    for v in xi.iter_mut() {
        fill_unit_gaussian(rng, v);
    }
    let xi_energy: f64 = xi.iter().flatten().map(|z| z.norm_sqr()).sum();
    let xi_scale = if nli_energy > 0.0 { (nli_energy * n as f64 / xi_energy).sqrt() } else { 0.0 };
    let w_scale = sigma_w2.sqrt();
    let pols = (0..pc)
        .map(|p| {
            (0..n)
                .map(|i| x.pol(p)[i] + w[p][i] * w_scale + xi[p][i] * xi_scale)
                .collect()
        })
        .collect();
    SymbolSequence::new(pols)
}

/// Synthetic block-memoryless channel. The NLI energy is drawn from the
/// gamma law at `P = energy_per_symbol(x)`; `ξ` is independent of `x` given
/// `Λ`. Deterministic in `seed`.
pub fn synthetic_block_channel(x: &SymbolSequence, params: &AnalyticChannelParams, seed: u64) -> Result<SymbolSequence> {
    if x.len() != params.n {
        return Err(Error::Shape(format!("block length {} differs from n={}", x.len(), params.n)));
    }
    let mut rng = rng_from_seed(seed);
    let power = energy_per_symbol(x);
    let lambda = if power > 0.0 { draw_nli_energy(&mut rng, power, params)? } else { 0.0 };
    apply_block_channel(&mut rng, x, lambda, params.sigma_w2)
}

/// Writes the AIR curves over a grid of `P` in dB:
/// `P_dB, air_gaussian, air_selected[n'=…]…, linear_capacity`.
pub fn write_curves_csv<W: Write>(
    out: &mut W,
    powers_db: &[f64],
    base: &AnalyticChannelParams,
    n_primes: &[f64],
) -> Result<()> {
    let mut header = String::from("P_dB,air_gaussian");
    for np in n_primes {
        header.push_str(&format!(",air_selected[n'={np}]"));
    }
    header.push_str(",linear_capacity");
    writeln!(out, "{header}")?;
    for &pdb in powers_db {
        let p = 10f64.powf(pdb / 10.0);
        let mut row = format!("{pdb},{}", gaussian_air(p, base)?);
        for &np in n_primes {
            let params = AnalyticChannelParams { n_prime: np, ..*base };
            params.validate()?;
            let g = optimal_threshold(p, &params)?;
            row.push_str(&format!(",{}", air_with_selection(p, g, &params)?));
        }
        row.push_str(&format!(",{}", linear_capacity(p, base.sigma_w2)));
        writeln!(out, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::child_rng;

    fn fig3(n_prime: f64) -> AnalyticChannelParams {
        AnalyticChannelParams { a: 0.01, sigma_w2: 0.001, n: 60, n_prime }
    }

    #[test]
    fn gaussian_air_peak() {
        let p = fig3(10.0);
        let popt = optimal_power(&p);
        assert!((popt - 0.05f64.cbrt()).abs() < 1e-12);
        assert!((popt - 0.368_403).abs() < 1e-6);
        let peak = gaussian_air(popt, &p).unwrap();
        // log2(1 + 0.3684031499/0.0015)
        let want = (1.0 + 0.05f64.cbrt() / 0.0015).log2();
        assert!((peak - want).abs() < 1e-12);
        assert!((peak - 7.95).abs() < 0.01);
        assert!(gaussian_air(popt * 1.01, &p).unwrap() < peak);
        assert!(gaussian_air(popt * 0.99, &p).unwrap() < peak);
        assert!(gaussian_air(1e6, &p).unwrap() < 1e-9);
    }

    #[test]
    fn gaussian_air_small_a_is_linear_capacity() {
        let p = AnalyticChannelParams { a: 1e-300, ..fig3(10.0) };
        for pw in [0.01, 1.0, 100.0] {
            assert!((gaussian_air(pw, &p).unwrap() - linear_capacity(pw, 0.001)).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_power_scaling() {
        let p = fig3(10.0);
        let q = AnalyticChannelParams { sigma_w2: 0.008, ..p };
        assert!((optimal_power(&q) / optimal_power(&p) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn acceptance_rate_limits() {
        let p = fig3(10.0);
        assert_eq!(acceptance_rate(0.0, 1.0, &p).unwrap(), 0.0);
        assert!((acceptance_rate(f64::INFINITY, 1.0, &p).unwrap() - 1.0).abs() < 1e-15);
        assert!((acceptance_rate(1e6, 1.0, &p).unwrap() - 1.0).abs() < 1e-15);
        let e = fig3(1.0);
        for g in [1e-4, 0.003, 0.01, 0.05] {
            let want = -(-g / 0.01f64).exp_m1();
            assert!((acceptance_rate(g, 1.0, &e).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn post_selection_examples() {
        let p = fig3(10.0);
        let v = post_selection_nli_variance(1e9, 2.0, &p).unwrap();
        assert!((v - 0.08).abs() < 1e-12);
        assert!(matches!(post_selection_nli_variance(0.0, 1.0, &p), Err(Error::Domain(_))));
        // exponential truncated at its mean: (1 − 2/e)/(1 − 1/e)
        let e = fig3(1.0);
        let closed = (1.0 - 2.0 / std::f64::consts::E) / (1.0 - 1.0 / std::f64::consts::E);
        let v = post_selection_nli_variance(0.01, 1.0, &e).unwrap() / 0.01;
        assert!((v - closed).abs() < 1e-12);
        assert!((v - 0.4180).abs() < 5e-5);
    }

    #[test]
    fn post_selection_monte_carlo_oracle() {
        // conditional mean of Exp(mean 1) given < 1, 10⁷ draws
        let mut rng = child_rng(5, "exp-oracle", 0);
        let (mut sum, mut cnt) = (0.0, 0u64);
        for _ in 0..10_000_000 {
            let u: f64 = rng.random();
            let v = -(1.0 - u).ln();
            if v < 1.0 {
                sum += v;
                cnt += 1;
            }
        }
        let mc = sum / cnt as f64;
        let e = fig3(1.0);
        let got = post_selection_nli_variance(0.01, 1.0, &e).unwrap() / 0.01;
        assert!((got - mc).abs() < 1e-3, "{got} vs {mc}");
    }

    #[test]
    fn selected_air_limits() {
        for np in [10.0, 20.0, 30.0] {
            let p = fig3(np);
            for pw in [0.1, 0.5, 2.0, 10.0] {
                let huge = 1e6 * p.nli_variance(pw);
                let d = air_with_selection(pw, huge, &p).unwrap() - gaussian_air(pw, &p).unwrap();
                assert!(d.abs() < 1e-6, "n'={np} P={pw}: {d}");
            }
        }
        let p = fig3(10.0);
        let a = air_with_selection(1.0, 1e-9, &p).unwrap();
        let b = air_with_selection(1.0, 1e-40, &p).unwrap();
        assert!(b < a && b < -10.0);
    }

    #[test]
    fn unbounded_growth_example() {
        let p = fig3(10.0);
        let at = |pw: f64| air_with_selection(pw, optimal_threshold(pw, &p).unwrap(), &p).unwrap();
        assert!(at(10.0) > at(1.0));
    }

    #[test]
    fn optimal_threshold_examples() {
        let p = fig3(20.0);
        assert!((optimal_threshold(1.0, &p).unwrap() - 5.25e-4).abs() < 1e-15);
        assert!(optimal_threshold(1.0, &fig3(10.0)).unwrap() < optimal_threshold(1.0, &fig3(30.0)).unwrap());
        assert!(optimal_threshold(1.0, &fig3(60.0)).is_err());
    }

    #[test]
    fn optimal_threshold_scan() {
        for np in [10.0, 20.0, 30.0] {
            let p = fig3(np);
            for pw in [10.0, 100.0] {
                let g = optimal_threshold(pw, &p).unwrap();
                let at = air_with_selection(pw, g, &p).unwrap();
                assert!(at >= air_with_selection(pw, 0.5 * g, &p).unwrap());
                assert!(at >= air_with_selection(pw, 2.0 * g, &p).unwrap());
            }
        }
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(&fig3(10.0)), RegimeClass::UnboundedGrowth);
        assert_eq!(classify_regime(&fig3(20.0)), RegimeClass::Saturating);
        assert_eq!(classify_regime(&fig3(30.0)), RegimeClass::PeakyDecay);
        assert_eq!(classify_regime(&fig3(20.0 + 1e-12)), RegimeClass::Saturating);
        assert_eq!(classify_regime(&fig3(19.5)), RegimeClass::UnboundedGrowth);
    }

    #[test]
    fn variance_bounded_on_grid() {
        for np in [1.0, 10.0, 30.0, 60.0] {
            let p = fig3(np);
            for pw in [0.01, 0.3, 1.0, 30.0, 1e4] {
                let cap = p.nli_variance(pw);
                for k in -12..6 {
                    let g = cap * 10f64.powi(k);
                    let v = post_selection_nli_variance(g, pw, &p).unwrap();
                    assert!(v > 0.0 && v <= g.min(cap) * (1.0 + 1e-12), "n'={np} P={pw} g={g}: {v}");
                    let eta = acceptance_rate(g, pw, &p).unwrap();
                    assert!((0.0..=1.0).contains(&eta));
                }
            }
        }
    }

    #[test]
    fn conventions_order() {
        let p = fig3(10.0);
        let g = optimal_threshold(1.0, &p).unwrap() * 50.0;
        let add = air_with_selection_conv(1.0, g, &p, OutputPowerConvention::Additive).unwrap();
        let keep = air_with_selection_conv(1.0, g, &p, OutputPowerConvention::EnergyPreserving).unwrap();
        let anti = air_with_selection_conv(1.0, g, &p, OutputPowerConvention::Anticorrelated).unwrap();
        assert!(add > keep && keep > anti);
    }

    #[test]
    fn synthetic_channel_identity_and_shape() {
        let x = crate::signal::gaussian_sequence(&crate::signal::SourceConfig { power: 1.0, len: 8, pol_count: 1, seed: 1 }).unwrap();
        let p = AnalyticChannelParams { a: 1e-300, sigma_w2: 1e-300, n: 8, n_prime: 4.0 };
        let y = synthetic_block_channel(&x, &p, 3).unwrap();
        assert!(x.distance_sqr(&y).unwrap() < 1e-100);
        let bad = AnalyticChannelParams { n: 9, ..p };
        assert!(matches!(synthetic_block_channel(&x, &bad, 3), Err(Error::Shape(_))));
        assert_eq!(synthetic_block_channel(&x, &p, 3).unwrap(), y);
    }

    #[test]
    fn curves_csv_shape() {
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &[-10.0], &fig3(10.0), &[]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "P_dB,air_gaussian,linear_capacity");
        assert_eq!(lines.len(), 2);
    }
}
