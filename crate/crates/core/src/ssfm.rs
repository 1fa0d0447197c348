//! Split-step Fourier propagation through a fiber with ideal distributed
//! amplification.
//!
//! Sign conventions: the field is sampled as `A(t) = Σ_k Ã_k e^{+jω_k t}`,
//! the linear operator over a length `z` is `exp(−j(β₂/2)ω²z)` and the Kerr
//! operator is `exp(+jγ|A|²z)`. With these signs a positive `β₂` is the
//! anomalous (focusing) regime of standard single-mode fiber.
//!
//! Units: `β₂` ps²/km, `γ` 1/(W·km), `α` dB/km, lengths km, step sizes m,
//! sampling rates GHz, time ps, field amplitudes √mW.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{config, Result};
use crate::rng::child_rng;
use crate::signal::{Waveform, C64};
use crate::spectral::{angular_grid, FftPair};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Physical fiber link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// Attenuation, dB/km.
    pub alpha_db_km: f64,
    /// Group-velocity dispersion, ps²/km.
    pub beta2_ps2_km: f64,
    /// Nonlinear coefficient, 1/(W·km).
    pub gamma_per_w_km: f64,
    /// Link length, km.
    pub length_km: f64,
    /// Spontaneous-emission factor.
    pub nsp: f64,
    /// Optical carrier, THz.
    pub carrier_thz: f64,
}

impl Default for LinkSpec {
    /// 1000 km of standard single-mode fiber with ideal distributed amplification.
    fn default() -> Self {
        Self {
            alpha_db_km: 0.2,
            beta2_ps2_km: 21.7,
            gamma_per_w_km: 1.27,
            length_km: 1000.0,
            nsp: 1.0,
            carrier_thz: 193.41,
        }
    }
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0 && self.length_km.is_finite()) {
            return config(format!("link length must be positive, got {}", self.length_km));
        }
        if !(self.alpha_db_km >= 0.0) {
            return config(format!("attenuation must be non-negative, got {}", self.alpha_db_km));
        }
        if !(self.nsp >= 0.0) {
            return config(format!("nsp must be non-negative, got {}", self.nsp));
        }
        if !(self.beta2_ps2_km.is_finite() && self.gamma_per_w_km.is_finite()) {
            return config("beta2 and gamma must be finite");
        }
        if !(self.carrier_thz > 0.0) {
            return config("carrier frequency must be positive");
        }
        Ok(())
    }

    /// Power attenuation coefficient, 1/km.
    pub fn alpha_per_km(&self) -> f64 {
        self.alpha_db_km * std::f64::consts::LN_10 / 10.0
    }

    /// One-sided ASE power spectral density accumulated over the whole
    /// link per polarization, mW/GHz: `n_sp·h·ν·α·L`.
    pub fn ase_psd_mw_per_ghz(&self) -> f64 {
        self.nsp * PLANCK * self.carrier_thz * 1e12 * self.alpha_per_km() * self.length_km * 1e3 * 1e9
    }

    /// ASE variance per polarization in a bandwidth `bw_ghz`, mW.
    pub fn ase_variance(&self, bw_ghz: f64) -> f64 {
        self.ase_psd_mw_per_ghz() * bw_ghz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitScheme {
    /// Half linear, nonlinear, half linear.
    #[default]
    Symmetrized,
    /// Full linear step followed by the nonlinear step.
    Asymmetric,
}

/// Numerical configuration of the split-step solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsfmSpec {
    /// Step size, m.
    pub step_m: f64,
    /// Sampling rate, GHz.
    pub sampling_rate_ghz: f64,
    pub scheme: SplitScheme,
    pub noise: bool,
    pub seed: u64,
}

impl SsfmSpec {
    /// Step count for the link, or an error if the length is not an
    /// integer number of steps.
    pub fn steps(&self, link: &LinkSpec) -> Result<usize> {
        if !(self.step_m > 0.0) {
            return config(format!("step size must be positive, got {}", self.step_m));
        }
        if !(self.sampling_rate_ghz > 0.0) {
            return config(format!("sampling rate must be positive, got {}", self.sampling_rate_ghz));
        }
        let exact = link.length_km * 1e3 / self.step_m;
        let steps = exact.round();
        if steps < 1.0 || (exact - steps).abs() > 1e-6 * exact {
            return config(format!(
                "link length {} km is not a whole number of {} m steps",
                link.length_km, self.step_m
            ));
        }
        Ok(steps as usize)
    }
}

fn check_inputs(w: &Waveform, link: &LinkSpec, ssfm: &SsfmSpec) -> Result<usize> {
    link.validate()?;
    let steps = ssfm.steps(link)?;
    let fs = ssfm.sampling_rate_ghz;
    if ((w.sampling_rate - fs) / fs).abs() > 1e-9 {
        return config(format!(
            "waveform sampled at {} GHz but solver runs at {} GHz",
            w.sampling_rate, fs
        ));
    }
    if !w.len().is_power_of_two() {
        return config(format!("sample count {} is not a power of two", w.len()));
    }
    Ok(steps)
}

fn dispersion_phase(omega: &[f64], beta2: f64, z_km: f64) -> Vec<C64> {
    omega
        .iter()
        .map(|&w| Complex64::from_polar(1.0, -0.5 * beta2 * w * w * z_km))
        .collect()
}

fn nonlinear_step(pols: &mut [Vec<C64>], gamma_mw_km: f64, dz_km: f64) {
    match pols {
        [x] => {
            for a in x.iter_mut() {
                let (s, c) = (gamma_mw_km * a.norm_sqr() * dz_km).sin_cos();
                *a *= C64::new(c, s);
            }
        }
        [x, y] => {
            let g = 8.0 / 9.0 * gamma_mw_km * dz_km;
            for (a, b) in x.iter_mut().zip(y.iter_mut()) {
                let (s, c) = (g * (a.norm_sqr() + b.norm_sqr())).sin_cos();
                let r = C64::new(c, s);
                *a *= r;
                *b *= r;
            }
        }
        _ => unreachable!("pol_count is 1 or 2"),
    }
}

fn mul_assign(data: &mut [C64], h: &[C64]) {
    data.iter_mut().zip(h).for_each(|(a, b)| *a *= b);
}

/// Propagates a waveform through the link.
///
/// Per step: linear dispersion (gain cancels loss exactly, so the linear
/// operator is all-pass), Kerr rotation by `γ|x|²` for one polarization or
/// `(8/9)γ(|x|²+|y|²)` for two (Manakov), and, when noise is on, additive
/// circular Gaussian noise of variance `n_sp·h·ν·α·Δz·F_s` per sample per
/// polarization. Boundaries are periodic.
pub fn propagate(w: &Waveform, link: &LinkSpec, ssfm: &SsfmSpec) -> Result<Waveform> {
    let steps = check_inputs(w, link, ssfm)?;
    w.check_finite()?;
    let m = w.len();
    let dz_km = link.length_km / steps as f64;
    let gamma = link.gamma_per_w_km * 1e-3;
    let omega = angular_grid(m, ssfm.sampling_rate_ghz);
    let half = dispersion_phase(&omega, link.beta2_ps2_km, 0.5 * dz_km);
    let full = dispersion_phase(&omega, link.beta2_ps2_km, dz_km);

    // noise per sample is n_sp·h·ν·α·Δz·Fs; in the unnormalized DFT domain the
    // per-bin variance is m times larger
    let noise_std = if ssfm.noise {
        let per_sample = link.ase_psd_mw_per_ghz() / link.length_km * dz_km * ssfm.sampling_rate_ghz;
        (per_sample * m as f64 / 2.0).sqrt()
    } else {
        0.0
    };
    let mut rng = child_rng(ssfm.seed, "ssfm-noise", 0);
    let mut add_noise = |spec: &mut [C64]| {
        if noise_std > 0.0 {
            for z in spec.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z += C64::new(re, im) * noise_std;
            }
        }
    };

    let mut fft = FftPair::new(m);
    let mut pols = w.pols().to_vec();
    for p in pols.iter_mut() {
        fft.forward(p);
    }
    for _ in 0..steps {
        match ssfm.scheme {
            SplitScheme::Symmetrized => {
                for p in pols.iter_mut() {
                    mul_assign(p, &half);
                    fft.inverse(p);
                }
                nonlinear_step(&mut pols, gamma, dz_km);
                for p in pols.iter_mut() {
                    fft.forward(p);
                    mul_assign(p, &half);
                    add_noise(p);
                }
            }
            SplitScheme::Asymmetric => {
                for p in pols.iter_mut() {
                    mul_assign(p, &full);
                    fft.inverse(p);
                }
                nonlinear_step(&mut pols, gamma, dz_km);
                for p in pols.iter_mut() {
                    fft.forward(p);
                    add_noise(p);
                }
            }
        }
    }
    for p in pols.iter_mut() {
        fft.inverse(p);
    }
    let out = Waveform::new(pols, w.sampling_rate, w.center_offset)?;
    out.check_finite()?;
    Ok(out)
}

/// Applies the exact inverse of the link's accumulated dispersion,
/// `exp(+j(β₂/2)ω²L)`.
pub fn dispersion_compensate(w: &Waveform, link: &LinkSpec) -> Result<Waveform> {
    link.validate()?;
    let m = w.len();
    let omega = angular_grid(m, w.sampling_rate);
    let h = dispersion_phase(&omega, -link.beta2_ps2_km, link.length_km);
    let mut fft = FftPair::new(m);
    let mut pols = w.pols().to_vec();
    for p in pols.iter_mut() {
        fft.forward(p);
        mul_assign(p, &h);
        fft.inverse(p);
    }
    Waveform::new(pols, w.sampling_rate, w.center_offset)
}

/// Single-channel digital backpropagation: a noiseless propagation with
/// negated `β₂` and `γ`. Because gain cancels loss everywhere, the reversed
/// power profile is flat as well.
pub fn digital_backpropagation(w: &Waveform, link: &LinkSpec, ssfm: &SsfmSpec) -> Result<Waveform> {
    let inverse = LinkSpec {
        beta2_ps2_km: -link.beta2_ps2_km,
        gamma_per_w_km: -link.gamma_per_w_km,
        ..*link
    };
    propagate(w, &inverse, &SsfmSpec { noise: false, ..*ssfm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::fill_unit_gaussian;

    fn random_wave(m: usize, pols: usize, power: f64, fs: f64, seed: u64) -> Waveform {
        let mut rng = child_rng(seed, "test-wave", 0);
        let data = (0..pols)
            .map(|_| {
                let mut v = vec![C64::new(0.0, 0.0); m];
                fill_unit_gaussian(&mut rng, &mut v);
                v.iter_mut().for_each(|z| *z *= power.sqrt());
                v
            })
            .collect();
        Waveform::new(data, fs, 0.0).unwrap()
    }

    fn spec(step_m: f64, fs: f64) -> SsfmSpec {
        SsfmSpec { step_m, sampling_rate_ghz: fs, scheme: SplitScheme::Symmetrized, noise: false, seed: 1 }
    }

    fn rel_rms(a: &Waveform, b: &Waveform) -> f64 {
        let num: f64 = a.pols().iter().flatten().zip(b.pols().iter().flatten()).map(|(x, y)| (x - y).norm_sqr()).sum();
        (num / b.total_energy()).sqrt()
    }

    fn short_link() -> LinkSpec {
        LinkSpec { length_km: 100.0, ..LinkSpec::default() }
    }

    #[test]
    fn linear_propagation_is_all_pass() {
        let w = random_wave(1024, 1, 1.0, 100.0, 2);
        let link = LinkSpec { gamma_per_w_km: 0.0, ..short_link() };
        let out = propagate(&w, &link, &spec(500.0, 100.0)).unwrap();
        let mut a = w.pol(0).to_vec();
        let mut b = out.pol(0).to_vec();
        let mut f = FftPair::new(1024);
        f.forward(&mut a);
        f.forward(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.norm() - y.norm()).abs() <= 1e-12 * x.norm().max(1e-3));
        }
    }

    #[test]
    fn self_phase_modulation_closed_form() {
        let w = random_wave(512, 1, 2.0, 100.0, 3);
        let link = LinkSpec { beta2_ps2_km: 0.0, alpha_db_km: 0.0, ..LinkSpec::default() };
        let out = propagate(&w, &link, &spec(500.0, 100.0)).unwrap();
        let g = link.gamma_per_w_km * 1e-3 * link.length_km;
        for (a, b) in w.pol(0).iter().zip(out.pol(0)) {
            let want = a * C64::from_polar(1.0, g * a.norm_sqr());
            assert!((b - want).norm() <= 1e-9 * want.norm().max(1e-6));
        }
    }

    #[test]
    fn manakov_phase_uses_eight_ninths() {
        let w = random_wave(256, 2, 1.0, 100.0, 4);
        let link = LinkSpec { beta2_ps2_km: 0.0, alpha_db_km: 0.0, length_km: 10.0, ..LinkSpec::default() };
        let out = propagate(&w, &link, &spec(500.0, 100.0)).unwrap();
        let g = 8.0 / 9.0 * link.gamma_per_w_km * 1e-3 * 10.0;
        for i in 0..256 {
            let tot = w.pol(0)[i].norm_sqr() + w.pol(1)[i].norm_sqr();
            let want = w.pol(1)[i] * C64::from_polar(1.0, g * tot);
            assert!((out.pol(1)[i] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn lossless_energy_conservation() {
        for pc in [1, 2] {
            let w = random_wave(2048, pc, 5.0, 100.0, 5);
            let link = LinkSpec { alpha_db_km: 0.0, ..short_link() };
            let out = propagate(&w, &link, &spec(500.0, 100.0)).unwrap();
            assert!(((out.total_energy() - w.total_energy()) / w.total_energy()).abs() < 1e-9);
        }
    }

    #[test]
    fn compensation_inverts_linear_propagation() {
        let w = random_wave(1024, 2, 1.0, 100.0, 6);
        let link = LinkSpec { gamma_per_w_km: 0.0, ..short_link() };
        let out = dispersion_compensate(&propagate(&w, &link, &spec(500.0, 100.0)).unwrap(), &link).unwrap();
        assert!(rel_rms(&out, &w) < 1e-10);
        assert!(((out.total_energy() - w.total_energy()) / w.total_energy()).abs() < 1e-12);
        // applying it twice overcompensates
        let twice = dispersion_compensate(&dispersion_compensate(&w, &link).unwrap(), &link).unwrap();
        assert!(rel_rms(&twice, &w) > 0.1);
    }

    #[test]
    fn backpropagation_inverts_noiseless_propagation() {
        let w = random_wave(2048, 1, 3.0, 100.0, 7);
        let link = short_link();
        let s = spec(500.0, 100.0);
        let fwd = propagate(&w, &link, &s).unwrap();
        assert!(rel_rms(&fwd, &w) > 0.1);
        let back = digital_backpropagation(&fwd, &link, &s).unwrap();
        assert!(rel_rms(&back, &w) < 1e-3);
        let noisy = propagate(&w, &link, &SsfmSpec { noise: true, ..s }).unwrap();
        let back = digital_backpropagation(&noisy, &link, &s).unwrap();
        assert!(rel_rms(&back, &w) > 1e-6);
    }

    #[test]
    fn backpropagation_without_nonlinearity_is_compensation() {
        let w = random_wave(1024, 1, 1.0, 100.0, 8);
        let link = LinkSpec { gamma_per_w_km: 0.0, ..short_link() };
        let a = digital_backpropagation(&w, &link, &spec(500.0, 100.0)).unwrap();
        let b = dispersion_compensate(&w, &link).unwrap();
        assert!(rel_rms(&a, &b) < 1e-9);
    }

    #[test]
    fn schemes_agree_at_small_steps() {
        let w = random_wave(1024, 1, 1.0, 100.0, 9);
        let link = LinkSpec { length_km: 20.0, ..LinkSpec::default() };
        let a = propagate(&w, &link, &spec(50.0, 100.0)).unwrap();
        let b = propagate(&w, &link, &SsfmSpec { scheme: SplitScheme::Asymmetric, ..spec(50.0, 100.0) }).unwrap();
        assert!(rel_rms(&a, &b) < 1e-3);
    }

    #[test]
    fn noise_is_seeded() {
        let w = random_wave(256, 1, 1.0, 100.0, 10);
        let s = SsfmSpec { noise: true, ..spec(500.0, 100.0) };
        let link = short_link();
        assert_eq!(propagate(&w, &link, &s).unwrap(), propagate(&w, &link, &s).unwrap());
        assert_ne!(propagate(&w, &link, &s).unwrap(), propagate(&w, &link, &SsfmSpec { seed: 2, ..s }).unwrap());
    }

    #[test]
    fn configuration_errors() {
        let w = random_wave(256, 1, 1.0, 100.0, 11);
        let link = short_link();
        assert!(propagate(&w, &link, &spec(500.0, 400.0)).is_err());
        assert!(propagate(&w, &link, &spec(333.0, 100.0)).is_err());
        let odd = Waveform::new(vec![vec![C64::new(1.0, 0.0); 100]], 100.0, 0.0).unwrap();
        assert!(propagate(&odd, &link, &spec(500.0, 100.0)).is_err());
    }

    #[test]
    fn ase_budget_value() {
        // n_sp·h·ν·α·L at 193.41 THz, 0.2 dB/km, 1000 km, in mW over 50 GHz
        let link = LinkSpec::default();
        let want = 6.626_070_15e-34 * 193.41e12 * (0.2 * std::f64::consts::LN_10 / 10.0) * 1000.0 * 50e9 * 1e3;
        assert!((link.ase_variance(50.0) - want).abs() < 1e-12 * want);
    }
}
