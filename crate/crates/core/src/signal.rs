//! Complex symbol and waveform containers, the unbiased Gaussian source, and
//! energy arithmetic.
//!
//! Unit conventions: symbol amplitudes are in √mW, so `|x|²` is an optical
//! power in mW (energy per symbol period). Sampling rates and frequency
//! offsets are in GHz.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{config, shape, Error, Result};
use crate::rng::rng_from_seed;

pub type C64 = Complex64;

fn check_finite(data: &[C64], what: &str) -> Result<()> {
    if data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite samples")))
    }
}

fn check_pols(pols: &[Vec<C64>], what: &str) -> Result<usize> {
    if pols.is_empty() || pols.len() > 2 {
        return shape(format!("{what}: pol_count must be 1 or 2, got {}", pols.len()));
    }
    let n = pols[0].len();
    if n == 0 {
        return shape(format!("{what}: empty"));
    }
    if pols.iter().any(|p| p.len() != n) {
        return shape(format!("{what}: polarizations have different lengths"));
    }
    for p in pols {
        check_finite(p, what)?;
    }
    Ok(n)
}

/// A block of complex symbols on one or two polarizations.
///
/// Dual-polarization sequences keep the two polarizations as parallel arrays;
/// index `i` across both is one 4D symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSequence {
    pols: Vec<Vec<C64>>,
}

impl SymbolSequence {
    pub fn new(pols: Vec<Vec<C64>>) -> Result<Self> {
        check_pols(&pols, "symbol sequence")?;
        Ok(Self { pols })
    }

    pub fn single(symbols: Vec<C64>) -> Result<Self> {
        Self::new(vec![symbols])
    }

    pub fn zeros(pol_count: usize, len: usize) -> Result<Self> {
        Self::new(vec![vec![C64::new(0.0, 0.0); len]; pol_count])
    }

    pub fn pol_count(&self) -> usize {
        self.pols.len()
    }

    /// Length per polarization.
    pub fn len(&self) -> usize {
        self.pols[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pol(&self, p: usize) -> &[C64] {
        &self.pols[p]
    }

    pub fn pols(&self) -> &[Vec<C64>] {
        &self.pols
    }

    pub fn into_pols(self) -> Vec<Vec<C64>> {
        self.pols
    }

    /// Symbols `start..start+len` on every polarization.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return shape(format!(
                "window {start}..{} out of range for length {}",
                start + len,
                self.len()
            ));
        }
        Ok(Self {
            pols: self.pols.iter().map(|p| p[start..start + len].to_vec()).collect(),
        })
    }

    /// Gathers the given symbol indices on every polarization.
    pub fn gather(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() || idx.iter().any(|&i| i >= self.len()) {
            return shape("gather index out of range");
        }
        Ok(Self {
            pols: self
                .pols
                .iter()
                .map(|p| idx.iter().map(|&i| p[i]).collect())
                .collect(),
        })
    }

    /// Amplitude scaling by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pols: self
                .pols
                .iter()
                .map(|p| p.iter().map(|z| z * factor).collect())
                .collect(),
        }
    }

    /// Multiplies every symbol by a complex factor.
    pub fn rotated(&self, factor: C64) -> Self {
        Self {
            pols: self
                .pols
                .iter()
                .map(|p| p.iter().map(|z| z * factor).collect())
                .collect(),
        }
    }

    /// Sum of `|x|²` over all symbols and polarizations.
    pub fn total_energy(&self) -> f64 {
        self.pols.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Squared distance `‖self − other‖²` summed over polarizations.
    pub fn distance_sqr(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .pols
            .iter()
            .zip(&other.pols)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.pol_count() != other.pol_count() || self.len() != other.len() {
            return shape(format!(
                "sequences differ in shape: {}x{} vs {}x{}",
                self.pol_count(),
                self.len(),
                other.pol_count(),
                other.len()
            ));
        }
        Ok(())
    }
}

/// Configuration of the unbiased source: i.i.d. circularly-symmetric
/// complex Gaussian symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    /// Mean energy per symbol per polarization, mW.
    pub power: f64,
    /// Symbols per polarization.
    pub len: usize,
    pub pol_count: usize,
    pub seed: u64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return config(format!("source power must be positive, got {}", self.power));
        }
        if self.len == 0 {
            return config("source length must be at least 1");
        }
        if !(1..=2).contains(&self.pol_count) {
            return config(format!("pol_count must be 1 or 2, got {}", self.pol_count));
        }
        Ok(())
    }
}

/// Fills `out` with unit-power circular complex Gaussian samples.
pub fn fill_unit_gaussian<R: Rng + ?Sized>(rng: &mut R, out: &mut [C64]) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for z in out {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = C64::new(re * s, im * s);
    }
}

/// Draws `len` unit-power samples per polarization from `rng`, then scales.
pub fn gaussian_from_rng<R: Rng + ?Sized>(
    rng: &mut R,
    power: f64,
    len: usize,
    pol_count: usize,
) -> SymbolSequence {
    let amp = power.sqrt();
    let pols = (0..pol_count)
        .map(|_| {
            let mut v = vec![C64::new(0.0, 0.0); len];
            fill_unit_gaussian(rng, &mut v);
            v.iter_mut().for_each(|z| *z *= amp);
            v
        })
        .collect();
    SymbolSequence { pols }
}

/// I.i.d. complex Gaussian symbols with independent real and imaginary parts
/// of variance `P/2`. Unit-power noise is drawn first and scaled, so equal
/// seeds at different powers differ only by the amplitude factor.
pub fn gaussian_sequence(cfg: &SourceConfig) -> Result<SymbolSequence> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    Ok(gaussian_from_rng(&mut rng, cfg.power, cfg.len, cfg.pol_count))
}

/// `(1/n)·Σ|xᵢ|²` summed over polarizations, with `n` the per-polarization
/// length.
pub fn energy_per_symbol(x: &SymbolSequence) -> f64 {
    x.total_energy() / x.len() as f64
}

/// Ordered concatenation of blocks sharing the same polarization count.
pub fn concat(blocks: &[SymbolSequence]) -> Result<SymbolSequence> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::Shape("concat of zero blocks".into()))?;
    let pc = first.pol_count();
    if blocks.iter().any(|b| b.pol_count() != pc) {
        return shape("concat: mixed polarization counts");
    }
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    let mut pols = vec![Vec::with_capacity(total); pc];
    for b in blocks {
        for (dst, src) in pols.iter_mut().zip(&b.pols) {
            dst.extend_from_slice(src);
        }
    }
    Ok(SymbolSequence { pols })
}

/// Uniformly sampled complex waveform on one or two polarizations.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pols: Vec<Vec<C64>>,
    /// Sampling rate, GHz.
    pub sampling_rate: f64,
    /// Frequency of the sample frame's zero, GHz relative to the composite-band center.
    pub center_offset: f64,
}

impl Waveform {
    pub fn new(pols: Vec<Vec<C64>>, sampling_rate: f64, center_offset: f64) -> Result<Self> {
        if !(sampling_rate > 0.0 && sampling_rate.is_finite()) {
            return config(format!("sampling rate must be positive, got {sampling_rate}"));
        }
        check_pols(&pols, "waveform")?;
        Ok(Self {
            pols,
            sampling_rate,
            center_offset,
        })
    }

    pub fn pol_count(&self) -> usize {
        self.pols.len()
    }

    pub fn len(&self) -> usize {
        self.pols[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pol(&self, p: usize) -> &[C64] {
        &self.pols[p]
    }

    pub fn pols(&self) -> &[Vec<C64>] {
        &self.pols
    }

    pub fn pols_mut(&mut self) -> &mut [Vec<C64>] {
        &mut self.pols
    }

    pub fn into_pols(self) -> Vec<Vec<C64>> {
        self.pols
    }

    /// Sum of squared sample magnitudes.
    pub fn total_energy(&self) -> f64 {
        self.pols.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Mean optical power (mW), summed over polarizations.
    pub fn mean_power(&self) -> f64 {
        self.total_energy() / self.len() as f64
    }

    /// Sample spacing, ps.
    pub fn dt_ps(&self) -> f64 {
        1e3 / self.sampling_rate
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.pols {
            check_finite(p, "waveform")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn energy_examples() {
        let z = SymbolSequence::zeros(1, 5).unwrap();
        assert_eq!(energy_per_symbol(&z), 0.0);
        let one = SymbolSequence::single(vec![c(3.0, 4.0)]).unwrap();
        assert_eq!(energy_per_symbol(&one), 25.0);
        let two = SymbolSequence::single(vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        assert_eq!(energy_per_symbol(&two), 1.0);
    }

    #[test]
    fn dual_pol_energy_sums_polarizations() {
        let x = SymbolSequence::new(vec![vec![c(1.0, 0.0); 4], vec![c(0.0, 2.0); 4]]).unwrap();
        assert_eq!(energy_per_symbol(&x), 5.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SymbolSequence::single(vec![]).is_err());
        assert!(SymbolSequence::new(vec![vec![c(0.0, 0.0)], vec![]]).is_err());
        assert!(SymbolSequence::single(vec![c(f64::NAN, 0.0)]).is_err());
        assert!(SymbolSequence::new(vec![vec![c(0.0, 0.0)]; 3]).is_err());
    }

    #[test]
    fn concat_examples() {
        let a = SymbolSequence::single(vec![c(1.0, 0.0)]).unwrap();
        let b = SymbolSequence::single(vec![c(0.0, 1.0)]).unwrap();
        let ab = concat(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ab.pol(0), &[c(1.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(concat(std::slice::from_ref(&a)).unwrap(), a);
        let dual = SymbolSequence::zeros(2, 1).unwrap();
        assert!(matches!(concat(&[a, dual]), Err(Error::Shape(_))));
    }

    #[test]
    fn concat_preserves_energy_per_symbol() {
        let x = gaussian_sequence(&SourceConfig { power: 1.3, len: 50, pol_count: 2, seed: 3 }).unwrap();
        let xs = concat(&vec![x.clone(); 7]).unwrap();
        assert!((energy_per_symbol(&xs) - energy_per_symbol(&x)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_moments() {
        let n = 1_000_000;
        let x = gaussian_sequence(&SourceConfig { power: 1.0, len: n, pol_count: 1, seed: 11 }).unwrap();
        let p = energy_per_symbol(&x);
        assert!((0.99..=1.01).contains(&p), "power {p}");
        let mean: C64 = x.pol(0).iter().sum::<C64>() / n as f64;
        // std of the sample mean per component is sqrt(0.5/n)
        let sd = (0.5 / n as f64).sqrt();
        assert!(mean.re.abs() < 5.0 * sd && mean.im.abs() < 5.0 * sd);
        let corr: f64 = x.pol(0).iter().map(|z| z.re * z.im).sum::<f64>() / n as f64 / 0.5;
        assert!(corr.abs() < 0.01);
    }

    #[test]
    fn gaussian_scaling_and_determinism() {
        let base = SourceConfig { power: 1.0, len: 1_000_000, pol_count: 1, seed: 99 };
        let a = gaussian_sequence(&base).unwrap();
        let b = gaussian_sequence(&SourceConfig { power: 2.0, ..base }).unwrap();
        let s = 2f64.sqrt();
        assert!(a.pol(0).iter().zip(b.pol(0)).all(|(x, y)| (x * s - y).norm() <= 1e-12 * y.norm().max(1.0)));
        assert_eq!(a, gaussian_sequence(&base).unwrap());
        assert_ne!(a, gaussian_sequence(&SourceConfig { seed: 100, ..base }).unwrap());
    }

    #[test]
    fn invalid_source_config() {
        let bad = SourceConfig { power: 0.0, len: 4, pol_count: 1, seed: 0 };
        assert!(matches!(gaussian_sequence(&bad), Err(Error::Config(_))));
        let bad = SourceConfig { power: 1.0, len: 0, pol_count: 1, seed: 0 };
        assert!(gaussian_sequence(&bad).is_err());
    }

    #[test]
    fn waveform_validation() {
        assert!(Waveform::new(vec![vec![c(0.0, 0.0)]], 0.0, 0.0).is_err());
        assert!(Waveform::new(vec![vec![]], 10.0, 0.0).is_err());
        let w = Waveform::new(vec![vec![c(1.0, 0.0); 4]], 100.0, 0.0).unwrap();
        assert_eq!(w.dt_ps(), 10.0);
        assert_eq!(w.mean_power(), 1.0);
    }
}
