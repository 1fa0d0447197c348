//! Ideal digital transmitter and receiver: Nyquist (brick-wall sinc)
//! modulation, WDM and subcarrier multiplexing, matched filtering,
//! resampling and constant-phase removal.
//!
//! Every filter is a rectangular mask applied to the DFT of the whole burst,
//! so all operations are circular, like the periodic boundary of the
//! split-step solver. Frequency offsets must fall on the DFT grid of the
//! burst. A band of `N` bins centred at bin `c` occupies the half-open
//! index range `[c − N/2, c + N/2)`, so adjacent channels spaced by exactly
//! their symbol rate never share a bin.

use crate::error::{config, shape, Error, Result};
use crate::signal::{SymbolSequence, Waveform, C64};
use crate::spectral::{bin_of, offset_bins, FftPair};

/// Symbols discarded at each end of a burst in linear checks.
pub const EDGE_SYMBOLS_LINEAR: usize = 32;
/// Symbols discarded at each end of a burst in nonlinear rate estimates.
pub const EDGE_SYMBOLS_NONLINEAR: usize = 256;

/// Channel plan of a Nyquist-WDM comb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WdmConfig {
    /// Odd number of channels; the centre one is the channel under test.
    pub num_channels: usize,
    /// Per-channel symbol rate, GBd.
    pub symbol_rate: f64,
    /// Channel spacing, GHz.
    pub channel_spacing: f64,
    /// 1 or 4.
    pub subcarriers_per_channel: usize,
    /// Per-subcarrier symbol rate, GBd.
    pub subcarrier_rate: f64,
    /// Subcarrier spacing, GHz.
    pub subcarrier_spacing: f64,
}

impl WdmConfig {
    /// A single channel of the given rate with no subcarriers.
    pub fn single(symbol_rate: f64) -> Self {
        Self {
            num_channels: 1,
            symbol_rate,
            channel_spacing: symbol_rate,
            subcarriers_per_channel: 1,
            subcarrier_rate: symbol_rate,
            subcarrier_spacing: symbol_rate,
        }
    }

    /// Five 50 GBd channels on a 50 GHz grid.
    pub fn five_by_fifty() -> Self {
        Self { num_channels: 5, channel_spacing: 50.0, ..Self::single(50.0) }
    }

    /// Same comb with each channel split into four 12.5 GBd subcarriers.
    pub fn with_four_subcarriers(self) -> Self {
        Self {
            subcarriers_per_channel: 4,
            subcarrier_rate: self.symbol_rate / 4.0,
            subcarrier_spacing: self.channel_spacing / 4.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 || self.num_channels.is_multiple_of(2) {
            return config(format!("channel count must be odd, got {}", self.num_channels));
        }
        if !(self.symbol_rate > 0.0) || self.channel_spacing < self.symbol_rate * (1.0 - 1e-12) {
            return config("channel spacing must be at least the symbol rate");
        }
        match self.subcarriers_per_channel {
            1 => Ok(()),
            4 => {
                let tol = 1e-9 * self.channel_spacing;
                if (4.0 * self.subcarrier_spacing - self.channel_spacing).abs() > tol {
                    return config("four subcarriers must tile the channel spacing");
                }
                if !(self.subcarrier_rate > 0.0) || self.subcarrier_spacing < self.subcarrier_rate * (1.0 - 1e-12) {
                    return config("subcarrier spacing must be at least the subcarrier rate");
                }
                Ok(())
            }
            k => config(format!("subcarriers per channel must be 1 or 4, got {k}")),
        }
    }

    /// Centre frequencies of the channels relative to the centre channel, GHz.
    pub fn channel_offsets(&self) -> Vec<f64> {
        let half = (self.num_channels / 2) as f64;
        (0..self.num_channels)
            .map(|i| (i as f64 - half) * self.channel_spacing)
            .collect()
    }

    /// Subcarrier centres relative to their channel centre, GHz.
    pub fn subcarrier_offsets(&self) -> Vec<f64> {
        let k = self.subcarriers_per_channel as f64;
        (0..self.subcarriers_per_channel)
            .map(|i| (i as f64 - (k - 1.0) / 2.0) * self.subcarrier_spacing)
            .collect()
    }

    /// Rate of one transmitted stream: the subcarrier rate with subcarriers,
    /// the channel rate otherwise.
    pub fn stream_rate(&self) -> f64 {
        if self.subcarriers_per_channel == 1 {
            self.symbol_rate
        } else {
            self.subcarrier_rate
        }
    }
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * r {
        return config(format!("{what}: {num}/{den} is not a positive integer"));
    }
    Ok(k as usize)
}

fn grid_shift(offset: f64, m: usize, fs: f64) -> Result<i64> {
    offset_bins(offset, m, fs)
        .ok_or_else(|| Error::Config(format!("offset {offset} GHz is not on the {} GHz/{m} grid", fs)))
}

/// Ideal band-limited interpolation of a symbol stream to rate `fs`,
/// shifted to `center_offset`. The waveform's mean power equals the
/// symbols' mean energy.
pub fn modulate(x: &SymbolSequence, fs: f64, symbol_rate: f64, center_offset: f64) -> Result<Waveform> {
    let os = integer_ratio(fs, symbol_rate, "oversampling factor")?;
    let n = x.len();
    let m = n * os;
    let shift = grid_shift(center_offset, m, fs)?;
    let lo = -((n / 2) as i64);
    let mut small = FftPair::new(n);
    let mut big = FftPair::new(m);
    let scale = m as f64 / n as f64;
    let pols = x
        .pols()
        .iter()
        .map(|p| {
            let mut spec = p.clone();
            small.forward(&mut spec);
            let mut out = vec![C64::new(0.0, 0.0); m];
            for f in lo..lo + n as i64 {
                out[bin_of(f + shift, m)] = spec[bin_of(f, n)] * scale;
            }
            big.inverse(&mut out);
            out
        })
        .collect();
    Waveform::new(pols, fs, center_offset)
}

/// Matched filter and sampler: shifts the band at `center_offset` to
/// baseband, keeps `symbol_rate` worth of bins, and returns one sample per
/// symbol.
pub fn demodulate(w: &Waveform, symbol_rate: f64, center_offset: f64) -> Result<SymbolSequence> {
    let m = w.len();
    let os = integer_ratio(w.sampling_rate, symbol_rate, "oversampling factor")?;
    if !m.is_multiple_of(os) {
        return config(format!("waveform length {m} is not a multiple of oversampling {os}"));
    }
    let n = m / os;
    let shift = grid_shift(center_offset, m, w.sampling_rate)?;
    let lo = -((n / 2) as i64);
    let mut small = FftPair::new(n);
    let mut big = FftPair::new(m);
    let scale = n as f64 / m as f64;
    let pols = w
        .pols()
        .iter()
        .map(|p| {
            let mut spec = p.clone();
            big.forward(&mut spec);
            let mut out = vec![C64::new(0.0, 0.0); n];
            for f in lo..lo + n as i64 {
                out[bin_of(f, n)] = spec[bin_of(f + shift, m)] * scale;
            }
            small.inverse(&mut out);
            out
        })
        .collect();
    SymbolSequence::new(pols)
}

/// Sum of channels sampled on a common grid.
pub fn wdm_mux(channels: &[Waveform]) -> Result<Waveform> {
    let first = channels.first().ok_or_else(|| Error::Shape("no channels to multiplex".into()))?;
    for (i, c) in channels.iter().enumerate() {
        if c.len() != first.len() || c.pol_count() != first.pol_count() {
            return shape(format!("channel {i} shape differs from channel 0"));
        }
        if c.sampling_rate != first.sampling_rate {
            return shape(format!("channel {i} sampling rate differs from channel 0"));
        }
        if channels[..i].iter().any(|d| d.center_offset == c.center_offset) {
            return shape(format!("channel {i} repeats offset {} GHz", c.center_offset));
        }
    }
    let mut pols = first.pols().to_vec();
    for c in &channels[1..] {
        for (acc, p) in pols.iter_mut().zip(c.pols()) {
            acc.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
    }
    Waveform::new(pols, first.sampling_rate, 0.0)
}

/// Rectangular band-pass of width `bandwidth` around `center_offset`,
/// keeping the sampling rate.
pub fn wdm_demux(w: &Waveform, center_offset: f64, bandwidth: f64) -> Result<Waveform> {
    let m = w.len();
    let fs = w.sampling_rate;
    let shift = grid_shift(center_offset, m, fs)?;
    let nb = grid_shift(bandwidth, m, fs)?;
    if nb <= 0 || nb as usize > m {
        return config(format!("demux bandwidth {bandwidth} GHz does not fit in {fs} GHz"));
    }
    let lo = shift - nb / 2;
    let mut keep = vec![false; m];
    for f in lo..lo + nb {
        keep[bin_of(f, m)] = true;
    }
    let mut fft = FftPair::new(m);
    let pols = w
        .pols()
        .iter()
        .map(|p| {
            let mut spec = p.clone();
            fft.forward(&mut spec);
            spec.iter_mut().zip(&keep).filter(|(_, k)| !**k).for_each(|(z, _)| *z = C64::new(0.0, 0.0));
            fft.inverse(&mut spec);
            spec
        })
        .collect();
    Waveform::new(pols, fs, center_offset)
}

/// Result of [`remove_mean_phase`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCorrection {
    pub corrected: SymbolSequence,
    /// Estimated rotation, rad.
    pub theta: f64,
    /// Set when the cross-correlation vanished and `y` was returned as is.
    pub degenerate: bool,
}

/// Removes the constant rotation `arg Σ y·conj(x)`, estimated jointly over
/// polarizations.
pub fn remove_mean_phase(y: &SymbolSequence, x: &SymbolSequence) -> Result<PhaseCorrection> {
    y.same_shape(x)?;
    let corr: C64 = y
        .pols()
        .iter()
        .flatten()
        .zip(x.pols().iter().flatten())
        .map(|(a, b)| a * b.conj())
        .sum();
    if corr.norm() == 0.0 || !corr.norm().is_finite() {
        return Ok(PhaseCorrection { corrected: y.clone(), theta: 0.0, degenerate: true });
    }
    let theta = corr.arg();
    Ok(PhaseCorrection {
        corrected: y.rotated(C64::from_polar(1.0, -theta)),
        theta,
        degenerate: false,
    })
}

/// Band-limited rate conversion. Downsampling fails if more than a
/// `1e-12` fraction of the energy lies outside the new Nyquist band.
pub fn resample(w: &Waveform, new_fs: f64) -> Result<Waveform> {
    let m = w.len();
    let fs = w.sampling_rate;
    let m_new_f = m as f64 * new_fs / fs;
    let m_new = m_new_f.round();
    if m_new < 1.0 || (m_new_f - m_new).abs() > 1e-9 * m_new_f {
        return config(format!("resampling {m} samples from {fs} to {new_fs} GHz gives a fractional length"));
    }
    let m_new = m_new as usize;
    let keep = m.min(m_new);
    let lo = -((keep / 2) as i64);
    let mut a = FftPair::new(m);
    let mut b = FftPair::new(m_new);
    let scale = m_new as f64 / m as f64;
    let mut pols = Vec::with_capacity(w.pol_count());
    for p in w.pols() {
        let mut spec = p.clone();
        a.forward(&mut spec);
        if m_new < m {
            let total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
            let inside: f64 = (lo..lo + keep as i64).map(|f| spec[bin_of(f, m)].norm_sqr()).sum();
            if total > 0.0 && (total - inside) > 1e-12 * total {
                return Err(Error::Domain(format!(
                    "downsampling to {new_fs} GHz would alias {:.3e} of the signal energy",
                    (total - inside) / total
                )));
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); m_new];
        for f in lo..lo + keep as i64 {
            out[bin_of(f, m_new)] = spec[bin_of(f, m)] * scale;
        }
        b.inverse(&mut out);
        pols.push(out);
    }
    Waveform::new(pols, new_fs, w.center_offset)
}

/// Splits a stream made of consecutive blocks of `block_len` symbols into
/// `k` subcarrier streams. Each block is cut into `k` chunks of
/// `block_len/k` symbols that are sent simultaneously, chunk `i` on
/// subcarrier `i`.
pub fn split_subcarriers(stream: &SymbolSequence, block_len: usize, k: usize) -> Result<Vec<SymbolSequence>> {
    if k == 0 || block_len == 0 || !block_len.is_multiple_of(k) || !stream.len().is_multiple_of(block_len) {
        return config(format!(
            "stream of {} symbols cannot be split into blocks of {block_len} over {k} subcarriers",
            stream.len()
        ));
    }
    let chunk = block_len / k;
    let blocks = stream.len() / block_len;
    (0..k)
        .map(|i| {
            let idx: Vec<usize> = (0..blocks)
                .flat_map(|b| (0..chunk).map(move |j| b * block_len + i * chunk + j))
                .collect();
            stream.gather(&idx)
        })
        .collect()
}

/// Inverse of [`split_subcarriers`].
pub fn merge_subcarriers(subs: &[SymbolSequence], block_len: usize) -> Result<SymbolSequence> {
    let k = subs.len();
    if k == 0 || !block_len.is_multiple_of(k) {
        return config("cannot merge subcarriers: block length not divisible by their count");
    }
    let chunk = block_len / k;
    let len = subs[0].len();
    if subs.iter().any(|s| s.len() != len || s.pol_count() != subs[0].pol_count()) || !len.is_multiple_of(chunk) {
        return shape("subcarrier streams differ in shape");
    }
    let blocks = len / chunk;
    let pols = (0..subs[0].pol_count())
        .map(|p| {
            let mut out = Vec::with_capacity(len * k);
            for b in 0..blocks {
                for s in subs {
                    out.extend_from_slice(&s.pol(p)[b * chunk..(b + 1) * chunk]);
                }
            }
            out
        })
        .collect();
    SymbolSequence::new(pols)
}

/// Modulates one stream per subcarrier and sums them into a channel centred
/// at `channel_offset`.
pub fn modulate_subcarriers(subs: &[SymbolSequence], fs: f64, cfg: &WdmConfig, channel_offset: f64) -> Result<Waveform> {
    if subs.len() != cfg.subcarriers_per_channel {
        return config(format!("expected {} subcarrier streams, got {}", cfg.subcarriers_per_channel, subs.len()));
    }
    let waves = subs
        .iter()
        .zip(cfg.subcarrier_offsets())
        .map(|(s, o)| modulate(s, fs, cfg.stream_rate(), channel_offset + o))
        .collect::<Result<Vec<_>>>()?;
    let mut w = wdm_mux(&waves)?;
    w.center_offset = channel_offset;
    Ok(w)
}

/// Receives every subcarrier of the channel centred at `channel_offset`.
pub fn demodulate_subcarriers(w: &Waveform, cfg: &WdmConfig, channel_offset: f64) -> Result<Vec<SymbolSequence>> {
    cfg.subcarrier_offsets()
        .into_iter()
        .map(|o| demodulate(w, cfg.stream_rate(), channel_offset + o))
        .collect()
}

/// Drops `edge` symbols from both ends of every polarization.
pub fn trim_edges(x: &SymbolSequence, edge: usize) -> Result<SymbolSequence> {
    if 2 * edge >= x.len() {
        return config(format!("cannot discard {edge} symbols from each end of a {}-symbol burst", x.len()));
    }
    x.window(edge, x.len() - 2 * edge)
}
