//! Transmit–propagate–receive–estimate sweeps over launch power.
//!
//! Every channel of the comb carries independent symbols from the same kind
//! of source: unbiased Gaussian, or blocks from a selection store
//! concatenated in random order and rescaled to the launch power. Only the
//! centre channel is received. Per burst the receiver filters the centre
//! channel, undoes dispersion (or backpropagates), samples each stream,
//! removes the constant phase jointly over the channel and discards the
//! burst edges. The rate is estimated on all bursts of a power point pooled
//! together, with the metric variance optimized per point.

use std::io::Write;

use rayon::prelude::*;

use crate::air::{estimate_air_optimized, AirEstimate, SelectionCounts};
use crate::error::{config, Error, Result};
use crate::rng::{child_rng, derive_seed};
use crate::selection::{assemble_stream, rescale_blocks};
use crate::signal::{concat, gaussian_from_rng, SymbolSequence, Waveform, C64};
use crate::ssfm::{digital_backpropagation, dispersion_compensate, propagate, LinkSpec, SplitScheme, SsfmSpec};
use crate::store::SequenceStore;
use crate::wdm::{
    demodulate, demodulate_subcarriers, modulate, modulate_subcarriers, resample,
    split_subcarriers, trim_edges, wdm_demux, wdm_mux, WdmConfig,
};

/// Numerical resolution of digital backpropagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbpSpec {
    pub step_m: f64,
    pub sampling_rate_ghz: f64,
}

impl Default for DbpSpec {
    /// 500 m steps at 100 GHz.
    fn default() -> Self {
        Self { step_m: 500.0, sampling_rate_ghz: 100.0 }
    }
}

/// Everything that defines a transmission experiment except the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub link: LinkSpec,
    /// Forward propagation step, m.
    pub step_m: f64,
    /// Forward propagation sampling rate, GHz.
    pub sampling_rate_ghz: f64,
    pub wdm: WdmConfig,
    pub pol_count: usize,
    /// Symbols per channel per polarization in one burst, summed over
    /// subcarriers.
    pub burst_len: usize,
    /// Independent bursts per power point.
    pub bursts: usize,
    /// Symbols discarded at each end of a burst, counted at the channel
    /// rate.
    pub edge_symbols: usize,
    pub noise: bool,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.wdm.validate()?;
        if !(1..=2).contains(&self.pol_count) {
            return config(format!("pol_count must be 1 or 2, got {}", self.pol_count));
        }
        if self.bursts == 0 {
            return config("at least one burst per power point is required");
        }
        let k = self.wdm.subcarriers_per_channel;
        if !self.burst_len.is_multiple_of(k) || !self.edge_symbols.is_multiple_of(k) {
            return config("burst length and edge discard must be divisible by the subcarrier count");
        }
        if 2 * self.edge_symbols >= self.burst_len {
            return config("edge discard leaves no symbols");
        }
        let span = self.wdm.channel_spacing * (self.wdm.num_channels as f64 - 1.0) + self.wdm.symbol_rate;
        if span > self.sampling_rate_ghz * (1.0 + 1e-12) {
            return config(format!(
                "{} GHz of signal does not fit in a {} GHz sampling rate",
                span, self.sampling_rate_ghz
            ));
        }
        Ok(())
    }

    fn ssfm(&self, noise_seed: u64) -> SsfmSpec {
        SsfmSpec {
            step_m: self.step_m,
            sampling_rate_ghz: self.sampling_rate_ghz,
            scheme: SplitScheme::Symmetrized,
            noise: self.noise,
            seed: noise_seed,
        }
    }

    /// Linear SNR of the centre channel: per-polarization launch power over
    /// the ASE collected in one symbol-rate bandwidth.
    pub fn linear_snr(&self, power_dbm: f64) -> f64 {
        dbm_to_mw(power_dbm) / self.pol_count as f64 / self.link.ase_variance(self.wdm.symbol_rate)
    }

    /// `log₂(1 + SNR)` reference in bits/s/Hz/pol.
    pub fn linear_capacity(&self, power_dbm: f64) -> f64 {
        (1.0 + self.linear_snr(power_dbm)).log2()
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Symbol source of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Unbiased,
    /// Blocks selected at `store.selection_power`, rescaled per power point.
    Selected(SequenceStore),
}

impl Source {
    fn counts(&self) -> SelectionCounts {
        match self {
            Source::Unbiased => SelectionCounts::unbiased(1),
            Source::Selected(s) => SelectionCounts {
                n: s.block_len,
                n_proposed: s.n_proposed,
                n_accepted: s.n_accepted,
            },
        }
    }

    fn block_len(&self) -> usize {
        match self {
            Source::Unbiased => 1,
            Source::Selected(s) => s.block_len,
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub power_dbm: f64,
    pub estimate: AirEstimate,
    pub n: usize,
    pub seed: u64,
}

impl SweepRow {
    /// Spectral efficiency in bits/s/Hz/pol.
    pub fn se(&self) -> f64 {
        self.estimate.air
    }
}

/// Channel streams for burst `b` at per-polarization symbol energy
/// `power`: one stream per subcarrier.
fn channel_streams(sc: &Scenario, source: &Source, power: f64, b: u64, ch: u64) -> Result<Vec<SymbolSequence>> {
    let k = sc.wdm.subcarriers_per_channel;
    let seed = derive_seed(sc.seed, "tx-burst", b);
    let stream = match source {
        Source::Unbiased => {
            let mut rng = child_rng(seed, "tx-channel", ch);
            gaussian_from_rng(&mut rng, power, sc.burst_len, sc.pol_count)
        }
        Source::Selected(store) => {
            if store.pol_count != sc.pol_count {
                return config(format!(
                    "store has {} polarizations but the scenario uses {}",
                    store.pol_count, sc.pol_count
                ));
            }
            if !sc.burst_len.is_multiple_of(store.block_len) {
                return config(format!(
                    "burst length {} is not a multiple of the stored block length {}",
                    sc.burst_len, store.block_len
                ));
            }
            let blocks = rescale_blocks(&store.blocks, store.selection_power, power);
            assemble_stream(&blocks, sc.burst_len / store.block_len, derive_seed(seed, "tx-order", ch))?
        }
    };
    if k == 1 {
        Ok(vec![stream])
    } else {
        let block = source.block_len().max(k);
        // each subcarrier carries a quarter of the channel energy
        split_subcarriers(&stream.scaled((1.0 / k as f64).sqrt()), block, k)
    }
}

fn modulate_channel(sc: &Scenario, streams: &[SymbolSequence], offset: f64) -> Result<Waveform> {
    if streams.len() == 1 {
        modulate(&streams[0], sc.sampling_rate_ghz, sc.wdm.symbol_rate, offset)
    } else {
        modulate_subcarriers(streams, sc.sampling_rate_ghz, &sc.wdm, offset)
    }
}

/// Equalizes and samples the centre channel for one receiver, then aligns
/// the phase and trims the burst edges.
fn receive(
    sc: &Scenario,
    band: &Waveform,
    tx_centre: &[SymbolSequence],
    dbp: Option<&DbpSpec>,
) -> Result<(SymbolSequence, SymbolSequence)> {
    let eq = match dbp {
        Some(d) => {
            let low = resample(band, d.sampling_rate_ghz)?;
            let spec = SsfmSpec {
                step_m: d.step_m,
                sampling_rate_ghz: d.sampling_rate_ghz,
                scheme: SplitScheme::Symmetrized,
                noise: false,
                seed: 0,
            };
            digital_backpropagation(&low, &sc.link, &spec)?
        }
        None => dispersion_compensate(band, &sc.link)?,
    };
    let k = sc.wdm.subcarriers_per_channel;
    let rx_streams = if k == 1 {
        vec![demodulate(&eq, sc.wdm.symbol_rate, 0.0)?]
    } else {
        demodulate_subcarriers(&eq, &sc.wdm, 0.0)?
    };
    let corr: C64 = rx_streams
        .iter()
        .zip(tx_centre)
        .flat_map(|(y, x)| y.pols().iter().flatten().zip(x.pols().iter().flatten()))
        .map(|(a, b)| a * b.conj())
        .sum();
    let rot = if corr.norm() > 0.0 { C64::from_polar(1.0, -corr.arg()) } else { C64::new(1.0, 0.0) };
    let edge = sc.edge_symbols / k;
    let mut xs = Vec::with_capacity(k);
    let mut ys = Vec::with_capacity(k);
    for (x, y) in tx_centre.iter().zip(&rx_streams) {
        xs.push(trim_edges(x, edge)?);
        ys.push(trim_edges(&y.rotated(rot), edge)?);
    }
    Ok((concat(&xs)?, concat(&ys)?))
}

/// Transmits burst `b` once and returns the (sent, received) centre-channel
/// symbols for each receiver.
fn run_burst(
    sc: &Scenario,
    source: &Source,
    power: f64,
    receivers: &[Option<DbpSpec>],
    b: u64,
) -> Result<Vec<(SymbolSequence, SymbolSequence)>> {
    let offsets = sc.wdm.channel_offsets();
    let centre = offsets.len() / 2;
    let mut tx_centre = Vec::new();
    let mut waves = Vec::with_capacity(offsets.len());
    for (c, &off) in offsets.iter().enumerate() {
        let streams = channel_streams(sc, source, power, b, c as u64)?;
        waves.push(modulate_channel(sc, &streams, off)?);
        if c == centre {
            tx_centre = streams;
        }
    }
    let tx = wdm_mux(&waves)?;
    drop(waves);
    let rx = propagate(&tx, &sc.link, &sc.ssfm(derive_seed(sc.seed, "ase", b)))?;
    drop(tx);
    let band = if sc.wdm.num_channels > 1 {
        wdm_demux(&rx, 0.0, sc.wdm.channel_spacing)?
    } else {
        rx
    };
    receivers.iter().map(|d| receive(sc, &band, &tx_centre, d.as_ref())).collect()
}

/// Rate estimates at one launch power (dBm per channel, all polarizations)
/// for several receivers sharing the same transmissions.
pub fn run_point_receivers(
    sc: &Scenario,
    source: &Source,
    power_dbm: f64,
    receivers: &[Option<DbpSpec>],
) -> Result<Vec<SweepRow>> {
    sc.validate()?;
    let k = sc.wdm.subcarriers_per_channel as f64;
    let channel_power = dbm_to_mw(power_dbm) / sc.pol_count as f64;
    let per_burst = (0..sc.bursts as u64)
        .into_par_iter()
        .map(|b| run_burst(sc, source, channel_power, receivers, b))
        .collect::<Result<Vec<_>>>()?;
    (0..receivers.len())
        .map(|r| {
            let xs: Vec<_> = per_burst.iter().map(|v| v[r].0.clone()).collect();
            let ys: Vec<_> = per_burst.iter().map(|v| v[r].1.clone()).collect();
            let (x, y) = (concat(&xs)?, concat(&ys)?);
            if !y.pols().iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::Numeric("non-finite received samples".into()));
            }
            let estimate = estimate_air_optimized(&x, &y, channel_power / k, &source.counts())?;
            Ok(SweepRow { power_dbm, estimate, n: source.block_len(), seed: sc.seed })
        })
        .collect()
}

/// Rate estimate at one launch power (dBm per channel, all polarizations).
pub fn run_point(sc: &Scenario, source: &Source, power_dbm: f64, dbp: Option<&DbpSpec>) -> Result<SweepRow> {
    Ok(run_point_receivers(sc, source, power_dbm, &[dbp.copied()])?.remove(0))
}

/// Rate estimates over a grid of launch powers.
pub fn run_experiment(sc: &Scenario, source: &Source, powers_dbm: &[f64], dbp: Option<&DbpSpec>) -> Result<Vec<SweepRow>> {
    if powers_dbm.is_empty() {
        return config("power sweep is empty");
    }
    powers_dbm.iter().map(|&p| run_point(sc, source, p, dbp)).collect()
}

/// Row with the largest spectral efficiency.
pub fn peak(rows: &[SweepRow]) -> Option<SweepRow> {
    rows.iter().copied().max_by(|a, b| a.se().total_cmp(&b.se()))
}

pub const SWEEP_HEADER: &str = "power_dBm,se_bits_s_hz_pol,gross_air,rate_loss,sigma2_opt,eta,n,seed";

/// Writes a sweep as CSV. A `# store_sha256=` manifest line precedes the
/// header when a selection store was used.
pub fn write_sweep_csv<W: Write>(out: &mut W, rows: &[SweepRow], store_checksum: Option<&str>) -> Result<()> {
    if let Some(c) = store_checksum {
        writeln!(out, "# store_sha256={c}")?;
    }
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        let e = &r.estimate;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.power_dbm, e.air, e.gross, e.rate_loss, e.sigma2, e.eta, r.n, r.seed
        )?;
    }
    Ok(())
}
