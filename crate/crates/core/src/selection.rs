//! Sequence selection: cost functions, thresholds and the rejection-sampling
//! source, plus the two burst-based selection procedures.
//!
//! Costs are always evaluated on a single channel without noise. A burst of
//! unbiased Gaussian symbols at the selection power is propagated once,
//! dispersion is compensated, the mean phase is removed, and each proposal
//! block is scored by `(1/n)·‖ŷ − x‖²` over its symbols.
//!
//! Thresholds are computed over the complete list of costs after all
//! proposals are scored, so results do not depend on how evaluation was
//! scheduled across threads.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{config, shape, Error, Result};
use crate::rng::{child_rng, derive_seed};
use crate::signal::{energy_per_symbol, gaussian_from_rng, SourceConfig, SymbolSequence, C64};
use crate::ssfm::{dispersion_compensate, propagate, LinkSpec, SplitScheme, SsfmSpec};
use crate::store::SequenceStore;
use crate::wdm::{demodulate, demodulate_subcarriers, modulate, modulate_subcarriers, WdmConfig};

/// Which cost a selection run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    /// Energy per symbol of the block.
    EnergyPerSymbol,
    /// Distortion of a single noiseless propagation of the block's burst.
    MemorylessNoiseless,
    /// Distortion averaged over `realizations` redraws of the `guard_symbols`
    /// that separate the proposal blocks.
    AveragedConditional { guard_symbols: usize, realizations: usize },
}

impl CostKind {
    pub fn validate(&self) -> Result<()> {
        if let CostKind::AveragedConditional { realizations, .. } = self {
            if *realizations == 0 {
                return config("at least one guard realization is required");
            }
        }
        Ok(())
    }
}

/// Channel used to score proposals: a noiseless single-channel link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostChannel {
    pub link: LinkSpec,
    pub step_m: f64,
    pub sampling_rate_ghz: f64,
    /// Channel layout; only the centre channel is simulated.
    pub wdm: WdmConfig,
}

impl Default for CostChannel {
    /// 500 m steps at 100 GHz for one 50 GBd channel.
    fn default() -> Self {
        Self {
            link: LinkSpec::default(),
            step_m: 500.0,
            sampling_rate_ghz: 100.0,
            wdm: WdmConfig::single(50.0),
        }
    }
}

impl CostChannel {
    fn ssfm(&self) -> SsfmSpec {
        SsfmSpec {
            step_m: self.step_m,
            sampling_rate_ghz: self.sampling_rate_ghz,
            scheme: SplitScheme::Symmetrized,
            noise: false,
            seed: 0,
        }
    }

    /// Noiseless, dispersion-compensated, phase-aligned response to one
    /// stream per subcarrier (one stream without subcarriers).
    pub fn respond(&self, streams: &[SymbolSequence]) -> Result<Vec<SymbolSequence>> {
        let k = self.wdm.subcarriers_per_channel;
        if streams.len() != k {
            return config(format!("cost channel expects {k} streams, got {}", streams.len()));
        }
        let fs = self.sampling_rate_ghz;
        let tx = if k == 1 {
            modulate(&streams[0], fs, self.wdm.symbol_rate, 0.0)?
        } else {
            modulate_subcarriers(streams, fs, &self.wdm, 0.0)?
        };
        let rx = dispersion_compensate(&propagate(&tx, &self.link, &self.ssfm())?, &self.link)?;
        let ys = if k == 1 {
            vec![demodulate(&rx, self.wdm.symbol_rate, 0.0)?]
        } else {
            demodulate_subcarriers(&rx, &self.wdm, 0.0)?
        };
        let corr: C64 = ys
            .iter()
            .zip(streams)
            .flat_map(|(y, x)| y.pols().iter().flatten().zip(x.pols().iter().flatten()))
            .map(|(a, b)| a * b.conj())
            .sum();
        if corr.norm() == 0.0 {
            return Ok(ys);
        }
        let rot = C64::from_polar(1.0, -corr.arg());
        Ok(ys.into_iter().map(|y| y.rotated(rot)).collect())
    }
}

/// Energy per symbol of a block.
pub fn cost_energy(x: &SymbolSequence) -> f64 {
    energy_per_symbol(x)
}

/// `(1/n)·‖ŷ − x‖²`, summed over polarizations.
pub fn cost_memoryless(x: &SymbolSequence, y_hat: &SymbolSequence) -> Result<f64> {
    Ok(x.distance_sqr(y_hat)? / x.len() as f64)
}

/// Threshold together with a flag raised when ties at the quantile would
/// swallow every proposal below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub gamma_lambda: f64,
    pub degenerate: bool,
}

/// Threshold for a target acceptance rate. With `k = ⌈η·N⌉`, the threshold
/// is the sorted cost at zero-based position `k` (clamped to the last), and
/// acceptance is strictly below it, so at most `k` of the given costs pass.
pub fn threshold_from_quantile(costs: &[f64], eta_target: f64) -> Result<Threshold> {
    if costs.is_empty() {
        return Err(Error::Shape("no costs to threshold".into()));
    }
    if !(eta_target > 0.0 && eta_target <= 1.0) {
        return config(format!("target acceptance rate must be in (0, 1], got {eta_target}"));
    }
    if costs.iter().any(|c| c.is_nan()) {
        return Err(Error::Numeric("NaN cost".into()));
    }
    let mut sorted = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (eta_target * sorted.len() as f64).ceil() as usize;
    let gamma_lambda = sorted[k.min(sorted.len() - 1)];
    let accepted = sorted.partition_point(|&c| c < gamma_lambda);
    Ok(Threshold { gamma_lambda, degenerate: accepted == 0 })
}

/// Accept-reject wrapper around an unbiased Gaussian block source.
pub struct RejectionSampler {
    source: SourceConfig,
    rng: crate::rng::SimRng,
    gamma_lambda: f64,
    max_proposals: u64,
    n_proposed: u64,
    n_accepted: u64,
}

impl RejectionSampler {
    pub fn new(source: SourceConfig, gamma_lambda: f64, max_proposals: u64) -> Result<Self> {
        source.validate()?;
        if !(gamma_lambda > 0.0) {
            return config(format!("threshold must be positive, got {gamma_lambda}"));
        }
        Ok(Self {
            rng: child_rng(source.seed, "rejection-source", 0),
            source,
            gamma_lambda,
            max_proposals,
            n_proposed: 0,
            n_accepted: 0,
        })
    }

    /// Draws proposals until one scores below the threshold.
    pub fn next_accepted<F>(&mut self, mut cost: F) -> Result<SymbolSequence>
    where
        F: FnMut(&SymbolSequence) -> Result<f64>,
    {
        loop {
            if self.n_accepted == 0 && self.n_proposed >= self.max_proposals {
                return Err(Error::Starvation { proposals: self.n_proposed });
            }
            let x = gaussian_from_rng(&mut self.rng, self.source.power, self.source.len, self.source.pol_count);
            self.n_proposed += 1;
            if cost(&x)? < self.gamma_lambda {
                self.n_accepted += 1;
                return Ok(x);
            }
        }
    }

    pub fn n_proposed(&self) -> u64 {
        self.n_proposed
    }

    pub fn n_accepted(&self) -> u64 {
        self.n_accepted
    }

    pub fn eta(&self) -> f64 {
        self.n_accepted as f64 / self.n_proposed as f64
    }
}

/// How the threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// Quantile of the complete cost list.
    Quantile(f64),
    /// Fixed value of `γ_λ`.
    Fixed(f64),
}

/// Outcome of a selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub accepted: Vec<SymbolSequence>,
    /// Cost of each accepted block, same order.
    pub accepted_costs: Vec<f64>,
    pub gamma_lambda: f64,
    pub n_proposed: u64,
    pub n_accepted: u64,
    pub selection_power: f64,
    /// Cost of every proposal, in proposal order.
    pub cost_samples: Vec<f64>,
    /// Ties at the threshold left nothing below it.
    pub degenerate: bool,
}

impl SelectionResult {
    pub fn eta(&self) -> f64 {
        self.n_accepted as f64 / self.n_proposed as f64
    }

    /// Rate loss `(1/n)·log₂(N_p/N_a)` in bits per symbol.
    pub fn rate_loss(&self, n: usize) -> f64 {
        rate_loss(n, self.n_proposed, self.n_accepted)
    }

    pub fn mean_accepted_cost(&self) -> f64 {
        self.accepted_costs.iter().sum::<f64>() / self.accepted_costs.len() as f64
    }

    pub fn mean_cost(&self) -> f64 {
        self.cost_samples.iter().sum::<f64>() / self.cost_samples.len() as f64
    }

    pub fn to_store(&self) -> Result<SequenceStore> {
        let first = self.accepted.first().ok_or(Error::Starvation { proposals: self.n_proposed })?;
        let store = SequenceStore {
            pol_count: first.pol_count(),
            block_len: first.len(),
            selection_power: self.selection_power,
            gamma_lambda: self.gamma_lambda,
            n_proposed: self.n_proposed,
            n_accepted: self.n_accepted,
            blocks: self.accepted.clone(),
        };
        store.validate()?;
        Ok(store)
    }
}

/// `(1/n)·log₂(N_p/N_a)`.
pub fn rate_loss(n: usize, n_proposed: u64, n_accepted: u64) -> f64 {
    (n_proposed as f64 / n_accepted as f64).log2() / n as f64
}

/// Keeps proposals strictly below the threshold.
fn finish(
    blocks: Vec<SymbolSequence>,
    costs: Vec<f64>,
    gamma_lambda: f64,
    degenerate: bool,
    selection_power: f64,
) -> Result<SelectionResult> {
    let n_proposed = costs.len() as u64;
    let (accepted, accepted_costs): (Vec<_>, Vec<_>) = blocks
        .into_iter()
        .zip(&costs)
        .filter(|(_, &c)| c < gamma_lambda)
        .map(|(b, &c)| (b, c))
        .unzip();
    if accepted.is_empty() {
        return Err(Error::Starvation { proposals: n_proposed });
    }
    Ok(SelectionResult {
        n_accepted: accepted.len() as u64,
        accepted,
        accepted_costs,
        gamma_lambda,
        n_proposed,
        selection_power,
        cost_samples: costs,
        degenerate,
    })
}

/// Parameters of the sliding-window procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastSelectParams {
    /// Burst length `N′` in symbols, a power of two.
    pub burst_len: usize,
    /// Block length `n`.
    pub n: usize,
    pub pol_count: usize,
    /// Selection power, mW per polarization.
    pub selection_power: f64,
    pub rule: ThresholdRule,
    /// Requested number of accepted windows.
    pub target_accepted: usize,
    /// Upper bound on proposals before giving up.
    pub max_proposals: u64,
    pub seed: u64,
}

impl FastSelectParams {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.burst_len < self.n {
            return config(format!("burst length {} must be at least n = {}", self.burst_len, self.n));
        }
        if self.target_accepted == 0 {
            return config("target accepted count must be positive");
        }
        SourceConfig { power: self.selection_power, len: self.n, pol_count: self.pol_count, seed: 0 }.validate()
    }

    /// Windows per burst, `N′ − n + 1`.
    pub fn windows_per_burst(&self) -> usize {
        self.burst_len - self.n + 1
    }
}

/// Unbiased burst `b` of a selection run.
pub fn selection_burst(seed: u64, b: u64, power: f64, len: usize, pol_count: usize) -> SymbolSequence {
    gaussian_from_rng(&mut child_rng(seed, "selection-burst", b), power, len, pol_count)
}

/// Burst `b` of a sliding-window run and the cost of each of its windows.
/// Bursts with equal seed and index at different powers differ only in
/// amplitude, so their window costs are paired.
pub fn burst_window_costs(p: &FastSelectParams, ch: &CostChannel, b: u64) -> Result<(SymbolSequence, Vec<f64>)> {
    let x = selection_burst(p.seed, b, p.selection_power, p.burst_len, p.pol_count);
    let y = ch.respond(std::slice::from_ref(&x))?.remove(0);
    let np = p.windows_per_burst();
    // running sum of per-symbol distortion gives every window in O(N′)
    let mut prefix = vec![0.0; p.burst_len + 1];
    for i in 0..p.burst_len {
        let d: f64 = (0..p.pol_count).map(|q| (y.pol(q)[i] - x.pol(q)[i]).norm_sqr()).sum();
        prefix[i + 1] = prefix[i] + d;
    }
    let costs = (0..np).map(|s| (prefix[s + p.n] - prefix[s]) / p.n as f64).collect();
    Ok((x, costs))
}

fn window_blocks(x: &SymbolSequence, n: usize, count: usize) -> Result<Vec<SymbolSequence>> {
    (0..count).map(|s| x.window(s, n)).collect()
}

fn bursts_for_quantile(target: usize, eta: f64, per_burst: usize) -> usize {
    ((target as f64 / (eta * per_burst as f64)).ceil() as usize).max(1)
}

/// Sliding-window selection: every window of length `n` of each burst is a
/// proposal, so a burst yields `N′ − n + 1` proposals from one propagation.
pub fn fast_select(p: &FastSelectParams, ch: &CostChannel) -> Result<SelectionResult> {
    p.validate()?;
    if ch.wdm.subcarriers_per_channel != 1 {
        return config("sliding-window selection needs a channel without subcarriers");
    }
    let np = p.windows_per_burst();
    match p.rule {
        ThresholdRule::Quantile(eta) => {
            let bursts = bursts_for_quantile(p.target_accepted, eta, np);
            if (bursts * np) as u64 > p.max_proposals {
                return Err(Error::Starvation { proposals: (bursts * np) as u64 });
            }
            let scored = (0..bursts as u64)
                .into_par_iter()
                .map(|b| burst_window_costs(p, ch, b))
                .collect::<Result<Vec<_>>>()?;
            let costs: Vec<f64> = scored.iter().flat_map(|(_, c)| c.iter().copied()).collect();
            let t = threshold_from_quantile(&costs, eta)?;
            let mut blocks = Vec::with_capacity(costs.len());
            for (x, _) in &scored {
                blocks.extend(window_blocks(x, p.n, np)?);
            }
            finish(blocks, costs, t.gamma_lambda, t.degenerate, p.selection_power)
        }
        ThresholdRule::Fixed(gamma) => {
            let batch = rayon::current_num_threads().max(1) as u64;
            let mut blocks = Vec::new();
            let mut costs = Vec::new();
            let mut accepted = 0usize;
            let mut b = 0u64;
            'outer: loop {
                let scored = (b..b + batch)
                    .into_par_iter()
                    .map(|i| burst_window_costs(p, ch, i))
                    .collect::<Result<Vec<_>>>()?;
                // bursts are consumed in index order so the stopping point is
                // independent of the batch size
                for (x, c) in scored {
                    accepted += c.iter().filter(|&&v| v < gamma).count();
                    blocks.extend(window_blocks(&x, p.n, np)?);
                    costs.extend(c);
                    b += 1;
                    if accepted >= p.target_accepted {
                        break 'outer;
                    }
                    if costs.len() as u64 >= p.max_proposals {
                        if accepted == 0 {
                            return Err(Error::Starvation { proposals: costs.len() as u64 });
                        }
                        break 'outer;
                    }
                }
            }
            finish(blocks, costs, gamma, false, p.selection_power)
        }
    }
}

/// Parameters of the guard-averaged procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedSelectParams {
    /// Burst length `N′` in symbols summed over subcarriers.
    pub burst_len: usize,
    pub n: usize,
    pub guard_symbols: usize,
    pub realizations: usize,
    pub pol_count: usize,
    pub selection_power: f64,
    pub rule: ThresholdRule,
    pub target_accepted: usize,
    pub max_proposals: u64,
    /// Seed of the proposal blocks.
    pub seed: u64,
    /// Seed of the guard symbols.
    pub guard_seed: u64,
}

impl AveragedSelectParams {
    fn validate(&self, k: usize) -> Result<()> {
        CostKind::AveragedConditional { guard_symbols: self.guard_symbols, realizations: self.realizations }
            .validate()?;
        let slot = self.n + self.guard_symbols;
        if self.n == 0 || !self.burst_len.is_multiple_of(slot) {
            return config(format!("burst length {} is not a multiple of n + N_g = {slot}", self.burst_len));
        }
        if !self.n.is_multiple_of(k) || !self.guard_symbols.is_multiple_of(k) {
            return config(format!("n and N_g must be divisible by the {k} subcarriers"));
        }
        if self.target_accepted == 0 {
            return config("target accepted count must be positive");
        }
        SourceConfig { power: self.selection_power, len: self.n, pol_count: self.pol_count, seed: 0 }.validate()
    }

    /// Disjoint blocks per burst, `N′/(n + N_g)`.
    pub fn blocks_per_burst(&self) -> usize {
        self.burst_len / (self.n + self.guard_symbols)
    }
}

/// Proposal blocks of burst `b`, each of `n` symbols.
fn averaged_blocks(p: &AveragedSelectParams, b: u64) -> Vec<SymbolSequence> {
    let mut rng = child_rng(p.seed, "averaged-blocks", b);
    (0..p.blocks_per_burst())
        .map(|_| gaussian_from_rng(&mut rng, p.selection_power, p.n, p.pol_count))
        .collect()
}

/// Per-block costs of one guard realization. Each subcarrier stream is a
/// sequence of slots `[N_g/k guards | n/k payload]`; chunk `i` of a block
/// travels on subcarrier `i`.
fn averaged_realization(
    p: &AveragedSelectParams,
    ch: &CostChannel,
    blocks: &[SymbolSequence],
    b: u64,
    r: u64,
) -> Result<Vec<f64>> {
    let k = ch.wdm.subcarriers_per_channel;
    let (chunk, g) = (p.n / k, p.guard_symbols / k);
    let slot = chunk + g;
    let mut rng = child_rng(derive_seed(p.guard_seed, "guard-burst", b), "guard-realization", r);
    let streams = (0..k)
        .map(|i| {
            let pols = (0..p.pol_count)
                .map(|q| {
                    let mut v = Vec::with_capacity(slot * blocks.len());
                    for blk in blocks {
                        let guard = gaussian_from_rng(&mut rng, p.selection_power, g, 1);
                        v.extend_from_slice(guard.pol(0));
                        v.extend_from_slice(&blk.pol(q)[i * chunk..(i + 1) * chunk]);
                    }
                    v
                })
                .collect();
            SymbolSequence::new(pols)
        })
        .collect::<Result<Vec<_>>>()?;
    let ys = ch.respond(&streams)?;
    Ok((0..blocks.len())
        .map(|j| {
            let lo = j * slot + g;
            let d: f64 = streams
                .iter()
                .zip(&ys)
                .flat_map(|(x, y)| x.pols().iter().zip(y.pols()))
                .map(|(xp, yp)| (lo..lo + chunk).map(|t| (yp[t] - xp[t]).norm_sqr()).sum::<f64>())
                .sum();
            d / p.n as f64
        })
        .collect())
}

/// Costs of every block of burst `b`, each the mean over the guard
/// realizations. Also returns the blocks.
pub fn averaged_burst_costs(
    p: &AveragedSelectParams,
    ch: &CostChannel,
    b: u64,
) -> Result<(Vec<SymbolSequence>, Vec<f64>)> {
    p.validate(ch.wdm.subcarriers_per_channel)?;
    let blocks = averaged_blocks(p, b);
    let per = (0..p.realizations as u64)
        .into_par_iter()
        .map(|r| averaged_realization(p, ch, &blocks, b, r))
        .collect::<Result<Vec<_>>>()?;
    let costs = (0..blocks.len())
        .map(|j| per.iter().map(|c| c[j]).sum::<f64>() / p.realizations as f64)
        .collect();
    Ok((blocks, costs))
}

/// Guard-averaged selection over disjoint blocks.
pub fn averaged_select(p: &AveragedSelectParams, ch: &CostChannel) -> Result<SelectionResult> {
    p.validate(ch.wdm.subcarriers_per_channel)?;
    let np = p.blocks_per_burst();
    let run = |range: std::ops::Range<u64>| -> Result<Vec<(Vec<SymbolSequence>, Vec<f64>)>> {
        range.into_par_iter().map(|b| averaged_burst_costs(p, ch, b)).collect()
    };
    match p.rule {
        ThresholdRule::Quantile(eta) => {
            let bursts = bursts_for_quantile(p.target_accepted, eta, np) as u64;
            if bursts * np as u64 > p.max_proposals {
                return Err(Error::Starvation { proposals: bursts * np as u64 });
            }
            let (blocks, costs): (Vec<_>, Vec<_>) = run(0..bursts)?.into_iter().unzip();
            let costs: Vec<f64> = costs.concat();
            let t = threshold_from_quantile(&costs, eta)?;
            finish(blocks.concat(), costs, t.gamma_lambda, t.degenerate, p.selection_power)
        }
        ThresholdRule::Fixed(gamma) => {
            let mut blocks = Vec::new();
            let mut costs = Vec::new();
            let mut accepted = 0usize;
            let mut b = 0u64;
            while accepted < p.target_accepted {
                if costs.len() as u64 >= p.max_proposals {
                    if accepted == 0 {
                        return Err(Error::Starvation { proposals: costs.len() as u64 });
                    }
                    break;
                }
                let (bl, c) = averaged_burst_costs(p, ch, b)?;
                accepted += c.iter().filter(|&&v| v < gamma).count();
                blocks.extend(bl);
                costs.extend(c);
                b += 1;
            }
            finish(blocks, costs, gamma, false, p.selection_power)
        }
    }
}

/// Rescales blocks selected at `selection_power` to `power`, linearly in
/// amplitude.
pub fn rescale_blocks(blocks: &[SymbolSequence], selection_power: f64, power: f64) -> Vec<SymbolSequence> {
    let f = (power / selection_power).sqrt();
    blocks.iter().map(|b| b.scaled(f)).collect()
}

/// Concatenates `count` blocks drawn from `blocks` in random order. Each
/// pass over the set is a fresh permutation, so blocks repeat only once the
/// set is exhausted.
pub fn assemble_stream(blocks: &[SymbolSequence], count: usize, seed: u64) -> Result<SymbolSequence> {
    if blocks.is_empty() {
        return shape("no blocks to assemble");
    }
    let mut order = Vec::with_capacity(count);
    let mut pass = 0u64;
    while order.len() < count {
        let mut perm: Vec<usize> = (0..blocks.len()).collect();
        perm.shuffle(&mut child_rng(seed, "assemble", pass));
        order.extend(perm.into_iter().take(count - order.len()));
        pass += 1;
    }
    let picked: Vec<SymbolSequence> = order.into_iter().map(|i| blocks[i].clone()).collect();
    crate::signal::concat(&picked)
}
