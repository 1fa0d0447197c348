//! Experiment configuration file.
//!
//! TOML with fixed sections; every key is optional and unknown keys are
//! rejected. Powers are given in dBm (per channel, all polarizations),
//! rates in GBd, frequencies in GHz, lengths in km, steps in m.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use fibercap::analytic::AnalyticChannelParams;
use fibercap::experiment::{dbm_to_mw, DbpSpec, Scenario};
use fibercap::selection::{CostChannel, ThresholdRule};
use fibercap::ssfm::LinkSpec;
use fibercap::wdm::{WdmConfig, EDGE_SYMBOLS_NONLINEAR};
use fibercap::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Analytic,
    #[default]
    #[serde(rename = "single_channel_1pol")]
    SingleChannel1pol,
    #[serde(rename = "wdm_2pol")]
    Wdm2pol,
    #[serde(rename = "wdm_2pol_subcarrier")]
    Wdm2polSubcarrier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Launch powers of the rate sweep, dBm.
    pub sweep_dbm: Vec<f64>,
    pub link: LinkSection,
    pub ssfm: SsfmSection,
    pub wdm: WdmSection,
    pub source: SourceSection,
    pub selection: SelectionSection,
    pub metric: MetricSection,
    pub analytic: AnalyticSection,
    pub nli: NliSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::default(),
            seed: 1,
            output_dir: PathBuf::from("out"),
            sweep_dbm: vec![-12.0, -10.0, -8.0, -6.0],
            link: LinkSection::default(),
            ssfm: SsfmSection::default(),
            wdm: WdmSection::default(),
            source: SourceSection::default(),
            selection: SelectionSection::default(),
            metric: MetricSection::default(),
            analytic: AnalyticSection::default(),
            nli: NliSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub alpha_db_km: f64,
    pub beta2_ps2_km: f64,
    /// 1/(W·km).
    pub gamma_per_w_km: f64,
    pub length_km: f64,
    pub nsp: f64,
    pub carrier_thz: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        let l = LinkSpec::default();
        Self {
            alpha_db_km: l.alpha_db_km,
            beta2_ps2_km: l.beta2_ps2_km,
            gamma_per_w_km: l.gamma_per_w_km,
            length_km: l.length_km,
            nsp: l.nsp,
            carrier_thz: l.carrier_thz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[default]
    Symmetrized,
    Asymmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsfmSection {
    pub step_m: f64,
    /// Forward propagation sampling rate; 0 picks 100 GHz for one channel
    /// and 400 GHz otherwise.
    pub sampling_rate_ghz: f64,
    pub scheme: SchemeKind,
    pub noise: bool,
}

impl Default for SsfmSection {
    fn default() -> Self {
        Self { step_m: 500.0, sampling_rate_ghz: 0.0, scheme: SchemeKind::Symmetrized, noise: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WdmSection {
    /// 0 picks 1 for the single-channel scenario and 5 otherwise.
    pub num_channels: usize,
    pub symbol_rate_gbd: f64,
    pub channel_spacing_ghz: f64,
}

impl Default for WdmSection {
    fn default() -> Self {
        Self { num_channels: 0, symbol_rate_gbd: 50.0, channel_spacing_ghz: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    /// Symbols per channel per polarization in one burst.
    pub burst_len: usize,
    pub bursts: usize,
    pub edge_symbols: usize,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self { burst_len: 1 << 16, bursts: 1, edge_symbols: EDGE_SYMBOLS_NONLINEAR }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    #[default]
    Fast,
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    pub procedure: Procedure,
    pub n: usize,
    /// Target acceptance rate; ignored when `gamma_lambda` is positive.
    pub eta: f64,
    /// Fixed threshold; 0 means use `eta`.
    pub gamma_lambda: f64,
    pub selection_power_dbm: f64,
    pub target_accepted: usize,
    pub burst_len: usize,
    pub guard_symbols: usize,
    pub realizations: usize,
    pub max_proposals: u64,
    pub cost_step_m: f64,
    pub cost_sampling_rate_ghz: f64,
    /// Store written by `select` and read by `air`, relative to the output
    /// directory unless absolute.
    pub store_file: PathBuf,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            procedure: Procedure::Fast,
            n: 64,
            eta: 0.01,
            gamma_lambda: 0.0,
            selection_power_dbm: -9.0,
            target_accepted: 1000,
            burst_len: 1 << 16,
            guard_symbols: 64,
            realizations: 1,
            max_proposals: 100_000_000,
            cost_step_m: 500.0,
            cost_sampling_rate_ghz: 100.0,
            store_file: PathBuf::from("selection.seqs"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Benchmark,
    Selection,
    Dbp,
    SelectionDbp,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Benchmark => "benchmark",
            Variant::Selection => "selection",
            Variant::Dbp => "dbp",
            Variant::SelectionDbp => "selection_dbp",
        }
    }

    pub fn uses_store(self) -> bool {
        matches!(self, Variant::Selection | Variant::SelectionDbp)
    }

    pub fn uses_dbp(self) -> bool {
        matches!(self, Variant::Dbp | Variant::SelectionDbp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSection {
    pub variants: Vec<Variant>,
    pub dbp_step_m: f64,
    pub dbp_sampling_rate_ghz: f64,
}

impl Default for MetricSection {
    fn default() -> Self {
        let d = DbpSpec::default();
        Self { variants: vec![Variant::Benchmark], dbp_step_m: d.step_m, dbp_sampling_rate_ghz: d.sampling_rate_ghz }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSection {
    pub a: f64,
    pub sigma_w2: f64,
    pub n: usize,
    pub n_primes: Vec<f64>,
    /// Normalized power grid in dB.
    pub powers_db: Vec<f64>,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self {
            a: 0.01,
            sigma_w2: 0.001,
            n: 60,
            n_primes: vec![10.0, 20.0, 30.0],
            powers_db: (0..=30).map(|i| -20.0 + 2.0 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NliSection {
    /// Two launch powers, dBm.
    pub powers_dbm: Vec<f64>,
    pub n: usize,
    pub burst_len: usize,
    pub bursts: usize,
    pub cdf_points: usize,
    pub histogram_bins: usize,
}

impl Default for NliSection {
    fn default() -> Self {
        Self { powers_dbm: vec![-3.0, 0.0], n: 64, burst_len: 1 << 16, bursts: 1, cdf_points: 200, histogram_bins: 100 }
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Canonical TOML of the effective configuration, used for hashing.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn pol_count(&self) -> usize {
        match self.scenario {
            ScenarioKind::Analytic | ScenarioKind::SingleChannel1pol => 1,
            ScenarioKind::Wdm2pol | ScenarioKind::Wdm2polSubcarrier => 2,
        }
    }

    pub fn link(&self) -> LinkSpec {
        let l = &self.link;
        LinkSpec {
            alpha_db_km: l.alpha_db_km,
            beta2_ps2_km: l.beta2_ps2_km,
            gamma_per_w_km: l.gamma_per_w_km,
            length_km: l.length_km,
            nsp: l.nsp,
            carrier_thz: l.carrier_thz,
        }
    }

    pub fn wdm(&self) -> WdmConfig {
        let channels = match (self.wdm.num_channels, self.scenario) {
            (0, ScenarioKind::SingleChannel1pol | ScenarioKind::Analytic) => 1,
            (0, _) => 5,
            (k, _) => k,
        };
        let base = WdmConfig {
            num_channels: channels,
            channel_spacing: self.wdm.channel_spacing_ghz,
            ..WdmConfig::single(self.wdm.symbol_rate_gbd)
        };
        if self.scenario == ScenarioKind::Wdm2polSubcarrier {
            base.with_four_subcarriers()
        } else {
            base
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        if self.scenario == ScenarioKind::Analytic {
            return cfg_err("the analytic scenario has no transmission experiment");
        }
        let wdm = self.wdm();
        let fs = if self.ssfm.sampling_rate_ghz > 0.0 {
            self.ssfm.sampling_rate_ghz
        } else if wdm.num_channels == 1 {
            100.0
        } else {
            400.0
        };
        if self.ssfm.scheme != SchemeKind::Symmetrized {
            return cfg_err("ssfm.scheme must be \"symmetrized\" for rate sweeps");
        }
        let sc = Scenario {
            link: self.link(),
            step_m: self.ssfm.step_m,
            sampling_rate_ghz: fs,
            wdm,
            pol_count: self.pol_count(),
            burst_len: self.source.burst_len,
            bursts: self.source.bursts,
            edge_symbols: self.source.edge_symbols,
            noise: self.ssfm.noise,
            seed: self.seed,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn dbp(&self) -> DbpSpec {
        DbpSpec { step_m: self.metric.dbp_step_m, sampling_rate_ghz: self.metric.dbp_sampling_rate_ghz }
    }

    /// Cost-evaluation channel: the centre channel alone, without noise.
    pub fn cost_channel(&self) -> CostChannel {
        let wdm = WdmConfig { num_channels: 1, ..self.wdm() };
        CostChannel {
            link: self.link(),
            step_m: self.selection.cost_step_m,
            sampling_rate_ghz: self.selection.cost_sampling_rate_ghz,
            wdm,
        }
    }

    pub fn threshold_rule(&self) -> Result<ThresholdRule> {
        let s = &self.selection;
        if s.gamma_lambda > 0.0 {
            Ok(ThresholdRule::Fixed(s.gamma_lambda))
        } else if s.eta > 0.0 && s.eta <= 1.0 {
            Ok(ThresholdRule::Quantile(s.eta))
        } else {
            cfg_err(format!("selection.eta must be in (0, 1], got {}", s.eta))
        }
    }

    /// Selection power per polarization in mW.
    pub fn selection_power(&self) -> f64 {
        dbm_to_mw(self.selection.selection_power_dbm) / self.pol_count() as f64
    }

    pub fn analytic_params(&self) -> Result<AnalyticChannelParams> {
        let a = &self.analytic;
        let p = AnalyticChannelParams { a: a.a, sigma_w2: a.sigma_w2, n: a.n, n_prime: a.n as f64 };
        p.validate()?;
        Ok(p)
    }

    pub fn store_path(&self) -> PathBuf {
        if self.selection.store_file.is_absolute() {
            self.selection.store_file.clone()
        } else {
            self.output_dir.join(&self.selection.store_file)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep_dbm.is_empty() {
            return cfg_err("sweep_dbm must not be empty");
        }
        if self.scenario != ScenarioKind::Analytic {
            self.scenario()?;
        }
        Ok(())
    }
}
