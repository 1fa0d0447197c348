//! `fibercap` command-line front-end.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use fibercap::analytic::write_curves_csv;
use fibercap::experiment::{run_point_receivers, write_sweep_csv, DbpSpec, Source, SweepRow};
use fibercap::nli_stats::{
    cubic_scaling_check, default_tail_exponent, empirical_cdf, gamma_fit_moments, spearman, write_cdf_csv,
    write_histogram_csv,
};
use fibercap::selection::{
    averaged_select, burst_window_costs, fast_select, AveragedSelectParams, FastSelectParams, SelectionResult,
    ThresholdRule,
};
use fibercap::store::{checksum, SequenceStore};
use fibercap::{Error, Result};

use config::{ExperimentConfig, Procedure, ScenarioKind, Variant};

#[derive(Parser)]
#[command(name = "fibercap", version, about = "Sequence-selection capacity lower bounds for nonlinear fiber channels")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form rate curves of the block-memoryless channel.
    Analytic,
    /// Distribution of per-window NLI costs at two launch powers.
    NliStats,
    /// Run a selection and write the sequence store.
    Select,
    /// Rate sweep for each configured variant.
    Air {
        /// Sequence store to transmit, overriding the configuration.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Print the header and checksum of a sequence store.
    StoreInfo {
        /// Store to inspect; defaults to the configured store file.
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Format(_) => 2,
        Error::Starvation { .. } => 3,
        Error::Numeric(_) | Error::Degenerate(_) | Error::Domain(_) => 4,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    match &cli.command {
        Command::StoreInfo { store } => store_info(store.clone().unwrap_or_else(|| cfg.store_path()).as_path()),
        cmd => {
            fs::create_dir_all(&cfg.output_dir)?;
            match cmd {
                Command::Analytic => cmd_analytic(&cfg),
                Command::NliStats => cmd_nli_stats(&cfg),
                Command::Select => cmd_select(&cfg),
                Command::Air { store } => cmd_air(&cfg, store.as_deref()),
                Command::StoreInfo { .. } => unreachable!(),
            }
        }
    }
}

/// Comment lines opening every CSV.
fn provenance(cfg: &ExperimentConfig) -> String {
    format!(
        "# config_sha256={}\n# seed={}\n# version={} {}\n",
        checksum(cfg.canonical().as_bytes()),
        cfg.seed,
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    )
}

fn create_csv(cfg: &ExperimentConfig, name: &str) -> Result<BufWriter<File>> {
    let path = cfg.output_dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(provenance(cfg).as_bytes())?;
    Ok(w)
}

fn cmd_analytic(cfg: &ExperimentConfig) -> Result<()> {
    let base = cfg.analytic_params()?;
    let mut out = create_csv(cfg, "analytic.csv")?;
    write_curves_csv(&mut out, &cfg.analytic.powers_db, &base, &cfg.analytic.n_primes)?;
    out.flush()?;
    Ok(())
}

fn cmd_nli_stats(cfg: &ExperimentConfig) -> Result<()> {
    let nli = &cfg.nli;
    if nli.powers_dbm.len() != 2 || nli.powers_dbm[1] <= nli.powers_dbm[0] {
        return Err(Error::Config("nli.powers_dbm must list two increasing powers".into()));
    }
    let ch = cfg.cost_channel();
    let pols = cfg.pol_count();
    let mut raw = Vec::new();
    let mut normalized = Vec::new();
    for &p_dbm in &nli.powers_dbm {
        let power = fibercap::experiment::dbm_to_mw(p_dbm) / pols as f64;
        let params = FastSelectParams {
            burst_len: nli.burst_len,
            n: nli.n,
            pol_count: pols,
            selection_power: power,
            rule: ThresholdRule::Quantile(1.0),
            target_accepted: 1,
            max_proposals: u64::MAX,
            seed: cfg.seed,
        };
        let per_burst = (0..nli.bursts as u64)
            .into_par_iter()
            .map(|b| burst_window_costs(&params, &ch, b).map(|(_, c)| c))
            .collect::<Result<Vec<_>>>()?;
        // NLI energy relative to the mean signal energy per symbol
        let energy = power * pols as f64;
        let costs = per_burst.concat();
        normalized.push(costs.iter().map(|c| c / energy).collect::<Vec<f64>>());
        raw.push(costs);
    }

    let mut summary = create_csv(cfg, "nli_summary.csv")?;
    let mut any_degenerate = false;
    writeln!(summary, "power_dBm,windows,mean_normalized_cost,gamma_shape,tail_exponent,degenerate")?;
    for (i, (costs, &p_dbm)) in normalized.iter().zip(&nli.powers_dbm).enumerate() {
        let dist = empirical_cdf(costs)?;
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        let degenerate = dist.sorted()[dist.len() - 1] < 1e-15;
        let (shape, tail) = if degenerate {
            (f64::NAN, f64::NAN)
        } else {
            let shape = match gamma_fit_moments(costs) {
                Ok(f) => f.shape,
                Err(Error::Degenerate(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            (shape, default_tail_exponent(&dist).unwrap_or(f64::NAN))
        };
        any_degenerate |= degenerate;
        if degenerate {
            eprintln!("warning: costs at {p_dbm} dBm vanish; the gamma fit is degenerate");
        }
        writeln!(summary, "{p_dbm},{},{mean},{shape},{tail},{degenerate}", costs.len())?;
        let mut cdf = create_csv(cfg, &format!("nli_cdf_{i}.csv"))?;
        write_cdf_csv(&mut cdf, &dist, nli.cdf_points)?;
        cdf.flush()?;
        let mut hist = create_csv(cfg, &format!("nli_histogram_{i}.csv"))?;
        write_histogram_csv(&mut hist, &dist, nli.histogram_bins)?;
        hist.flush()?;
    }
    summary.flush()?;

    let ratio = 10f64.powf((nli.powers_dbm[1] - nli.powers_dbm[0]) / 10.0);
    let (lo, hi) = (&raw[0], &raw[1]);
    let mut scaling = create_csv(cfg, "nli_scaling.csv")?;
    writeln!(scaling, "median_ratio,q1,q3,expected,pass,spearman")?;
    let check = if any_degenerate {
        Err(Error::Degenerate("vanishing costs".into()))
    } else {
        cubic_scaling_check(lo, hi, ratio)
    };
    match check {
        Ok(s) => {
            let rho = spearman(lo, hi).unwrap_or(f64::NAN);
            writeln!(scaling, "{},{},{},{},{},{rho}", s.median, s.q1, s.q3, s.expected, s.pass)?;
        }
        Err(Error::Degenerate(_)) => writeln!(scaling, "NaN,NaN,NaN,{},false,NaN", ratio.powi(3))?,
        Err(e) => return Err(e),
    }
    scaling.flush()?;
    Ok(())
}

fn run_selection(cfg: &ExperimentConfig) -> Result<SelectionResult> {
    let s = &cfg.selection;
    let ch = cfg.cost_channel();
    let rule = cfg.threshold_rule()?;
    match s.procedure {
        Procedure::Fast => fast_select(
            &FastSelectParams {
                burst_len: s.burst_len,
                n: s.n,
                pol_count: cfg.pol_count(),
                selection_power: cfg.selection_power(),
                rule,
                target_accepted: s.target_accepted,
                max_proposals: s.max_proposals,
                seed: cfg.seed,
            },
            &ch,
        ),
        Procedure::Averaged => averaged_select(
            &AveragedSelectParams {
                burst_len: s.burst_len,
                n: s.n,
                guard_symbols: s.guard_symbols,
                realizations: s.realizations,
                pol_count: cfg.pol_count(),
                selection_power: cfg.selection_power(),
                rule,
                target_accepted: s.target_accepted,
                max_proposals: s.max_proposals,
                seed: cfg.seed,
                guard_seed: fibercap::rng::derive_seed(cfg.seed, "guards", 0),
            },
            &ch,
        ),
    }
}

fn cmd_select(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.scenario == ScenarioKind::Analytic {
        return Err(Error::Config("selection needs a transmission scenario".into()));
    }
    let r = run_selection(cfg)?;
    if r.degenerate {
        eprintln!("warning: tied costs at the threshold; nothing strictly below it");
    }
    let store = r.to_store()?;
    let path = cfg.store_path();
    let sum = store.save(&path)?;
    let mut out = create_csv(cfg, "selection_summary.csv")?;
    writeln!(out, "n,n_proposed,n_accepted,eta,gamma_lambda,mean_cost,mean_accepted_cost,rate_loss,store_sha256")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{sum}",
        cfg.selection.n,
        r.n_proposed,
        r.n_accepted,
        r.eta(),
        r.gamma_lambda,
        r.mean_cost(),
        r.mean_accepted_cost(),
        r.rate_loss(cfg.selection.n),
    )?;
    out.flush()?;
    eprintln!("proposals {} accepted {} eta {:.3e} -> {}", r.n_proposed, r.n_accepted, r.eta(), path.display());
    Ok(())
}

fn cmd_air(cfg: &ExperimentConfig, store_override: Option<&Path>) -> Result<()> {
    let sc = cfg.scenario()?;
    let variants = &cfg.metric.variants;
    if variants.is_empty() {
        return Err(Error::Config("metric.variants must not be empty".into()));
    }
    let dbp = cfg.dbp();
    let receivers = |want_store: bool| -> Vec<(Variant, Option<DbpSpec>)> {
        variants
            .iter()
            .filter(|v| v.uses_store() == want_store)
            .map(|&v| (v, v.uses_dbp().then_some(dbp)))
            .collect()
    };

    let selected = if variants.iter().any(|v| v.uses_store()) {
        let path = store_override.map(Path::to_path_buf).unwrap_or_else(|| cfg.store_path());
        let (store, sum) = SequenceStore::load(&path)?;
        if store.pol_count != sc.pol_count {
            return Err(Error::Config(format!(
                "store {} has {} polarizations but scenario uses {}",
                path.display(),
                store.pol_count,
                sc.pol_count
            )));
        }
        Some((Source::Selected(store), sum))
    } else {
        None
    };

    let mut results: Vec<(Variant, Vec<SweepRow>, Option<String>)> = Vec::new();
    for want_store in [false, true] {
        let rx = receivers(want_store);
        if rx.is_empty() {
            continue;
        }
        let (source, sum) = match (&selected, want_store) {
            (Some((src, sum)), true) => (src, Some(sum.clone())),
            _ => (&Source::Unbiased, None),
        };
        let specs: Vec<Option<DbpSpec>> = rx.iter().map(|(_, d)| *d).collect();
        let mut rows: Vec<Vec<SweepRow>> = vec![Vec::new(); rx.len()];
        for &p in &cfg.sweep_dbm {
            for (i, row) in run_point_receivers(&sc, source, p, &specs)?.into_iter().enumerate() {
                rows[i].push(row);
            }
        }
        for ((v, _), r) in rx.into_iter().zip(rows) {
            results.push((v, r, sum.clone()));
        }
    }

    for (v, rows, sum) in &results {
        let mut out = create_csv(cfg, &format!("air_{}.csv", v.name()))?;
        write_sweep_csv(&mut out, rows, sum.as_deref())?;
        out.flush()?;
    }
    let mut lin = create_csv(cfg, "linear_capacity.csv")?;
    writeln!(lin, "power_dBm,linear_capacity")?;
    for &p in &cfg.sweep_dbm {
        writeln!(lin, "{p},{}", sc.linear_capacity(p))?;
    }
    lin.flush()?;
    Ok(())
}

fn store_info(path: &Path) -> Result<()> {
    let bytes = fs::read(path)?;
    let store = SequenceStore::read_from(&mut bytes.as_slice())?;
    println!("file          {}", path.display());
    println!("sha256        {}", checksum(&bytes));
    println!("pol_count     {}", store.pol_count);
    println!("block_len     {}", store.block_len);
    println!("blocks        {}", store.blocks.len());
    println!("power_mw      {}", store.selection_power);
    println!("gamma_lambda  {}", store.gamma_lambda);
    println!("n_proposed    {}", store.n_proposed);
    println!("n_accepted    {}", store.n_accepted);
    println!("eta           {}", store.eta());
    Ok(())
}
