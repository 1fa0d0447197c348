//! Acceptance suite. Every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line; the process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use fibercap::air::{estimate_air, DecodingMetricParams, SelectionCounts};
use fibercap::analytic::{
    air_with_selection, apply_block_channel, draw_nli_energy, gaussian_air, optimal_power, optimal_threshold,
    post_selection_nli_variance, write_curves_csv, AnalyticChannelParams,
};
use fibercap::experiment::{dbm_to_mw, run_point, run_point_receivers, write_sweep_csv, DbpSpec, Scenario, Source};
use fibercap::nli_stats::{cubic_scaling_check, gamma_fit_moments, spearman};
use fibercap::rng::{child_rng, derive_seed};
use fibercap::selection::{
    burst_window_costs, fast_select, CostChannel, FastSelectParams, SelectionResult, ThresholdRule,
};
use fibercap::signal::{concat, gaussian_sequence};
use fibercap::ssfm::{dispersion_compensate, propagate, LinkSpec, SplitScheme, SsfmSpec};
use fibercap::wdm::{demodulate, modulate, WdmConfig};
use fibercap::{SourceConfig, Waveform};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1", "analytic rate curves", analytic_curves),
        ("2", "estimator closure on the block-memoryless channel", estimator_closure),
        ("3", "split-step correctness", ssfm_correctness),
        ("4", "cubic NLI scaling", cubic_scaling),
        ("5", "selection gain and monotonicity", selection_gain),
        ("6", "WDM combination ordering", wdm_ordering),
        ("8", "determinism", determinism),
    ];
    // optional positional arguments select criteria by number
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let (pass, detail) = match outcome {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict} [{name}] ({:.1} s) {detail}", t.elapsed().as_secs_f64());
    }
    if only.is_empty() {
        println!("criterion 7 N/A [phase-and-polarization-noise bound] outside the scope of this library");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// 1. analytic curves

fn fig_params(n_prime: f64) -> AnalyticChannelParams {
    AnalyticChannelParams { a: 0.01, sigma_w2: 0.001, n: 60, n_prime }
}

/// Golden-section maximization of `f` over `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (l, h) = (lo.log10(), hi.log10());
    (0..points).map(|i| 10f64.powf(l + (h - l) * i as f64 / (points - 1) as f64)).collect()
}

fn selected_air(p: f64, params: &AnalyticChannelParams) -> f64 {
    air_with_selection(p, optimal_threshold(p, params).unwrap(), params).unwrap()
}

fn analytic_curves() -> Outcome {
    let t = Instant::now();
    let base = fig_params(60.0);
    // independent evaluation of log2(1 + P/(σ² + aP³))
    let air = |p: f64| (1.0 + p / (0.001 + 0.01 * p.powi(3))).log2();
    let p_num = golden_max(air, 0.01, 10.0);
    let p_star = 0.05f64.cbrt();
    let peak = gaussian_air(p_star, &base).map_err(err)?;
    let peak_ok = (optimal_power(&base) - p_star).abs() < 1e-6
        && (p_num - p_star).abs() < 1e-6
        && (peak - air(p_star)).abs() < 1e-6
        && (peak - 7.95).abs() < 0.01;

    let p10 = fig_params(10.0);
    let grid = log_grid(10.0, 1e5, 200);
    let curve: Vec<f64> = grid.iter().map(|&p| selected_air(p, &p10)).collect();
    let increasing = curve.windows(2).all(|w| w[1] > w[0]);
    let slope = (selected_air(1e5, &p10) - selected_air(1e4, &p10)) / 10f64.log2();
    let slope_ok = (slope / 0.5 - 1.0).abs() < 0.1;

    let p20 = fig_params(20.0);
    let top: Vec<f64> = log_grid(1e3, 1e5, 100).iter().map(|&p| selected_air(p, &p20)).collect();
    let spread = top.iter().cloned().fold(f64::MIN, f64::max) - top.iter().cloned().fold(f64::MAX, f64::min);

    let p30 = fig_params(30.0);
    let global = log_grid(1e-2, 1e6, 2000).iter().map(|&p| selected_air(p, &p30)).fold(f64::MIN, f64::max);
    let at_1e3 = selected_air(1e3, &p30);

    let elapsed = t.elapsed().as_secs_f64();
    let pass = peak_ok && increasing && slope_ok && spread < 0.05 && at_1e3 < global && elapsed < 1.0;
    Ok((
        pass,
        format!(
            "P*={p_star:.6} peak={peak:.4} n'=10 increasing={increasing} slope={slope:.4} \
             n'=20 spread={spread:.4} n'=30 AIR(1e3)={at_1e3:.3} < peak {global:.3}; {elapsed:.3} s"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 2. estimator closure

/// Selection on the block-memoryless channel with the NLI energy itself as
/// the cost, followed by transmission of the accepted blocks.
fn closure_point(params: &AnalyticChannelParams, power: f64, gamma_lambda: f64, symbols: usize, seed: u64) -> (f64, f64) {
    let blocks = symbols.div_ceil(params.n);
    let mut src = child_rng(seed, "closure-source", 0);
    let mut nli = child_rng(seed, "closure-nli", 0);
    let mut chan = child_rng(seed, "closure-channel", 0);
    let (mut np, mut xs, mut ys) = (0u64, Vec::with_capacity(blocks), Vec::with_capacity(blocks));
    while xs.len() < blocks {
        np += 1;
        let x = fibercap::signal::gaussian_from_rng(&mut src, power, params.n, 1);
        let lambda = draw_nli_energy(&mut nli, power, params).unwrap();
        if lambda < gamma_lambda {
            ys.push(apply_block_channel(&mut chan, &x, lambda, params.sigma_w2).unwrap());
            xs.push(x);
        }
    }
    let x = concat(&xs).unwrap();
    let y = concat(&ys).unwrap();
    let sigma2 = params.sigma_w2 + post_selection_nli_variance(gamma_lambda, power, params).unwrap();
    let counts = SelectionCounts { n: params.n, n_proposed: np, n_accepted: blocks as u64 };
    let est = estimate_air(&x, &y, &DecodingMetricParams { sigma2, power }, &counts).unwrap();
    (est.air, air_with_selection(power, gamma_lambda, params).unwrap())
}

fn estimator_closure() -> Outcome {
    let points: [(f64, [(f64, f64); 3]); 2] =
        [(10.0, [(0.3, 0.6), (0.5, 0.5), (1.0, 0.4)]), (30.0, [(0.3, 0.8), (0.5, 0.7), (1.0, 0.65)])];
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (k, (np, pts)) in points.iter().enumerate() {
        let params = fig_params(*np);
        for (j, &(p, c)) in pts.iter().enumerate() {
            let g = c * params.nli_variance(p);
            let (est, oracle) = closure_point(&params, p, g, 1_000_000, derive_seed(2024, "closure", (3 * k + j) as u64));
            worst = worst.max((est - oracle).abs());
            detail.push(format!("n'={np} P={p}: {est:.4}/{oracle:.4}"));
        }
    }
    Ok((worst <= 0.05, format!("max |est-oracle|={worst:.4} bits; {}", detail.join(", "))))
}

// ---------------------------------------------------------------------------
// 3. split-step correctness

fn random_wave(m: usize, pols: usize, power: f64, seed: u64) -> Waveform {
    let x = gaussian_sequence(&SourceConfig { power, len: m, pol_count: pols, seed }).unwrap();
    Waveform::new(x.into_pols(), 100.0, 0.0).unwrap()
}

fn rel_rms(a: &Waveform, b: &Waveform) -> f64 {
    let num: f64 = a.pols().iter().flatten().zip(b.pols().iter().flatten()).map(|(x, y)| (x - y).norm_sqr()).sum();
    (num / b.total_energy()).sqrt()
}

fn spec(noise: bool, seed: u64) -> SsfmSpec {
    SsfmSpec { step_m: 500.0, sampling_rate_ghz: 100.0, scheme: SplitScheme::Symmetrized, noise, seed }
}

fn ssfm_correctness() -> Outcome {
    let link = LinkSpec::default();

    let w = random_wave(1 << 14, 2, 1.0, 31);
    let linear = LinkSpec { gamma_per_w_km: 0.0, ..link };
    let back = dispersion_compensate(&propagate(&w, &linear, &spec(false, 1)).map_err(err)?, &linear).map_err(err)?;
    let round_trip = rel_rms(&back, &w);

    let w = random_wave(1 << 12, 1, 2.0, 32);
    let spm_link = LinkSpec { beta2_ps2_km: 0.0, alpha_db_km: 0.0, ..link };
    let out = propagate(&w, &spm_link, &spec(false, 1)).map_err(err)?;
    let phi = link.gamma_per_w_km * 1e-3 * link.length_km;
    let spm = w
        .pol(0)
        .iter()
        .zip(out.pol(0))
        .map(|(a, b)| (b - a * fibercap::C64::from_polar(1.0, phi * a.norm_sqr())).norm() / a.norm())
        .fold(0.0, f64::max);

    let w = random_wave(1 << 13, 2, 5.0, 33);
    let lossless = LinkSpec { alpha_db_km: 0.0, ..link };
    let out = propagate(&w, &lossless, &spec(false, 1)).map_err(err)?;
    let energy = ((out.total_energy() - w.total_energy()) / w.total_energy()).abs();

    // ASE budget through a matched filter with the nonlinearity switched off
    let power = dbm_to_mw(-10.0);
    let x = gaussian_sequence(&SourceConfig { power, len: 1 << 16, pol_count: 1, seed: 34 }).map_err(err)?;
    let tx = modulate(&x, 100.0, 50.0, 0.0).map_err(err)?;
    let rx = dispersion_compensate(&propagate(&tx, &linear, &spec(true, 35)).map_err(err)?, &linear).map_err(err)?;
    let y = demodulate(&rx, 50.0, 0.0).map_err(err)?;
    let noise = y.distance_sqr(&x).map_err(err)? / x.len() as f64;
    let snr_ratio = (power / noise) / (power / linear.ase_variance(50.0));

    let pass = round_trip < 1e-6 && spm < 1e-9 && energy < 1e-9 && (snr_ratio - 1.0).abs() < 0.02;
    Ok((
        pass,
        format!(
            "round trip {round_trip:.2e}, SPM {spm:.2e}, energy {energy:.2e}, SNR/budget {snr_ratio:.4}"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 4. cubic scaling

fn nli_params(power_dbm: f64, burst_len: usize, seed: u64) -> FastSelectParams {
    FastSelectParams {
        burst_len,
        n: 64,
        pol_count: 1,
        selection_power: dbm_to_mw(power_dbm),
        rule: ThresholdRule::Quantile(1.0),
        target_accepted: 1,
        max_proposals: u64::MAX,
        seed,
    }
}

fn cubic_scaling() -> Outcome {
    let ch = CostChannel::default();
    let (_, lo) = burst_window_costs(&nli_params(-3.0, 1 << 16, 41), &ch, 0).map_err(err)?;
    let (_, hi) = burst_window_costs(&nli_params(0.0, 1 << 16, 41), &ch, 0).map_err(err)?;
    let ratio = 10f64.powf(0.3);
    let s = cubic_scaling_check(&lo, &hi, ratio).map_err(err)?;
    let rho = spearman(&lo, &hi).map_err(err)?;
    let shape = gamma_fit_moments(&lo).map_err(err)?.shape;
    let pass = (s.median / 8.0 - 1.0).abs() <= 0.1;
    Ok((
        pass,
        format!(
            "{} windows: median ratio {:.3} (IQR {:.3}..{:.3}, cube of power ratio {:.3}), spearman {rho:.4}, gamma shape {shape:.2}",
            lo.len(),
            s.median,
            s.q1,
            s.q3,
            s.expected
        ),
    ))
}

// ---------------------------------------------------------------------------
// 5. selection gain

fn single_channel(seed: u64, bursts: usize) -> Scenario {
    Scenario {
        link: LinkSpec::default(),
        step_m: 500.0,
        sampling_rate_ghz: 100.0,
        wdm: WdmConfig::single(50.0),
        pol_count: 1,
        burst_len: 1 << 16,
        bursts,
        edge_symbols: 256,
        noise: true,
        seed,
    }
}

fn select(power_dbm: f64, pols: usize, eta: f64, target: usize, burst_len: usize, seed: u64) -> SelectionResult {
    let p = FastSelectParams {
        burst_len,
        n: 64,
        pol_count: pols,
        selection_power: dbm_to_mw(power_dbm) / pols as f64,
        rule: ThresholdRule::Quantile(eta),
        target_accepted: target,
        max_proposals: u64::MAX,
        seed,
    };
    fast_select(&p, &CostChannel::default()).unwrap()
}

fn selection_gain() -> Outcome {
    let sc = single_channel(5, 2);
    let power = -8.0;
    let bench = run_point(&sc, &Source::Unbiased, power, None).map_err(err)?;
    let mut curve = vec![(1.0, bench.se(), bench.estimate.std_error, 0u64)];
    for eta in [0.1, 0.01] {
        let r = select(power - 1.0, 1, eta, 1000, 1 << 16, 77);
        let store = r.to_store().map_err(err)?;
        let row = run_point(&sc, &Source::Selected(store), power, None).map_err(err)?;
        curve.push((eta, row.se(), row.estimate.std_error, r.n_accepted));
    }
    let gain = curve[2].1 - curve[0].1;
    let monotone = curve.windows(2).all(|w| w[1].1 >= w[0].1 - 2.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt());
    let enough = curve[2].3 >= 1000;
    let pass = gain > 0.0 && monotone && enough;
    let pts: Vec<String> = curve.iter().map(|(e, s, d, _)| format!("eta={e}: {s:.4}±{d:.4}")).collect();
    Ok((
        pass,
        format!("at {power} dBm: {}; gain {gain:.4} bits, N_a={}, monotone={monotone}", pts.join(", "), curve[2].3),
    ))
}

// ---------------------------------------------------------------------------
// 6. WDM ordering

fn wdm_scenario(seed: u64) -> Scenario {
    Scenario {
        link: LinkSpec::default(),
        step_m: 500.0,
        sampling_rate_ghz: 200.0,
        wdm: WdmConfig { num_channels: 3, ..WdmConfig::five_by_fifty() },
        pol_count: 2,
        burst_len: 1 << 15,
        bursts: 1,
        edge_symbols: 256,
        noise: true,
        seed,
    }
}

fn wdm_ordering() -> Outcome {
    let sc = wdm_scenario(5);
    let r = select(-7.0, 2, 0.01, 1000, 1 << 16, 77);
    let store = Source::Selected(r.to_store().map_err(err)?);
    let rx = [None, Some(DbpSpec::default())];
    // peak SE over the grid for benchmark, DBP, selection, selection+DBP
    let mut peak = [f64::MIN; 4];
    let mut rows = Vec::new();
    for p in [-8.0, -6.0, -4.0] {
        let u = run_point_receivers(&sc, &Source::Unbiased, p, &rx).map_err(err)?;
        let s = run_point_receivers(&sc, &store, p, &rx).map_err(err)?;
        let v = [u[0].se(), u[1].se(), s[0].se(), s[1].se()];
        for (k, x) in v.iter().enumerate() {
            peak[k] = peak[k].max(*x);
        }
        rows.push(format!("{p} dBm {:.3}/{:.3}/{:.3}/{:.3}", v[0], v[1], v[2], v[3]));
    }
    let [b, d, s, sd] = peak;
    let pass = b < s && b < d && s < sd && d < sd;
    Ok((
        pass,
        format!(
            "peaks benchmark {b:.3}, selection {s:.3} (+{:.3}), DBP {d:.3} (+{:.3}), both {sd:.3} (+{:.3}); \
             per power bench/DBP/sel/both: {}",
            s - b,
            d - b,
            sd - b,
            rows.join("; ")
        ),
    ))
}

// ---------------------------------------------------------------------------
// 8. determinism

fn small_pipeline(seed: u64) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let mut analytic = Vec::new();
    let powers: Vec<f64> = (-10..=30).step_by(5).map(f64::from).collect();
    write_curves_csv(&mut analytic, &powers, &fig_params(60.0), &[10.0, 20.0, 30.0]).unwrap();
    let (est, _) = closure_point(&fig_params(10.0), 0.5, 0.5 * 0.01 * 0.125, 60_000, seed);
    analytic.extend_from_slice(&est.to_le_bytes());

    let r = select(-8.0, 1, 0.1, 100, 1 << 12, seed);
    let store = r.to_store().unwrap();
    let store_bytes = store.to_bytes().unwrap();

    let sc = Scenario { burst_len: 1 << 12, bursts: 1, ..single_channel(seed, 1) };
    let dbp = DbpSpec::default();
    let mut sweep = Vec::new();
    let mut rows = Vec::new();
    for p in [-10.0, -6.0] {
        rows.push(run_point(&sc, &Source::Selected(store.clone()), p, Some(&dbp)).unwrap());
    }
    let sum = fibercap::store::checksum(&store_bytes);
    write_sweep_csv(&mut sweep, &rows, Some(&sum)).unwrap();
    (analytic, store_bytes, sweep)
}

fn determinism() -> Outcome {
    let a = small_pipeline(9);
    let b = small_pipeline(9);
    let c = small_pipeline(10);
    let same = a == b;
    let differs = a.1 != c.1 && a.2 != c.2;
    let pass = same && differs;
    Ok((
        pass,
        format!(
            "analytic+closure, store ({} bytes) and sweep CSV ({} bytes) identical on rerun: {same}; another seed differs: {differs}",
            a.1.len(),
            a.2.len()
        ),
    ))
}
