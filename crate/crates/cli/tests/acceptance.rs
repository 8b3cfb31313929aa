//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured quantities.
//!
//! Run with:
//!   cargo test -p dpst-cli --test acceptance -- --nocapture

use dpst_core::channel::{
    assemble_channel, build_correlation_matrices, capacity, sv_approx_2x2, ChannelMode,
    ChannelParams,
};
use dpst_core::numerics::{condition_number, hermitian_eigen, svd, ComplexMatrix, C64};
use dpst_core::optimizer::{optimize_delays, DelaySearchConfig};
use dpst_core::shaping::{tx_interpolation_matrix, virtual_channel, ShapingConfig};
use dpst_core::system::{
    channel_statistics, optimizer_ensemble_seed, run_scenario, ScenarioConfig, SimMode,
};
use dpst_core::transceiver::mmse_filter;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

const MASTER_SEED: u64 = 1;
const DROPS: usize = 10_000;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn reference_params(mimo: usize) -> ChannelParams {
    ChannelParams::new(mimo, 10.0, ChannelMode::Correlated)
}

/// Optimizer-selected delays for the reference ensemble, cached per size.
fn optimized_delays(mimo: usize) -> Vec<f64> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Vec<f64>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(d) = cache.lock().unwrap().get(&mimo) {
        return d.clone();
    }
    let params = reference_params(mimo);
    let source = move |i: u64| {
        assemble_channel(&params, optimizer_ensemble_seed(MASTER_SEED, i))
            .unwrap()
            .h
    };
    let cfg = ShapingConfig {
        delays: vec![0.0; mimo],
        ..Default::default()
    };
    let result = optimize_delays(source, mimo, &DelaySearchConfig::default(), &cfg).unwrap();
    cache.lock().unwrap().insert(mimo, result.delays.clone());
    result.delays
}

fn scenario(mimo: usize, mode: SimMode, isd_m: f64) -> ScenarioConfig {
    let delays = match mode {
        SimMode::Dpst => optimized_delays(mimo),
        _ => vec![0.0; mimo],
    };
    ScenarioConfig {
        mimo,
        mode,
        isd_m,
        n_drops: DROPS,
        master_seed: MASTER_SEED,
        shaping: ShapingConfig {
            delays,
            ..Default::default()
        },
        ..Default::default()
    }
}

type MedianKey = (usize, u64, &'static str);

/// Median (effective SINR dB, throughput bps) per (mimo, isd, mode), cached
/// across criteria.
fn medians(mimo: usize, isd_m: f64, mode: SimMode) -> (f64, f64) {
    static CACHE: OnceLock<Mutex<HashMap<MedianKey, (f64, f64)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (mimo, isd_m as u64, mode.label());
    if let Some(v) = cache.lock().unwrap().get(&key) {
        return *v;
    }
    let cdfs = run_scenario(&scenario(mimo, mode, isd_m)).unwrap();
    let v = (
        cdfs["effective_sinr_db"].median(),
        cdfs["throughput_bps"].median(),
    );
    cache.lock().unwrap().insert(key, v);
    v
}

#[test]
fn criterion_1_condition_number_table() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for (mimo, target) in [(2usize, 4.45f64), (4usize, 9.35f64)] {
        let sc = scenario(mimo, SimMode::Rayleigh, 50.0);
        let stats = channel_statistics(&sc, SimMode::Rayleigh, DROPS).unwrap();
        let within = (stats.mean_condition - target).abs() <= 0.10 * target;
        ok &= within;
        notes.push(format!(
            "{mimo}x{mimo} rayleigh mean cond {:.3} vs {target} +/-10% [{}]",
            stats.mean_condition,
            verdict(within)
        ));
    }
    for mimo in [2usize, 4] {
        let sc = scenario(mimo, SimMode::Optimum, 50.0);
        let stats = channel_statistics(&sc, SimMode::Optimum, DROPS).unwrap();
        let within = (stats.mean_condition - 1.0).abs() <= 1e-6;
        ok &= within;
        notes.push(format!(
            "{mimo}x{mimo} optimum mean cond {:.9} vs 1.000 +/-1e-6 [{}]",
            stats.mean_condition,
            verdict(within)
        ));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let in_time = elapsed < 60.0;
    ok &= in_time;
    notes.push(format!("runtime {elapsed:.1}s < 60s [{}]", verdict(in_time)));
    println!(
        "ACCEPTANCE 1 condition-number table over {DROPS} draws: {} ({})",
        verdict(ok),
        notes.join("; ")
    );
    assert!(ok, "{}", notes.join("\n"));
}

#[test]
fn criterion_2_dpst_conditioning() {
    let mut ok = true;
    let mut notes = Vec::new();
    for (mimo, paper) in [(2usize, 1.31f64), (4usize, 1.42f64)] {
        let delays = optimized_delays(mimo);
        let mut sc = scenario(mimo, SimMode::Dpst, 50.0);
        sc.shaping.delays = delays.clone();
        let mean = channel_statistics(&sc, SimMode::Dpst, DROPS)
            .unwrap()
            .mean_condition;
        sc.shaping.delays = vec![0.0; mimo];
        let baseline = channel_statistics(&sc, SimMode::Dpst, DROPS)
            .unwrap()
            .mean_condition;
        let below_two = mean < 2.0;
        let improves = mean < baseline;
        // One-sided match: conditioning at or below the reported value plus
        // 20% counts; landing closer to 1 than the report is the claim
        // working, not a deviation.
        let matches_report = mean <= 1.2 * paper;
        ok &= below_two && improves && matches_report;
        notes.push(format!(
            "{mimo}x{mimo} delays {:?}: mean cond {mean:.4} (<2 [{}]; < tau=0 baseline {baseline:.2} [{}]; vs report {paper} [{}])",
            &delays[1..],
            verdict(below_two),
            verdict(improves),
            verdict(matches_report)
        ));
    }
    println!("ACCEPTANCE 2 DPST conditioning: {} ({})", verdict(ok), notes.join("; "));
    assert!(ok, "{}", notes.join("\n"));
}

#[test]
fn criterion_3_throughput_gain_ratios() {
    let mut ok = true;
    let mut notes = Vec::new();
    for (mimo, dc_target, od_bound) in [(2usize, 1.93f64, 1.03f64), (4usize, 3.76f64, 1.13f64)] {
        let (_, t_corr) = medians(mimo, 50.0, SimMode::Correlated);
        let (_, t_dpst) = medians(mimo, 50.0, SimMode::Dpst);
        let (_, t_opt) = medians(mimo, 50.0, SimMode::Optimum);
        let dc = t_dpst / t_corr;
        let od = t_opt / t_dpst;
        let dc_ok = (dc - dc_target).abs() <= 0.15 * dc_target;
        // "within od_bound of optimum" is an upper bound on the gap; the
        // 10% tolerance loosens the bound itself.
        let od_ok = od <= od_bound * 1.10;
        ok &= dc_ok && od_ok;
        notes.push(format!(
            "{mimo}x{mimo}: dpst/correlated {dc:.3} vs {dc_target} +/-15% [{}]; optimum/dpst {od:.3} <= {od_bound} +10% [{}]",
            verdict(dc_ok),
            verdict(od_ok)
        ));
    }
    println!(
        "ACCEPTANCE 3 throughput gain ratios (ISD 50 m, {DROPS} drops): {} ({})",
        verdict(ok),
        notes.join("; ")
    );
    assert!(ok, "{}", notes.join("\n"));
}

#[test]
fn criterion_4_sinr_deltas() {
    let mut ok = true;
    let mut notes = Vec::new();
    for (mimo, targets) in [
        (2usize, [6.7f64, 10.2, 13.6]),
        (4usize, [9.6f64, 12.6, 14.8]),
    ] {
        let mut deltas = Vec::new();
        for &isd in &[20.0, 50.0, 100.0] {
            let (s_corr, _) = medians(mimo, isd, SimMode::Correlated);
            let (s_dpst, _) = medians(mimo, isd, SimMode::Dpst);
            deltas.push(s_dpst - s_corr);
        }
        let quantitative = deltas
            .iter()
            .zip(&targets)
            .all(|(d, t)| (d - t).abs() <= 2.0);
        let positive = deltas.iter().all(|&d| d > 0.0);
        let increasing = deltas[0] < deltas[1] && deltas[1] < deltas[2];
        let this_ok = quantitative || (positive && increasing);
        ok &= this_ok;
        notes.push(format!(
            "{mimo}x{mimo} gains at ISD 20/50/100: {:.2}/{:.2}/{:.2} dB vs {:?} +/-2dB [{}]; fallback positive [{}] increasing [{}]",
            deltas[0], deltas[1], deltas[2], targets,
            verdict(quantitative),
            verdict(positive),
            verdict(increasing),
        ));
    }
    println!(
        "ACCEPTANCE 4 effective-SINR gains: {} ({})",
        verdict(ok),
        notes.join("; ")
    );
    assert!(ok, "{}", notes.join("\n"));
}

#[test]
fn criterion_5_zero_delay_collapse() {
    let params = reference_params(2);
    let cfg = ShapingConfig::with_delays(vec![0.0, 0.0]);
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let h = assemble_channel(&params, seed).unwrap().h;
        let vc = virtual_channel(&h, &cfg).unwrap();
        let (c_h, c_n) = (condition_number(&h), condition_number(&vc.h_n));
        worst = worst.max((c_n - c_h).abs() / c_h);
    }
    let ok = worst < 1e-6;
    println!(
        "ACCEPTANCE 5 zero-delay collapse: {} (worst relative deviation {worst:.3e} over 100 draws)",
        verdict(ok)
    );
    assert!(ok, "worst relative deviation {worst}");
}

#[test]
fn criterion_6_zero_isi_and_fractional_gram() {
    let ident = tx_interpolation_matrix(10, 10, 0.0, 1.0).unwrap();
    let exact_identity = ident == ComplexMatrix::identity(10);

    let cfg = ShapingConfig::default();
    let mut min_offdiag = f64::INFINITY;
    for k in 1..100 {
        let tau = k as f64 / 100.0;
        let it = tx_interpolation_matrix(cfg.m_len, cfg.n_samples(), tau, 1.0).unwrap();
        let gram = it.hermitian().matmul(&it);
        min_offdiag = min_offdiag.min(gram.max_offdiag_abs());
    }
    let gram_ok = min_offdiag > 1e-3;
    let ok = exact_identity && gram_ok;
    println!(
        "ACCEPTANCE 6 zero-ISI / fractional non-orthogonality: {} (identity exact [{}]; min off-diagonal over tau grid {min_offdiag:.3e} > 1e-3 [{}])",
        verdict(ok),
        verdict(exact_identity),
        verdict(gram_ok)
    );
    assert!(ok);
}

#[test]
fn criterion_7_analytical_identities() {
    let mut ok = true;
    let mut notes = Vec::new();

    // capacity sum form vs determinant form on 1000 seeded draws
    let mut worst = 0.0f64;
    let white3 = ChannelParams::new(3, 10.0, ChannelMode::Rayleigh);
    for seed in 0..1000u64 {
        let h = assemble_channel(&white3, seed).unwrap().h;
        let c = capacity(&h, 6.0);
        let l = 3.0;
        let g = h.matmul(&h.hermitian());
        let (lam, _) = hermitian_eigen(&g).unwrap();
        let det_form: f64 = lam.iter().map(|x| (1.0 + 6.0 * x.max(0.0) / l).log2()).sum();
        worst = worst.max((c - det_form).abs() / c.max(1.0));
    }
    let cap_ok = worst <= 1e-9;
    ok &= cap_ok;
    notes.push(format!("capacity identity worst rel dev {worst:.2e} [{}]", verdict(cap_ok)));

    // singular-value approximation within 5% whenever exact condition > 10
    let white2 = ChannelParams::new(2, 10.0, ChannelMode::Rayleigh);
    let mut worst = 0.0f64;
    let mut count = 0;
    for seed in 0..20_000u64 {
        let h = assemble_channel(&white2, seed).unwrap().h;
        let dec = svd(&h).unwrap();
        if dec.sigma[0] / dec.sigma[1] <= 10.0 {
            continue;
        }
        count += 1;
        let (l1, l2) = sv_approx_2x2(&h).unwrap();
        let (e1, e2) = (dec.sigma[0].powi(2), dec.sigma[1].powi(2));
        worst = worst.max(((l1 - e1).abs() / e1).max((l2 - e2).abs() / e2));
    }
    let sv_ok = worst < 0.05 && count > 100;
    ok &= sv_ok;
    notes.push(format!(
        "sv approximation worst rel err {worst:.4} over {count} ill-conditioned draws [{}]",
        verdict(sv_ok)
    ));

    // correlation matrices: Hermitian PSD, unit diagonal
    let mut corr_ok = true;
    for n in [2usize, 4] {
        let (rt, rr) = build_correlation_matrices(&reference_params(n)).unwrap();
        for r in [rt, rr] {
            corr_ok &= r.is_hermitian(0.0);
            for i in 0..n {
                corr_ok &= r[(i, i)] == C64::new(1.0, 0.0);
            }
            let (lam, _) = hermitian_eigen(&r).unwrap();
            corr_ok &= *lam.last().unwrap() >= -1e-10;
        }
    }
    ok &= corr_ok;
    notes.push(format!("correlation matrices Hermitian PSD unit-diagonal [{}]", verdict(corr_ok)));

    // MMSE limits
    let zero_phi = ComplexMatrix::zeros(2, 2);
    let f_ident = mmse_filter(&ComplexMatrix::identity(2), &zero_phi, 1.0).unwrap();
    let half = f_ident.sub(&ComplexMatrix::identity(2).scaled_re(0.5)).max_abs() < 1e-12;
    let d = ComplexMatrix::from_real_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
    let f_lim = mmse_filter(&d, &zero_phi, 1e-12).unwrap();
    let pinv = ComplexMatrix::from_real_rows(&[vec![0.5, 0.0], vec![0.0, 1.0]]);
    let zf = f_lim.sub(&pinv).max_abs() < 1e-9;
    ok &= half && zf;
    notes.push(format!(
        "MMSE limits (identity/N0=1 -> I/2 [{}], zero-noise -> pseudo-inverse [{}])",
        verdict(half),
        verdict(zf)
    ));

    println!("ACCEPTANCE 7 analytical identities: {} ({})", verdict(ok), notes.join("; "));
    assert!(ok, "{}", notes.join("\n"));
}

#[test]
fn criterion_8_thread_count_determinism() {
    let bin = env!("CARGO_BIN_EXE_dpst-sim");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg_path,
        "[scenario]\nn_drops = 500\nmode = \"dpst\"\ndelays = [0.0, 0.3]\n",
    )
    .unwrap();

    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("run{threads}"));
        let status = std::process::Command::new(bin)
            .args([
                "simulate",
                "--config",
                cfg_path.to_str().unwrap(),
                "--threads",
                threads,
                "--out-dir",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let mut bytes = Vec::new();
        for name in ["sinr_cdf.csv", "throughput_cdf.csv", "condnum_cdf.csv"] {
            bytes.push(std::fs::read(out.join(name)).unwrap());
        }
        outputs.push(bytes);
    }
    let ok = outputs[0] == outputs[1];
    println!(
        "ACCEPTANCE 8 thread-count determinism: {} (CSV bytes identical across --threads 1 and 3)",
        verdict(ok)
    );
    assert!(ok, "CSV outputs differ between thread counts");
}
