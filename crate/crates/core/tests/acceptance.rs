//! Acceptance criteria A1 to A9. Each test prints one line,
//! `A<n> PASS|FAIL <measured values>`, before asserting.
//!
//! The link parameters come from `configs/fig1.toml`: 20 asynchronous users,
//! interferers received 5 times stronger, 20-path log-normal channels and an
//! all-RAKE MRC receiver, for a single-pulse (MHP order 4) and a two-pulse
//! (orders 4 and 5) system.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use ir_uwb::analysis::{
    bep_multi, bep_single, mai_variance_classical, mai_variance_multi, noise_variance, BepEnsemble,
};
use ir_uwb::channel::{composite_waveform, sample_channel, ChannelParams};
use ir_uwb::cli::{psd_comparison, ExperimentConfig};
use ir_uwb::link::{draw_realization, CombinerSpec, LinkSetup};
use ir_uwb::montecarlo::{
    estimate_mai_variance, estimate_noise_variance, run_ber_sweep, StopRule, TrialPlan,
};
use ir_uwb::pulses::make_mhp;
use ir_uwb::rng::{stream, StreamRole};
use ir_uwb::special::q_function;
use ir_uwb::transceiver::{noise_sigma_for_ebn0_db, SystemConfig};

const NS: f64 = 1e-9;
const FIG1: &str = include_str!("../../../configs/fig1.toml");

fn fig1() -> ExperimentConfig {
    ExperimentConfig::from_toml(FIG1).unwrap()
}

fn plan_setup(cfg: &ExperimentConfig, name: &str) -> LinkSetup {
    let plan = cfg.plans.iter().find(|p| p.name == name).unwrap();
    cfg.setup(plan).unwrap()
}

fn report(id: &str, passed: bool, detail: String) {
    println!("{id} {} {detail}", if passed { "PASS" } else { "FAIL" });
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn a1_psd_consistency() {
    let cfg = fig1();
    let plan = cfg.plans.iter().find(|p| p.name == "double").unwrap();
    let start = Instant::now();
    let (_, _, band, mismatch) = psd_comparison(&cfg, plan).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = mismatch <= 0.05 && secs <= 60.0;
    report(
        "A1",
        ok,
        format!(
            "relative L2 mismatch {mismatch:.4} over |f| <= {:.2} GHz (limit 0.05), {secs:.1} s",
            band.1 / 1e9
        ),
    );
    assert!(ok);
}

#[test]
fn a2_channel_normalization() {
    let cfg = fig1();
    let sys = cfg.system_config(1).unwrap();
    let base = cfg.channel_params().unwrap();
    let n = 100_000;
    let mut means = Vec::new();
    for (i, scale) in [1.0, 5.0].into_iter().enumerate() {
        let params = base.with_power_scale(scale);
        let mut rng = stream(cfg.seed, i as u64, StreamRole::Aux(10));
        let total: f64 = (0..n)
            .map(|_| sample_channel(&params, &sys, &mut rng).unwrap().energy())
            .sum();
        means.push(total / n as f64);
    }
    let ok = (0.98..=1.02).contains(&means[0]) && (4.9..=5.1).contains(&means[1]);
    report(
        "A2",
        ok,
        format!(
            "mean channel energy {:.4} (limit [0.98, 1.02]), {:.4} at power x5 (limit [4.9, 5.1]), {n} draws each",
            means[0], means[1]
        ),
    );
    assert!(ok);
}

#[test]
fn a3_mai_variance_oracle() {
    let cfg = fig1();
    let setup = plan_setup(&cfg, "double");
    let sys = &setup.config;
    let nh2 = (sys.th_alphabet * sys.th_alphabet) as f64;
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for pair in 0..10u64 {
        let link = draw_realization(&setup, cfg.seed, 1000 + pair).unwrap();
        let one = SystemConfig {
            users: 2,
            ..sys.clone()
        };
        let mai = mai_variance_multi(&link.u[1..2], &link.v, &one).unwrap();
        for j in 0..sys.pulse_types {
            let analytic = mai.per_frame[0][j] / nh2;
            let mut rng = stream(cfg.seed, pair, StreamRole::Aux(20 + j as u32));
            let mc = estimate_mai_variance(sys, &link.v, &link.u[1], j, 1_000_000, &mut rng).unwrap();
            worst = worst.max(rel(mc, analytic));
            checks += 1;
        }
    }
    let ok = worst <= 0.03;
    report(
        "A3",
        ok,
        format!("worst relative error {worst:.4} over {checks} (pair, frame type) checks, 10^6 draws each (limit 0.03)"),
    );
    assert!(ok);
}

#[test]
fn a4_noise_variance() {
    let cfg = fig1();
    let mut worst: f64 = 0.0;
    for name in ["single", "double"] {
        let setup = plan_setup(&cfg, name);
        let sys = setup.config.clone().with_noise_sigma(1.0);
        let link = draw_realization(&setup, cfg.seed, 0).unwrap();
        let analytic = noise_variance(&link.v, &sys);
        let mut rng = stream(cfg.seed, 0, StreamRole::Aux(30));
        let mc = estimate_noise_variance(&sys, &link.v, 100_000, &mut rng).unwrap();
        worst = worst.max(rel(mc, analytic));
    }
    let ok = worst <= 0.02;
    report(
        "A4",
        ok,
        format!("worst relative error {worst:.4} at 10^5 trials (limit 0.02)"),
    );
    assert!(ok);
}

struct Fig1Run {
    ebn0: Vec<f64>,
    theory: [Vec<f64>; 2],
    sim: [Vec<f64>; 2],
    sim_capped: bool,
    mai: [f64; 2],
}

fn fig1_run() -> &'static Fig1Run {
    static RUN: OnceLock<Fig1Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = fig1();
        let ebn0 = cfg.sweep.ebn0_db.clone();
        let sigmas: Vec<f64> = ebn0.iter().map(|&e| noise_sigma_for_ebn0_db(e)).collect();
        let trials = cfg.trial_plan().unwrap();
        let mut theory: [Vec<f64>; 2] = Default::default();
        let mut sim: [Vec<f64>; 2] = Default::default();
        let mut mai = [0.0; 2];
        let mut sim_capped = false;
        for (i, name) in ["single", "double"].into_iter().enumerate() {
            let setup = plan_setup(&cfg, name);
            let ens = BepEnsemble::draw(&setup, cfg.theory.realizations, cfg.seed).unwrap();
            theory[i] = sigmas.iter().map(|&s| ens.average(s).unwrap().mean.pe).collect();
            mai[i] = ens.mean_mai_decision_variance();
            let est = run_ber_sweep(&setup, &trials, &sigmas).unwrap();
            sim_capped |= est.iter().any(|e| e.capped);
            sim[i] = est.iter().map(|e| e.ber).collect();
        }
        Fig1Run {
            ebn0,
            theory,
            sim,
            sim_capped,
            mai,
        }
    })
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ")
}

#[test]
fn a5_double_pulse_beats_single_pulse() {
    let r = fig1_run();
    let below = |d: &[f64], s: &[f64]| d.iter().zip(s).all(|(a, b)| a < b);
    let theory_ok = below(&r.theory[1], &r.theory[0]);
    let sim_ok = below(&r.sim[1], &r.sim[0]);
    let ratio = r.mai[1] / r.mai[0];
    let ratio_ok = (0.70..=0.90).contains(&ratio);
    let ok = theory_ok && sim_ok && ratio_ok && !r.sim_capped && r.ebn0.len() == 6;
    report(
        "A5",
        ok,
        format!(
            "Eb/N0 {:?} dB; theory single [{}] double [{}]; sim single [{}] double [{}]; \
             MAI variance ratio double/single {ratio:.4} (limit [0.70, 0.90])",
            r.ebn0,
            fmt(&r.theory[0]),
            fmt(&r.theory[1]),
            fmt(&r.sim[0]),
            fmt(&r.sim[1]),
        ),
    );
    assert!(theory_ok, "theory ordering");
    assert!(sim_ok, "simulated ordering");
    assert!(ratio_ok, "ratio {ratio}");
    assert!(
        !r.sim_capped,
        "a simulated point has fewer than the minimum error count"
    );
}

#[test]
fn a6_gaussian_approximation_behaviour() {
    let r = fig1_run();
    let n = r.ebn0.len();
    let mut low = Vec::new();
    let mut high = Vec::new();
    for p in 0..2 {
        for k in 0..2 {
            low.push(rel(r.sim[p][k], r.theory[p][k]));
        }
        high.push(r.sim[p][n - 1] / r.theory[p][n - 1]);
    }
    let low_ok = low.iter().all(|&e| e <= 0.25);
    let high_ok = high.iter().all(|&q| q >= 1.0);
    report(
        "A6",
        low_ok && high_ok,
        format!(
            "low-SNR |sim-theory|/theory {} (limit 0.25): {}; sim/theory at {} dB single {:.3} double {:.3} \
             (required >= 1): {}",
            fmt(&low),
            if low_ok { "ok" } else { "exceeded" },
            r.ebn0[n - 1],
            high[0],
            high[1],
            if high_ok { "ok" } else { "simulation below theory" },
        ),
    );
    assert!(low_ok, "low-SNR agreement {low:?}");
    assert!(high_ok, "high-SNR simulated/theory ratios {high:?}");
}

#[test]
fn a7_single_type_reduction() {
    let mut rng = stream(7, 0, StreamRole::Aux(40));
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let users = rng.gen_range(1..8);
        let nf = rng.gen_range(1..6);
        let nc = rng.gen_range(20..60);
        let nh = rng.gen_range(1..6);
        let order = rng.gen_range(0..8);
        let paths = rng.gen_range(1..25);
        let sys = SystemConfig::new(users, nf, nc, nh, 1, NS)
            .unwrap()
            .with_noise_sigma(rng.gen_range(0.01..2.0))
            .with_interferer_power(rng.gen_range(0.5..10.0));
        let params = ChannelParams::new(
            paths,
            rng.gen_range(0.1..1.0),
            rng.gen_range(0.0..1.5),
            rng.gen_range(0.2..2.0) * NS,
        )
        .unwrap();
        let setup = LinkSetup::new(
            sys.clone(),
            vec![make_mhp(order, 0.05 * NS, 0.02 * NS).unwrap()],
            params,
            CombinerSpec::default(),
        )
        .unwrap();
        let link = draw_realization(&setup, 7, case).unwrap();
        let mai = mai_variance_multi(&link.u[1..], &link.v, &sys).unwrap();
        let multi = bep_multi(&link.u[0], &link.v, &mai, &sys).unwrap();
        let classical: Vec<f64> = link.u[1..]
            .iter()
            .map(|u| mai_variance_classical(&u[0], &link.v[0], &sys).unwrap())
            .collect();
        let single = bep_single(&link.u[0][0], &link.v[0], &classical, &sys).unwrap();
        worst = worst.max((multi.pe - single.pe).abs() / single.pe);
    }
    let ok = worst <= 1e-12;
    report(
        "A7",
        ok,
        format!("worst relative difference {worst:.2e} over 100 random configs (limit 1e-12)"),
    );
    assert!(ok);
}

#[test]
fn a8_awgn_sanity() {
    let pulse = make_mhp(4, 0.05 * NS, 0.02 * NS).unwrap();
    let sys = SystemConfig::new(1, 2, 40, 3, 1, NS).unwrap();
    // one path with sigma^2 = 0 is the deterministic unit-gain channel
    let chan = ChannelParams::new(1, 0.5, 0.0, 1.5 * NS).unwrap();
    let link = LinkSetup::new(sys, vec![pulse.clone()], chan, CombinerSpec::default()).unwrap();
    let probe = draw_realization(&link, 1, 0).unwrap();
    assert_eq!(probe.channels[0].gains()[0].abs(), 1.0);
    let _ = composite_waveform(&pulse, &probe.channels[0], probe.channels[0].gains()).unwrap();
    let plan = TrialPlan::new(
        1,
        200,
        500,
        StopRule {
            max_bits: 100_000,
            min_errors: 50,
        },
    )
    .unwrap();
    let ebn0 = [0.0, 2.0, 4.0, 6.0];
    let sigmas: Vec<f64> = ebn0.iter().map(|&e| noise_sigma_for_ebn0_db(e)).collect();
    let est = run_ber_sweep(&link, &plan, &sigmas).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (e, b) in ebn0.iter().zip(&est) {
        let want = q_function((2.0 * 10f64.powf(e / 10.0)).sqrt());
        let (lo, hi) = b.interval();
        let inside = lo <= want && want <= hi && b.bits == 100_000;
        ok &= inside;
        parts.push(format!(
            "{e} dB: {:.4e} vs {want:.4e} in [{lo:.4e}, {hi:.4e}]",
            b.ber
        ));
    }
    report("A8", ok, format!("{}, 10^5 bits each", parts.join("; ")));
    assert!(ok);
}

#[test]
fn a9_determinism_across_thread_counts() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (run, threads) in ["1", "3", "1"].into_iter().enumerate() {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_ir-uwb"))
            .args([
                "sim",
                "--config",
                cfg.to_str().unwrap(),
                "--threads",
                threads,
                "--out",
                out.to_str().unwrap(),
            ])
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success());
        let files: Vec<Vec<u8>> = ["single", "double"]
            .iter()
            .map(|p| std::fs::read(out.join(p).join("ber.csv")).unwrap())
            .collect();
        outputs.push(files);
    }
    let ok = outputs.iter().all(|o| *o == outputs[0]);
    report(
        "A9",
        ok,
        "ber.csv byte-identical across --threads 1, 3 and a repeat".into(),
    );
    assert!(ok);
}
