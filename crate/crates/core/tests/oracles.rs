//! Independent numerical oracles for pulses, spectra, channels and the
//! correlator: closed-form roots, brute-force quadrature and naive loops.

use rand::Rng;

use ir_uwb::channel::{composite_waveform, sample_channel, sample_channel_unconstrained, ChannelParams};
use ir_uwb::pulses::{cross_correlation, hermite_e, make_mhp, pulse_spectrum, Pulse};
use ir_uwb::rng::{stream, StreamRole};
use ir_uwb::signal::{Sampled, Waveform};
use ir_uwb::spectral::{analytic_autocorrelation, analytic_psd};
use ir_uwb::transceiver::{decision_statistic, generate_codes, random_bits, transmit_block, SystemConfig};

const NS: f64 = 1e-9;

fn time_of(p: &impl Sampled, i: usize) -> f64 {
    p.t0() + i as f64 * p.dt()
}

#[test]
fn mhp4_zero_crossings_match_hermite_roots() {
    let tau = 0.08 * NS;
    let dt = 0.02 * NS;
    let p = make_mhp(4, tau, dt).unwrap();
    assert!((p.energy() - 1.0).abs() < 1e-9);
    let s = p.samples();
    let mut crossings = Vec::new();
    for i in 0..s.len() - 1 {
        if s[i] == 0.0 || s[i] * s[i + 1] < 0.0 {
            let frac = s[i] / (s[i] - s[i + 1]);
            crossings.push(time_of(&p, i) + frac * dt);
        }
    }
    let r6 = 6f64.sqrt();
    let mut roots: Vec<f64> = [-(3.0 + r6), -(3.0 - r6), 3.0 - r6, 3.0 + r6]
        .iter()
        .map(|&v: &f64| v.signum() * v.abs().sqrt() * tau)
        .collect();
    roots.sort_by(f64::total_cmp);
    assert_eq!(crossings.len(), 4, "crossings {crossings:?}");
    for (c, r) in crossings.iter().zip(&roots) {
        // linear interpolation of a smooth pulse between samples
        assert!((c - r).abs() < 0.1 * dt, "crossing {c:e} vs root {r:e}");
    }

    // peak of |He_4(t/tau) exp(-t^2/4tau^2)| on a fine grid
    let fine = (-40_000..=40_000).map(|k| k as f64 * 1e-4 * tau);
    let peak = fine
        .map(|t| {
            (
                t,
                (hermite_e(4, t / tau) * (-(t / tau).powi(2) / 4.0).exp()).abs(),
            )
        })
        .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a })
        .0;
    let i = (0..s.len())
        .max_by(|&a, &b| s[a].abs().total_cmp(&s[b].abs()))
        .unwrap();
    // |h_4| peaks symmetrically on both sides of zero
    assert!((time_of(&p, i).abs() - peak.abs()).abs() <= 0.5 * dt);
}

#[test]
fn spectral_peak_matches_direct_quadrature() {
    let tau = 0.08 * NS;
    let p = make_mhp(4, tau, 0.02 * NS).unwrap();
    let spec = pulse_spectrum(&p, 1 << 14).unwrap();
    let f_fft = spec.peak_frequency().abs();

    // |integral h(t) exp(-j 2 pi f t) dt| of the closed form, fine grid
    let h = 1e-3 * NS;
    let ts: Vec<f64> = (-2000..=2000).map(|k| k as f64 * h).collect();
    let hs: Vec<f64> = ts
        .iter()
        .map(|&t| hermite_e(4, t / tau) * (-(t / tau).powi(2) / 4.0).exp())
        .collect();
    let mag = |f: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (&t, &v) in ts.iter().zip(&hs) {
            let w = -2.0 * std::f64::consts::PI * f * t;
            re += v * w.cos();
            im += v * w.sin();
        }
        (re * re + im * im).sqrt()
    };
    let mut f_quad = 0.0;
    let mut best = 0.0;
    let mut f = 0.0;
    while f < 20e9 {
        let m = mag(f);
        if m > best {
            best = m;
            f_quad = f;
        }
        f += 1e6;
    }
    assert!((f_fft - f_quad).abs() <= spec.df(), "{f_fft:e} vs {f_quad:e}");
}

#[test]
fn correlation_matches_a_naive_double_loop() {
    let dt = 0.02 * NS;
    let a = make_mhp(4, 0.05 * NS, dt).unwrap();
    let b = make_mhp(5, 0.05 * NS, dt).unwrap();
    let phi = cross_correlation(&a, &b).unwrap();
    assert!(phi.at(0.0).abs() < 1e-6);
    for x in [0.04 * NS, -0.1 * NS, 0.3 * NS] {
        let mut naive = 0.0;
        for (i, &va) in a.samples().iter().enumerate() {
            for (k, &vb) in b.samples().iter().enumerate() {
                // a(t - x) b(t) with t on b's grid
                if ((time_of(&b, k) - x - time_of(&a, i)) / dt).abs() < 1e-6 {
                    naive += va * vb * dt;
                }
            }
        }
        assert!(naive.abs() > 1e-3, "lag {x:e} gave {naive}");
        assert!((phi.at(x) - naive).abs() < 1e-12, "lag {x:e}");
    }
    // 0.05 ns lies between grid points; the value is interpolated
    let lo = phi.at(0.04 * NS);
    let hi = phi.at(0.06 * NS);
    assert!((phi.at(0.05 * NS) - 0.5 * (lo + hi)).abs() < 1e-12);
}

#[test]
fn every_pulse_satisfies_parseval() {
    for order in 0..=10 {
        for tau in [0.05 * NS, 0.08 * NS] {
            let p = make_mhp(order, tau, 0.01 * NS).unwrap();
            let s = pulse_spectrum(&p, 4 * p.len()).unwrap();
            assert!((s.total_energy() - 1.0).abs() < 1e-3, "order {order}");
        }
    }
}

fn paper_system(np: usize) -> SystemConfig {
    SystemConfig::new(20, 2, 40, 3, np, NS).unwrap()
}

fn pulse_pair() -> Vec<Pulse> {
    vec![
        make_mhp(4, 0.05 * NS, 0.02 * NS).unwrap(),
        make_mhp(5, 0.05 * NS, 0.02 * NS).unwrap(),
    ]
}

#[test]
fn psd_is_the_fourier_transform_of_the_average_autocorrelation() {
    let ps = pulse_pair();
    let cfg = paper_system(2);
    let acf = analytic_autocorrelation(&ps, &cfg).unwrap();
    let psd = analytic_psd(&ps, &cfg, 1024).unwrap();
    let dt = 0.02 * NS;
    let (mut num, mut den) = (0.0, 0.0);
    for (&f, &want) in psd.freqs.iter().zip(&psd.psd) {
        let got: f64 = acf
            .lags
            .iter()
            .zip(&acf.values)
            .map(|(&t, &r)| r * (2.0 * std::f64::consts::PI * f * t).cos() * dt)
            .sum();
        num += (got - want).powi(2);
        den += want * want;
    }
    assert!((num / den).sqrt() < 1e-3);
}

#[test]
fn psd_integrates_to_the_signal_power() {
    let ps = pulse_pair();
    let cfg = paper_system(2);
    let psd = analytic_psd(&ps, &cfg, 8192).unwrap();
    let want = 1.0 / cfg.symbol_time();
    assert!((psd.total_power() / want - 1.0).abs() < 5e-3);
}

#[test]
fn psd_is_the_mean_of_single_pulse_psds() {
    let ps = vec![
        make_mhp(2, 0.05 * NS, 0.02 * NS).unwrap(),
        make_mhp(4, 0.05 * NS, 0.02 * NS).unwrap(),
        make_mhp(7, 0.05 * NS, 0.02 * NS).unwrap(),
    ];
    let cfg = SystemConfig::new(1, 6, 40, 3, 3, NS).unwrap();
    let one = cfg.clone().with_pulse_types(1);
    let all = analytic_psd(&ps, &cfg, 2048).unwrap();
    let parts: Vec<_> = ps
        .iter()
        .map(|p| analytic_psd(std::slice::from_ref(p), &one, 2048).unwrap())
        .collect();
    for (i, &v) in all.psd.iter().enumerate() {
        let mean = parts.iter().map(|s| s.psd[i]).sum::<f64>() / 3.0;
        assert!((v - mean).abs() <= 1e-12 * all.psd.iter().fold(0.0f64, |m, x| m.max(*x)));
    }
}

#[test]
fn transmitted_signal_is_cyclostationary_with_period_np_tf() {
    // E{s(t) s(t + x)} at t and t + N_p T_f, estimated over independent blocks
    let ps = pulse_pair();
    let cfg = SystemConfig::new(1, 2, 10, 3, 2, NS).unwrap();
    let g = cfg.check_pulses(&ps).unwrap();
    let n = 10_000u64;
    let t = g.chip + g.chip / 2 + 2;
    let x = 3;
    let period = 2 * g.frame;
    let (mut a, mut a2, mut b, mut b2, mut c) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in 0..n {
        let bits = random_bits(2, &mut stream(31, r, StreamRole::Bits(0)));
        let codes = generate_codes(&cfg, 4, &mut stream(31, r, StreamRole::Codes(0)));
        let s = transmit_block(&cfg, &ps, &bits, &codes).unwrap().samples;
        let u = s[t] * s[t + x];
        let v = s[t + period] * s[t + period + x];
        let w = s[t + g.frame] * s[t + g.frame + x];
        a += u;
        a2 += u * u;
        b += v;
        b2 += v * v;
        c += w;
    }
    let nf = n as f64;
    let (ma, mb, mc) = (a / nf, b / nf, c / nf);
    let se = ((a2 / nf - ma * ma) / nf + (b2 / nf - mb * mb) / nf).sqrt();
    assert!((ma - mb).abs() < 3.0 * se, "{ma} vs {mb} (se {se})");
    // a shift of one frame lands on the other pulse shape and does not agree
    assert!((ma - mc).abs() > 10.0 * se, "{ma} vs {mc}");
}

#[test]
fn composite_matches_per_path_shift_and_add() {
    let cfg = paper_system(1);
    let params = ChannelParams::new(20, 0.5, 1.0, 1.5 * NS).unwrap();
    let p = make_mhp(4, 0.05 * NS, 0.02 * NS).unwrap();
    let dt = p.dt();
    for r in 0..5 {
        let ch = sample_channel(&params, &cfg, &mut stream(13, r, StreamRole::Channel(0))).unwrap();
        let comp = composite_waveform(&p, &ch, ch.gains()).unwrap();
        let span = (ch.max_delay() / dt).round() as usize + p.len();
        let mut naive = vec![0.0; span];
        for (&g, &d) in ch.gains().iter().zip(ch.delays()) {
            let s = (d / dt).round() as usize;
            for (i, &v) in p.samples().iter().enumerate() {
                naive[s + i] += g * v;
            }
        }
        let off = (comp.t0_samples() - p.t0_samples()) as usize;
        for (i, &v) in naive.iter().enumerate() {
            let got = if i >= off && i - off < comp.len() {
                comp.samples()[i - off]
            } else {
                0.0
            };
            assert_eq!(got, v, "realization {r} sample {i}");
        }
    }
}

#[test]
fn decision_statistic_matches_a_naive_inner_product() {
    let mut rng = stream(3, 0, StreamRole::Aux(0));
    let dt = 0.02 * NS;
    let received = Waveform {
        samples: (0..5000).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        dt,
        t0: -40.0 * dt,
    };
    let template = Waveform {
        samples: (0..800).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        dt,
        t0: 1234.0 * dt,
    };
    let mut naive = 0.0;
    for (k, &v) in template.samples.iter().enumerate() {
        naive += v * received.samples[1234 + 40 + k];
    }
    naive *= dt;
    let y = decision_statistic(&received, &template).unwrap();
    assert!((y - naive).abs() <= 1e-12 * naive.abs());
}

#[test]
fn channel_statistics() {
    let params = ChannelParams::new(20, 0.5, 1.0, 1.5 * NS).unwrap();
    let n = 100_000;
    let mut rng = stream(77, 0, StreamRole::Aux(3));
    let mut power = [0.0; 20];
    let mut mean = [0.0; 20];
    let (mut e, mut e2) = (0.0, 0.0);
    for _ in 0..n {
        let c = sample_channel_unconstrained(&params, &mut rng).unwrap();
        for (l, &g) in c.gains().iter().enumerate() {
            power[l] += g * g;
            mean[l] += g;
        }
        let en = c.energy();
        e += en;
        e2 += en * en;
    }
    let nf = n as f64;
    let m = e / nf;
    let sd = (e2 / nf - m * m).sqrt();
    assert!((m - 1.0).abs() < 3.0 * sd / nf.sqrt(), "mean energy {m}");
    for l in 0..3 {
        let ratio = power[l] / power[l + 1];
        assert!((ratio / 0.5f64.exp() - 1.0).abs() < 0.05, "path {l}: {ratio}");
    }
    for l in 0..20 {
        let rms = (power[l] / nf).sqrt();
        assert!((mean[l] / nf).abs() < 4.0 * rms / nf.sqrt(), "path {l}");
    }
}
