//! The waveform-level decision statistic against the closed-form desired
//! term and MAI variance on a fixed channel draw.

use rand::Rng;

use ir_uwb::analysis::{desired_term, mai_variance_multi};
use ir_uwb::channel::ChannelParams;
use ir_uwb::link::{draw_realization, CombinerSpec, LinkSetup};
use ir_uwb::pulses::make_mhp;
use ir_uwb::rng::{stream, StreamRole};
use ir_uwb::transceiver::{
    compose_received, decision_statistic, generate_codes, rake_template, random_bits, SystemConfig, UserBlock,
};

const NS: f64 = 1e-9;

fn setup(users: usize, orders: &[u32]) -> LinkSetup {
    let pulses: Vec<_> = orders
        .iter()
        .map(|&o| make_mhp(o, 0.05 * NS, 0.02 * NS).unwrap())
        .collect();
    let cfg = SystemConfig::new(users, 2, 40, 3, pulses.len(), 1.0 * NS)
        .unwrap()
        .with_interferer_power(5.0);
    let chan = ChannelParams::new(20, 0.5, 1.0, 1.5 * NS).unwrap();
    LinkSetup::new(cfg, pulses, chan, CombinerSpec::default()).unwrap()
}

/// Decision statistics minus the desired part, over `blocks` independent
/// draws of codes, bits and offsets on realization 0.
fn mai_samples(setup: &LinkSetup, blocks: u64, bits_per_block: usize) -> (Vec<f64>, f64, f64) {
    let cfg = &setup.config;
    let nf = cfg.frames_per_symbol;
    let link = draw_realization(setup, 7, 0).unwrap();
    let desired = desired_term(&link.u[0], &link.v, cfg).unwrap();
    let mai = mai_variance_multi(&link.u[1..], &link.v, cfg).unwrap();
    let grid = cfg.grid(0.02 * NS).unwrap();
    let mut out = Vec::new();
    for blk in 0..blocks {
        let mut rng = stream(99, blk, StreamRole::Aux(0));
        let mut codes = Vec::new();
        let mut bits = Vec::new();
        let mut offsets = Vec::new();
        for k in 0..cfg.users {
            let symbols = if k == 0 {
                bits_per_block
            } else {
                bits_per_block + 1
            };
            codes.push(generate_codes(cfg, symbols * nf, &mut rng));
            bits.push(random_bits(symbols, &mut rng));
            offsets.push(if k == 0 {
                0.0
            } else {
                rng.gen_range(0..grid.symbol) as f64 * grid.dt
            });
        }
        let users: Vec<_> = (0..cfg.users)
            .map(|k| UserBlock {
                composites: &link.u[k],
                bits: &bits[k],
                codes: &codes[k],
                first_frame: if k == 0 { 0 } else { -(nf as i64) },
                offset: offsets[k],
            })
            .collect();
        let r = compose_received(cfg, &users, bits_per_block * grid.symbol, &mut rng).unwrap();
        for (i, &b) in bits[0].iter().enumerate() {
            let t = rake_template(cfg, &codes[0], &link.v, i).unwrap();
            let y = decision_statistic(&r, &t).unwrap();
            out.push(y - f64::from(b) * desired);
        }
    }
    (out, desired, mai.decision_variance())
}

#[test]
fn single_user_statistic_is_exactly_the_desired_term() {
    let s = setup(1, &[4, 5]);
    let (m, desired, _) = mai_samples(&s, 3, 20);
    assert!(desired > 0.0);
    for x in m {
        assert!(x.abs() < 1e-9 * desired, "residual {x}");
    }
}

#[test]
fn waveform_mai_variance_matches_closed_form() {
    for orders in [&[4u32][..], &[4, 5]] {
        let s = setup(4, orders);
        let (m, _, analytic) = mai_samples(&s, 20000, 5);
        let n = m.len() as f64;
        let mean = m.iter().sum::<f64>() / n;
        let var = m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let rel = (var - analytic).abs() / analytic;
        println!("{orders:?}: waveform {var:.5e} analytic {analytic:.5e} rel {rel:.4}");
        assert!(rel < 0.03, "relative error {rel}");
    }
}
