//! Waveform-level bit error rate simulation and the brute-force estimators
//! that check the closed-form interference and noise variances.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::CompositeWaveform;
use crate::error::{Error, Result};
use crate::link::{draw_realization, LinkSetup};
use crate::pulses::{cross_correlation, CorrelationFunction};
use crate::rng::{stream, StreamRole};
use crate::signal::{Sampled, Waveform};
use crate::transceiver::{
    add_white_noise, compose_received, decision_statistic, generate_codes, rake_template, random_bits,
    SystemConfig, UserBlock,
};

/// Smallest error count accepted for a reported point.
pub const MIN_REPORTED_ERRORS: u64 = 50;

/// Realizations simulated between two checks of the stopping rule.
const BATCH: usize = 4;

const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopRule {
    pub max_bits: u64,
    pub min_errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPlan {
    pub master_seed: u64,
    /// Channel realizations simulated before the stopping rule is consulted.
    pub n_channel_realizations: usize,
    pub bits_per_realization: usize,
    pub stop: StopRule,
}

impl TrialPlan {
    pub fn new(
        master_seed: u64,
        n_channel_realizations: usize,
        bits_per_realization: usize,
        stop: StopRule,
    ) -> Result<Self> {
        if n_channel_realizations == 0 || bits_per_realization == 0 || stop.max_bits == 0 {
            return Err(Error::InvalidParameter("trial counts must be positive".into()));
        }
        if stop.min_errors < MIN_REPORTED_ERRORS {
            return Err(Error::InvalidParameter(format!(
                "min_errors must be at least {MIN_REPORTED_ERRORS}, got {}",
                stop.min_errors
            )));
        }
        Ok(Self {
            master_seed,
            n_channel_realizations,
            bits_per_realization,
            stop,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerEstimate {
    pub errors: u64,
    pub bits: u64,
    pub ber: f64,
    /// Half-width of the 95% Wilson score interval.
    pub ci95: f64,
    /// Whether the run hit `max_bits` before collecting `min_errors`.
    pub capped: bool,
}

impl BerEstimate {
    pub fn new(errors: u64, bits: u64, capped: bool) -> Self {
        let (lo, hi) = wilson_interval(errors, bits);
        Self {
            errors,
            bits,
            ber: if bits == 0 {
                0.0
            } else {
                errors as f64 / bits as f64
            },
            ci95: 0.5 * (hi - lo),
            capped,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        wilson_interval(self.errors, self.bits)
    }
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(errors: u64, bits: u64) -> (f64, f64) {
    if bits == 0 {
        return (0.0, 1.0);
    }
    let n = bits as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// BER at `setup.config.noise_sigma`.
pub fn run_ber(setup: &LinkSetup, plan: &TrialPlan) -> Result<BerEstimate> {
    Ok(run_ber_sweep(setup, plan, &[setup.config.noise_sigma])?[0])
}

/// BER at each noise level. Every point sees the same channels, codes and
/// bits, with its own independent noise.
pub fn run_ber_sweep(setup: &LinkSetup, plan: &TrialPlan, noise_sigmas: &[f64]) -> Result<Vec<BerEstimate>> {
    if noise_sigmas.is_empty() {
        return Err(Error::Usage("empty noise sweep".into()));
    }
    let bits_per = plan.bits_per_realization as u64;
    let mut errors = vec![0u64; noise_sigmas.len()];
    let mut bits = 0u64;
    let mut done = 0usize;
    let mut draws = 0usize;
    loop {
        let enough_errors = errors.iter().all(|&e| e >= plan.stop.min_errors);
        if (done >= plan.n_channel_realizations && enough_errors) || bits >= plan.stop.max_bits {
            break;
        }
        let room = (plan.stop.max_bits - bits).div_ceil(bits_per) as usize;
        let batch = BATCH.min(room);
        let results = (done..done + batch)
            .into_par_iter()
            .map(|r| simulate_realization(setup, plan, r as u64, noise_sigmas))
            .collect::<Result<Vec<_>>>()?;
        for (errs, n) in results {
            for (acc, e) in errors.iter_mut().zip(errs) {
                *acc += e;
            }
            draws += n;
        }
        done += batch;
        bits += batch as u64 * bits_per;
    }
    log::info!(
        "{done} realizations, channel acceptance rate {:.3}",
        (done * setup.config.users) as f64 / draws.max(1) as f64
    );
    Ok(errors
        .into_iter()
        .map(|e| BerEstimate::new(e, bits, e < plan.stop.min_errors))
        .collect())
}

/// Error counts per noise level for one realization, and the channel draws used.
fn simulate_realization(
    setup: &LinkSetup,
    plan: &TrialPlan,
    index: u64,
    noise_sigmas: &[f64],
) -> Result<(Vec<u64>, usize)> {
    let cfg = &setup.config;
    let seed = plan.master_seed;
    let nb = plan.bits_per_realization;
    let nf = cfg.frames_per_symbol;
    let link = draw_realization(setup, seed, index)?;
    let dt = link.v[0].dt();
    let grid = cfg.grid(dt)?;

    let mut offset_rng = stream(seed, index, StreamRole::Offsets);
    let mut codes = Vec::with_capacity(cfg.users);
    let mut bits = Vec::with_capacity(cfg.users);
    let mut offsets = Vec::with_capacity(cfg.users);
    for k in 0..cfg.users {
        // interferers start one symbol early so their tails cover the window
        let symbols = if k == 0 { nb } else { nb + 1 };
        codes.push(generate_codes(
            cfg,
            symbols * nf,
            &mut stream(seed, index, StreamRole::Codes(k as u32)),
        ));
        bits.push(random_bits(
            symbols,
            &mut stream(seed, index, StreamRole::Bits(k as u32)),
        ));
        offsets.push(if k == 0 {
            0.0
        } else {
            offset_rng.gen_range(0..grid.symbol) as f64 * dt
        });
    }
    let users: Vec<UserBlock<'_>> = (0..cfg.users)
        .map(|k| UserBlock {
            composites: &link.u[k],
            bits: &bits[k],
            codes: &codes[k],
            first_frame: if k == 0 { 0 } else { -(nf as i64) },
            offset: offsets[k],
        })
        .collect();
    let noiseless = cfg.clone().with_noise_sigma(0.0);
    let signal = compose_received(&noiseless, &users, nb * grid.symbol, &mut offset_rng)?;
    let templates = (0..nb)
        .map(|i| rake_template(cfg, &codes[0], &link.v, i))
        .collect::<Result<Vec<_>>>()?;

    let mut errors = Vec::with_capacity(noise_sigmas.len());
    for (p, &sigma) in noise_sigmas.iter().enumerate() {
        let mut received = signal.clone();
        add_white_noise(
            &mut received,
            sigma,
            &mut stream(seed, index, StreamRole::Noise(p as u32)),
        );
        let mut e = 0u64;
        for (t, &b) in templates.iter().zip(&bits[0]) {
            let y = decision_statistic(&received, t)?;
            if (y > 0.0) != (b > 0) {
                e += 1;
            }
        }
        errors.push(e);
    }
    Ok((errors, link.draws))
}

/// Sample variance of the interference `M_j` that one interferer puts on frame
/// `j` of the desired user, by direct evaluation of
/// `d_j sum_m d_m b_m phi_{u_m v_j}((m - j) T_f + (c_m - c_j) T_c + tau_0)`
/// over random codes, bits and grid-uniform `tau_0` in `[0, T_s)`.
pub fn estimate_mai_variance<R: Rng + ?Sized>(
    config: &SystemConfig,
    v_set: &[CompositeWaveform],
    u_set: &[CompositeWaveform],
    frame: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let np = config.pulse_types;
    if v_set.len() != np || u_set.len() != np {
        return Err(Error::ConfigMismatch(format!(
            "need N_p = {np} composites per user"
        )));
    }
    if n_samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let v = &v_set[frame % np];
    let phis: Vec<CorrelationFunction> = u_set
        .iter()
        .map(|u| cross_correlation(u, v))
        .collect::<Result<_>>()?;
    let lag0: Vec<isize> = phis
        .iter()
        .map(|p| (p.lag0 / p.lag_step).round() as isize)
        .collect();
    let grid = config.grid(v.dt())?;
    let (fr, ch) = (grid.frame as isize, grid.chip as isize);
    let nf = config.frames_per_symbol as i64;
    let j = frame as i64;
    // frames whose pulses can reach frame j of the desired user
    let m_lo = j - nf - 1;
    let m_hi = j + 1;
    let s_lo = m_lo.div_euclid(nf);
    let s_hi = m_hi.div_euclid(nf);

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sym_bits = vec![0i8; (s_hi - s_lo + 1) as usize];
    for _ in 0..n_samples {
        let tau = rng.gen_range(0..grid.symbol) as isize;
        let c_j = rng.gen_range(0..config.th_alphabet) as isize;
        let d_j = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        for b in &mut sym_bits {
            *b = if rng.gen::<bool>() { 1 } else { -1 };
        }
        let mut acc = 0.0;
        for m in m_lo..=m_hi {
            let c_m = rng.gen_range(0..config.th_alphabet) as isize;
            let d_m = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let b = f64::from(sym_bits[(m.div_euclid(nf) - s_lo) as usize]);
            let r = m.rem_euclid(np as i64) as usize;
            let lag = (m - j) as isize * fr + (c_m - c_j) * ch + tau;
            acc += d_m * b * phis[r].at_index(lag - lag0[r]);
        }
        let x = d_j * acc;
        sum += x;
        sum_sq += x * x;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    Ok((sum_sq - n * mean * mean) / (n - 1.0))
}

/// Sample variance of the decision statistic when the received signal is
/// noise alone, with the configured sample standard deviation
/// `sigma_n / sqrt(dt)`.
pub fn estimate_noise_variance<R: Rng + ?Sized>(
    config: &SystemConfig,
    v_set: &[CompositeWaveform],
    n_trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let dt = v_set
        .first()
        .ok_or_else(|| Error::ConfigMismatch("no templates".into()))?
        .dt();
    estimate_noise_variance_with_std(config, v_set, n_trials, rng, config.noise_sigma / dt.sqrt())
}

/// As [`estimate_noise_variance`] with an explicit per-sample noise standard
/// deviation.
pub fn estimate_noise_variance_with_std<R: Rng + ?Sized>(
    config: &SystemConfig,
    v_set: &[CompositeWaveform],
    n_trials: usize,
    rng: &mut R,
    sample_std: f64,
) -> Result<f64> {
    if n_trials < 2 {
        return Err(Error::InvalidParameter("need at least two trials".into()));
    }
    let dt = v_set
        .first()
        .ok_or_else(|| Error::ConfigMismatch("no templates".into()))?
        .dt();
    let grid = config.grid(dt)?;
    let mut noise = Waveform::zeros(grid.symbol, dt, 0.0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_trials {
        let codes = generate_codes(config, config.frames_per_symbol, rng);
        let template = rake_template(config, &codes, v_set, 0)?;
        for x in &mut noise.samples {
            let g: f64 = StandardNormal.sample(rng);
            *x = sample_std * g;
        }
        let y = decision_statistic(&noise, &template)?;
        sum += y;
        sum_sq += y * y;
    }
    let n = n_trials as f64;
    let mean = sum / n;
    Ok((sum_sq - n * mean * mean) / (n - 1.0))
}
