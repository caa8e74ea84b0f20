//! Closed-form MAI variance, output-noise variance and approximate bit error
//! probability under the standard Gaussian approximation, conditioned on
//! channel realizations.
//!
//! Factor bookkeeping: [`MaiVariance::per_frame`] holds
//! `sigma^2_M(k, j) = (1 / (T_f N_p)) sum_{m=j-N_p}^{j} sum_{l=1-N_h}^{N_h-1}
//! (N_h - |l|) int_0^{N_p T_f} phi^2_{u_m v_j}((m-j) T_f + l T_c + tau) dtau`,
//! so the per-frame interference power is `E{M_j^2} = sigma^2_M(k, j) / N_h^2`.
//! [`MaiVariance::total`] applies `1 / (N_f N_h^2)` exactly once.
//!
//! With `N_f / N_p` repetitions of each pulse type per symbol, the decision
//! statistic has desired part `sqrt(N_f) / N_p * sum_j phi_{u_j v_j}(0)`, MAI
//! variance `total * N_f / N_p` and noise variance
//! `sigma_n^2 (N_f / N_p) sum_j phi_{v_j}(0)`. Dividing the squared desired
//! part by the two variances gives exactly the ratio inside `Q(.)` computed by
//! [`bep_multi`].

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::channel::CompositeWaveform;
use crate::error::{Error, Result};
use crate::link::{draw_realization, LinkSetup};
use crate::pulses::CorrelationFunction;
use crate::signal::{check_same_dt, Sampled};
use crate::special::q_function;
use crate::transceiver::SystemConfig;

/// Computes correlation functions of composites through zero-padded FFTs.
pub struct Correlator {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// A composite with its transform cached for repeated correlation.
pub struct Prepared {
    spectrum: Vec<Complex64>,
    len: usize,
    t0_samples: isize,
    dt: f64,
}

impl Correlator {
    /// A correlator for inputs of at most `max_len` samples each.
    pub fn new(max_len: usize) -> Self {
        let n = (2 * max_len.max(1)).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn transform(&self, x: &[f64], reversed: bool) -> Vec<Complex64> {
        assert!(
            x.len() <= self.n / 2,
            "input longer than the correlator was sized for"
        );
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        if reversed {
            for (b, &v) in buf.iter_mut().zip(x.iter().rev()) {
                b.re = v;
            }
        } else {
            for (b, &v) in buf.iter_mut().zip(x) {
                b.re = v;
            }
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// Prepares the lagged argument `u` of `phi_{uv}`.
    pub fn prepare_lagged(&self, u: &CompositeWaveform) -> Prepared {
        Prepared {
            spectrum: self.transform(u.samples(), true),
            len: u.len(),
            t0_samples: u.t0_samples(),
            dt: u.dt(),
        }
    }

    /// Prepares the fixed argument `v` of `phi_{uv}`.
    pub fn prepare_fixed(&self, v: &CompositeWaveform) -> Prepared {
        Prepared {
            spectrum: self.transform(v.samples(), false),
            len: v.len(),
            t0_samples: v.t0_samples(),
            dt: v.dt(),
        }
    }

    /// `phi_{uv}` on the same lag grid as [`crate::pulses::cross_correlation`].
    pub fn correlate(&self, u: &Prepared, v: &Prepared) -> Result<CorrelationFunction> {
        check_same_dt(u.dt, v.dt)?;
        let dt = u.dt;
        if u.len == 0 || v.len == 0 {
            return Ok(CorrelationFunction {
                values: Vec::new(),
                lag_step: dt,
                lag0: 0.0,
            });
        }
        let mut buf: Vec<Complex64> = u.spectrum.iter().zip(&v.spectrum).map(|(a, b)| a * b).collect();
        self.inv.process(&mut buf);
        let scale = dt / self.n as f64;
        let values = buf[..u.len + v.len - 1].iter().map(|c| c.re * scale).collect();
        Ok(CorrelationFunction {
            values,
            lag_step: dt,
            lag0: (v.t0_samples - u.t0_samples - (u.len as isize - 1)) as f64 * dt,
        })
    }
}

/// `phi_{uv}(x) = integral u(t - x) v(t) dt` for composite waveforms.
pub fn correlation_functional(u: &CompositeWaveform, v: &CompositeWaveform) -> Result<CorrelationFunction> {
    check_same_dt(u.dt(), v.dt())?;
    let c = Correlator::new(u.len().max(v.len()));
    c.correlate(&c.prepare_lagged(u), &c.prepare_fixed(v))
}

/// `phi_{uv}(0) = integral u(t) v(t) dt`, summed directly on the common grid.
pub fn zero_lag<A: Sampled + ?Sized, B: Sampled + ?Sized>(u: &A, v: &B) -> Result<f64> {
    check_same_dt(u.dt(), v.dt())?;
    let shift = v.t0_samples() - u.t0_samples();
    let (xu, xv) = (u.samples(), v.samples());
    // u index i meets v index i - shift
    let lo = shift.max(0) as usize;
    let hi = (xu.len() as isize).min(xv.len() as isize + shift);
    if hi <= lo as isize {
        return Ok(0.0);
    }
    let s: f64 = xu[lo..hi as usize]
        .iter()
        .zip(&xv[(lo as isize - shift) as usize..])
        .map(|(a, b)| a * b)
        .sum();
    Ok(u.dt() * s)
}

/// `dt * sum_{lag in [start, start + span]} phi(lag)^2`, trapezoid weights at
/// the two ends. Lags outside the stored support contribute nothing.
struct SquaredIntegral {
    cum: Vec<f64>,
    sq: Vec<f64>,
    lag0_samples: isize,
    dt: f64,
}

impl SquaredIntegral {
    fn new(phi: &CorrelationFunction) -> Self {
        let sq: Vec<f64> = phi.values.iter().map(|v| v * v).collect();
        let mut cum = Vec::with_capacity(sq.len() + 1);
        let mut acc = 0.0;
        cum.push(acc);
        for v in &sq {
            acc += v;
            cum.push(acc);
        }
        Self {
            cum,
            sq,
            lag0_samples: (phi.lag0 / phi.lag_step).round() as isize,
            dt: phi.lag_step,
        }
    }

    fn at(&self, i: isize) -> f64 {
        if i < 0 || i as usize >= self.sq.len() {
            0.0
        } else {
            self.sq[i as usize]
        }
    }

    /// Window `[start, start + span]` in samples of lag.
    fn window(&self, start: isize, span: isize) -> f64 {
        let a = start - self.lag0_samples;
        let b = a + span;
        let n = self.sq.len() as isize;
        let lo = a.clamp(0, n);
        let hi = (b + 1).clamp(0, n);
        let inner = if hi > lo {
            self.cum[hi as usize] - self.cum[lo as usize]
        } else {
            0.0
        };
        self.dt * (inner - 0.5 * self.at(a) - 0.5 * self.at(b))
    }
}

/// Interference variances for every (interferer, desired frame type) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MaiVariance {
    /// `per_frame[k][j] = sigma^2_M(k + 1, j)`, interferers indexed from 0.
    pub per_frame: Vec<Vec<f64>>,
    /// `(1 / (N_f N_h^2)) sum_j sum_k sigma^2_M(k, j)`.
    pub total: f64,
    frames_per_symbol: usize,
    pulse_types: usize,
}

impl MaiVariance {
    /// Variance of the MAI term of the decision statistic, `total * N_f / N_p`.
    pub fn decision_variance(&self) -> f64 {
        self.total * self.frames_per_symbol as f64 / self.pulse_types as f64
    }
}

/// `sigma^2_M(k, j)` from the correlations `phis[r] = phi_{u_r v_j}` of one
/// interferer.
fn sigma2_m(phis: &[SquaredIntegral], j: usize, config: &SystemConfig, frame: isize, chip: isize) -> f64 {
    let np = config.pulse_types as isize;
    let nh = config.th_alphabet as isize;
    let span = np * frame;
    let mut acc = 0.0;
    for m in (j as isize - np)..=(j as isize) {
        let r = m.rem_euclid(np) as usize;
        for l in (1 - nh)..nh {
            let start = (m - j as isize) * frame + l * chip;
            acc += (nh - l.abs()) as f64 * phis[r].window(start, span);
        }
    }
    acc / (config.frame_time() * config.pulse_types as f64)
}

fn grid_steps(config: &SystemConfig, dt: f64) -> Result<(isize, isize)> {
    let g = config.grid(dt)?;
    Ok((g.frame as isize, g.chip as isize))
}

/// MAI variances of all interferers. `u_set[k][r]` is pulse type `r` of
/// interferer `k` through its channel; `v_set[j]` is the desired template of
/// type `j`.
pub fn mai_variance_multi(
    u_set: &[Vec<CompositeWaveform>],
    v_set: &[CompositeWaveform],
    config: &SystemConfig,
) -> Result<MaiVariance> {
    let np = config.pulse_types;
    if u_set.len() + 1 != config.users {
        return Err(Error::ConfigMismatch(format!(
            "{} interferers supplied for K = {}",
            u_set.len(),
            config.users
        )));
    }
    if v_set.len() != np || u_set.iter().any(|u| u.len() != np) {
        return Err(Error::ConfigMismatch(format!(
            "every user needs N_p = {np} composites"
        )));
    }
    let max_len = u_set
        .iter()
        .flatten()
        .chain(v_set)
        .map(|w| w.len())
        .max()
        .unwrap_or(1);
    let corr = Correlator::new(max_len);
    let v_prep: Vec<Prepared> = v_set.iter().map(|v| corr.prepare_fixed(v)).collect();
    mai_from_prepared(&corr, u_set, &v_prep, config)
}

fn mai_from_prepared(
    corr: &Correlator,
    u_set: &[Vec<CompositeWaveform>],
    v_prep: &[Prepared],
    config: &SystemConfig,
) -> Result<MaiVariance> {
    let np = config.pulse_types;
    let (frame, chip) = grid_steps(config, v_prep[0].dt)?;
    let mut per_frame = Vec::with_capacity(u_set.len());
    for u_types in u_set {
        let u_prep: Vec<Prepared> = u_types.iter().map(|u| corr.prepare_lagged(u)).collect();
        let mut row = Vec::with_capacity(np);
        for (j, v) in v_prep.iter().enumerate() {
            let phis = u_prep
                .iter()
                .map(|u| corr.correlate(u, v).map(|p| SquaredIntegral::new(&p)))
                .collect::<Result<Vec<_>>>()?;
            row.push(sigma2_m(&phis, j, config, frame, chip));
        }
        per_frame.push(row);
    }
    let nh = config.th_alphabet as f64;
    let sum: f64 = per_frame.iter().flatten().sum();
    Ok(MaiVariance {
        total: sum / (config.frames_per_symbol as f64 * nh * nh),
        per_frame,
        frames_per_symbol: config.frames_per_symbol,
        pulse_types: np,
    })
}

/// Single-pulse interference variance
/// `sigma^2_M(k) = (1/T_f) sum_l (N_h - |l|) int_{-T_f}^{T_f} phi^2_{uv}(l T_c + tau) dtau`.
/// As with [`MaiVariance::per_frame`], `E{M_j^2} = sigma^2_M(k) / N_h^2`.
pub fn mai_variance_classical(
    u: &CompositeWaveform,
    v: &CompositeWaveform,
    config: &SystemConfig,
) -> Result<f64> {
    let phi = SquaredIntegral::new(&correlation_functional(u, v)?);
    let (frame, chip) = grid_steps(config, u.dt())?;
    let nh = config.th_alphabet as isize;
    let acc: f64 = ((1 - nh)..nh)
        .map(|l| (nh - l.abs()) as f64 * phi.window(l * chip - frame, 2 * frame))
        .sum();
    Ok(acc / config.frame_time())
}

/// Output noise variance `sigma_n^2 (N_f / N_p) sum_j phi_{v_j}(0)`.
pub fn noise_variance(v_set: &[CompositeWaveform], config: &SystemConfig) -> f64 {
    let energy: f64 = v_set.iter().map(|v| v.energy()).sum();
    config.noise_sigma.powi(2) * config.frames_per_symbol as f64 / config.pulse_types as f64 * energy
}

/// Desired part of the decision statistic for bit `+1`,
/// `N_f^{-1/2} sum_{j=0}^{N_f-1} phi_{u_j v_j}(0)`.
pub fn desired_term(u: &[CompositeWaveform], v: &[CompositeWaveform], config: &SystemConfig) -> Result<f64> {
    let per_type = u
        .iter()
        .zip(v)
        .map(|(a, b)| zero_lag(a, b))
        .sum::<Result<f64>>()?;
    let reps = (config.frames_per_symbol / config.pulse_types) as f64;
    Ok(reps * per_type / (config.frames_per_symbol as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BepResult {
    /// Numerator inside `Q(.)`.
    pub signal_term: f64,
    /// MAI part of the squared denominator.
    pub mai_term: f64,
    /// Noise part of the squared denominator.
    pub noise_term: f64,
    pub pe: f64,
}

/// `Q(signal / sqrt(mai + noise))`.
pub fn bep_from_terms(signal_term: f64, mai_term: f64, noise_term: f64) -> Result<BepResult> {
    let den = mai_term + noise_term;
    if !(den > 0.0) || mai_term < 0.0 || noise_term < 0.0 {
        return Err(Error::DegenerateConfig(format!(
            "interference plus noise variance must be positive (mai {mai_term:e}, noise {noise_term:e})"
        )));
    }
    Ok(BepResult {
        signal_term,
        mai_term,
        noise_term,
        pe: q_function(signal_term / den.sqrt()),
    })
}

/// Approximate BEP with `N_p` pulse types:
/// `Q( N_p^{-1/2} sum_j phi_{u_j v_j}(0) / sqrt(total MAI + sigma_n^2 sum_j phi_{v_j}(0)) )`.
pub fn bep_multi(
    u_desired: &[CompositeWaveform],
    v_set: &[CompositeWaveform],
    mai: &MaiVariance,
    config: &SystemConfig,
) -> Result<BepResult> {
    let np = config.pulse_types;
    if u_desired.len() != np || v_set.len() != np {
        return Err(Error::ConfigMismatch(format!(
            "need N_p = {np} desired and template composites"
        )));
    }
    let corr_sum = u_desired
        .iter()
        .zip(v_set)
        .map(|(u, v)| zero_lag(u, v))
        .sum::<Result<f64>>()?;
    let energy: f64 = v_set.iter().map(|v| v.energy()).sum();
    bep_from_terms(
        corr_sum / (np as f64).sqrt(),
        mai.total,
        config.noise_sigma.powi(2) * energy,
    )
}

/// Approximate BEP of the single-pulse system, with `sigma2_m[k]` the
/// [`mai_variance_classical`] value of each interferer.
pub fn bep_single(
    u0: &CompositeWaveform,
    v0: &CompositeWaveform,
    sigma2_m: &[f64],
    config: &SystemConfig,
) -> Result<BepResult> {
    let nh = config.th_alphabet as f64;
    let mai = sigma2_m.iter().sum::<f64>() / (config.frames_per_symbol as f64 * nh * nh);
    bep_from_terms(zero_lag(u0, v0)?, mai, config.noise_sigma.powi(2) * v0.energy())
}

/// Noise-independent parts of the BEP for one channel draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalTerms {
    pub signal_term: f64,
    pub mai_term: f64,
    /// `sum_j phi_{v_j}(0)`; the noise term is this times `sigma_n^2`.
    pub template_energy: f64,
    /// MAI variance of the decision statistic.
    pub mai_decision_variance: f64,
}

impl ConditionalTerms {
    pub fn bep(&self, noise_sigma: f64) -> Result<BepResult> {
        bep_from_terms(
            self.signal_term,
            self.mai_term,
            noise_sigma * noise_sigma * self.template_energy,
        )
    }
}

/// Conditional terms for realization `index` of the link ensemble.
pub fn conditional_terms(setup: &LinkSetup, master_seed: u64, index: u64) -> Result<ConditionalTerms> {
    let cfg = &setup.config;
    let link = draw_realization(setup, master_seed, index)?;
    let max_len = link
        .u
        .iter()
        .flatten()
        .chain(&link.v)
        .map(|w| w.len())
        .max()
        .unwrap_or(1);
    let corr = Correlator::new(max_len);
    let v_prep: Vec<Prepared> = link.v.iter().map(|v| corr.prepare_fixed(v)).collect();
    let mai = mai_from_prepared(&corr, &link.u[1..], &v_prep, cfg)?;
    let r = bep_multi(&link.u[0], &link.v, &mai, &cfg.clone().with_noise_sigma(1.0))?;
    Ok(ConditionalTerms {
        signal_term: r.signal_term,
        mai_term: r.mai_term,
        template_energy: r.noise_term,
        mai_decision_variance: mai.decision_variance(),
    })
}

/// Conditional terms of `n` independent channel draws.
#[derive(Debug, Clone)]
pub struct BepEnsemble {
    pub terms: Vec<ConditionalTerms>,
}

/// Channel-averaged BEP with the standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BepAverage {
    /// Term-wise and `pe` means over the ensemble.
    pub mean: BepResult,
    pub stderr: f64,
    pub n: usize,
}

impl BepEnsemble {
    pub fn draw(setup: &LinkSetup, n: usize, master_seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
        }
        let terms = (0..n as u64)
            .into_par_iter()
            .map(|i| conditional_terms(setup, master_seed, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms })
    }

    pub fn average(&self, noise_sigma: f64) -> Result<BepAverage> {
        let results = self
            .terms
            .iter()
            .map(|t| t.bep(noise_sigma))
            .collect::<Result<Vec<_>>>()?;
        let n = results.len() as f64;
        let mean_of = |f: fn(&BepResult) -> f64| results.iter().map(f).sum::<f64>() / n;
        let pe = mean_of(|r| r.pe);
        let var = if results.len() > 1 {
            results.iter().map(|r| (r.pe - pe).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(BepAverage {
            mean: BepResult {
                signal_term: mean_of(|r| r.signal_term),
                mai_term: mean_of(|r| r.mai_term),
                noise_term: mean_of(|r| r.noise_term),
                pe,
            },
            stderr: (var / n).sqrt(),
            n: results.len(),
        })
    }

    /// Ensemble mean of the MAI variance of the decision statistic.
    pub fn mean_mai_decision_variance(&self) -> f64 {
        self.terms.iter().map(|t| t.mai_decision_variance).sum::<f64>() / self.terms.len() as f64
    }
}

/// Mean of the conditional BEP over `n` channel draws at `setup.config.noise_sigma`.
pub fn bep_averaged(setup: &LinkSetup, n: usize, master_seed: u64) -> Result<BepAverage> {
    BepEnsemble::draw(setup, n, master_seed)?.average(setup.config.noise_sigma)
}
