//! Average autocorrelation and power spectral density of the transmitted
//! signal, and a periodogram estimator to check them against.
//!
//! With i.i.d. polarity codes the transmitted signal is cyclostationary with
//! period `N_p T_f`. Its time-averaged autocorrelation only involves the
//! pulse autocorrelations, and the average PSD is
//! `(1 / (N_p T_s)) sum_l |P_l(f)|^2`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::pulses::{cross_correlation, pulse_spectrum, two_sided_grid, Pulse};
use crate::signal::{same_grid, Sampled, Waveform};
use crate::transceiver::SystemConfig;

/// Two-sided power spectral density on an ascending uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
}

impl SpectralDensity {
    pub fn df(&self) -> f64 {
        if self.freqs.len() < 2 {
            0.0
        } else {
            self.freqs[1] - self.freqs[0]
        }
    }

    pub fn total_power(&self) -> f64 {
        self.df() * self.psd.iter().sum::<f64>()
    }

    /// Smallest symmetric band `[-f, f]` holding at least `fraction` of the power.
    pub fn power_band(&self, fraction: f64) -> (f64, f64) {
        let total: f64 = self.psd.iter().sum();
        let mut by_freq: Vec<(f64, f64)> = self.freqs.iter().copied().zip(self.psd.iter().copied()).collect();
        by_freq.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
        let mut acc = 0.0;
        for (f, p) in by_freq {
            acc += p;
            if acc >= fraction * total {
                return (-f.abs(), f.abs());
            }
        }
        let edge = self.freqs.iter().fold(0.0f64, |m, f| m.max(f.abs()));
        (-edge, edge)
    }

    /// Non-negative frequencies with the power of `-f` folded onto `f`.
    pub fn one_sided(&self) -> (Vec<f64>, Vec<f64>) {
        let nyquist = -self.freqs.first().copied().unwrap_or(0.0);
        self.freqs
            .iter()
            .zip(&self.psd)
            .filter(|(&f, _)| f >= 0.0)
            .map(|(&f, &p)| {
                // the Nyquist bin has no mirror on an even-length grid
                let folded = if f == 0.0 || same_grid(f, nyquist) {
                    p
                } else {
                    2.0 * p
                };
                (f, folded)
            })
            .unzip()
    }
}

/// Time-averaged autocorrelation on a lag grid symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AvgAutocorrelation {
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
}

impl AvgAutocorrelation {
    pub fn at_zero(&self) -> f64 {
        self.values[self.values.len() / 2]
    }
}

/// `(1 / (N_p T_f N_f)) sum_l phi_{p_l p_l}(tau)`.
pub fn analytic_autocorrelation(pulses: &[Pulse], config: &SystemConfig) -> Result<AvgAutocorrelation> {
    let grid = config.check_pulses(pulses)?;
    let half = pulses.iter().map(|p| p.len() - 1).max().unwrap_or(0);
    let mut values = vec![0.0; 2 * half + 1];
    for p in pulses {
        let acf = cross_correlation(p, p)?;
        let off = half - (p.len() - 1);
        for (dst, v) in values[off..].iter_mut().zip(&acf.values) {
            *dst += v;
        }
    }
    let scale = (config.pulse_types as f64 * config.frame_time() * config.frames_per_symbol as f64).recip();
    values.iter_mut().for_each(|v| *v *= scale);
    let lags = (0..values.len())
        .map(|i| (i as f64 - half as f64) * grid.dt)
        .collect();
    Ok(AvgAutocorrelation { lags, values })
}

/// `(1 / (N_p T_s)) sum_l |P_l(f)|^2` on the `n_freq`-point grid of
/// [`crate::pulses::pulse_spectrum`].
pub fn analytic_psd(pulses: &[Pulse], config: &SystemConfig, n_freq: usize) -> Result<SpectralDensity> {
    config.check_pulses(pulses)?;
    let mut freqs = Vec::new();
    let mut psd = vec![0.0; n_freq];
    for p in pulses {
        let s = pulse_spectrum(p, n_freq)?;
        for (dst, v) in psd.iter_mut().zip(&s.magnitude_sq) {
            *dst += v;
        }
        freqs = s.freqs;
    }
    let scale = (config.pulse_types as f64 * config.symbol_time()).recip();
    psd.iter_mut().for_each(|v| *v *= scale);
    Ok(SpectralDensity { freqs, psd })
}

/// Averaged periodogram over `n_segments` consecutive, non-overlapping,
/// unwindowed segments of `segment_len` samples, each a whole number of
/// `symbol_len`-sample symbols.
pub fn empirical_psd(
    signal: &Waveform,
    segment_len: usize,
    n_segments: usize,
    symbol_len: usize,
) -> Result<SpectralDensity> {
    if segment_len == 0 || n_segments == 0 || symbol_len == 0 {
        return Err(Error::InvalidParameter(
            "segment and symbol lengths must be positive".into(),
        ));
    }
    if !segment_len.is_multiple_of(symbol_len) {
        return Err(Error::InvalidParameter(format!(
            "segment of {segment_len} samples is not a whole number of {symbol_len}-sample symbols"
        )));
    }
    if signal.samples.len() < segment_len * n_segments {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {n_segments} segments of {segment_len}",
            signal.samples.len()
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let mut acc = vec![0.0; segment_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    for seg in signal.samples.chunks_exact(segment_len).take(n_segments) {
        for (b, &x) in buf.iter_mut().zip(seg) {
            *b = Complex64::new(x, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    // |dt X|^2 / (segment_len dt), averaged
    let scale = signal.dt / (segment_len as f64 * n_segments as f64);
    let (freqs, bins) = two_sided_grid(segment_len, signal.dt);
    let psd = bins.iter().map(|&k| acc[k] * scale).collect();
    Ok(SpectralDensity { freqs, psd })
}

/// Relative L2 distance `||a - b|| / ||a||` over the bins inside `band`.
pub fn psd_mismatch(a: &SpectralDensity, b: &SpectralDensity, band: (f64, f64)) -> Result<f64> {
    if a.freqs.len() != b.freqs.len()
        || a.freqs
            .iter()
            .zip(&b.freqs)
            .any(|(x, y)| (x - y).abs() > 1e-9 * a.df().abs().max(1e-300))
    {
        return Err(Error::GridMismatch(
            "spectral densities use different frequency grids".into(),
        ));
    }
    let (lo, hi) = band;
    let (mut num, mut den) = (0.0, 0.0);
    for ((&f, &pa), &pb) in a.freqs.iter().zip(&a.psd).zip(&b.psd) {
        if f >= lo && f <= hi {
            num += (pa - pb) * (pa - pb);
            den += pa * pa;
        }
    }
    if den == 0.0 {
        return Err(Error::DegenerateInput(
            "reference PSD has no power in the band".into(),
        ));
    }
    Ok((num / den).sqrt())
}
