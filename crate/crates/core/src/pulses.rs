//! Modified Hermite pulses, energy normalization, correlation and spectra.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{check_same_dt, Sampled};

/// Relative level below which the tails of a generated pulse are cut.
pub const TRUNCATION_LEVEL: f64 = 1e-6;

/// Highest supported Hermite order.
pub const MAX_ORDER: u32 = 10;

/// Default pulse width parameter (seconds).
pub const DEFAULT_TAU_P: f64 = 0.05e-9;

/// Default sample interval (seconds).
pub const DEFAULT_DT: f64 = 0.02e-9;

/// A finite-support sampled pulse shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
    label: String,
}

impl Pulse {
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64, label: impl Into<String>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a pulse needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !t0.is_finite() || samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("pulse samples must be finite".into()));
        }
        Ok(Self {
            samples,
            dt,
            t0,
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl Sampled for Pulse {
    fn samples(&self) -> &[f64] {
        &self.samples
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn t0(&self) -> f64 {
        self.t0
    }
}

/// A correlation function sampled on a uniform lag grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFunction {
    pub values: Vec<f64>,
    pub lag_step: f64,
    /// Lag of `values[0]`.
    pub lag0: f64,
}

impl CorrelationFunction {
    /// Value at lag `x`, linearly interpolated between grid points and zero
    /// outside the stored support.
    pub fn at(&self, x: f64) -> f64 {
        let pos = (x - self.lag0) / self.lag_step;
        let n = self.values.len();
        if n == 0 {
            return 0.0;
        }
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return self.at_index(nearest as isize);
        }
        if pos < 0.0 || pos > (n - 1) as f64 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Value at grid index `i`, zero outside the stored support.
    pub fn at_index(&self, i: isize) -> f64 {
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    /// Grid index of lag `x`, which must lie on the lag grid.
    pub fn index_of(&self, x: f64) -> isize {
        ((x - self.lag0) / self.lag_step).round() as isize
    }

    pub fn lags(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.lag0 + i as f64 * self.lag_step)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `|P(f)|^2` on a uniform two-sided grid, ascending in frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub magnitude_sq: Vec<f64>,
}

impl Spectrum {
    pub fn df(&self) -> f64 {
        if self.freqs.len() < 2 {
            0.0
        } else {
            self.freqs[1] - self.freqs[0]
        }
    }

    /// `sum |P|^2 df`.
    pub fn total_energy(&self) -> f64 {
        self.df() * self.magnitude_sq.iter().sum::<f64>()
    }

    pub fn peak_frequency(&self) -> f64 {
        let (i, _) =
            self.magnitude_sq.iter().enumerate().fold(
                (0, f64::MIN),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            );
        self.freqs[i]
    }
}

/// Probabilists' Hermite polynomial `He_n(x)`.
pub fn hermite_e(n: u32, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = x;
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Modified Hermite pulse `He_n(t/tau_p) exp(-t^2 / (4 tau_p^2))`, sampled on
/// a grid symmetric about `t = 0`, tails cut at [`TRUNCATION_LEVEL`] of the
/// peak magnitude, then scaled to unit energy.
pub fn make_mhp(order: u32, tau_p: f64, dt: f64) -> Result<Pulse> {
    if order > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "MHP order {order} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    if !(tau_p > 0.0 && tau_p.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tau_p and dt must be positive (tau_p = {tau_p:e}, dt = {dt:e})"
        )));
    }
    // Highest-order pulse still needs a handful of samples per oscillation.
    if dt > tau_p / 2.0 {
        return Err(Error::Resolution(format!(
            "dt = {dt:e} s exceeds tau_p/2 = {:e} s",
            tau_p / 2.0
        )));
    }

    let shape = |t: f64| {
        let x = t / tau_p;
        hermite_e(order, x) * (-0.25 * x * x).exp()
    };
    // Beyond |t| = 20 tau_p every order up to 10 is far below the cut level.
    let half = (20.0 * tau_p / dt).ceil() as i64;
    let raw: Vec<f64> = (-half..=half).map(|k| shape(k as f64 * dt)).collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let level = TRUNCATION_LEVEL * peak;
    let last = raw
        .iter()
        .rposition(|v| v.abs() >= level)
        .unwrap_or(half as usize);
    // |h| is symmetric, so trimming both ends by the same count keeps t = 0 centred.
    let keep = last - half as usize;
    let lo = half as usize - keep;
    let samples = raw[lo..=last].to_vec();
    let t0 = -(keep as f64) * dt;
    let pulse = Pulse::new(samples, dt, t0, format!("mhp{order}"))?;
    normalize_energy(&pulse)
}

pub fn normalize_energy(p: &Pulse) -> Result<Pulse> {
    let e = p.energy();
    if !(e > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "pulse '{}' has zero energy",
            p.label
        )));
    }
    let g = e.sqrt().recip();
    Ok(Pulse {
        samples: p.samples.iter().map(|x| x * g).collect(),
        dt: p.dt,
        t0: p.t0,
        label: p.label.clone(),
    })
}

/// `phi_ab(x) = integral a(t - x) b(t) dt`, as the exact discrete sum
/// `dt * sum_t a(t - x) b(t)` over every lag where the supports overlap.
///
/// Each lag sums products in ascending sample order, so
/// `cross_correlation(a, b)` at `x` and `cross_correlation(b, a)` at `-x`
/// agree bit for bit.
pub fn cross_correlation<A, B>(a: &A, b: &B) -> Result<CorrelationFunction>
where
    A: Sampled + ?Sized,
    B: Sampled + ?Sized,
{
    check_same_dt(a.dt(), b.dt())?;
    let dt = a.dt();
    let (xa, xb) = (a.samples(), b.samples());
    let (na, nb) = (xa.len(), xb.len());
    if na == 0 || nb == 0 {
        return Ok(CorrelationFunction {
            values: Vec::new(),
            lag_step: dt,
            lag0: 0.0,
        });
    }
    let mut values = Vec::with_capacity(na + nb - 1);
    for m in 0..na + nb - 1 {
        // b index minus a index
        let d = m as isize - (na as isize - 1);
        let i_lo = (-d).max(0) as usize;
        let i_hi = (na as isize).min(nb as isize - d) as usize;
        let k_lo = (i_lo as isize + d) as usize;
        let s: f64 = xa[i_lo..i_hi].iter().zip(&xb[k_lo..]).map(|(p, q)| p * q).sum();
        values.push(dt * s);
    }
    let lag0 = (b.t0_samples() - a.t0_samples() - (na as isize - 1)) as f64 * dt;
    Ok(CorrelationFunction {
        values,
        lag_step: dt,
        lag0,
    })
}

/// Ascending two-sided frequency grid of `n` bins at spacing `1/(n dt)`, and
/// the FFT bin that lands on each entry.
pub(crate) fn two_sided_grid(n: usize, dt: f64) -> (Vec<f64>, Vec<usize>) {
    let df = 1.0 / (n as f64 * dt);
    let half = n / 2;
    let freqs = (0..n).map(|i| (i as f64 - half as f64) * df).collect();
    let bins = (0..n).map(|i| (i + n - half) % n).collect();
    (freqs, bins)
}

/// Discrete approximation of the continuous Fourier transform
/// `P(f) = integral p(t) exp(-j 2 pi f t) dt` on the grid of
/// [`two_sided_grid`], including the phase of the pulse's time origin.
pub fn fourier_transform(p: &Pulse, n_freq: usize) -> Result<(Vec<f64>, Vec<Complex64>)> {
    if n_freq < p.len() {
        return Err(Error::InvalidParameter(format!(
            "n_freq = {n_freq} is shorter than the pulse ({} samples)",
            p.len()
        )));
    }
    let mut buf: Vec<Complex64> = p
        .samples
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n_freq)
        .collect();
    FftPlanner::new().plan_fft_forward(n_freq).process(&mut buf);
    let (freqs, bins) = two_sided_grid(n_freq, p.dt);
    let t0 = p.t0_samples() as f64 * p.dt;
    let values = freqs
        .iter()
        .zip(&bins)
        .map(|(&f, &k)| {
            let phase = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * t0);
            buf[k] * phase * p.dt
        })
        .collect();
    Ok((freqs, values))
}

pub fn pulse_spectrum(p: &Pulse, n_freq: usize) -> Result<Spectrum> {
    let (freqs, values) = fourier_transform(p, n_freq)?;
    Ok(Spectrum {
        freqs,
        magnitude_sq: values.iter().map(|v| v.norm_sqr()).collect(),
    })
}
