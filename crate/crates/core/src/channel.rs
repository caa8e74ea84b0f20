//! Log-normal multipath channels with exponentially decaying power profile,
//! random tap signs and exponential inter-arrival times, plus the composite
//! pulse-through-channel waveforms built from them.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use crate::error::{Error, Result};
use crate::pulses::Pulse;
use crate::signal::Sampled;
use crate::transceiver::SystemConfig;

/// Consecutive rejected draws after which `sample_channel` gives up.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Number of paths `L`.
    pub paths: usize,
    /// Power decay per path index, `lambda`.
    pub decay: f64,
    /// Log-normal shape parameter `sigma^2`.
    pub sigma2: f64,
    /// Mean inter-arrival time in seconds.
    pub mean_arrival: f64,
    /// Linear multiplier on the mean received energy.
    pub power_scale: f64,
}

impl ChannelParams {
    pub fn new(paths: usize, decay: f64, sigma2: f64, mean_arrival: f64) -> Result<Self> {
        let p = Self {
            paths,
            decay,
            sigma2,
            mean_arrival,
            power_scale: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_power_scale(&self, power_scale: f64) -> Self {
        Self {
            power_scale,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::InvalidParameter(
                "a channel needs at least one path".into(),
            ));
        }
        if !(self.decay > 0.0)
            || !(self.sigma2 >= 0.0)
            || !(self.mean_arrival > 0.0)
            || !(self.power_scale > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "need decay > 0, sigma2 >= 0, mean_arrival > 0, power_scale > 0 (got {self:?})"
            )));
        }
        if ![self.decay, self.sigma2, self.mean_arrival, self.power_scale]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParameter(
                "channel parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    /// `Omega_0 = (1 - e^-lambda) / (1 - e^-(lambda L))`, the mean power of the
    /// first path when the profile sums to one.
    pub fn omega0(&self) -> f64 {
        (-(-self.decay).exp_m1()) / (-(-self.decay * self.paths as f64).exp_m1())
    }
}

/// `mu_l = 0.5 [ln Omega_0 - lambda l - 2 sigma^2]`, the location parameter of
/// `|alpha_l|` that makes `E|alpha_l|^2 = Omega_0 e^{-lambda l}`.
pub fn mean_log_gain(params: &ChannelParams, l: usize) -> Result<f64> {
    if l >= params.paths {
        return Err(Error::OutOfRange(format!(
            "path {l} of a {}-path channel",
            params.paths
        )));
    }
    Ok(0.5 * (params.omega0().ln() - params.decay * l as f64 - 2.0 * params.sigma2))
}

/// Tap gains and delays of one user's channel. The first path has zero delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    gains: Vec<f64>,
    delays: Vec<f64>,
}

impl ChannelRealization {
    pub fn new(gains: Vec<f64>, delays: Vec<f64>) -> Result<Self> {
        if gains.is_empty() || gains.len() != delays.len() {
            return Err(Error::InvalidParameter(format!(
                "{} gains and {} delays",
                gains.len(),
                delays.len()
            )));
        }
        if delays[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "the first path must have zero delay".into(),
            ));
        }
        if delays.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "delays must be strictly increasing".into(),
            ));
        }
        if gains.iter().chain(&delays).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("channel taps must be finite".into()));
        }
        Ok(Self { gains, delays })
    }

    /// A single unit path at zero delay.
    pub fn identity() -> Self {
        Self {
            gains: vec![1.0],
            delays: vec![0.0],
        }
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn paths(&self) -> usize {
        self.gains.len()
    }

    /// `sum alpha_l^2`.
    pub fn energy(&self) -> f64 {
        self.gains.iter().map(|a| a * a).sum()
    }

    pub fn max_delay(&self) -> f64 {
        *self.delays.last().expect("non-empty by construction")
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            gains: self.gains.iter().map(|a| a * c).collect(),
            delays: self.delays.clone(),
        }
    }

    /// Text form with one `index,gain,delay_ns` row per tap.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,gain,delay_ns\n");
        for (i, (g, d)) in self.gains.iter().zip(&self.delays).enumerate() {
            let _ = writeln!(s, "{i},{g:e},{:e}", d * 1e9);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut gains = Vec::new();
        let mut delays = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
                continue;
            }
            let bad = || Error::InvalidParameter(format!("line {}: expected index,gain,delay_ns", n + 1));
            let mut fields = line.split(',');
            let idx: usize = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(bad)?;
            let g: f64 = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(bad)?;
            let d: f64 = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(bad)?;
            if fields.next().is_some() || idx != gains.len() {
                return Err(bad());
            }
            gains.push(g);
            delays.push(d * 1e-9);
        }
        Self::new(gains, delays)
    }
}

/// Draws one realization: `|alpha_l| ~ LogNormal(mu_l, sigma^2)` with a
/// uniform random sign, scaled by `sqrt(power_scale)`; the first path at zero
/// delay and exponential inter-arrival times. Realizations whose last path
/// lands at or beyond `T_f - N_h T_c` are redrawn whole.
pub fn sample_channel<R: Rng + ?Sized>(
    params: &ChannelParams,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    sample_channel_counted(params, config, rng).map(|(c, _)| c)
}

/// Like [`sample_channel`], also returning how many draws were needed.
pub fn sample_channel_counted<R: Rng + ?Sized>(
    params: &ChannelParams,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<(ChannelRealization, usize)> {
    params.validate()?;
    let limit = config.max_channel_spread();
    for attempt in 1..=MAX_REJECTIONS {
        let c = sample_channel_unconstrained(params, rng)?;
        if c.max_delay() < limit {
            return Ok((c, attempt));
        }
    }
    Err(Error::InfeasibleGeometry(format!(
        "{MAX_REJECTIONS} consecutive channel draws exceeded the {:e} s delay budget",
        limit
    )))
}

/// A draw from the channel model without the delay-spread restriction.
pub fn sample_channel_unconstrained<R: Rng + ?Sized>(
    params: &ChannelParams,
    rng: &mut R,
) -> Result<ChannelRealization> {
    params.validate()?;
    let sigma = params.sigma2.sqrt();
    let amp = params.power_scale.sqrt();
    let arrivals =
        Exp::new(params.mean_arrival.recip()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut gains = Vec::with_capacity(params.paths);
    let mut delays = Vec::with_capacity(params.paths);
    for l in 0..params.paths {
        let mu = mean_log_gain(params, l)?;
        let mag = LogNormal::new(mu, sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        gains.push(sign * amp * mag);
        let delay = match delays.last() {
            None => 0.0,
            Some(&prev) => loop {
                let d: f64 = prev + arrivals.sample(rng);
                if d > prev {
                    break d;
                }
            },
        };
        delays.push(delay);
    }
    ChannelRealization::new(gains, delays)
}

/// A pulse passed through (or matched to) a multipath channel, sampled on the
/// pulse grid. Shares the time origin of the pulse it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeWaveform {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
}

impl CompositeWaveform {
    pub fn from_parts(samples: Vec<f64>, dt: f64, t0: f64) -> Self {
        Self { samples, dt, t0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * c).collect(),
            dt: self.dt,
            t0: self.t0,
        }
    }
}

impl Sampled for CompositeWaveform {
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

/// `sum_l weights[l] * pulse(t - tau_l)` with every delay snapped to the
/// nearest sample, trimmed to its nonzero extent. With the channel gains as
/// weights this is the received pulse `u`; with RAKE weights it is the
/// template pulse `v`.
pub fn composite_waveform(
    pulse: &Pulse,
    chan: &ChannelRealization,
    weights: &[f64],
) -> Result<CompositeWaveform> {
    if weights.len() != chan.paths() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} paths",
            weights.len(),
            chan.paths()
        )));
    }
    let dt = pulse.dt();
    let shifts: Vec<usize> = chan.delays().iter().map(|d| (d / dt).round() as usize).collect();
    let len = shifts.last().copied().unwrap_or(0) + pulse.len();
    let mut buf = vec![0.0; len];
    for (&w, &s) in weights.iter().zip(&shifts) {
        if w == 0.0 {
            continue;
        }
        for (dst, &x) in buf[s..s + pulse.len()].iter_mut().zip(pulse.samples()) {
            *dst += w * x;
        }
    }
    let first = buf.iter().position(|&x| x != 0.0);
    let last = buf.iter().rposition(|&x| x != 0.0);
    let (lo, hi) = match (first, last) {
        (Some(a), Some(b)) => (a, b + 1),
        // all-zero: keep the pulse-length span so the result stays well formed
        _ => (0, pulse.len()),
    };
    Ok(CompositeWaveform {
        samples: buf[lo..hi].to_vec(),
        dt,
        t0: (pulse.t0_samples() + lo as isize) as f64 * dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::{make_mhp, DEFAULT_DT, DEFAULT_TAU_P};
    use crate::rng::{stream, StreamRole};

    const NS: f64 = 1e-9;

    fn paper_params() -> ChannelParams {
        ChannelParams::new(20, 0.5, 1.0, 1.5 * NS).unwrap()
    }

    #[test]
    fn mean_log_gain_first_path() {
        // ln((1-e^-0.5)/(1-e^-10)) evaluated at 40 digits, minus 2, halved.
        let mu0 = mean_log_gain(&paper_params(), 0).unwrap();
        assert!((mu0 - (-1.46635336430341)).abs() < 1e-12, "{mu0}");
    }

    #[test]
    fn mean_log_gain_steps_by_half_lambda() {
        let p = paper_params();
        for l in 0..p.paths - 1 {
            let d = mean_log_gain(&p, l).unwrap() - mean_log_gain(&p, l + 1).unwrap();
            assert!((d - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_power_profile_sums_to_one() {
        for &(paths, decay, sigma2) in &[(20, 0.5, 1.0), (1, 0.3, 0.0), (7, 2.0, 0.4)] {
            let p = ChannelParams::new(paths, decay, sigma2, NS).unwrap();
            let total: f64 = (0..paths)
                .map(|l| (2.0 * mean_log_gain(&p, l).unwrap() + 2.0 * sigma2).exp())
                .sum();
            // geometric series: Omega_0 * sum e^{-lambda l} = 1
            assert!((total - 1.0).abs() < 1e-9, "{total}");
        }
    }

    #[test]
    fn mean_log_gain_rejects_out_of_range_path() {
        assert!(matches!(
            mean_log_gain(&paper_params(), 20),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn params_validate() {
        assert!(ChannelParams::new(0, 0.5, 1.0, NS).is_err());
        assert!(ChannelParams::new(3, 0.0, 1.0, NS).is_err());
        assert!(ChannelParams::new(3, 0.5, -1.0, NS).is_err());
        assert!(ChannelParams::new(3, 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn sampled_channels_respect_the_delay_budget() {
        let cfg = SystemConfig::new(1, 2, 40, 3, 1, NS).unwrap();
        let p = paper_params();
        for i in 0..200 {
            let c = sample_channel(&p, &cfg, &mut stream(1, i, StreamRole::Channel(0))).unwrap();
            assert_eq!(c.delays()[0], 0.0);
            assert!(c.max_delay() < cfg.max_channel_spread());
            assert!(c.delays().windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn impossible_geometry_is_reported() {
        // 40 paths at 5 ns mean spacing cannot fit in a 37 ns budget
        let cfg = SystemConfig::new(1, 2, 40, 3, 1, NS).unwrap();
        let p = ChannelParams::new(40, 0.5, 1.0, 5.0 * NS).unwrap();
        let r = sample_channel(&p, &cfg, &mut stream(1, 0, StreamRole::Aux(0)));
        assert!(matches!(r, Err(Error::InfeasibleGeometry(_))));
    }

    #[test]
    fn single_path_composite_is_the_pulse() {
        let p = make_mhp(4, DEFAULT_TAU_P, DEFAULT_DT).unwrap();
        let c = composite_waveform(&p, &ChannelRealization::identity(), &[1.0]).unwrap();
        assert_eq!(c.samples(), p.samples());
        assert_eq!(c.t0(), p.t0());
    }

    #[test]
    fn composite_trims_leading_zero_weights() {
        let p = make_mhp(4, DEFAULT_TAU_P, DEFAULT_DT).unwrap();
        let chan = ChannelRealization::new(vec![0.5, -1.0], vec![0.0, 3.0 * NS]).unwrap();
        let c = composite_waveform(&p, &chan, &[0.0, -1.0]).unwrap();
        assert_eq!(c.len(), p.len());
        assert!((c.t0() - (p.t0() + 3.0 * NS)).abs() < 1e-15);
        for (a, b) in c.samples().iter().zip(p.samples()) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn composite_rejects_wrong_weight_count() {
        let p = make_mhp(4, DEFAULT_TAU_P, DEFAULT_DT).unwrap();
        assert!(composite_waveform(&p, &ChannelRealization::identity(), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn realization_validates() {
        assert!(ChannelRealization::new(vec![1.0], vec![1.0]).is_err());
        assert!(ChannelRealization::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(ChannelRealization::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let cfg = SystemConfig::new(1, 2, 40, 3, 1, NS).unwrap();
        let c = sample_channel(&paper_params(), &cfg, &mut stream(9, 0, StreamRole::Channel(0))).unwrap();
        let back = ChannelRealization::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back.gains(), c.gains());
        for (a, b) in back.delays().iter().zip(c.delays()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
        assert!(ChannelRealization::from_csv("index,gain,delay_ns\n0,1.0\n").is_err());
    }
}
