//! Transmitted waveforms, the asynchronous multiuser received signal, RAKE
//! templates and the correlator decision statistic.
//!
//! Frame `j` starts at `j * T_f`. A pulse sent in chip `c` is centred on the
//! middle of that chip, so a pulse no longer than `T_c` stays inside it. This
//! is a fixed delay of `T_c / 2` applied to every user and template alike and
//! has no effect on any correlation or spectrum magnitude.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{ChannelRealization, CompositeWaveform};
use crate::error::{Error, Result};
use crate::pulses::Pulse;
use crate::signal::{check_same_dt, same_grid, whole_samples, Sampled, Waveform};

/// Scalar system parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of users `K`; user 0 is the user of interest.
    pub users: usize,
    /// Frames per information symbol `N_f`.
    pub frames_per_symbol: usize,
    /// Chips per frame `N_c`.
    pub chips_per_frame: usize,
    /// Time-hopping alphabet size `N_h`.
    pub th_alphabet: usize,
    /// Number of distinct pulse shapes `N_p`.
    pub pulse_types: usize,
    /// Chip interval `T_c` in seconds.
    pub chip_time: f64,
    /// Noise amplitude `sigma_n`; the noise process has two-sided PSD `sigma_n^2`.
    pub noise_sigma: f64,
    /// Received energy of each interferer relative to the desired user.
    pub interferer_power: f64,
}

impl SystemConfig {
    pub fn new(
        users: usize,
        frames_per_symbol: usize,
        chips_per_frame: usize,
        th_alphabet: usize,
        pulse_types: usize,
        chip_time: f64,
    ) -> Result<Self> {
        let cfg = Self {
            users,
            frames_per_symbol,
            chips_per_frame,
            th_alphabet,
            pulse_types,
            chip_time,
            noise_sigma: 0.0,
            interferer_power: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_interferer_power(mut self, p: f64) -> Self {
        self.interferer_power = p;
        self
    }

    pub fn with_pulse_types(mut self, n: usize) -> Self {
        self.pulse_types = n;
        self
    }

    /// Sets `sigma_n` from `Eb/N0` in dB with `Eb = 1` and `N0 = 2 sigma_n^2`.
    pub fn with_ebn0_db(self, ebn0_db: f64) -> Self {
        let s = noise_sigma_for_ebn0_db(ebn0_db);
        self.with_noise_sigma(s)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("users", self.users),
            ("frames_per_symbol", self.frames_per_symbol),
            ("chips_per_frame", self.chips_per_frame),
            ("th_alphabet", self.th_alphabet),
            ("pulse_types", self.pulse_types),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if self.th_alphabet > self.chips_per_frame {
            return Err(Error::InvalidParameter(format!(
                "th_alphabet ({}) exceeds chips_per_frame ({})",
                self.th_alphabet, self.chips_per_frame
            )));
        }
        if !self.frames_per_symbol.is_multiple_of(self.pulse_types) {
            return Err(Error::InvalidParameter(format!(
                "frames_per_symbol ({}) must be a multiple of pulse_types ({})",
                self.frames_per_symbol, self.pulse_types
            )));
        }
        if !(self.chip_time > 0.0 && self.chip_time.is_finite()) {
            return Err(Error::InvalidParameter("chip_time must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter("noise_sigma must be non-negative".into()));
        }
        if !(self.interferer_power > 0.0 && self.interferer_power.is_finite()) {
            return Err(Error::InvalidParameter(
                "interferer_power must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `T_f = N_c T_c`.
    pub fn frame_time(&self) -> f64 {
        self.chips_per_frame as f64 * self.chip_time
    }

    /// `T_s = N_f T_f`.
    pub fn symbol_time(&self) -> f64 {
        self.frames_per_symbol as f64 * self.frame_time()
    }

    /// Largest last-path delay that keeps every pulse inside its frame.
    pub fn max_channel_spread(&self) -> f64 {
        self.frame_time() - self.th_alphabet as f64 * self.chip_time
    }

    /// `Eb/N0` in dB implied by `noise_sigma`.
    pub fn ebn0_db(&self) -> f64 {
        -10.0 * (2.0 * self.noise_sigma * self.noise_sigma).log10()
    }

    pub fn grid(&self, dt: f64) -> Result<Grid> {
        let chip = whole_samples(self.chip_time, dt, "chip time")?;
        if chip == 0 {
            return Err(Error::GridMismatch("chip shorter than one sample".into()));
        }
        Ok(Grid {
            dt,
            chip,
            frame: chip * self.chips_per_frame,
            symbol: chip * self.chips_per_frame * self.frames_per_symbol,
        })
    }

    /// Checks a pulse set against this configuration: `N_p` pulses on a common
    /// grid that divides the chip, each fitting inside one chip.
    pub fn check_pulses(&self, pulses: &[Pulse]) -> Result<Grid> {
        if pulses.len() != self.pulse_types {
            return Err(Error::ConfigMismatch(format!(
                "{} pulses supplied for N_p = {}",
                pulses.len(),
                self.pulse_types
            )));
        }
        let dt = pulses[0].dt();
        for p in pulses {
            check_same_dt(dt, p.dt())?;
            if p.duration() > self.chip_time * (1.0 + 1e-9) {
                return Err(Error::ConfigMismatch(format!(
                    "pulse '{}' spans {:e} s, longer than the chip ({:e} s)",
                    p.label(),
                    p.duration(),
                    self.chip_time
                )));
            }
        }
        self.grid(dt)
    }
}

pub fn noise_sigma_for_ebn0_db(ebn0_db: f64) -> f64 {
    (0.5 / 10f64.powf(ebn0_db / 10.0)).sqrt()
}

/// Sample counts of the chip, frame and symbol on a given grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dt: f64,
    pub chip: usize,
    pub frame: usize,
    pub symbol: usize,
}

impl Grid {
    /// Sample index of the nominal position of frame `j` hopped to chip `c`.
    pub fn slot(&self, frame: i64, chip: usize) -> isize {
        (frame * self.frame as i64) as isize + (chip * self.chip + self.chip / 2) as isize
    }
}

/// Time-hopping chips and polarity signs, one per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSequences {
    pub th: Vec<usize>,
    pub polarity: Vec<i8>,
}

impl CodeSequences {
    pub fn len(&self) -> usize {
        self.th.len()
    }

    pub fn is_empty(&self) -> bool {
        self.th.is_empty()
    }

    pub fn negated(&self) -> Self {
        Self {
            th: self.th.clone(),
            polarity: self.polarity.iter().map(|d| -d).collect(),
        }
    }
}

pub fn generate_codes<R: Rng + ?Sized>(config: &SystemConfig, n_frames: usize, rng: &mut R) -> CodeSequences {
    let mut th = Vec::with_capacity(n_frames);
    let mut polarity = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        th.push(rng.gen_range(0..config.th_alphabet));
        polarity.push(random_sign(rng));
    }
    CodeSequences { th, polarity }
}

pub fn random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i8> {
    (0..n).map(|_| random_sign(rng)).collect()
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> i8 {
    if rng.gen::<bool>() {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombiningScheme {
    /// Maximal ratio: `beta_l = alpha_l`.
    Mrc,
    /// Equal gain: `beta_l = sign(alpha_l)`.
    Egc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSelection {
    /// Every path (all-RAKE).
    All,
    /// The first `m` arriving paths.
    Partial(usize),
    /// The `m` strongest paths.
    Selective(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RakeCombiner {
    pub beta: Vec<f64>,
    pub scheme: CombiningScheme,
    pub selection: PathSelection,
}

pub fn select_combiner(
    chan: &ChannelRealization,
    scheme: CombiningScheme,
    selection: PathSelection,
) -> Result<RakeCombiner> {
    let gains = chan.gains();
    let l = gains.len();
    let mut used = vec![false; l];
    match selection {
        PathSelection::All => used.iter_mut().for_each(|u| *u = true),
        PathSelection::Partial(m) | PathSelection::Selective(m) if m > l || m == 0 => {
            return Err(Error::InvalidParameter(format!(
                "cannot combine {m} of {l} paths"
            )));
        }
        PathSelection::Partial(m) => used[..m].iter_mut().for_each(|u| *u = true),
        PathSelection::Selective(m) => {
            let mut order: Vec<usize> = (0..l).collect();
            // stable sort: ties go to the earlier path
            order.sort_by(|&a, &b| gains[b].abs().total_cmp(&gains[a].abs()));
            for &i in &order[..m] {
                used[i] = true;
            }
        }
    }
    let beta = gains
        .iter()
        .zip(&used)
        .map(|(&a, &u)| match (u, scheme) {
            (false, _) => 0.0,
            (true, CombiningScheme::Mrc) => a,
            (true, CombiningScheme::Egc) => {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        })
        .collect();
    Ok(RakeCombiner {
        beta,
        scheme,
        selection,
    })
}

/// Transmitted signal of one user for a block of `bits.len()` symbols,
/// starting at `t = 0`:
/// `s(t) = N_f^{-1/2} sum_j d_j b_{floor(j/N_f)} p_{j mod N_p}(t - j T_f - c_j T_c)`.
pub fn transmit_block(
    config: &SystemConfig,
    pulses: &[Pulse],
    bits: &[i8],
    codes: &CodeSequences,
) -> Result<Waveform> {
    let grid = config.check_pulses(pulses)?;
    let n_frames = bits.len() * config.frames_per_symbol;
    if codes.len() != n_frames {
        return Err(Error::InvalidParameter(format!(
            "{} code entries for {} frames",
            codes.len(),
            n_frames
        )));
    }
    let mut out = Waveform::zeros(bits.len() * grid.symbol, grid.dt, 0.0);
    let amp = (config.frames_per_symbol as f64).sqrt().recip();
    for j in 0..n_frames {
        let p = &pulses[j % config.pulse_types];
        let sign = f64::from(codes.polarity[j] * bits[j / config.frames_per_symbol]);
        let start = grid.slot(j as i64, codes.th[j]) + p.t0_samples();
        out.add_scaled_at(p.samples(), start, amp * sign);
    }
    Ok(out)
}

/// One user's contribution to the received signal: its channel composites
/// `u_r` (one per pulse type), its symbols and codes, and its asynchronism.
#[derive(Debug, Clone, Copy)]
pub struct UserBlock<'a> {
    pub composites: &'a [CompositeWaveform],
    pub bits: &'a [i8],
    pub codes: &'a CodeSequences,
    /// Index of the first frame covered by `codes`; a multiple of `N_f`.
    pub first_frame: i64,
    /// Asynchronism `tau_0` in seconds, in `[0, T_s)`; zero for the desired user.
    pub offset: f64,
}

/// Received signal over `[0, len * dt)`: every user's channel-convolved
/// frames shifted by its grid-snapped offset, plus white Gaussian noise of
/// two-sided PSD `sigma_n^2` (sample standard deviation `sigma_n / sqrt(dt)`).
pub fn compose_received<R: Rng + ?Sized>(
    config: &SystemConfig,
    users: &[UserBlock<'_>],
    len: usize,
    rng: &mut R,
) -> Result<Waveform> {
    let first = users
        .first()
        .ok_or_else(|| Error::InvalidParameter("no users supplied".into()))?;
    if first.offset != 0.0 {
        return Err(Error::InvalidParameter(
            "the desired user's offset must be zero".into(),
        ));
    }
    let dt = first
        .composites
        .first()
        .ok_or_else(|| Error::InvalidParameter("user without composites".into()))?
        .dt();
    let grid = config.grid(dt)?;
    let mut out = Waveform::zeros(len, dt, 0.0);
    for user in users {
        add_user(config, &grid, user, &mut out)?;
    }
    add_white_noise(&mut out, config.noise_sigma, rng);
    Ok(out)
}

fn add_user(
    config: &SystemConfig,
    grid: &crate::transceiver::Grid,
    user: &UserBlock<'_>,
    out: &mut Waveform,
) -> Result<()> {
    let nf = config.frames_per_symbol as i64;
    let np = config.pulse_types;
    if user.composites.len() != np {
        return Err(Error::ConfigMismatch(format!(
            "{} composites for N_p = {np}",
            user.composites.len()
        )));
    }
    for c in user.composites {
        check_same_dt(grid.dt, c.dt())?;
    }
    if !(0.0..config.symbol_time()).contains(&user.offset) {
        return Err(Error::InvalidParameter(format!(
            "offset {:e} s outside [0, T_s)",
            user.offset
        )));
    }
    if user.first_frame.rem_euclid(nf) != 0 {
        return Err(Error::InvalidParameter("first_frame must start a symbol".into()));
    }
    if user.codes.len() != user.bits.len() * config.frames_per_symbol {
        return Err(Error::InvalidParameter(format!(
            "{} code entries for {} symbols",
            user.codes.len(),
            user.bits.len()
        )));
    }
    let shift = (user.offset / grid.dt).round() as isize;
    let amp = (config.frames_per_symbol as f64).sqrt().recip();
    for (idx, (&c, &d)) in user.codes.th.iter().zip(&user.codes.polarity).enumerate() {
        let m = user.first_frame + idx as i64;
        let u = &user.composites[m.rem_euclid(np as i64) as usize];
        let b = user.bits[idx / config.frames_per_symbol];
        let start = grid.slot(m, c) + shift + u.t0_samples();
        out.add_scaled_at(u.samples(), start, amp * f64::from(d * b));
    }
    Ok(())
}

/// Adds samples of standard deviation `sigma / sqrt(dt)`.
pub fn add_white_noise<R: Rng + ?Sized>(w: &mut Waveform, sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    let std = sigma / w.dt.sqrt();
    for x in &mut w.samples {
        let n: f64 = StandardNormal.sample(rng);
        *x += std * n;
    }
}

/// Correlator template for bit `bit_index` over its symbol window:
/// `sum_{j = i N_f}^{(i+1) N_f - 1} d_j v_{j mod N_p}(t - j T_f - c_j T_c)`.
/// `codes` covers the whole block starting at frame 0.
pub fn rake_template(
    config: &SystemConfig,
    codes: &CodeSequences,
    v: &[CompositeWaveform],
    bit_index: usize,
) -> Result<Waveform> {
    let np = config.pulse_types;
    if v.len() != np {
        return Err(Error::ConfigMismatch(format!(
            "{} template composites for N_p = {np}",
            v.len()
        )));
    }
    let dt = v[0].dt();
    for w in v {
        check_same_dt(dt, w.dt())?;
    }
    let grid = config.grid(dt)?;
    let nf = config.frames_per_symbol;
    let first = bit_index * nf;
    if codes.len() < first + nf {
        return Err(Error::InvalidParameter(format!(
            "codes cover {} frames, bit {bit_index} needs {}",
            codes.len(),
            first + nf
        )));
    }
    let base = (bit_index * grid.symbol) as isize;
    let mut out = Waveform::zeros(grid.symbol, dt, base as f64 * dt);
    for j in first..first + nf {
        let w = &v[j % np];
        let start = grid.slot(j as i64, codes.th[j]) - base + w.t0_samples();
        out.add_scaled_at(w.samples(), start, f64::from(codes.polarity[j]));
    }
    Ok(out)
}

/// `Y = dt * sum received * template` over the template window.
pub fn decision_statistic(received: &Waveform, template: &Waveform) -> Result<f64> {
    check_same_dt(received.dt, template.dt)?;
    let dt = received.dt;
    let offset = ((template.t0 - received.t0) / dt).round();
    if !same_grid(template.t0 - received.t0 + dt, offset * dt + dt) {
        return Err(Error::GridMismatch(
            "template is not aligned to the received grid".into(),
        ));
    }
    if offset < 0.0 || offset as usize + template.samples.len() > received.samples.len() {
        return Err(Error::GridMismatch(
            "template window extends outside the received signal".into(),
        ));
    }
    let r = &received.samples[offset as usize..offset as usize + template.samples.len()];
    Ok(dt * r.iter().zip(&template.samples).map(|(a, b)| a * b).sum::<f64>())
}
