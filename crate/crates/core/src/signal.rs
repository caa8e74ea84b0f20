//! Uniformly sampled real waveforms.
//!
//! Every waveform carries its sample interval `dt` and the time `t0` of its
//! first sample, so sample `i` sits at `t0 + i * dt`. Correlations and
//! placements use these two numbers to line different waveforms up on the
//! same grid.

use crate::error::{Error, Result};

/// Relative tolerance used when comparing sample intervals.
pub(crate) const GRID_RTOL: f64 = 1e-9;

pub trait Sampled {
    fn samples(&self) -> &[f64];
    fn dt(&self) -> f64;
    fn t0(&self) -> f64;

    fn len(&self) -> usize {
        self.samples().len()
    }

    fn is_empty(&self) -> bool {
        self.samples().is_empty()
    }

    /// `dt * sum(x^2)`, the discrete approximation of the energy integral.
    fn energy(&self) -> f64 {
        self.dt() * self.samples().iter().map(|x| x * x).sum::<f64>()
    }

    /// Time spanned between the first and last sample.
    fn duration(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.dt()
    }

    /// `t0` expressed as a whole number of samples.
    fn t0_samples(&self) -> isize {
        (self.t0() / self.dt()).round() as isize
    }
}

/// A plain sampled signal, e.g. a transmitted block, a received window or a
/// RAKE template.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub t0: f64,
}

impl Waveform {
    pub fn zeros(len: usize, dt: f64, t0: f64) -> Self {
        Self {
            samples: vec![0.0; len],
            dt,
            t0,
        }
    }

    /// Adds `scale * w` with its first sample landing on index `start`.
    /// Samples falling outside the buffer are dropped.
    pub fn add_scaled_at(&mut self, w: &[f64], start: isize, scale: f64) {
        let n = self.samples.len() as isize;
        let lo = start.max(0);
        let hi = (start + w.len() as isize).min(n);
        if lo >= hi {
            return;
        }
        let src = &w[(lo - start) as usize..(hi - start) as usize];
        for (dst, &x) in self.samples[lo as usize..hi as usize].iter_mut().zip(src) {
            *dst += scale * x;
        }
    }
}

impl Sampled for Waveform {
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

pub(crate) fn same_grid(a: f64, b: f64) -> bool {
    (a - b).abs() <= GRID_RTOL * a.abs().max(b.abs())
}

pub(crate) fn check_same_dt(a: f64, b: f64) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "sample intervals differ: {a:e} s vs {b:e} s"
        )))
    }
}

/// Number of whole samples in `span`, failing if `span` is not a multiple of `dt`.
pub(crate) fn whole_samples(span: f64, dt: f64, what: &str) -> Result<usize> {
    let n = span / dt;
    let r = n.round();
    if r < 0.0 || (n - r).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!(
            "{what} ({span:e} s) is not a whole number of {dt:e} s samples"
        )));
    }
    Ok(r as usize)
}
