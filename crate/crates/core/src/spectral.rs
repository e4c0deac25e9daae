//! Frequency/time grids, the spectral-temporal transform, width measures and
//! first-order coherence.
//!
//! States live on a baseband detuning grid `δ_k = (k - n/2)·dν` with the optical
//! carrier `ν0` carried as a scalar. The dual time lattice is
//! `t_j = t_start + j·dt` with `dt = 1/(n·dν)`, and `t_start` is always an
//! integer multiple of `dt` so that `t = 0` (the emission epoch) is a lattice
//! point.
//!
//! Fourier convention, used by every element in the crate:
//!
//! ```text
//! φ(t_j) = Σ_k ψ(δ_k) · exp(+i·2π·δ_k·t_j) · dν
//! ψ(δ_k) = Σ_j φ(t_j) · exp(−i·2π·δ_k·t_j) · dt
//! ```
//!
//! so a spectral phase `exp(−i·2π·δ·T)` delays the envelope by `T`.

use std::cell::RefCell;
use std::f64::consts::{E, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a state is normalized.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// CODATA exact values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Planck constant, J·s.
    pub h: f64,
    /// Speed of light in vacuum, m/s.
    pub c: f64,
}

pub const CODATA: PhysicalConstants = PhysicalConstants {
    h: 6.626_070_15e-34,
    c: 299_792_458.0,
};

impl Default for PhysicalConstants {
    fn default() -> Self {
        CODATA
    }
}

/// Uniform detuning grid plus its dual time lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    n_points: usize,
    d_nu: f64,
    carrier_nu0: f64,
    /// Start of the time window in units of `dt`.
    t_offset: i64,
}

/// Builds a grid of `n_points` samples spanning `span_hz` around `carrier_nu0`.
///
/// The time window starts at `t = 0`; use [`FrequencyGrid::centered`] or
/// [`FrequencyGrid::with_time_start`] to move it.
pub fn make_grid(span_hz: f64, n_points: usize, carrier_nu0: f64) -> Result<FrequencyGrid> {
    if n_points < 64 || !n_points.is_power_of_two() {
        return Err(Error::InvalidGridSize(n_points));
    }
    if !(span_hz > 0.0) || !span_hz.is_finite() {
        return Err(Error::NonPositiveSpan(span_hz));
    }
    if !(carrier_nu0 > span_hz) || !carrier_nu0.is_finite() {
        return Err(Error::CarrierBelowSpan {
            carrier: carrier_nu0,
            span: span_hz,
        });
    }
    Ok(FrequencyGrid {
        n_points,
        d_nu: span_hz / n_points as f64,
        carrier_nu0,
        t_offset: 0,
    })
}

impl FrequencyGrid {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn d_nu(&self) -> f64 {
        self.d_nu
    }

    pub fn carrier(&self) -> f64 {
        self.carrier_nu0
    }

    pub fn span(&self) -> f64 {
        self.d_nu * self.n_points as f64
    }

    pub fn d_t(&self) -> f64 {
        1.0 / (self.n_points as f64 * self.d_nu)
    }

    /// Length of the time window, `1/dν`.
    pub fn window(&self) -> f64 {
        1.0 / self.d_nu
    }

    pub fn t_start(&self) -> f64 {
        self.t_offset as f64 * self.d_t()
    }

    pub fn t_end(&self) -> f64 {
        self.t_start() + self.window()
    }

    /// Start of the time window as a (signed) sample count.
    pub fn t_offset(&self) -> i64 {
        self.t_offset
    }

    /// Moves the time window so it starts at the lattice point nearest `t0`.
    pub fn with_time_start(mut self, t0: f64) -> Self {
        self.t_offset = (t0 / self.d_t()).round() as i64;
        self
    }

    /// Symmetric time window `[-W/2, W/2)`.
    pub fn centered(mut self) -> Self {
        self.t_offset = -(self.n_points as i64 / 2);
        self
    }

    pub fn detuning(&self, k: usize) -> f64 {
        (k as f64 - (self.n_points / 2) as f64) * self.d_nu
    }

    pub fn detunings(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |k| self.detuning(k))
    }

    pub fn time(&self, j: usize) -> f64 {
        (self.t_offset + j as i64) as f64 * self.d_t()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |j| self.time(j))
    }

    /// Lowest and highest detuning on the grid.
    pub fn detuning_range(&self) -> (f64, f64) {
        (self.detuning(0), self.detuning(self.n_points - 1))
    }

    /// Fractional part of `δ_k · t` in cycles, computed without forming the
    /// large product `δ_k·t` directly.
    pub(crate) fn phase_cycles(&self, k: usize, t: f64) -> f64 {
        let m = k as f64 - (self.n_points / 2) as f64;
        (m * (self.d_nu * t)).rem_euclid(1.0)
    }
}

/// Normalizable complex amplitude `ψ(δ_k)` in Hz^(-1/2).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAmplitude {
    grid: FrequencyGrid,
    values: Vec<Complex64>,
}

/// Time-domain envelope `φ(t_j)` in s^(-1/2) on the dual lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalAmplitude {
    grid: FrequencyGrid,
    values: Vec<Complex64>,
}

impl SpectralAmplitude {
    pub fn new(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::LengthMismatch {
                expected: grid.n_points,
                got: values.len(),
            });
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: FrequencyGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.detunings().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `Σ|ψ_k|²·dν`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.d_nu
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sq() - 1.0).abs() <= NORM_TOLERANCE
    }

    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm_sq();
        if !(norm > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let scale = 1.0 / norm.sqrt();
        self.values.iter_mut().for_each(|v| *v *= scale);
        Ok(self)
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        let norm = self.norm_sq();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(())
    }

    /// Spectral intensity `|ψ_k|²`.
    pub fn intensity(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Intensity-weighted mean detuning.
    pub fn mean_detuning(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let w = v.norm_sqr();
            num += w * self.grid.detuning(k);
            den += w;
        }
        num / den
    }

    /// Pointwise product with a diagonal operator sampled on the same grid.
    pub fn multiplied(&self, op: &[Complex64]) -> Result<Self> {
        if op.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                expected: self.values.len(),
                got: op.len(),
            });
        }
        let values = self.values.iter().zip(op).map(|(a, b)| a * b).collect();
        Self::new(self.grid.clone(), values)
    }

    pub fn to_time(&self) -> TemporalAmplitude {
        to_time(self)
    }
}

impl TemporalAmplitude {
    pub fn new(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::LengthMismatch {
                expected: grid.n_points,
                got: values.len(),
            });
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn t0(&self) -> f64 {
        self.grid.t_start()
    }

    pub fn d_t(&self) -> f64 {
        self.grid.d_t()
    }

    /// `Σ|φ_j|²·dt`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.d_t()
    }

    /// Arrival probability per time bin, `|φ_j|²·dt`.
    pub fn bin_probabilities(&self) -> Vec<f64> {
        let dt = self.grid.d_t();
        self.values.iter().map(|v| v.norm_sqr() * dt).collect()
    }

    pub fn to_freq(&self) -> SpectralAmplitude {
        to_freq(self)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn alternate_sign(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Spectral to temporal amplitude on the dual lattice.
pub fn to_time(psi: &SpectralAmplitude) -> TemporalAmplitude {
    let grid = psi.grid.clone();
    let n = grid.n_points;
    let t0 = grid.t_start();
    let mut buf: Vec<Complex64> = psi
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| v * Complex64::from_polar(1.0, 2.0 * PI * grid.phase_cycles(k, t0)))
        .collect();
    plan(n, true).process(&mut buf);
    let d_nu = grid.d_nu;
    buf.iter_mut()
        .enumerate()
        .for_each(|(j, v)| *v *= d_nu * alternate_sign(j));
    TemporalAmplitude { grid, values: buf }
}

/// Temporal to spectral amplitude; exact inverse of [`to_time`].
pub fn to_freq(phi: &TemporalAmplitude) -> SpectralAmplitude {
    let grid = phi.grid.clone();
    let n = grid.n_points;
    let t0 = grid.t_start();
    let mut buf: Vec<Complex64> = phi
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| v * alternate_sign(j))
        .collect();
    plan(n, false).process(&mut buf);
    let d_t = grid.d_t();
    buf.iter_mut().enumerate().for_each(|(k, v)| {
        *v *= d_t * Complex64::from_polar(1.0, -2.0 * PI * grid.phase_cycles(k, t0));
    });
    SpectralAmplitude { grid, values: buf }
}

/// First-order coherence `g¹(τ) = Σ_k |ψ_k|²·exp(−i·2π·δ_k·τ)·dν`, normalized
/// so that `g¹(0) = 1`.
pub fn g1(psi: &SpectralAmplitude, tau: f64) -> Complex64 {
    let grid = &psi.grid;
    // The phasor is advanced by a fixed step inside short blocks and
    // re-anchored exactly at each block start, so rounding cannot accumulate.
    const BLOCK: usize = 32;
    let step = Complex64::from_polar(1.0, -2.0 * PI * (grid.d_nu * tau).rem_euclid(1.0));
    let mut acc = Complex64::new(0.0, 0.0);
    let mut norm = 0.0;
    for (b, chunk) in psi.values.chunks(BLOCK).enumerate() {
        let mut phasor = Complex64::from_polar(1.0, -2.0 * PI * grid.phase_cycles(b * BLOCK, tau));
        for v in chunk {
            let w = v.norm_sqr();
            norm += w;
            acc += w * phasor;
            phasor *= step;
        }
    }
    if norm == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    acc / norm
}

/// `g¹(m·dt)` for `m = 0..n` in a single transform. Indices past `n/2`
/// correspond to negative delays (periodic lattice).
pub fn g1_on_lattice(psi: &SpectralAmplitude) -> Vec<Complex64> {
    let n = psi.grid.n_points;
    let intensity = psi.intensity();
    let norm: f64 = intensity.iter().sum();
    let mut buf: Vec<Complex64> = intensity.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    plan(n, false).process(&mut buf);
    buf.iter_mut()
        .enumerate()
        .for_each(|(m, v)| *v *= alternate_sign(m) / norm);
    buf
}

/// Result of a half-width measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Width {
    /// Half width at half maximum, in axis units.
    pub hwhm: f64,
    /// Index of the maximum sample.
    pub peak_index: usize,
    /// Set when the profile rises above half maximum again beyond the first
    /// crossing; the outermost crossing is reported.
    pub multimodal: bool,
}

/// Half width at half maximum of a nonnegative profile sampled with uniform
/// spacing, using linear interpolation between bracketing samples.
pub fn hwhm(profile: &[f64], spacing: f64) -> Result<Width> {
    let n = profile.len();
    if n < 3 {
        return Err(Error::MaxOnEdge);
    }
    if let Some(&bad) = profile.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Negative(bad));
    }
    let peak = profile
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > profile[best] { i } else { best });
    if peak == 0 || peak == n - 1 {
        return Err(Error::MaxOnEdge);
    }
    let half = profile[peak] / 2.0;

    let inner_right = (peak..n)
        .find(|&j| profile[j] <= half)
        .ok_or(Error::MaxOnEdge)?;
    let outer_right = (peak..n).rev().find(|&j| profile[j] > half).unwrap_or(peak) + 1;
    if outer_right >= n {
        return Err(Error::MaxOnEdge);
    }
    let inner_left = (0..=peak)
        .rev()
        .find(|&j| profile[j] <= half)
        .ok_or(Error::MaxOnEdge)?;
    let outer_left = (0..=peak).find(|&j| profile[j] > half).unwrap_or(peak);
    if outer_left == 0 {
        return Err(Error::MaxOnEdge);
    }
    let outer_left = outer_left - 1;

    // crossing between samples a (above) and b (at or below half)
    let cross = |above: usize, below: usize| -> f64 {
        let (ya, yb) = (profile[above], profile[below]);
        let frac = (ya - half) / (ya - yb);
        above as f64 + frac * (below as f64 - above as f64)
    };
    let right = cross(outer_right - 1, outer_right);
    let left = cross(outer_left + 1, outer_left);
    Ok(Width {
        hwhm: 0.5 * (right - left) * spacing,
        peak_index: peak,
        multimodal: outer_right != inner_right || outer_left != inner_left,
    })
}

/// Spectral HWHM of a state in Hz.
pub fn spectral_hwhm(psi: &SpectralAmplitude) -> Result<Width> {
    hwhm(&psi.intensity(), psi.grid.d_nu)
}

/// Coherence time `t_c = τ_e/2`, where `τ_e` is the first delay at which
/// `|g¹|` falls to `1/e`. A Lorentzian line of lifetime `τ_R` gives `τ_R`.
pub fn coherence_time(psi: &SpectralAmplitude) -> Result<f64> {
    let threshold = 1.0 / E;
    let lattice = g1_on_lattice(psi);
    let n = psi.grid.n_points;
    let d_t = psi.grid.d_t();
    let m = (1..=n / 2)
        .find(|&m| lattice[m].norm() < threshold)
        .ok_or(Error::CoherenceExceedsWindow)?;
    let (mut lo, mut hi) = ((m - 1) as f64 * d_t, m as f64 * d_t);
    if lattice[m].norm() == threshold {
        return Ok(hi / 2.0);
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if g1(psi, mid).norm() < threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.25 * (lo + hi))
}

/// `l_c = c·t_c`.
pub fn coherence_length(t_c: f64, constants: &PhysicalConstants) -> Result<f64> {
    if t_c < 0.0 || t_c.is_nan() {
        return Err(Error::Negative(t_c));
    }
    Ok(constants.c * t_c)
}
