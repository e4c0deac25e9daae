//! The ideal, lossless apparatuses: spectrometer, dispersive fiber, Michelson
//! interferometer and photodetector.
//!
//! Everything except the detector acts as a pointwise multiplication in the
//! detuning domain, so any chain of them commutes.

use std::cmp::Ordering;
use std::f64::consts::{LN_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::BinnedSampler;
use crate::spectral::{g1, FrequencyGrid, SpectralAmplitude, TemporalAmplitude, NORM_TOLERANCE};

/// Transmitted probability below which a channel counts as empty.
pub const EMPTY_CHANNEL_THRESHOLD: f64 = 1e-12;
/// Fraction of the time window, at its end, watched by the aliasing guard.
pub const GUARD_BAND_FRACTION: f64 = 0.05;
/// Largest mass tolerated inside the guard band.
pub const GUARD_MASS_LIMIT: f64 = 1e-6;
/// Envelope allowance, in source lifetimes, kept free after the slowest delay.
pub const ENVELOPE_LIFETIMES: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelShape {
    /// Gaussian raw responses normalized to a partition of unity.
    #[default]
    GaussianPartition,
    /// Contiguous bins split halfway between neighbouring centers.
    Rectangular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrometerSpec {
    /// Channel center detunings in Hz, strictly increasing.
    pub centers_hz: Vec<f64>,
    /// HWHM of each raw channel response in Hz.
    pub channel_hwhm_hz: f64,
    #[serde(default)]
    pub shape: ChannelShape,
}

impl SpectrometerSpec {
    /// `n` channels spaced by `spacing` and centered on zero detuning.
    pub fn uniform(n: usize, spacing: f64, channel_hwhm: f64, shape: ChannelShape) -> Self {
        let mid = (n as f64 - 1.0) / 2.0;
        Self {
            centers_hz: (0..n).map(|k| (k as f64 - mid) * spacing).collect(),
            channel_hwhm_hz: channel_hwhm,
            shape,
        }
    }

    /// Single all-pass channel.
    pub fn all_pass() -> Self {
        Self::uniform(1, 0.0, 1.0, ChannelShape::GaussianPartition)
    }

    pub fn n_channels(&self) -> usize {
        self.centers_hz.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers_hz.is_empty() {
            return Err(Error::InvalidSpectrometer("no channels".into()));
        }
        if self.centers_hz.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSpectrometer("non-finite center".into()));
        }
        if self.centers_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSpectrometer(
                "centers must be strictly increasing".into(),
            ));
        }
        if !(self.channel_hwhm_hz > 0.0) || !self.channel_hwhm_hz.is_finite() {
            return Err(Error::InvalidSpectrometer(format!(
                "channel HWHM must be positive, got {}",
                self.channel_hwhm_hz
            )));
        }
        Ok(())
    }

    /// Intensity responses `|T_k(δ)|²` of every channel at detuning `delta`.
    pub fn intensity_responses(&self, delta: f64) -> Vec<f64> {
        let n = self.n_channels();
        match self.shape {
            ChannelShape::GaussianPartition => {
                let w = self.channel_hwhm_hz;
                let logs: Vec<f64> = self
                    .centers_hz
                    .iter()
                    .map(|c| -LN_2 * ((delta - c) / w).powi(2))
                    .collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|r| r / sum).collect()
            }
            ChannelShape::Rectangular => {
                let k = self
                    .centers_hz
                    .windows(2)
                    .take_while(|w| delta >= 0.5 * (w[0] + w[1]))
                    .count();
                let mut out = vec![0.0; n];
                out[k] = 1.0;
                out
            }
        }
    }

    /// `|T_k(δ)|²` for channel `k` on every grid point.
    pub fn channel_intensity(&self, grid: &FrequencyGrid, k: usize) -> Vec<f64> {
        grid.detunings()
            .map(|d| self.intensity_responses(d)[k])
            .collect()
    }

    /// Worst deviation of `Σ_k |T_k|²` from one over the grid.
    pub fn partition_error(&self, grid: &FrequencyGrid) -> f64 {
        grid.detunings()
            .map(|d| (self.intensity_responses(d).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_partition(&self, grid: &FrequencyGrid) -> Result<()> {
        self.validate()?;
        let err = self.partition_error(grid);
        if !(err <= 1e-9) {
            return Err(Error::PartitionViolated(err));
        }
        Ok(())
    }

    /// Intensity-weighted mean detuning of channel `k` for spectral
    /// intensity `weights` on `grid`.
    pub fn channel_centroid(&self, grid: &FrequencyGrid, weights: &[f64], k: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((d, w), t) in grid
            .detunings()
            .zip(weights)
            .zip(self.channel_intensity(grid, k))
        {
            num += w * t * d;
            den += w * t;
        }
        num / den
    }
}

/// Dispersive single-mode fiber with group delay `T0 + D·δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    /// Base group delay `T0` in s.
    pub base_delay_s: f64,
    /// Group-delay slope `D` in s/Hz.
    pub dispersion_s_per_hz: f64,
}

impl FiberSpec {
    pub fn new(base_delay_s: f64, dispersion_s_per_hz: f64) -> Self {
        Self {
            base_delay_s,
            dispersion_s_per_hz,
        }
    }

    pub fn group_delay(&self, delta: f64) -> f64 {
        self.base_delay_s + self.dispersion_s_per_hz * delta
    }

    /// Spectral phase factor `exp(−i·2π·(T0·δ + D·δ²/2))`.
    pub fn transmission(&self, grid: &FrequencyGrid) -> Vec<Complex64> {
        grid.detunings()
            .map(|d| {
                let cycles = (self.base_delay_s * d + 0.5 * self.dispersion_s_per_hz * d * d)
                    .rem_euclid(1.0);
                Complex64::from_polar(1.0, -2.0 * PI * cycles)
            })
            .collect()
    }

    /// Smallest and largest group delay across the grid.
    pub fn delay_range(&self, grid: &FrequencyGrid) -> (f64, f64) {
        let (lo, hi) = grid.detuning_range();
        let (a, b) = (self.group_delay(lo), self.group_delay(hi));
        (a.min(b), a.max(b))
    }

    /// Checks that every group delay on the grid, followed by an envelope of
    /// `8·τ_R`, stays clear of the guard band at the end of the window.
    pub fn validate_window(&self, grid: &FrequencyGrid, tau_r: f64) -> Result<()> {
        if !self.base_delay_s.is_finite() || !self.dispersion_s_per_hz.is_finite() {
            return Err(Error::InvalidConfig("non-finite fiber parameters".into()));
        }
        let (lo, hi) = self.delay_range(grid);
        let usable_end = grid.t_start() + (1.0 - GUARD_BAND_FRACTION) * grid.window();
        if lo < grid.t_start() || hi + ENVELOPE_LIFETIMES * tau_r > usable_end {
            return Err(Error::WindowOverflow(format!(
                "group delays span [{lo:e}, {hi:e}] s but the window is [{:e}, {usable_end:e}) s",
                grid.t_start()
            )));
        }
        Ok(())
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    #[default]
    Bright,
    Dark,
}

impl Port {
    pub fn as_str(&self) -> &'static str {
        match self {
            Port::Bright => "bright",
            Port::Dark => "dark",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MichelsonSpec {
    /// Arm delay in s.
    pub tau_s: f64,
    #[serde(default)]
    pub port: Port,
}

impl MichelsonSpec {
    /// Amplitude transmission to `port`: `(1 ± exp(−i·2π·(ν0+δ)·τ))/2`.
    pub fn transmission(&self, grid: &FrequencyGrid, port: Port) -> Vec<Complex64> {
        let carrier_cycles = (grid.carrier() * self.tau_s).rem_euclid(1.0);
        let sign = match port {
            Port::Bright => 1.0,
            Port::Dark => -1.0,
        };
        (0..grid.n_points())
            .map(|k| {
                let cycles = carrier_cycles + grid.phase_cycles(k, self.tau_s);
                0.5 * (Complex64::new(1.0, 0.0)
                    + sign * Complex64::from_polar(1.0, -2.0 * PI * cycles))
            })
            .collect()
    }

    /// Bright-port click probability of a photon with sharp frequency
    /// `nu0 + delta`.
    pub fn bright_probability_at(&self, nu0: f64, delta: f64) -> f64 {
        let cycles = (nu0 * self.tau_s).rem_euclid(1.0) + (delta * self.tau_s).rem_euclid(1.0);
        0.5 * (1.0 + (2.0 * PI * cycles).cos())
    }

    pub fn validate(&self, grid: &FrequencyGrid) -> Result<()> {
        if !(self.tau_s.abs() <= 0.5 * grid.window()) {
            return Err(Error::InvalidConfig(format!(
                "Michelson delay {} s outside the representable window",
                self.tau_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    #[serde(default)]
    pub jitter_rms_s: f64,
    #[serde(default = "unit_efficiency")]
    pub quantum_efficiency: f64,
}

fn unit_efficiency() -> f64 {
    1.0
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            jitter_rms_s: 0.0,
            quantum_efficiency: 1.0,
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.quantum_efficiency != 1.0 {
            return Err(Error::InvalidConfig(
                "the ideal detector has unit quantum efficiency".into(),
            ));
        }
        if !(self.jitter_rms_s >= 0.0) || !self.jitter_rms_s.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "detector jitter must be nonnegative, got {}",
                self.jitter_rms_s
            )));
        }
        Ok(())
    }
}

/// One apparatus in an experiment chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementSpec {
    Spectrometer(SpectrometerSpec),
    Fiber(FiberSpec),
    Michelson(MichelsonSpec),
    Detector(DetectorSpec),
}

impl ElementSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ElementSpec::Spectrometer(_) => "spectrometer",
            ElementSpec::Fiber(_) => "fiber",
            ElementSpec::Michelson(_) => "michelson",
            ElementSpec::Detector(_) => "detector",
        }
    }
}

/// Which output of a multi-port element the photon left through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Channel(usize),
    Port(Port),
}

/// Sequence of outcomes along a chain; `direct` when nothing branched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelTag(pub Vec<Outcome>);

impl ChannelTag {
    /// First spectrometer channel along the path, if any.
    pub fn channel(&self) -> Option<usize> {
        self.0.iter().find_map(|o| match o {
            Outcome::Channel(k) => Some(*k),
            Outcome::Port(_) => None,
        })
    }
}

impl fmt::Display for ChannelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("direct");
        }
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            match o {
                Outcome::Channel(k) => write!(f, "{k}")?,
                Outcome::Port(p) => f.write_str(p.as_str())?,
            }
        }
        Ok(())
    }
}

impl Serialize for ChannelTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A detection event; `t_click` is measured from the excitation epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClickRecord {
    pub trial: u64,
    pub channel: ChannelTag,
    pub t_click: f64,
}

/// Probability of transmission and the measurement-conditioned state.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub probability: f64,
    pub state: SpectralAmplitude,
}

/// Passes `psi` through the amplitude transmission `t` and conditions on the
/// photon being transmitted.
pub fn apply_filter(psi: &SpectralAmplitude, t: &[Complex64]) -> Result<FilterOutcome> {
    psi.ensure_normalized()?;
    if t.len() != psi.values().len() {
        return Err(Error::LengthMismatch {
            expected: psi.values().len(),
            got: t.len(),
        });
    }
    if let Some((index, v)) = t
        .iter()
        .enumerate()
        .find(|(_, v)| v.norm() > 1.0 + 1e-12 || !v.norm().is_finite())
    {
        return Err(Error::TransmissionExceedsUnity {
            index,
            magnitude: v.norm(),
        });
    }
    if t.iter().all(|v| *v == Complex64::new(1.0, 0.0)) {
        return Ok(FilterOutcome {
            probability: 1.0,
            state: psi.clone(),
        });
    }
    let filtered = psi.multiplied(t)?;
    let p = filtered.norm_sq();
    if !(p >= EMPTY_CHANNEL_THRESHOLD) {
        return Err(Error::EmptyChannel(p));
    }
    Ok(FilterOutcome {
        probability: p,
        state: filtered.normalized()?,
    })
}

/// One spectrometer output: probability and conditional state (absent when
/// the channel is empty).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProjection {
    pub channel: usize,
    pub probability: f64,
    pub state: Option<SpectralAmplitude>,
}

/// Projects `psi` onto every spectrometer channel.
pub fn spectrometer_project(
    psi: &SpectralAmplitude,
    spec: &SpectrometerSpec,
) -> Result<Vec<ChannelProjection>> {
    spec.check_partition(psi.grid())?;
    psi.ensure_normalized()?;
    (0..spec.n_channels())
        .map(|k| {
            let t = amplitude_from_intensity(&spec.channel_intensity(psi.grid(), k));
            match apply_filter(psi, &t) {
                Ok(out) => Ok(ChannelProjection {
                    channel: k,
                    probability: out.probability,
                    state: Some(out.state),
                }),
                Err(Error::EmptyChannel(p)) => Ok(ChannelProjection {
                    channel: k,
                    probability: p,
                    state: None,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn amplitude_from_intensity(intensity: &[f64]) -> Vec<Complex64> {
    intensity
        .iter()
        .map(|&r| Complex64::new(r.sqrt(), 0.0))
        .collect()
}

/// Propagates `psi` through `fiber`, refusing results that would wrap around
/// the time window.
pub fn apply_fiber(psi: &SpectralAmplitude, fiber: &FiberSpec) -> Result<SpectralAmplitude> {
    let grid = psi.grid();
    let (lo, hi) = fiber.delay_range(grid);
    if lo < grid.t_start() || hi >= grid.t_end() {
        return Err(Error::WindowOverflow(format!(
            "group delays [{lo:e}, {hi:e}] s leave the window [{:e}, {:e}) s",
            grid.t_start(),
            grid.t_end()
        )));
    }
    let out = psi.multiplied(&fiber.transmission(grid))?;
    let guard = guard_band_mass(&out.to_time());
    if guard > GUARD_MASS_LIMIT * out.norm_sq() {
        return Err(Error::WindowOverflow(format!(
            "{guard:e} of the arrival density lies in the final 5% of the window"
        )));
    }
    Ok(out)
}

/// Probability mass in the final [`GUARD_BAND_FRACTION`] of the window.
pub fn guard_band_mass(phi: &TemporalAmplitude) -> f64 {
    let p = phi.bin_probabilities();
    let start = ((1.0 - GUARD_BAND_FRACTION) * p.len() as f64).floor() as usize;
    p[start..].iter().sum()
}

/// Click probabilities of both Michelson outputs; they sum to one exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MichelsonPorts {
    pub bright: f64,
    pub dark: f64,
    /// Fringe envelope `|g¹(τ)|`.
    pub visibility: f64,
}

impl MichelsonPorts {
    pub fn port(&self, port: Port) -> f64 {
        match port {
            Port::Bright => self.bright,
            Port::Dark => self.dark,
        }
    }
}

pub fn michelson_ports(psi: &SpectralAmplitude, tau: f64) -> MichelsonPorts {
    let g = g1(psi, tau);
    let carrier =
        Complex64::from_polar(1.0, 2.0 * PI * (psi.grid().carrier() * tau).rem_euclid(1.0));
    let x = (carrier * g.conj()).re.clamp(-1.0, 1.0);
    // the larger port is computed directly, the smaller as its complement
    let (bright, dark) = if x >= 0.0 {
        let b = 0.5 * (1.0 + x);
        (b, 1.0 - b)
    } else {
        let d = 0.5 * (1.0 - x);
        (1.0 - d, d)
    };
    MichelsonPorts {
        bright,
        dark,
        visibility: g.norm(),
    }
}

/// Click probability at the port selected in `m`.
pub fn michelson_click_prob(psi: &SpectralAmplitude, m: &MichelsonSpec) -> Result<f64> {
    psi.ensure_normalized()?;
    Ok(michelson_ports(psi, m.tau_s).port(m.port))
}

/// Inverse-CDF sampler over the arrival density `|φ(t)|²` of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSampler {
    inner: BinnedSampler,
}

impl ArrivalSampler {
    /// Bins are `[t_j, t_j + dt)`.
    pub fn new(phi: &TemporalAmplitude) -> Result<Self> {
        let norm = phi.norm_sq();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            inner: BinnedSampler::new(&phi.bin_probabilities(), phi.t0(), phi.d_t())?,
        })
    }

    pub fn sample(&self, u: f64) -> f64 {
        self.inner.sample(u)
    }

    /// Mean and standard deviation of the arrival time.
    pub fn moments(&self) -> (f64, f64) {
        self.inner.moments()
    }
}

/// Adds Gaussian timing jitter of the detector to an ideal click time.
pub fn apply_jitter<R: Rng + ?Sized>(t: f64, det: &DetectorSpec, rng: &mut R) -> f64 {
    if det.jitter_rms_s > 0.0 {
        t + Normal::new(0.0, det.jitter_rms_s)
            .expect("validated jitter")
            .sample(rng)
    } else {
        t
    }
}

/// Samples one click time from `phi`.
pub fn detect<R: Rng + ?Sized>(
    phi: &TemporalAmplitude,
    det: &DetectorSpec,
    rng: &mut R,
) -> Result<f64> {
    det.validate()?;
    let sampler = ArrivalSampler::new(phi)?;
    let u: f64 = rng.random();
    Ok(apply_jitter(sampler.sample(u), det, rng))
}

/// An element that acts by pointwise multiplication on the detuning grid.
#[derive(Debug, Clone, PartialEq)]
pub enum DiagonalElement {
    /// Arbitrary amplitude transmission sampled on the grid.
    Filter(Vec<Complex64>),
    /// One output channel of a spectrometer.
    Channel {
        spectrometer: SpectrometerSpec,
        k: usize,
    },
    /// One output port of a Michelson interferometer.
    Port(MichelsonSpec),
    Fiber(FiberSpec),
}

impl DiagonalElement {
    pub fn operator(&self, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
        match self {
            DiagonalElement::Filter(t) => {
                if t.len() != grid.n_points() {
                    return Err(Error::LengthMismatch {
                        expected: grid.n_points(),
                        got: t.len(),
                    });
                }
                Ok(t.clone())
            }
            DiagonalElement::Channel { spectrometer, k } => {
                spectrometer.validate()?;
                if *k >= spectrometer.n_channels() {
                    return Err(Error::InvalidSpectrometer(format!("no channel {k}")));
                }
                Ok(amplitude_from_intensity(
                    &spectrometer.channel_intensity(grid, *k),
                ))
            }
            DiagonalElement::Port(m) => Ok(m.transmission(grid, m.port)),
            DiagonalElement::Fiber(f) => Ok(f.transmission(grid)),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            DiagonalElement::Filter(_) => 0,
            DiagonalElement::Channel { .. } => 1,
            DiagonalElement::Port(_) => 2,
            DiagonalElement::Fiber(_) => 3,
        }
    }

    /// Total order on elements used to fix the multiplication order.
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        fn bits(v: &[f64]) -> Vec<u64> {
            v.iter().map(|x| x.to_bits()).collect()
        }
        let key = |e: &Self| -> Vec<u64> {
            match e {
                DiagonalElement::Filter(t) => t
                    .iter()
                    .flat_map(|c| [c.re.to_bits(), c.im.to_bits()])
                    .collect(),
                DiagonalElement::Channel { spectrometer, k } => {
                    let mut v = vec![*k as u64, spectrometer.channel_hwhm_hz.to_bits()];
                    v.push(spectrometer.shape as u64);
                    v.extend(bits(&spectrometer.centers_hz));
                    v
                }
                DiagonalElement::Port(m) => vec![m.tau_s.to_bits(), m.port as u64],
                DiagonalElement::Fiber(f) => {
                    vec![f.base_delay_s.to_bits(), f.dispersion_s_per_hz.to_bits()]
                }
            }
        };
        self.rank()
            .cmp(&other.rank())
            .then_with(|| key(self).cmp(&key(other)))
    }
}

impl TryFrom<&ElementSpec> for DiagonalElement {
    type Error = Error;

    fn try_from(e: &ElementSpec) -> Result<Self> {
        match e {
            ElementSpec::Fiber(f) => Ok(DiagonalElement::Fiber(*f)),
            ElementSpec::Michelson(m) => Ok(DiagonalElement::Port(*m)),
            ElementSpec::Spectrometer(s) if s.n_channels() == 1 => Ok(DiagonalElement::Channel {
                spectrometer: s.clone(),
                k: 0,
            }),
            ElementSpec::Spectrometer(_) => Err(Error::NonDiagonal(
                "spectrometer without a selected channel",
            )),
            ElementSpec::Detector(_) => Err(Error::NonDiagonal("detector")),
        }
    }
}

/// Combined operator of a chain of diagonal elements.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator {
    pub values: Vec<Complex64>,
}

impl DiagonalOperator {
    pub fn apply(&self, psi: &SpectralAmplitude) -> Result<SpectralAmplitude> {
        psi.multiplied(&self.values)
    }
}

/// Multiplies the element operators together. Factors are taken in a
/// canonical order, so every permutation of `elements` yields a bit-identical
/// operator.
pub fn compose(elements: &[DiagonalElement], grid: &FrequencyGrid) -> Result<DiagonalOperator> {
    let mut ordered: Vec<&DiagonalElement> = elements.iter().collect();
    ordered.sort_by(|a, b| a.canonical_cmp(b));
    let mut values = vec![Complex64::new(1.0, 0.0); grid.n_points()];
    for e in ordered {
        for (v, t) in values.iter_mut().zip(e.operator(grid)?) {
            *v *= t;
        }
    }
    Ok(DiagonalOperator { values })
}

/// Composes a chain of element descriptions, rejecting any element that is
/// not frequency-diagonal.
pub fn compose_chain(chain: &[ElementSpec], grid: &FrequencyGrid) -> Result<DiagonalOperator> {
    let elements = chain
        .iter()
        .map(DiagonalElement::try_from)
        .collect::<Result<Vec<_>>>()?;
    compose(&elements, grid)
}

/// Applies the elements one after another in the given order (unnormalized).
pub fn apply_sequential(
    psi: &SpectralAmplitude,
    elements: &[DiagonalElement],
) -> Result<SpectralAmplitude> {
    elements.iter().try_fold(psi.clone(), |state, e| {
        state.multiplied(&e.operator(state.grid())?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon::{make_quantum_photon, SourceSpec};
    use crate::sampling::trial_rng;
    use crate::spectral::{coherence_time, make_grid, spectral_hwhm};

    fn grid() -> FrequencyGrid {
        make_grid(500e6, 32768, 5e14).unwrap().centered()
    }

    fn source_state() -> SpectralAmplitude {
        make_quantum_photon(&SourceSpec::default(), &grid())
            .unwrap()
            .state
    }

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_filter_is_bit_exact() {
        let psi = source_state();
        let out = apply_filter(&psi, &vec![Complex64::new(1.0, 0.0); psi.values().len()]).unwrap();
        assert_eq!(out.probability, 1.0);
        assert_eq!(out.state, psi);
    }

    #[test]
    fn opaque_filter_is_empty() {
        let psi = source_state();
        let zero = vec![Complex64::new(0.0, 0.0); psi.values().len()];
        assert!(matches!(
            apply_filter(&psi, &zero),
            Err(Error::EmptyChannel(_))
        ));
        let mut gain = vec![Complex64::new(1.0, 0.0); psi.values().len()];
        gain[10] = Complex64::new(1.5, 0.0);
        assert!(matches!(
            apply_filter(&psi, &gain),
            Err(Error::TransmissionExceedsUnity { index: 10, .. })
        ));
    }

    #[test]
    fn half_line_filter_passes_half() {
        let g = grid();
        // symmetric Lorentzian intensity without the grid's odd endpoint
        let gamma = SourceSpec::default().linewidth_hwhm();
        let psi = SpectralAmplitude::from_fn(g.clone(), |d| {
            if d == g.detuning(0) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0) / Complex64::new(gamma, d)
            }
        })
        .unwrap()
        .normalized()
        .unwrap();
        let t: Vec<Complex64> = g
            .detunings()
            .map(|d| {
                let v = if d > 0.0 {
                    1.0
                } else if d == 0.0 {
                    0.5f64.sqrt()
                } else {
                    0.0
                };
                Complex64::new(v, 0.0)
            })
            .collect();
        let out = apply_filter(&psi, &t).unwrap();
        assert!((out.probability - 0.5).abs() < 1e-6);
    }

    #[test]
    fn spectrometer_losslessness_and_symmetry() {
        let psi = source_state();
        let spec = SpectrometerSpec::uniform(2, 4e6, 1e6, ChannelShape::GaussianPartition);
        let out = spectrometer_project(&psi, &spec).unwrap();
        // the grid's lowest detuning has no mirror partner and sits in channel 0
        let edge = psi.values()[0].norm_sqr() * psi.grid().d_nu();
        assert!((out[0].probability - (0.5 + edge / 2.0)).abs() < 1e-9);
        assert!((out[1].probability - (0.5 - edge / 2.0)).abs() < 1e-9);

        let spec = SpectrometerSpec::uniform(9, 4e6, 1e6, ChannelShape::GaussianPartition);
        let total: f64 = spectrometer_project(&psi, &spec)
            .unwrap()
            .iter()
            .map(|c| c.probability)
            .sum();
        assert!((total - 1.0).abs() < 1e-9);

        let out = spectrometer_project(&psi, &SpectrometerSpec::all_pass()).unwrap();
        assert_eq!(out[0].probability, 1.0);
        assert_eq!(out[0].state.as_ref().unwrap(), &psi);
    }

    #[test]
    fn rectangular_bins_partition_exactly() {
        let spec = SpectrometerSpec::uniform(5, 2e6, 1e6, ChannelShape::Rectangular);
        assert_eq!(spec.partition_error(&grid()), 0.0);
        assert_eq!(spec.intensity_responses(0.0), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(spec.intensity_responses(1e6), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(spec.intensity_responses(-1e9)[0], 1.0);
    }

    #[test]
    fn narrow_channel_lengthens_coherence() {
        let psi = source_state();
        let src = SourceSpec::default();
        let gamma = src.linewidth_hwhm();
        let w = gamma / 8.0;
        let spec = SpectrometerSpec::uniform(9, 2.0 * w, w, ChannelShape::GaussianPartition);
        let out = spectrometer_project(&psi, &spec).unwrap();
        for k in [4, 5, 6] {
            let state = out[k].state.as_ref().unwrap();
            assert!(spectral_hwhm(state).unwrap().hwhm < gamma / 4.0);
            assert!(coherence_time(state).unwrap() > 4.0 * src.tau_r_s);
        }
    }

    #[test]
    fn filtering_never_broadens_interior_channels() {
        let psi = source_state();
        let source_width = spectral_hwhm(&psi).unwrap().hwhm;
        let spec = SpectrometerSpec::uniform(9, 4e6, 1e6, ChannelShape::GaussianPartition);
        for c in spectrometer_project(&psi, &spec)
            .unwrap()
            .iter()
            .skip(1)
            .take(7)
        {
            let w = spectral_hwhm(c.state.as_ref().unwrap()).unwrap();
            assert!(w.hwhm <= source_width);
        }
    }

    #[test]
    fn pure_delay_shifts_envelope() {
        let g = grid();
        let psi = source_state();
        let out = apply_fiber(&psi, &FiberSpec::new(5e-9, 0.0)).unwrap();
        for (a, b) in out.intensity().iter().zip(psi.intensity()) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
        let before = psi.to_time().bin_probabilities();
        let after = out.to_time().bin_probabilities();
        // 5 ns is 2.5 samples: compare means instead of bins
        let mean = |p: &[f64]| -> f64 { p.iter().enumerate().map(|(j, v)| g.time(j) * v).sum() };
        assert!((mean(&after) - mean(&before) - 5e-9).abs() < 5e-12);
        let identity = apply_fiber(&psi, &FiberSpec::new(0.0, 0.0)).unwrap();
        assert_eq!(identity, psi);
        assert!((out.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dispersed_channel_peaks_at_its_group_delay() {
        let g = grid();
        let psi = source_state();
        let spec = SpectrometerSpec::uniform(9, 4e6, 1e6, ChannelShape::GaussianPartition);
        let chan = &spectrometer_project(&psi, &spec).unwrap()[6];
        let state = apply_fiber(chan.state.as_ref().unwrap(), &FiberSpec::new(0.0, 5e-14)).unwrap();
        let p = state.to_time().bin_probabilities();
        let peak = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        let sampler = ArrivalSampler::new(&state.to_time()).unwrap();
        let (_, width) = sampler.moments();
        assert!((g.time(peak) - 400e-9).abs() < width, "{}", g.time(peak));
    }

    #[test]
    fn oversized_dispersion_trips_guard() {
        let psi = source_state();
        let err = apply_fiber(&psi, &FiberSpec::new(0.0, 5e-13)).unwrap_err();
        assert!(err.is_numerical_guard());
        // a clean wrap by one full window must not slip through either
        let window = psi.grid().window();
        assert!(apply_fiber(&psi, &FiberSpec::new(window, 0.0)).is_err());
    }

    #[test]
    fn michelson_examples() {
        let psi = source_state();
        let ports = michelson_ports(&psi, 0.0);
        assert_eq!(ports.bright, 1.0);
        let half_period = michelson_ports(&psi, 1e-15);
        assert!(half_period.bright <= 1e-3);
        // 2τ_R rounded to a whole number of optical periods
        let tau = (20e-9 * 5e14f64).round() / 5e14;
        let p = michelson_ports(&psi, tau);
        let expected = 0.5 * (1.0 + (-1f64).exp());
        assert!((p.bright / expected - 1.0).abs() < 1e-2);
        for tau in [3.3e-9, 17.1e-9, 1.2345e-15] {
            let p = michelson_ports(&psi, tau);
            assert_eq!(p.bright + p.dark, 1.0);
        }
    }

    #[test]
    fn detector_examples() {
        let g = grid();
        let mut spike = vec![Complex64::new(0.0, 0.0); g.n_points()];
        let j = g.n_points() / 2 + 100;
        spike[j] = Complex64::new(1.0 / g.d_t().sqrt(), 0.0);
        let phi = SpectralAmplitude::new(g.clone(), vec![Complex64::new(0.0, 0.0); g.n_points()])
            .unwrap()
            .to_time();
        assert!(ArrivalSampler::new(&phi).is_err());
        let phi = TemporalAmplitude::new(g.clone(), spike).unwrap();
        let mut rng = trial_rng(1, 0);
        let t = detect(&phi, &DetectorSpec::default(), &mut rng).unwrap();
        assert!((t - g.time(j)).abs() <= g.d_t());

        let det = DetectorSpec {
            jitter_rms_s: 10e-9,
            ..DetectorSpec::default()
        };
        let sampler = ArrivalSampler::new(&phi).unwrap();
        let m = 20_000;
        let ts: Vec<f64> = (0..m)
            .map(|i| {
                let mut r = trial_rng(3, i);
                let u: f64 = r.random();
                apply_jitter(sampler.sample(u), &det, &mut r)
            })
            .collect();
        let mean = ts.iter().sum::<f64>() / m as f64;
        let sd = (ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        assert!((sd / 10e-9 - 1.0).abs() < 0.05);
    }

    #[test]
    fn exponential_arrival_mean() {
        let phi = source_state().to_time();
        let sampler = ArrivalSampler::new(&phi).unwrap();
        let m = 100_000u64;
        let sum: f64 = (0..m)
            .map(|i| sampler.sample(trial_rng(5, i).random()))
            .sum();
        let mean = sum / m as f64;
        assert!((mean - 10e-9).abs() < 3.0 * 10e-9 / (m as f64).sqrt());
    }

    #[test]
    fn chain_composition_commutes() {
        let g = grid();
        let psi = source_state();
        let spec = SpectrometerSpec::uniform(9, 4e6, 1e6, ChannelShape::GaussianPartition);
        let channel = DiagonalElement::Channel {
            spectrometer: spec,
            k: 6,
        };
        let fiber = DiagonalElement::Fiber(FiberSpec::new(1e-7, 5e-14));
        let narrow = DiagonalElement::Filter(
            g.detunings()
                .map(|d| Complex64::new((-LN_2 * ((d - 8e6) / 0.5e6).powi(2) / 2.0).exp(), 0.0))
                .collect(),
        );
        let orders = [
            vec![channel.clone(), fiber.clone(), narrow.clone()],
            vec![fiber.clone(), narrow.clone(), channel.clone()],
            vec![narrow.clone(), channel.clone(), fiber.clone()],
            vec![fiber.clone(), channel.clone(), narrow.clone()],
        ];
        let reference = compose(&orders[0], &g).unwrap();
        let seq_ref = apply_sequential(&psi, &orders[0]).unwrap();
        for order in &orders[1..] {
            assert_eq!(compose(order, &g).unwrap(), reference);
            let seq = apply_sequential(&psi, order).unwrap();
            assert!(max_abs_diff(seq.values(), seq_ref.values()) < 1e-12);
        }
        let a = apply_filter(&psi, &compose(&orders[0], &g).unwrap().values).unwrap();
        let b = apply_filter(&psi, &compose(&orders[3], &g).unwrap().values).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fibers_add() {
        let g = grid();
        let a = FiberSpec::new(3e-7, 1e-14);
        let b = FiberSpec::new(2e-7, 2e-14);
        let two = compose(&[DiagonalElement::Fiber(a), DiagonalElement::Fiber(b)], &g).unwrap();
        let one = compose(&[DiagonalElement::Fiber(FiberSpec::new(5e-7, 3e-14))], &g).unwrap();
        assert!(max_abs_diff(&two.values, &one.values) < 1e-9);
    }

    #[test]
    fn non_diagonal_chain_is_rejected() {
        let g = grid();
        let chain = [
            ElementSpec::Fiber(FiberSpec::new(0.0, 0.0)),
            ElementSpec::Detector(DetectorSpec::default()),
        ];
        assert_eq!(
            compose_chain(&chain, &g),
            Err(Error::NonDiagonal("detector"))
        );
        let chain = [ElementSpec::Spectrometer(SpectrometerSpec::uniform(
            3,
            1e6,
            1e6,
            ChannelShape::Rectangular,
        ))];
        assert!(matches!(
            compose_chain(&chain, &g),
            Err(Error::NonDiagonal(_))
        ));
    }
}
