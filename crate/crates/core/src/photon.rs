//! The spontaneous-emission photon source and the three photon ontologies.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{FrequencyGrid, PhysicalConstants, SpectralAmplitude};

/// Largest spectral or temporal mass the grid may discard when representing a
/// source.
pub const MAX_TAIL_MASS: f64 = 1e-4;

/// Minimum grid span in units of the source HWHM.
pub const MIN_SPAN_IN_LINEWIDTHS: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineShape {
    #[default]
    Lorentzian,
    Gaussian,
}

/// Two-level emitter: carrier frequency, excited-state lifetime and line shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub nu0_hz: f64,
    pub tau_r_s: f64,
    #[serde(default)]
    pub line_shape: LineShape,
}

impl SourceSpec {
    pub fn lorentzian(nu0_hz: f64, tau_r_s: f64) -> Self {
        Self {
            nu0_hz,
            tau_r_s,
            line_shape: LineShape::Lorentzian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_r_s > 0.0) || !self.tau_r_s.is_finite() {
            return Err(Error::InvalidSource(format!(
                "lifetime must be positive, got {} s",
                self.tau_r_s
            )));
        }
        if !(self.nu0_hz > 0.0) || !self.nu0_hz.is_finite() {
            return Err(Error::InvalidSource(format!(
                "carrier must be positive, got {} Hz",
                self.nu0_hz
            )));
        }
        Ok(())
    }

    /// Natural linewidth (HWHM of the spectral intensity), `1/(4π·τ_R)`.
    pub fn linewidth_hwhm(&self) -> f64 {
        1.0 / (4.0 * PI * self.tau_r_s)
    }

    /// Intensity standard deviation of the Gaussian control line, chosen so
    /// its HWHM equals the natural linewidth.
    pub fn gaussian_sigma(&self) -> f64 {
        self.linewidth_hwhm() / (2.0 * 2f64.ln()).sqrt()
    }
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self::lorentzian(5e14, 10e-9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumPhoton {
    pub state: SpectralAmplitude,
    /// Excitation epoch; arrival times are measured from here.
    pub emit_time: f64,
}

/// Photon with sharp but hidden frequency and emission delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvPhoton {
    pub nu_definite: f64,
    pub t_emit: f64,
}

impl HvPhoton {
    /// Frequency spread carried by a single photon of this model.
    pub fn frequency_spread(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonOntology {
    /// Wavepacket whose coherence is set by the whole trajectory.
    #[serde(alias = "q")]
    Quantum,
    /// Monochromatic photons with hidden sharp frequency and emission time.
    #[serde(rename = "hv", alias = "hidden_variable")]
    HiddenVariable,
    /// Spectrometers re-prepare coherence; timing is inherited from upstream.
    #[serde(rename = "transformer", alias = "coherence_transformer")]
    CoherenceTransformer,
}

impl PhotonOntology {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhotonOntology::Quantum => "quantum",
            PhotonOntology::HiddenVariable => "hv",
            PhotonOntology::CoherenceTransformer => "transformer",
        }
    }
}

impl std::str::FromStr for PhotonOntology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(Self::Quantum),
            "hv" | "hidden-variable" | "hidden_variable" => Ok(Self::HiddenVariable),
            "transformer" | "coherence-transformer" | "coherence_transformer" => {
                Ok(Self::CoherenceTransformer)
            }
            other => Err(Error::InvalidConfig(format!("unknown model '{other}'"))),
        }
    }
}

/// Prepares the single-photon state of `src` on `grid`.
///
/// The Lorentzian line is built as the exact discrete transform of the sampled
/// causal envelope `φ(t_j) ∝ exp(−t_j/(2τ_R))`, `t_j ≥ 0`, which on the grid
/// reads `ψ(δ) ∝ 1/(1 − r·exp(−i·2π·δ·dt))` with `r = exp(−dt/(2τ_R))`. For
/// `δ·dt ≪ 1` this is `1/(γ + i·δ)` up to a constant. The Gaussian control has
/// a flat spectral phase.
pub fn make_quantum_photon(src: &SourceSpec, grid: &FrequencyGrid) -> Result<QuantumPhoton> {
    src.validate()?;
    if ((grid.carrier() - src.nu0_hz) / src.nu0_hz).abs() > 1e-12 {
        return Err(Error::InvalidSource(format!(
            "grid carrier {} Hz differs from source carrier {} Hz",
            grid.carrier(),
            src.nu0_hz
        )));
    }
    let gamma = src.linewidth_hwhm();
    if grid.span() < MIN_SPAN_IN_LINEWIDTHS * gamma {
        return Err(Error::GridTooNarrow(lorentzian_tail_mass(
            gamma,
            grid.span() / 2.0,
        )));
    }
    let tail = truncated_mass(src, grid);
    if tail >= MAX_TAIL_MASS {
        return Err(Error::GridTooNarrow(tail));
    }

    let d_t = grid.d_t();
    let state = match src.line_shape {
        LineShape::Lorentzian => {
            let r = (-d_t / (2.0 * src.tau_r_s)).exp();
            SpectralAmplitude::new(
                grid.clone(),
                (0..grid.n_points())
                    .map(|k| {
                        let rot = Complex64::from_polar(r, -2.0 * PI * grid.phase_cycles(k, d_t));
                        Complex64::new(d_t, 0.0) / (Complex64::new(1.0, 0.0) - rot)
                    })
                    .collect(),
            )?
        }
        LineShape::Gaussian => {
            let sigma = src.gaussian_sigma();
            SpectralAmplitude::from_fn(grid.clone(), |d| {
                Complex64::new((-d * d / (4.0 * sigma * sigma)).exp(), 0.0)
            })?
        }
    };
    Ok(QuantumPhoton {
        state: state.normalized()?,
        emit_time: 0.0,
    })
}

/// Spectral mass of a continuous Lorentzian of HWHM `gamma` beyond `±half_span`.
pub fn lorentzian_tail_mass(gamma: f64, half_span: f64) -> f64 {
    1.0 - 2.0 / PI * (half_span / gamma).atan()
}

/// Mass of the source that falls outside what the grid represents. For the
/// Lorentzian (whose spectrum the grid carries in periodized form) this is the
/// envelope mass beyond the time window; the Gaussian adds its spectral tail.
fn truncated_mass(src: &SourceSpec, grid: &FrequencyGrid) -> f64 {
    let (t_lo, t_hi) = (grid.t_start(), grid.t_end());
    match src.line_shape {
        LineShape::Lorentzian => {
            if t_lo > 0.0 {
                return 1.0;
            }
            (-t_hi / src.tau_r_s).exp()
        }
        LineShape::Gaussian => {
            let sigma = src.gaussian_sigma();
            let sigma_t = 1.0 / (4.0 * PI * sigma);
            let spectral = libm::erfc(grid.span() / 2.0 / (sigma * 2f64.sqrt()));
            let temporal = 0.5 * libm::erfc(-t_lo / (sigma_t * 2f64.sqrt()))
                + 0.5 * libm::erfc(t_hi / (sigma_t * 2f64.sqrt()));
            spectral + temporal
        }
    }
}

/// Inverse CDF of the Lorentzian line: `ν0 + γ·tan(π(u − ½))`.
pub fn lorentzian_inverse_cdf(src: &SourceSpec, u: f64) -> f64 {
    src.nu0_hz + src.linewidth_hwhm() * (PI * (u - 0.5)).tan()
}

/// Draws a hidden-variable photon from the source's ensemble laws.
pub fn sample_hv_photon<R: Rng + ?Sized>(src: &SourceSpec, rng: &mut R) -> HvPhoton {
    match src.line_shape {
        LineShape::Lorentzian => {
            let u: f64 = Open01.sample(rng);
            let t_emit = Exp::new(1.0 / src.tau_r_s)
                .expect("validated lifetime")
                .sample(rng);
            HvPhoton {
                nu_definite: lorentzian_inverse_cdf(src, u),
                t_emit,
            }
        }
        LineShape::Gaussian => {
            let sigma = src.gaussian_sigma();
            let sigma_t = 1.0 / (4.0 * PI * sigma);
            let nu = Normal::new(src.nu0_hz, sigma)
                .expect("finite sigma")
                .sample(rng);
            let t = Normal::new(0.0, sigma_t).expect("finite sigma").sample(rng);
            HvPhoton {
                nu_definite: nu,
                t_emit: t,
            }
        }
    }
}

/// `E = h·ν0`.
pub fn photon_energy(src: &SourceSpec, constants: &PhysicalConstants) -> f64 {
    constants.h * src.nu0_hz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{coherence_time, make_grid, spectral_hwhm, CODATA};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_grid() -> FrequencyGrid {
        make_grid(500e6, 32768, 5e14).unwrap().centered()
    }

    #[test]
    fn lorentzian_source_satisfies_lifetime_relation() {
        let src = SourceSpec::default();
        let photon = make_quantum_photon(&src, &default_grid()).unwrap();
        assert!(photon.state.is_normalized());
        let gamma = src.linewidth_hwhm();
        assert!((gamma - 7.9577e6).abs() < 1e2);
        let w = spectral_hwhm(&photon.state).unwrap();
        assert!((w.hwhm / gamma - 1.0).abs() < 5e-3, "{}", w.hwhm);
        let tc = coherence_time(&photon.state).unwrap();
        assert!((tc / 10e-9 - 1.0).abs() < 1e-2, "{tc}");
        let product = w.hwhm * tc;
        assert!((product * 4.0 * PI - 1.0).abs() < 0.02);
    }

    #[test]
    fn lorentzian_envelope_is_one_sided_exponential() {
        let src = SourceSpec::default();
        let grid = default_grid();
        let photon = make_quantum_photon(&src, &grid).unwrap();
        let p = photon.state.to_time().bin_probabilities();
        let zero = (-grid.t_offset()) as usize;
        assert!(p[..zero].iter().sum::<f64>() < 1e-12);
        // intensity falls by 1/e after τ_R = 5 samples of 2 ns
        let ratio = p[zero + 5] / p[zero];
        assert!((ratio - (-1f64).exp()).abs() < 1e-2 * (-1f64).exp());
    }

    #[test]
    fn gaussian_source_matches_linewidth() {
        let src = SourceSpec {
            line_shape: LineShape::Gaussian,
            ..SourceSpec::default()
        };
        let photon = make_quantum_photon(&src, &default_grid()).unwrap();
        let w = spectral_hwhm(&photon.state).unwrap();
        assert!((w.hwhm / src.linewidth_hwhm() - 1.0).abs() < 5e-3);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let src = SourceSpec::default();
        let grid = make_grid(100e6, 1024, 5e14).unwrap();
        assert!(matches!(
            make_quantum_photon(&src, &grid),
            Err(Error::GridTooNarrow(_))
        ));
        // window too short for the exponential envelope
        let grid = make_grid(1024e6, 64, 5e14).unwrap();
        assert!(matches!(
            make_quantum_photon(&src, &grid),
            Err(Error::GridTooNarrow(_))
        ));
        let grid = make_grid(500e6, 4096, 4e14).unwrap();
        assert!(matches!(
            make_quantum_photon(&src, &grid),
            Err(Error::InvalidSource(_))
        ));
    }

    #[test]
    fn inverse_cdf_median_is_carrier() {
        let src = SourceSpec::default();
        assert_eq!(lorentzian_inverse_cdf(&src, 0.5), src.nu0_hz);
    }

    #[test]
    fn hv_frequency_width_matches_line() {
        let src = SourceSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 100_000;
        let mut dev: Vec<f64> = (0..m)
            .map(|_| (sample_hv_photon(&src, &mut rng).nu_definite - src.nu0_hz).abs())
            .collect();
        dev.sort_by(f64::total_cmp);
        // median absolute deviation of a Cauchy law equals its HWHM
        let mad = dev[m / 2];
        assert!((mad / src.linewidth_hwhm() - 1.0).abs() < 0.03, "{mad}");
    }

    #[test]
    fn photon_energy_examples() {
        let src = SourceSpec::default();
        let e = photon_energy(&src, &CODATA);
        assert!((e / 3.313e-19 - 1.0).abs() < 1e-4);
        let zero = SourceSpec { nu0_hz: 0.0, ..src };
        assert_eq!(photon_energy(&zero, &CODATA), 0.0);
        let double = SourceSpec {
            nu0_hz: 1e15,
            ..src
        };
        assert_eq!(photon_energy(&double, &CODATA), 2.0 * e);
    }

    #[test]
    fn hv_photon_carries_no_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_hv_photon(&SourceSpec::default(), &mut rng);
        assert_eq!(p.frequency_spread(), 0.0);
        assert!(p.t_emit >= 0.0);
    }
}
