use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::elements::{ChannelShape, DetectorSpec, ElementSpec, FiberSpec, SpectrometerSpec};
use crate::error::{Error, Result};
use crate::photon::{make_quantum_photon, PhotonOntology, SourceSpec};
use crate::spectral::{make_grid, FrequencyGrid, SpectralAmplitude};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Linewidth and coherence time of the bare source.
    #[serde(rename = "1")]
    Source,
    /// Coherence of photons behind a spectrometer channel.
    #[serde(rename = "2")]
    Filtered,
    /// Channel-resolved arrival times behind a dispersive fiber.
    #[serde(rename = "3")]
    Dispersion,
    /// Spectrometer placed before versus after the fiber.
    #[serde(rename = "delayed")]
    DelayedChoice,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Source => "1",
            ExperimentKind::Filtered => "2",
            ExperimentKind::Dispersion => "3",
            ExperimentKind::DelayedChoice => "delayed",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(ExperimentKind::Source),
            "2" => Ok(ExperimentKind::Filtered),
            "3" => Ok(ExperimentKind::Dispersion),
            "delayed" => Ok(ExperimentKind::DelayedChoice),
            other => Err(Error::InvalidConfig(format!(
                "unknown experiment {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Analytic probabilities and moments, no sampling.
    #[default]
    Expectation,
    MonteCarlo,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Expectation => "expectation",
            Mode::MonteCarlo => "monte_carlo",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expectation" => Ok(Mode::Expectation),
            "monte-carlo" | "monte_carlo" => Ok(Mode::MonteCarlo),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub span_hz: f64,
    pub n_points: usize,
    /// Start of the time window; `None` centers the window on zero.
    #[serde(default)]
    pub t_start_s: Option<f64>,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            span_hz: 500e6,
            n_points: 32768,
            t_start_s: None,
        }
    }
}

impl GridParams {
    pub fn build(&self, carrier: f64) -> Result<FrequencyGrid> {
        let grid = make_grid(self.span_hz, self.n_points, carrier)?;
        Ok(match self.t_start_s {
            Some(t0) if t0.is_finite() => grid.with_time_start(t0),
            Some(t0) => return Err(Error::InvalidConfig(format!("time window start {t0}"))),
            None => grid.centered(),
        })
    }
}

/// Michelson delay scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    /// Largest delay; `None` picks eight nominal coherence times.
    #[serde(default)]
    pub tau_max_s: Option<f64>,
    pub points: usize,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            tau_max_s: None,
            points: 65,
        }
    }
}

impl ScanSpec {
    /// Delays from zero to the maximum, each rounded to a whole number of
    /// carrier periods so that every point sits on a fringe maximum.
    pub fn delays(&self, nominal_hwhm: f64, carrier: f64) -> Vec<f64> {
        let tau_max = self
            .tau_max_s
            .unwrap_or(8.0 / (4.0 * std::f64::consts::PI * nominal_hwhm));
        let n = self.points.max(2);
        (0..n)
            .map(|i| {
                let tau = tau_max * i as f64 / (n - 1) as f64;
                (tau * carrier).round() / carrier
            })
            .collect()
    }
}

/// Fully resolved description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub ontology: PhotonOntology,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    pub source: SourceSpec,
    pub grid: GridParams,
    pub scan: ScanSpec,
    pub elements: Vec<ElementSpec>,
}

pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 20_240_917;
pub const DEFAULT_CHANNELS: usize = 9;
pub const DEFAULT_CHANNEL_SPACING_HZ: f64 = 4e6;
pub const DEFAULT_CHANNEL_HWHM_HZ: f64 = 1e6;
pub const DEFAULT_DISPERSION_S_PER_HZ: f64 = 5e-14;

impl ExperimentConfig {
    /// Default arrangement of each experiment.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        Self::defaults_for(experiment, SourceSpec::default())
    }

    /// Default arrangement around a given source; the experiment-2 filter
    /// bank scales with its linewidth.
    pub fn defaults_for(experiment: ExperimentKind, source: SourceSpec) -> Self {
        let elements = match experiment {
            ExperimentKind::Source => vec![],
            ExperimentKind::Filtered => {
                let w = source.linewidth_hwhm() / 8.0;
                // Spacing equal to the width keeps interior responses close
                // to the raw Gaussian.
                vec![ElementSpec::Spectrometer(SpectrometerSpec::uniform(
                    DEFAULT_CHANNELS,
                    w,
                    w,
                    ChannelShape::GaussianPartition,
                ))]
            }
            ExperimentKind::Dispersion | ExperimentKind::DelayedChoice => vec![
                ElementSpec::Fiber(FiberSpec::new(0.0, DEFAULT_DISPERSION_S_PER_HZ)),
                ElementSpec::Spectrometer(SpectrometerSpec::uniform(
                    DEFAULT_CHANNELS,
                    DEFAULT_CHANNEL_SPACING_HZ,
                    DEFAULT_CHANNEL_HWHM_HZ,
                    ChannelShape::GaussianPartition,
                )),
                ElementSpec::Detector(DetectorSpec::default()),
            ],
        };
        Self {
            experiment,
            ontology: PhotonOntology::Quantum,
            mode: Mode::Expectation,
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            source,
            grid: GridParams::default(),
            scan: ScanSpec::default(),
            elements,
        }
    }

    pub fn build_grid(&self) -> Result<FrequencyGrid> {
        self.grid.build(self.source.nu0_hz)
    }

    pub fn source_state(&self) -> Result<SpectralAmplitude> {
        Ok(make_quantum_photon(&self.source, &self.build_grid()?)?.state)
    }

    /// Checks everything that can be checked before any physics runs.
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.scan.points < 2 {
            return Err(Error::InvalidConfig(
                "a scan needs at least two delays".into(),
            ));
        }
        if let Some(t) = self.scan.tau_max_s {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidConfig(format!("scan maximum delay {t}")));
            }
        }
        self.source.validate()?;
        let grid = self.build_grid()?;
        validate_chain(&self.elements, &grid, &self.source)?;
        let count = |name: &str| self.elements.iter().filter(|e| e.name() == name).count();
        let (spectrometers, fibers, michelsons) =
            (count("spectrometer"), count("fiber"), count("michelson"));
        let shape_ok = match self.experiment {
            ExperimentKind::Source => spectrometers + fibers + michelsons == 0,
            ExperimentKind::Filtered => spectrometers == 1 && fibers + michelsons == 0,
            ExperimentKind::Dispersion | ExperimentKind::DelayedChoice => {
                spectrometers == 1 && fibers >= 1 && michelsons == 0
            }
        };
        if !shape_ok {
            return Err(Error::InvalidConfig(format!(
                "element chain does not fit experiment {}",
                self.experiment
            )));
        }
        Ok(())
    }

    /// Detector of the chain, or an ideal jitter-free one.
    pub fn detector(&self) -> DetectorSpec {
        self.elements
            .iter()
            .find_map(|e| match e {
                ElementSpec::Detector(d) => Some(*d),
                _ => None,
            })
            .unwrap_or_default()
    }
}

/// Per-element checks plus the window check for all fibers combined.
pub fn validate_chain(
    elements: &[ElementSpec],
    grid: &FrequencyGrid,
    src: &SourceSpec,
) -> Result<()> {
    for (i, e) in elements.iter().enumerate() {
        match e {
            ElementSpec::Spectrometer(s) => s.check_partition(grid)?,
            ElementSpec::Fiber(_) => {}
            ElementSpec::Michelson(m) => m.validate(grid)?,
            ElementSpec::Detector(d) => {
                d.validate()?;
                if i + 1 != elements.len() {
                    return Err(Error::InvalidConfig(
                        "the detector must be the last element".into(),
                    ));
                }
            }
        }
    }
    total_fiber(elements).validate_window(grid, src.tau_r_s)
}

/// Sum of all fibers in the chain, accumulated in a fixed order.
pub fn total_fiber(elements: &[ElementSpec]) -> FiberSpec {
    let mut fibers: Vec<FiberSpec> = elements
        .iter()
        .filter_map(|e| match e {
            ElementSpec::Fiber(f) => Some(*f),
            _ => None,
        })
        .collect();
    fibers.sort_by(|a, b| {
        a.base_delay_s
            .total_cmp(&b.base_delay_s)
            .then(a.dispersion_s_per_hz.total_cmp(&b.dispersion_s_per_hz))
    });
    fibers.iter().fold(FiberSpec::new(0.0, 0.0), |acc, f| {
        FiberSpec::new(
            acc.base_delay_s + f.base_delay_s,
            acc.dispersion_s_per_hz + f.dispersion_s_per_hz,
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in [
            ExperimentKind::Source,
            ExperimentKind::Filtered,
            ExperimentKind::Dispersion,
            ExperimentKind::DelayedChoice,
        ] {
            ExperimentConfig::defaults(kind).validate().unwrap();
            assert_eq!(kind.as_str().parse::<ExperimentKind>().unwrap(), kind);
        }
    }

    #[test]
    fn misplaced_detector_is_rejected() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Dispersion);
        cfg.elements.swap(1, 2);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn oversized_dispersion_overflows() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Dispersion);
        cfg.elements[0] = ElementSpec::Fiber(FiberSpec::new(0.0, 5e-13));
        assert!(cfg.validate().unwrap_err().is_numerical_guard());
    }

    #[test]
    fn scan_delays_sit_on_fringe_maxima() {
        let d = ScanSpec::default().delays(7.9577e6, 5e14);
        assert_eq!(d.len(), 65);
        assert_eq!(d[0], 0.0);
        assert!((d[64] - 80e-9).abs() < 1e-11);
        for tau in d {
            let cycles = tau * 5e14;
            assert!((cycles - cycles.round()).abs() < 1e-6);
        }
    }
}
