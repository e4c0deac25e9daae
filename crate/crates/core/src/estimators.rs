//! Observables computed from states and click records: linewidths, coherence
//! times, uncertainty products, arrival statistics and the slope test that
//! separates the photon ontologies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::elements::{ChannelShape, ChannelTag, SpectrometerSpec};
use crate::error::{Error, Result};
use crate::spectral::{g1, hwhm, SpectralAmplitude};

/// `1/(4π)`, the Fourier limit of `Δν·Δt` for HWHM and 1/e conventions.
pub const HUP_LIMIT: f64 = 1.0 / (4.0 * PI);
/// Relative slack granted to estimated products.
pub const HUP_SLACK: f64 = 0.02;
/// Smallest number of clicks for which a channel enters the regression.
pub const MIN_CLICKS: usize = 30;
/// Smallest number of usable channels for the regression.
pub const MIN_CHANNELS: usize = 3;
/// Decision threshold on `|z|`.
pub const VERDICT_Z: f64 = 5.0;
/// Smallest total count accepted by [`histogram_spectrum`].
pub const MIN_HISTOGRAM_COUNTS: u64 = 1000;

/// `|g¹(τ)|` at each delay.
pub fn visibility_scan(psi: &SpectralAmplitude, taus: &[f64]) -> Vec<(f64, f64)> {
    taus.iter().map(|&tau| (tau, g1(psi, tau).norm())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HupCheck {
    pub product: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `Δν·Δt` checked against `(1 − 0.02)/(4π)`.
pub fn hup_product(dnu: f64, t_char: f64) -> HupCheck {
    let product = dnu * t_char;
    let bound = HUP_LIMIT * (1.0 - HUP_SLACK);
    HupCheck {
        product,
        bound,
        pass: product >= bound,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceReport {
    pub nu0_hat: f64,
    /// HWHM in Hz.
    pub dnu_hat: f64,
    pub tc_hat: f64,
    pub hup_product: f64,
    pub hup_pass: bool,
    pub lc_hat: f64,
}

/// Michelson output at one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub tau_s: f64,
    pub visibility: f64,
    /// Bright-port click probability.
    pub p_click: f64,
}

/// Per-output summary. Width fields are absent when the run did not measure
/// them or they could not be resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport {
    pub k: usize,
    pub channel: ChannelTag,
    /// Channel bounded on both sides. The outermost channels of a bank
    /// collect a whole tail of the line and have no meaningful HWHM.
    pub band_pass: bool,
    pub p_hat: f64,
    pub n_clicks: u64,
    pub centroid_hz: f64,
    pub dnu_prime: Option<f64>,
    pub tc_prime: Option<f64>,
    pub hup: Option<HupCheck>,
    pub mean_t: Option<f64>,
    pub std_t: Option<f64>,
    pub stderr_t: Option<f64>,
    /// Enough clicks to enter the regression.
    pub usable: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scan: Vec<ScanPoint>,
}

/// Summary statistics of one channel's click times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrivalStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

/// Mean, sample standard deviation and standard error of click times. The
/// result does not depend on the order of `times`.
pub fn channel_stats(times: &[f64]) -> Result<ArrivalStats> {
    if times.len() < MIN_CLICKS {
        return Err(Error::InsufficientClicks {
            got: times.len(),
            need: MIN_CLICKS,
        });
    }
    if let Some(i) = times.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let origin = sorted[0];
    let mean = origin + sorted.iter().map(|t| t - origin).sum::<f64>() / n;
    let ss: f64 = sorted.iter().map(|t| (t - mean).powi(2)).sum();
    let std = (ss / (n - 1.0)).sqrt();
    Ok(ArrivalStats {
        n: sorted.len(),
        mean,
        std,
        stderr: std / n.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    QuantumLike,
    TransformerLike,
    Inconclusive,
}

/// One regression input: channel abscissa in Hz and its mean arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionPoint {
    pub k: usize,
    pub x_hz: f64,
    pub mean_t: f64,
    pub stderr_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminationReport {
    pub slope_hat: f64,
    pub slope_stderr: f64,
    pub intercept_hat: f64,
    pub z_vs_zero: f64,
    pub z_vs_d: f64,
    pub dispersion: f64,
    pub n_channels: usize,
    /// Arrival-time separation the dispersion produces across one channel
    /// spacing, when known.
    pub delta_t_fiber: Option<f64>,
    pub weak_separation: bool,
    pub verdict: Verdict,
}

impl DiscriminationReport {
    /// Records the expected dispersive separation and forces an inconclusive
    /// verdict when it is below ten source lifetimes.
    pub fn with_separation(mut self, delta_t_fiber: f64, tau_r: f64) -> Self {
        self.delta_t_fiber = Some(delta_t_fiber);
        self.weak_separation = delta_t_fiber < 10.0 * tau_r;
        if self.weak_separation {
            self.verdict = Verdict::Inconclusive;
        }
        self
    }
}

fn verdict(z_vs_zero: f64, z_vs_d: f64) -> Verdict {
    let zero_far = z_vs_zero.abs() >= VERDICT_Z;
    let d_far = z_vs_d.abs() >= VERDICT_Z;
    match (zero_far, d_far) {
        (true, false) => Verdict::QuantumLike,
        (false, true) => Verdict::TransformerLike,
        _ => Verdict::Inconclusive,
    }
}

/// Weighted least-squares fit of mean arrival time against channel
/// detuning, compared with a zero slope and with the fiber dispersion `d`.
pub fn arrival_regression(points: &[RegressionPoint], d: f64) -> Result<DiscriminationReport> {
    if points.len() < MIN_CHANNELS {
        return Err(Error::TooFewChannels(points.len()));
    }
    if points
        .iter()
        .any(|p| !(p.stderr_t > 0.0) || !p.stderr_t.is_finite())
    {
        return Err(Error::DegenerateDesign("channel with zero standard error"));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.x_hz
            .total_cmp(&b.x_hz)
            .then(a.mean_t.total_cmp(&b.mean_t))
            .then(a.stderr_t.total_cmp(&b.stderr_t))
    });
    // centre both axes on the first point to keep the sums well conditioned
    let x0 = sorted[0].x_hz;
    let y0 = sorted[0].mean_t;
    let (mut sw, mut swx, mut swy) = (0.0, 0.0, 0.0);
    for p in &sorted {
        let w = p.stderr_t.powi(-2);
        sw += w;
        swx += w * (p.x_hz - x0);
        swy += w * (p.mean_t - y0);
    }
    let xbar = swx / sw;
    let ybar = swy / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in &sorted {
        let w = p.stderr_t.powi(-2);
        let dx = p.x_hz - x0 - xbar;
        sxx += w * dx * dx;
        sxy += w * dx * (p.mean_t - y0 - ybar);
    }
    let spread = sorted.last().map(|p| p.x_hz).unwrap_or(x0) - x0;
    if !(spread > 0.0) || !(sxx > 0.0) {
        return Err(Error::DegenerateDesign("all channel centers equal"));
    }
    let slope = sxy / sxx;
    let slope_stderr = sxx.sqrt().recip();
    let intercept = y0 + ybar - slope * (x0 + xbar);
    let z_vs_zero = slope / slope_stderr;
    let z_vs_d = (slope - d) / slope_stderr;
    Ok(DiscriminationReport {
        slope_hat: slope,
        slope_stderr,
        intercept_hat: intercept,
        z_vs_zero,
        z_vs_d,
        dispersion: d,
        n_channels: sorted.len(),
        delta_t_fiber: None,
        weak_separation: false,
        verdict: verdict(z_vs_zero, z_vs_d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramSpectrum {
    pub nu0_hat: f64,
    /// HWHM of the raw channel histogram in Hz.
    pub dnu_hat: f64,
    /// Channel HWHM, reported alongside since no deconvolution is applied.
    pub channel_hwhm: f64,
    /// Set when all counts fell in one channel: `dnu_hat` is then only an
    /// upper bound equal to the channel HWHM.
    pub upper_bound: bool,
}

/// Center and HWHM of a channel-count histogram from a spectrometer with
/// uniformly spaced channels around carrier `nu0`.
pub fn histogram_spectrum(
    counts: &[u64],
    spec: &SpectrometerSpec,
    nu0: f64,
) -> Result<HistogramSpectrum> {
    spec.validate()?;
    if counts.len() != spec.n_channels() {
        return Err(Error::LengthMismatch {
            expected: spec.n_channels(),
            got: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total < MIN_HISTOGRAM_COUNTS {
        return Err(Error::InsufficientCounts {
            got: total,
            need: MIN_HISTOGRAM_COUNTS,
        });
    }
    let centroid = counts
        .iter()
        .zip(&spec.centers_hz)
        .map(|(&c, &x)| c as f64 * x)
        .sum::<f64>()
        / total as f64;
    let channel_hwhm = match spec.shape {
        ChannelShape::GaussianPartition => spec.channel_hwhm_hz,
        ChannelShape::Rectangular => spacing(spec) / 2.0,
    };
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    if occupied == 1 {
        return Ok(HistogramSpectrum {
            nu0_hat: nu0 + centroid,
            dnu_hat: channel_hwhm,
            channel_hwhm,
            upper_bound: true,
        });
    }
    let profile: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let width = hwhm(&profile, spacing(spec))?;
    Ok(HistogramSpectrum {
        nu0_hat: nu0 + centroid,
        dnu_hat: width.hwhm,
        channel_hwhm,
        upper_bound: false,
    })
}

fn spacing(spec: &SpectrometerSpec) -> f64 {
    let c = &spec.centers_hz;
    if c.len() < 2 {
        return 2.0 * spec.channel_hwhm_hz;
    }
    (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::spectrometer_project;
    use crate::photon::{make_quantum_photon, SourceSpec};
    use crate::sampling::trial_rng;
    use crate::spectral::{make_grid, FrequencyGrid};
    use rand::Rng;
    use rand_distr::{Distribution, Exp};

    fn grid() -> FrequencyGrid {
        make_grid(500e6, 32768, 5e14).unwrap().centered()
    }

    #[test]
    fn lorentzian_visibility() {
        let psi = make_quantum_photon(&SourceSpec::default(), &grid())
            .unwrap()
            .state;
        let v = visibility_scan(&psi, &[0.0, 20e-9]);
        assert_eq!(v[0].1, 1.0);
        assert!((v[1].1 - (-1f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn hup_examples() {
        let h = hup_product(7.9577e6, 10e-9);
        assert!((h.product - 0.0796).abs() < 1e-4);
        assert!(h.pass);
        let h = hup_product(0.0, 1.0);
        assert_eq!(h.product, 0.0);
        assert!(!h.pass);
    }

    #[test]
    fn stats_of_identical_clicks() {
        let s = channel_stats(&[3.5e-7; 40]).unwrap();
        assert_eq!(s.mean, 3.5e-7);
        assert_eq!(s.stderr, 0.0);
        assert!(matches!(
            channel_stats(&[0.0; 29]),
            Err(Error::InsufficientClicks { got: 29, need: 30 })
        ));
    }

    #[test]
    fn exponential_clicks() {
        let tau = 10e-9;
        let mut rng = trial_rng(11, 0);
        let exp = Exp::new(1.0 / tau).unwrap();
        let times: Vec<f64> = (0..10_000).map(|_| exp.sample(&mut rng)).collect();
        let s = channel_stats(&times).unwrap();
        assert!((s.mean - tau).abs() < 3.0 * tau / 100.0);
        let mut reversed = times.clone();
        reversed.reverse();
        assert_eq!(channel_stats(&reversed).unwrap(), s);
    }

    fn points(f: impl Fn(f64) -> f64, noise: f64) -> Vec<RegressionPoint> {
        (0..9)
            .map(|k| {
                let x = (k as f64 - 4.0) * 4e6;
                RegressionPoint {
                    k,
                    x_hz: x,
                    mean_t: f(x),
                    stderr_t: noise,
                }
            })
            .collect()
    }

    #[test]
    fn regression_recovers_planted_slope() {
        let d = 5e-14;
        let mut rng = trial_rng(2, 0);
        let mut pts = points(|x| 1e-7 + d * x, 1e-10);
        for p in &mut pts {
            p.mean_t += 1e-10 * (rng.random::<f64>() - 0.5);
        }
        let r = arrival_regression(&pts, d).unwrap();
        assert!((r.slope_hat - d).abs() < 3.0 * r.slope_stderr);
        assert_eq!(r.verdict, Verdict::QuantumLike);
    }

    #[test]
    fn flat_arrivals_look_transformer_like() {
        let r = arrival_regression(&points(|_| 2e-8, 1e-10), 5e-14).unwrap();
        assert_eq!(r.slope_hat, 0.0);
        assert_eq!(r.verdict, Verdict::TransformerLike);
    }

    #[test]
    fn regression_preconditions() {
        let pts = points(|_| 0.0, 1e-9);
        assert_eq!(
            arrival_regression(&pts[..2], 1.0),
            Err(Error::TooFewChannels(2))
        );
        let same: Vec<_> = pts
            .iter()
            .map(|p| RegressionPoint { x_hz: 1e6, ..*p })
            .collect();
        assert!(matches!(
            arrival_regression(&same, 1.0),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn weak_separation_is_inconclusive() {
        let r = arrival_regression(&points(|x| 5e-14 * x, 1e-10), 5e-14)
            .unwrap()
            .with_separation(5e-14 * 1e6, 10e-9);
        assert!(r.weak_separation);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn histogram_of_lorentzian_probabilities() {
        let g = grid();
        let src = SourceSpec::default();
        let gamma = src.linewidth_hwhm();
        let psi = make_quantum_photon(&src, &g).unwrap().state;
        let spec =
            SpectrometerSpec::uniform(64, gamma / 4.0, gamma / 8.0, ChannelShape::Rectangular);
        let counts: Vec<u64> = spectrometer_project(&psi, &spec)
            .unwrap()
            .iter()
            .map(|c| (c.probability * 1e9).round() as u64)
            .collect();
        let h = histogram_spectrum(&counts, &spec, 5e14).unwrap();
        assert!(
            (h.dnu_hat / gamma - 1.0).abs() < 0.1,
            "{}",
            h.dnu_hat / gamma
        );
        assert!((h.nu0_hat - 5e14).abs() <= gamma / 8.0);
    }

    #[test]
    fn histogram_edge_cases() {
        let spec = SpectrometerSpec::uniform(5, 2e6, 1e6, ChannelShape::GaussianPartition);
        let h = histogram_spectrum(&[0, 0, 5000, 0, 0], &spec, 5e14).unwrap();
        assert!(h.upper_bound);
        assert_eq!(h.dnu_hat, 1e6);
        assert_eq!(h.nu0_hat, 5e14);
        let h = histogram_spectrum(&[100, 400, 1000, 400, 100], &spec, 5e14).unwrap();
        assert!((h.nu0_hat - 5e14).abs() <= 1e6);
        assert!(!h.upper_bound);
        assert!(matches!(
            histogram_spectrum(&[1, 2, 3, 2, 1], &spec, 5e14),
            Err(Error::InsufficientCounts { .. })
        ));
    }
}
