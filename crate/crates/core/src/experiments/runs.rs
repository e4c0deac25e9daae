use std::time::Instant;

use rand::Rng;

use crate::elements::{
    michelson_ports, ChannelShape, ClickRecord, ElementSpec, MichelsonSpec, Port, SpectrometerSpec,
};
use crate::error::{Error, Result};
use crate::estimators::{
    arrival_regression, channel_stats, histogram_spectrum, hup_product, ChannelReport,
    DiscriminationReport, HupCheck, RegressionPoint, ScanPoint, SourceReport, MIN_CLICKS,
};
use crate::photon::PhotonOntology;
use crate::sampling::{cumulative, sample_index, trial_rng, RngProvenance};
use crate::spectral::{coherence_length, coherence_time, spectral_hwhm, SpectralAmplitude, CODATA};

use super::chain::{Chain, Draw, Executor, Leaf};
use super::config::{validate_chain, ExperimentConfig, ExperimentKind, Mode};
use super::report::{
    to_json, ChainResults, ClickSet, DelayedResults, FilteredResults, HvDiagnostics, Results,
    RunReport, SourceResults,
};

/// Number of bins of the fine spectrometer used to measure linewidths.
pub const FINE_BINS: usize = 64;

/// Runs the experiment selected in `cfg`.
pub fn run(cfg: &ExperimentConfig, exec: &Executor) -> Result<RunReport> {
    match cfg.experiment {
        ExperimentKind::Source => run_experiment_1(cfg, exec),
        ExperimentKind::Filtered => run_experiment_2(cfg, exec),
        ExperimentKind::Dispersion => run_experiment_3(cfg, exec),
        ExperimentKind::DelayedChoice => run_delayed_choice(cfg, exec),
    }
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.experiment != kind {
        return Err(Error::InvalidConfig(format!(
            "configuration describes experiment {}, not {kind}",
            cfg.experiment
        )));
    }
    cfg.validate()
}

fn finish(
    cfg: &ExperimentConfig,
    start: Instant,
    results: Results,
    click_sets: Vec<ClickSet>,
) -> RunReport {
    RunReport {
        config: cfg.clone(),
        results,
        rng: RngProvenance::new(cfg.seed),
        click_sets,
        wall_clock_s: start.elapsed().as_secs_f64(),
    }
}

/// Linewidth and coherence time of the bare source.
pub fn run_experiment_1(cfg: &ExperimentConfig, exec: &Executor) -> Result<RunReport> {
    expect_kind(cfg, ExperimentKind::Source)?;
    let start = Instant::now();
    let chain = Chain::new(
        &cfg.source,
        cfg.source_state()?,
        &cfg.elements,
        cfg.ontology,
    )?;
    let (measured, clicks, hv_curve) = measure_leaves(cfg, &chain, exec)?;
    let m = measured.into_iter().next().expect("direct leaf");
    let mut flags = m.flags.clone();
    let insufficient = m.dnu.is_none() || m.tc.is_none();
    if insufficient && cfg.mode == Mode::MonteCarlo {
        flags.push("insufficient statistics for linewidth or coherence estimate".into());
    }
    let results = SourceResults {
        ontology: cfg.ontology,
        mode: cfg.mode,
        source: m.source_report(cfg.source.nu0_hz)?,
        nominal_linewidth_hz: cfg.source.linewidth_hwhm(),
        nominal_lifetime_s: cfg.source.tau_r_s,
        scan: m.scan,
        clicks: clicks.len() as u64,
        insufficient_statistics: insufficient,
        hv: hv_diagnostics(cfg, hv_curve),
        flags,
    };
    Ok(finish(
        cfg,
        start,
        Results::Source(results),
        vec![ClickSet {
            label: None,
            clicks,
        }],
    ))
}

/// Coherence of the photons behind each spectrometer channel.
pub fn run_experiment_2(cfg: &ExperimentConfig, exec: &Executor) -> Result<RunReport> {
    expect_kind(cfg, ExperimentKind::Filtered)?;
    let start = Instant::now();
    let psi = cfg.source_state()?;
    let chain = Chain::new(&cfg.source, psi.clone(), &cfg.elements, cfg.ontology)?;
    let (measured, clicks, _) = measure_leaves(cfg, &chain, exec)?;
    let reference_scan = ScanSpecFor::new(cfg, &chain, None);
    let reference =
        measure_expectation(&psi, &reference_scan.delays)?.source_report(cfg.source.nu0_hz)?;
    let mut flags = Vec::new();
    let stats = leaf_statistics(cfg, &chain, &clicks);
    let channels: Vec<ChannelReport> = chain
        .leaves
        .iter()
        .zip(measured)
        .zip(stats)
        .enumerate()
        .map(|(i, ((leaf, m), st))| {
            flags.extend(m.flags.iter().map(|f| format!("channel {}: {f}", leaf.tag)));
            let hup = match (m.dnu, m.tc) {
                (Some(d), Some(t)) => Some(hup_product(d, t)),
                _ => None,
            };
            ChannelReport {
                k: leaf.tag.channel().unwrap_or(i),
                channel: leaf.tag.clone(),
                centroid_hz: leaf.centroid_hz,
                dnu_prime: m.dnu,
                tc_prime: m.tc,
                hup,
                scan: m.scan,
                ..st
            }
        })
        .collect();
    let results = FilteredResults {
        ontology: cfg.ontology,
        mode: cfg.mode,
        reference,
        channels,
        empty_channels: chain.empty.iter().map(|(t, _)| t.to_string()).collect(),
        clicks: clicks.len() as u64,
        hv: hv_diagnostics(cfg, None),
        flags,
    };
    Ok(finish(
        cfg,
        start,
        Results::Filtered(results),
        vec![ClickSet {
            label: None,
            clicks,
        }],
    ))
}

/// Channel-resolved arrival times behind a dispersive fiber.
pub fn run_experiment_3(cfg: &ExperimentConfig, exec: &Executor) -> Result<RunReport> {
    expect_kind(cfg, ExperimentKind::Dispersion)?;
    let start = Instant::now();
    let (results, clicks) = run_chain(cfg, &cfg.elements, exec, true)?;
    Ok(finish(
        cfg,
        start,
        Results::Dispersion(results),
        vec![ClickSet {
            label: None,
            clicks,
        }],
    ))
}

/// Runs the chain of `cfg` twice, once with the spectrometer ahead of the
/// fibers and once behind them, with identical random streams.
pub fn run_delayed_choice(cfg: &ExperimentConfig, exec: &Executor) -> Result<RunReport> {
    expect_kind(cfg, ExperimentKind::DelayedChoice)?;
    let start = Instant::now();
    let spectrometer: Vec<ElementSpec> = cfg
        .elements
        .iter()
        .filter(|e| matches!(e, ElementSpec::Spectrometer(_)))
        .cloned()
        .collect();
    let fibers: Vec<ElementSpec> = cfg
        .elements
        .iter()
        .filter(|e| matches!(e, ElementSpec::Fiber(_)))
        .cloned()
        .collect();
    let detector: Vec<ElementSpec> = cfg
        .elements
        .iter()
        .filter(|e| matches!(e, ElementSpec::Detector(_)))
        .cloned()
        .collect();
    let early: Vec<ElementSpec> = [&spectrometer[..], &fibers, &detector].concat();
    let late: Vec<ElementSpec> = [&fibers[..], &spectrometer, &detector].concat();
    let (early_results, early_clicks) = run_chain(cfg, &early, exec, true)?;
    let (late_results, late_clicks) = run_chain(cfg, &late, exec, true)?;
    let results = compare(early_results, late_results);
    Ok(finish(
        cfg,
        start,
        Results::DelayedChoice(results),
        vec![
            ClickSet {
                label: Some("early"),
                clicks: early_clicks,
            },
            ClickSet {
                label: Some("late"),
                clicks: late_clicks,
            },
        ],
    ))
}

fn compare(early: ChainResults, late: ChainResults) -> DelayedResults {
    let identical = to_json(&early) == to_json(&late);
    let slope_difference_z = match (&early.discrimination, &late.discrimination) {
        (Some(a), Some(b)) => {
            let se = (a.slope_stderr.powi(2) + b.slope_stderr.powi(2)).sqrt();
            let diff = a.slope_hat - b.slope_hat;
            Some(if diff == 0.0 { 0.0 } else { diff / se })
        }
        _ => None,
    };
    DelayedResults {
        early: Box::new(early),
        late: Box::new(late),
        identical,
        slope_difference_z,
    }
}

/// Two runs whose configurations differ only in the order of elements.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingPair {
    pub first: RunReport,
    pub second: RunReport,
    pub comparison: DelayedResults,
}

/// Runs two arrangements of the same elements with the same seed. Fails
/// unless the configurations differ in element order alone.
pub fn run_ordering_pair(
    a: &ExperimentConfig,
    b: &ExperimentConfig,
    exec: &Executor,
) -> Result<OrderingPair> {
    let same_rest = ExperimentConfig {
        elements: vec![],
        ..a.clone()
    } == ExperimentConfig {
        elements: vec![],
        ..b.clone()
    };
    if !same_rest || !is_permutation(&a.elements, &b.elements) {
        return Err(Error::NotAnOrderingPair);
    }
    let mut reports = Vec::with_capacity(2);
    for cfg in [a, b] {
        if cfg.trials < 1 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        cfg.source.validate()?;
        validate_chain(&cfg.elements, &cfg.build_grid()?, &cfg.source)?;
        let start = Instant::now();
        let (results, clicks) = run_chain(cfg, &cfg.elements, exec, false)?;
        reports.push((
            results.clone(),
            finish(
                cfg,
                start,
                Results::Dispersion(results),
                vec![ClickSet {
                    label: None,
                    clicks,
                }],
            ),
        ));
    }
    let (second_results, second) = reports.pop().expect("two runs");
    let (first_results, first) = reports.pop().expect("two runs");
    Ok(OrderingPair {
        first,
        second,
        comparison: compare(first_results, second_results),
    })
}

fn is_permutation(a: &[ElementSpec], b: &[ElementSpec]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter()
        .all(|x| match (0..b.len()).find(|&j| !used[j] && &b[j] == x) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        })
}

/// Per-leaf arrival statistics, without the spectral fields.
fn leaf_statistics(
    cfg: &ExperimentConfig,
    chain: &Chain,
    clicks: &[ClickRecord],
) -> Vec<ChannelReport> {
    let m = cfg.trials as f64;
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); chain.leaves.len()];
    if cfg.mode == Mode::MonteCarlo {
        for c in clicks {
            let i = chain.leaf_of(&c.channel).expect("click on a known leaf");
            times[i].push(c.t_click);
        }
    }
    chain
        .leaves
        .iter()
        .zip(times)
        .enumerate()
        .map(|(i, (leaf, ts))| {
            let band_pass = match (chain.spectrometer(), leaf.tag.channel()) {
                (Some(spec), Some(k)) => k > 0 && k + 1 < spec.n_channels(),
                _ => false,
            };
            let base = ChannelReport {
                k: leaf.tag.channel().unwrap_or(i),
                channel: leaf.tag.clone(),
                band_pass,
                p_hat: leaf.probability,
                n_clicks: 0,
                centroid_hz: leaf.centroid_hz,
                dnu_prime: None,
                tc_prime: None,
                hup: None,
                mean_t: None,
                std_t: None,
                stderr_t: None,
                usable: false,
                scan: vec![],
            };
            match cfg.mode {
                Mode::Expectation => {
                    let expected = m * leaf.probability;
                    ChannelReport {
                        n_clicks: expected.round() as u64,
                        mean_t: Some(leaf.mean_t),
                        std_t: Some(leaf.std_t),
                        stderr_t: Some(leaf.std_t / expected.sqrt()),
                        usable: expected >= MIN_CLICKS as f64,
                        ..base
                    }
                }
                Mode::MonteCarlo => {
                    let n = ts.len();
                    let (mean, std, stderr) = match channel_stats(&ts) {
                        Ok(s) => (Some(s.mean), Some(s.std), Some(s.stderr)),
                        Err(_) => partial_stats(&ts),
                    };
                    ChannelReport {
                        p_hat: n as f64 / m,
                        n_clicks: n as u64,
                        mean_t: mean,
                        std_t: std,
                        stderr_t: stderr,
                        usable: n >= MIN_CLICKS,
                        ..base
                    }
                }
            }
        })
        .collect()
}

fn partial_stats(ts: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    let n = ts.len() as f64;
    if ts.is_empty() {
        return (None, None, None);
    }
    let mean = ts.iter().sum::<f64>() / n;
    if ts.len() < 2 {
        return (Some(mean), None, None);
    }
    let std = (ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (Some(mean), Some(std), Some(std / n.sqrt()))
}

/// Generic chain run: leaf probabilities, arrival statistics and, when the
/// chain holds a single spectrometer and no interferometer, the slope test.
fn run_chain(
    cfg: &ExperimentConfig,
    elements: &[ElementSpec],
    exec: &Executor,
    require_regression: bool,
) -> Result<(ChainResults, Vec<ClickRecord>)> {
    let chain = Chain::new(&cfg.source, cfg.source_state()?, elements, cfg.ontology)?;
    let clicks = match cfg.mode {
        Mode::Expectation => vec![],
        Mode::MonteCarlo => to_clicks(&chain, &chain.run_trials(cfg.trials, cfg.seed, exec)?),
    };
    let mut channels = leaf_statistics(cfg, &chain, &clicks);
    if cfg.mode == Mode::Expectation {
        for (report, leaf) in channels.iter_mut().zip(&chain.leaves) {
            let dnu = spectral_hwhm(&leaf.conditional).ok().map(|w| w.hwhm);
            let tc = coherence_time(&leaf.conditional).ok();
            report.dnu_prime = dnu;
            report.tc_prime = tc;
            report.hup = dnu.zip(tc).map(|(d, t)| hup_product(d, t));
        }
    }
    let mut flags: Vec<String> = channels
        .iter()
        .filter(|c| !c.usable)
        .map(|c| format!("channel {}: fewer than {MIN_CLICKS} clicks", c.channel))
        .collect();
    let has_michelson = elements
        .iter()
        .any(|e| matches!(e, ElementSpec::Michelson(_)));
    let discrimination = if chain.spectrometer().is_some() && !has_michelson {
        match regression(cfg, &chain, &channels) {
            Ok(r) => Some(r),
            Err(e) if require_regression => return Err(e),
            Err(e) => {
                flags.push(format!("no regression: {e}"));
                None
            }
        }
    } else if require_regression {
        return Err(Error::InvalidConfig(
            "the chain needs exactly one spectrometer".into(),
        ));
    } else {
        None
    };
    Ok((
        ChainResults {
            ontology: cfg.ontology,
            mode: cfg.mode,
            total_fiber: chain.fiber,
            channels,
            empty_channels: chain.empty.iter().map(|(t, _)| t.to_string()).collect(),
            discrimination,
            clicks: clicks.len() as u64,
            hv: hv_diagnostics(cfg, None),
            flags,
        },
        clicks,
    ))
}

fn regression(
    cfg: &ExperimentConfig,
    chain: &Chain,
    channels: &[ChannelReport],
) -> Result<DiscriminationReport> {
    let points: Vec<RegressionPoint> = channels
        .iter()
        .filter(|c| c.usable)
        .filter_map(|c| {
            Some(RegressionPoint {
                k: c.k,
                x_hz: c.centroid_hz,
                mean_t: c.mean_t?,
                stderr_t: c.stderr_t?,
            })
        })
        .collect();
    let d = chain.fiber.dispersion_s_per_hz;
    let line_fwhm = 2.0 * cfg.source.linewidth_hwhm();
    Ok(arrival_regression(&points, d)?.with_separation(d.abs() * line_fwhm, cfg.source.tau_r_s))
}

fn to_clicks(chain: &Chain, draws: &[Draw]) -> Vec<ClickRecord> {
    draws
        .iter()
        .enumerate()
        .map(|(i, d)| ClickRecord {
            trial: i as u64,
            channel: chain.leaves[d.leaf].tag.clone(),
            t_click: d.t,
        })
        .collect()
}

fn hv_diagnostics(cfg: &ExperimentConfig, curve: Option<(f64, f64)>) -> Option<HvDiagnostics> {
    if cfg.ontology != PhotonOntology::HiddenVariable {
        return None;
    }
    // a photon with sharp frequency has zero spectral spread
    let per_photon_hup: HupCheck = hup_product(0.0, cfg.source.tau_r_s);
    Some(HvDiagnostics {
        per_photon_hup,
        violation: !per_photon_hup.pass,
        ensemble_max_deviation: curve.map(|c| c.0),
        ensemble_tolerance: curve.map(|c| c.1),
    })
}

/// Linewidth and delay-scan instruments placed behind one leaf.
struct ScanSpecFor {
    fine: SpectrometerSpec,
    delays: Vec<f64>,
}

impl ScanSpecFor {
    fn new(cfg: &ExperimentConfig, chain: &Chain, leaf: Option<&Leaf>) -> Self {
        let gamma = cfg.source.linewidth_hwhm();
        let (center, width) = match (chain.spectrometer(), leaf.and_then(|l| l.tag.channel())) {
            (Some(s), Some(k)) if s.n_channels() > 1 => {
                (s.centers_hz[k], s.channel_hwhm_hz.min(gamma))
            }
            _ => (0.0, gamma),
        };
        let step = width / 4.0;
        let fine = SpectrometerSpec {
            centers_hz: (0..FINE_BINS)
                .map(|j| center + (j as f64 - (FINE_BINS as f64 - 1.0) / 2.0) * step)
                .collect(),
            channel_hwhm_hz: step / 2.0,
            shape: ChannelShape::Rectangular,
        };
        Self {
            fine,
            delays: cfg.scan.delays(width, cfg.source.nu0_hz),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Measured {
    nu0_offset: Option<f64>,
    dnu: Option<f64>,
    tc: Option<f64>,
    scan: Vec<ScanPoint>,
    flags: Vec<String>,
}

impl Measured {
    fn source_report(&self, nu0: f64) -> Result<SourceReport> {
        let dnu = self.dnu.unwrap_or(f64::NAN);
        let tc = self.tc.unwrap_or(f64::NAN);
        let hup = hup_product(dnu, tc);
        Ok(SourceReport {
            nu0_hat: self.nu0_offset.map_or(f64::NAN, |d| nu0 + d),
            dnu_hat: dnu,
            tc_hat: tc,
            hup_product: hup.product,
            hup_pass: hup.pass,
            lc_hat: if tc.is_finite() {
                coherence_length(tc, &CODATA)?
            } else {
                f64::NAN
            },
        })
    }
}

fn measure_expectation(state: &SpectralAmplitude, delays: &[f64]) -> Result<Measured> {
    let mut flags = Vec::new();
    let width = match spectral_hwhm(state) {
        Ok(w) => Some(w),
        Err(Error::MaxOnEdge) => {
            flags.push("spectral maximum on the grid edge".into());
            None
        }
        Err(e) => return Err(e),
    };
    let tc = coherence_time(state)?;
    let scan = delays
        .iter()
        .map(|&tau| {
            let p = michelson_ports(state, tau);
            ScanPoint {
                tau_s: tau,
                visibility: p.visibility,
                p_click: p.bright,
            }
        })
        .collect();
    Ok(Measured {
        nu0_offset: width.map(|w| state.grid().detuning(w.peak_index)),
        dnu: width.map(|w| w.hwhm),
        tc: Some(tc),
        scan,
        flags,
    })
}

/// What the diagnostic stage recorded for one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Probe {
    Bin(usize),
    Delay(usize, bool),
}

struct LeafInstruments {
    scan: ScanSpecFor,
    bin_cdf: Vec<f64>,
    bright: Vec<f64>,
}

/// Per-leaf results, clicks, and the hidden-variable ensemble curve
/// deviation with its tolerance.
type LeafMeasurements = (Vec<Measured>, Vec<ClickRecord>, Option<(f64, f64)>);

/// Measures linewidth and coherence of every leaf. Returns per-leaf results,
/// the click records and, for the hidden-variable model on a single leaf,
/// the ensemble curve deviation with its tolerance.
fn measure_leaves(
    cfg: &ExperimentConfig,
    chain: &Chain,
    exec: &Executor,
) -> Result<LeafMeasurements> {
    let instruments: Vec<LeafInstruments> = chain
        .leaves
        .iter()
        .map(|leaf| {
            let scan = ScanSpecFor::new(cfg, chain, Some(leaf));
            let grid = leaf.conditional.grid();
            let intensity = leaf.conditional.intensity();
            let mut masses = vec![0.0; FINE_BINS];
            for (d, w) in grid.detunings().zip(&intensity) {
                let r = scan.fine.intensity_responses(d);
                let b = r.iter().position(|&x| x == 1.0).expect("rectangular bins");
                masses[b] += w;
            }
            let bright = scan
                .delays
                .iter()
                .map(|&tau| michelson_ports(&leaf.conditional, tau).bright)
                .collect();
            LeafInstruments {
                scan,
                bin_cdf: cumulative(&masses),
                bright,
            }
        })
        .collect();

    if cfg.mode == Mode::Expectation {
        let measured = chain
            .leaves
            .iter()
            .zip(&instruments)
            .map(|(leaf, ins)| measure_expectation(&leaf.conditional, &ins.scan.delays))
            .collect::<Result<Vec<_>>>()?;
        return Ok((measured, vec![], None));
    }

    let nu0 = cfg.source.nu0_hz;
    let trials = exec.map_trials(cfg.trials, |i| {
        let mut rng = trial_rng(cfg.seed, i);
        let draw = chain.draw(&mut rng)?;
        let ins = &instruments[draw.leaf];
        let probe = if i % 2 == 0 {
            Probe::Bin(match draw.delta {
                Some(delta) => ins
                    .scan
                    .fine
                    .intensity_responses(delta)
                    .iter()
                    .position(|&x| x == 1.0)
                    .expect("rectangular bins"),
                None => sample_index(&ins.bin_cdf, rng.random()),
            })
        } else {
            let j = ((i / 2) % ins.scan.delays.len() as u64) as usize;
            let p = match draw.delta {
                Some(delta) => MichelsonSpec {
                    tau_s: ins.scan.delays[j],
                    port: Port::Bright,
                }
                .bright_probability_at(nu0, delta),
                None => ins.bright[j],
            };
            Probe::Delay(j, rng.random::<f64>() < p)
        };
        Ok((draw, probe))
    })?;

    let n_leaves = chain.leaves.len();
    let mut counts = vec![vec![0u64; FINE_BINS]; n_leaves];
    let mut shots: Vec<Vec<(u64, u64)>> = instruments
        .iter()
        .map(|ins| vec![(0, 0); ins.scan.delays.len()])
        .collect();
    for (draw, probe) in &trials {
        match *probe {
            Probe::Bin(b) => counts[draw.leaf][b] += 1,
            Probe::Delay(j, bright) => {
                let s = &mut shots[draw.leaf][j];
                s.0 += 1;
                s.1 += bright as u64;
            }
        }
    }

    let mut measured = Vec::with_capacity(n_leaves);
    for (l, ins) in instruments.iter().enumerate() {
        let mut flags = Vec::new();
        let (nu0_offset, dnu) = match histogram_spectrum(&counts[l], &ins.scan.fine, 0.0) {
            Ok(h) => {
                if h.upper_bound {
                    flags.push("all counts in one bin, linewidth is an upper bound".into());
                }
                (Some(h.nu0_hat), Some(h.dnu_hat))
            }
            Err(e @ (Error::InsufficientCounts { .. } | Error::MaxOnEdge)) => {
                flags.push(format!("linewidth not estimated: {e}"));
                (None, None)
            }
            Err(e) => return Err(e),
        };
        let scan: Vec<ScanPoint> = ins
            .scan
            .delays
            .iter()
            .zip(&shots[l])
            .map(|(&tau, &(n, b))| {
                let p = if n > 0 { b as f64 / n as f64 } else { f64::NAN };
                ScanPoint {
                    tau_s: tau,
                    visibility: 2.0 * p - 1.0,
                    p_click: p,
                }
            })
            .collect();
        let tc = coherence_from_scan(&scan);
        if tc.is_none() {
            flags.push("coherence time not estimated from the scan".into());
        }
        measured.push(Measured {
            nu0_offset,
            dnu,
            tc,
            scan,
            flags,
        });
    }

    let curve = if cfg.ontology == PhotonOntology::HiddenVariable && n_leaves == 1 {
        let deltas: Vec<f64> = trials.iter().filter_map(|(d, _)| d.delta).collect();
        let ins = &instruments[0];
        let n = deltas.len() as f64;
        let dev = ins
            .scan
            .delays
            .iter()
            .zip(&ins.bright)
            .map(|(&tau, &exact)| {
                let m = MichelsonSpec {
                    tau_s: tau,
                    port: Port::Bright,
                };
                let mean = deltas
                    .iter()
                    .map(|&d| m.bright_probability_at(nu0, d))
                    .sum::<f64>()
                    / n;
                (mean - exact).abs()
            })
            .fold(0.0, f64::max);
        Some((dev, 3.0 / n.sqrt()))
    } else {
        None
    };
    let clicks = to_clicks(chain, &trials.iter().map(|(d, _)| *d).collect::<Vec<_>>());
    Ok((measured, clicks, curve))
}

/// Half the delay at which the measured visibility first drops below 1/e,
/// with linear interpolation between scan points.
fn coherence_from_scan(scan: &[ScanPoint]) -> Option<f64> {
    let threshold = (-1f64).exp();
    for w in scan.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !a.visibility.is_finite() || !b.visibility.is_finite() {
            return None;
        }
        if b.visibility < threshold {
            let frac = (a.visibility - threshold) / (a.visibility - b.visibility);
            return Some(0.5 * (a.tau_s + frac.clamp(0.0, 1.0) * (b.tau_s - a.tau_s)));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherence_from_exact_scan() {
        let scan: Vec<ScanPoint> = (0..40)
            .map(|i| {
                let tau = i as f64 * 1e-9;
                ScanPoint {
                    tau_s: tau,
                    visibility: (-tau / 20e-9).exp(),
                    p_click: 0.0,
                }
            })
            .collect();
        let tc = coherence_from_scan(&scan).unwrap();
        assert!((tc / 10e-9 - 1.0).abs() < 1e-3);
        assert_eq!(coherence_from_scan(&scan[..10]), None);
    }

    #[test]
    fn permutations() {
        use crate::elements::FiberSpec;
        let a = ElementSpec::Fiber(FiberSpec::new(0.0, 1.0));
        let b = ElementSpec::Fiber(FiberSpec::new(0.0, 2.0));
        assert!(is_permutation(
            &[a.clone(), b.clone()],
            &[b.clone(), a.clone()]
        ));
        assert!(!is_permutation(
            &[a.clone(), a.clone()],
            &[a.clone(), b.clone()]
        ));
        assert!(is_permutation(&[], &[]));
    }
}
