//! Branch tree of an element chain and the three photon ontologies acting on
//! it.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::elements::{
    apply_filter, apply_jitter, compose, guard_band_mass, ArrivalSampler, ChannelTag, DetectorSpec,
    DiagonalElement, ElementSpec, FiberSpec, MichelsonSpec, Outcome, Port, SpectrometerSpec,
    GUARD_MASS_LIMIT,
};
use crate::error::{Error, Result};
use crate::photon::{PhotonOntology, SourceSpec};
use crate::sampling::{cumulative, sample_index, trial_rng, BinnedSampler};
use crate::spectral::{FrequencyGrid, SpectralAmplitude};

use super::config::total_fiber;

/// Runs independent trials, optionally on several threads. Trial `i` always
/// receives the same random stream, and results come back in trial order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Executor {
    workers: usize,
}

impl Default for Executor {
    fn default() -> Self {
        Self::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

impl Executor {
    pub fn new(workers: usize) -> Self {
        Self {
            workers: workers.max(1),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn map_trials<T, F>(&self, trials: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        if self.workers == 1 {
            return (0..trials).map(f).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| (0..trials).into_par_iter().map(f).collect())
    }
}

/// One path through the projective elements of a chain.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub tag: ChannelTag,
    pub probability: f64,
    /// Spectral state behind the selected outputs, fiber phases left out.
    pub conditional: SpectralAmplitude,
    pub centroid_hz: f64,
    /// Arrival law before `shift` is added. For the hidden-variable model
    /// this is the emission-time law.
    pub arrival: Arc<ArrivalSampler>,
    pub shift: f64,
    /// Exact arrival mean and standard deviation, jitter included.
    pub mean_t: f64,
    pub std_t: f64,
}

/// Analysed chain: source, canonical projective elements and leaves.
#[derive(Debug, Clone)]
pub struct Chain {
    pub grid: FrequencyGrid,
    pub source: SourceSpec,
    pub psi: SpectralAmplitude,
    pub ontology: PhotonOntology,
    pub elements: Vec<ElementSpec>,
    /// Indices into `elements` of spectrometers and interferometers, in
    /// canonical order.
    pub projective: Vec<usize>,
    pub fiber: FiberSpec,
    pub detector: DetectorSpec,
    pub leaves: Vec<Leaf>,
    /// Outcome paths with negligible probability.
    pub empty: Vec<(ChannelTag, f64)>,
    leaf_cdf: Vec<f64>,
    leaf_index: HashMap<ChannelTag, usize>,
    detuning_sampler: BinnedSampler,
    emission: Arc<ArrivalSampler>,
}

fn projective_key(e: &ElementSpec) -> (u8, Vec<u64>) {
    match e {
        ElementSpec::Spectrometer(s) => {
            let mut v = vec![s.channel_hwhm_hz.to_bits(), s.shape as u64];
            v.extend(s.centers_hz.iter().map(|c| c.to_bits()));
            (0, v)
        }
        ElementSpec::Michelson(m) => (1, vec![m.tau_s.to_bits()]),
        _ => (2, vec![]),
    }
}

fn outcomes(e: &ElementSpec) -> Vec<Outcome> {
    match e {
        ElementSpec::Spectrometer(s) => (0..s.n_channels()).map(Outcome::Channel).collect(),
        ElementSpec::Michelson(_) => vec![Outcome::Port(Port::Bright), Outcome::Port(Port::Dark)],
        _ => vec![],
    }
}

fn selection(e: &ElementSpec, o: Outcome) -> DiagonalElement {
    match (e, o) {
        (ElementSpec::Spectrometer(s), Outcome::Channel(k)) => DiagonalElement::Channel {
            spectrometer: s.clone(),
            k,
        },
        (ElementSpec::Michelson(m), Outcome::Port(port)) => DiagonalElement::Port(MichelsonSpec {
            tau_s: m.tau_s,
            port,
        }),
        _ => unreachable!("outcome does not belong to element"),
    }
}

/// Arrival sampler of `state`. States that went through a fiber are first
/// checked for wrap-around at the end of the window.
fn arrival_sampler(state: &SpectralAmplitude, dispersed: bool) -> Result<Arc<ArrivalSampler>> {
    let phi = state.to_time();
    let guard = guard_band_mass(&phi);
    if dispersed && guard > GUARD_MASS_LIMIT {
        return Err(Error::WindowOverflow(format!(
            "{guard:e} of the arrival density lies in the final 5% of the window"
        )));
    }
    Ok(Arc::new(ArrivalSampler::new(&phi)?))
}

fn weighted_moments(grid: &FrequencyGrid, weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = grid
        .detunings()
        .zip(weights)
        .map(|(d, w)| d * w)
        .sum::<f64>()
        / total;
    let var = grid
        .detunings()
        .zip(weights)
        .map(|(d, w)| (d - mean).powi(2) * w)
        .sum::<f64>()
        / total;
    (mean, var)
}

/// Outcome of one trial before it is turned into a click record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub leaf: usize,
    pub t: f64,
    /// Sharp detuning of a hidden-variable photon.
    pub delta: Option<f64>,
}

impl Chain {
    pub fn new(
        source: &SourceSpec,
        psi: SpectralAmplitude,
        elements: &[ElementSpec],
        ontology: PhotonOntology,
    ) -> Result<Self> {
        let grid = psi.grid().clone();
        let detector = elements
            .iter()
            .find_map(|e| match e {
                ElementSpec::Detector(d) => Some(*d),
                _ => None,
            })
            .unwrap_or_default();
        let mut projective: Vec<usize> = elements
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, ElementSpec::Spectrometer(_) | ElementSpec::Michelson(_)))
            .map(|(i, _)| i)
            .collect();
        projective.sort_by_key(|&i| projective_key(&elements[i]));
        let fiber = total_fiber(elements);
        let mut fibers: Vec<DiagonalElement> = elements
            .iter()
            .filter_map(|e| match e {
                ElementSpec::Fiber(f) => Some(DiagonalElement::Fiber(*f)),
                _ => None,
            })
            .collect();
        fibers.sort_by(|a, b| match (a, b) {
            (DiagonalElement::Fiber(x), DiagonalElement::Fiber(y)) => x
                .base_delay_s
                .total_cmp(&y.base_delay_s)
                .then(x.dispersion_s_per_hz.total_cmp(&y.dispersion_s_per_hz)),
            _ => Ordering::Equal,
        });

        let emission = Arc::new(ArrivalSampler::new(&psi.to_time())?);
        let source_intensity = psi.intensity();
        let d_nu = grid.d_nu();
        let detuning_sampler =
            BinnedSampler::new(&source_intensity, grid.detuning(0) - 0.5 * d_nu, d_nu)?;

        let timing = if ontology == PhotonOntology::CoherenceTransformer {
            let first = elements
                .iter()
                .position(|e| matches!(e, ElementSpec::Spectrometer(_) | ElementSpec::Michelson(_)))
                .unwrap_or(elements.len());
            let early: Vec<DiagonalElement> = elements[..first]
                .iter()
                .filter_map(|e| match e {
                    ElementSpec::Fiber(f) => Some(DiagonalElement::Fiber(*f)),
                    _ => None,
                })
                .collect();
            let op = compose(&early, &grid)?;
            Some(arrival_sampler(&op.apply(&psi)?, !early.is_empty())?)
        } else {
            None
        };

        let jitter_var = detector.jitter_rms_s.powi(2);
        let (emit_mean, emit_std) = emission.moments();
        let mut leaves = Vec::new();
        let mut empty = Vec::new();
        let mut combo = vec![0usize; projective.len()];
        let choices: Vec<Vec<Outcome>> =
            projective.iter().map(|&i| outcomes(&elements[i])).collect();
        loop {
            let tag = ChannelTag(combo.iter().zip(&choices).map(|(&c, o)| o[c]).collect());
            let selections: Vec<DiagonalElement> = projective
                .iter()
                .zip(&tag.0)
                .map(|(&i, &o)| selection(&elements[i], o))
                .collect();
            let filter = compose(&selections, &grid)?;
            let weights: Vec<f64> = source_intensity
                .iter()
                .zip(&filter.values)
                .map(|(a, t)| a * t.norm_sqr())
                .collect();
            let filtered = match apply_filter(&psi, &filter.values) {
                Ok(out) => Some(out),
                Err(Error::EmptyChannel(p)) => {
                    empty.push((tag.clone(), p));
                    None
                }
                Err(e) => return Err(e),
            };
            if let Some(out) = filtered {
                let p = out.probability;
                let conditional = out.state;
                let (centroid, var_delta) = weighted_moments(&grid, &weights);
                let (arrival, shift, mean, var) = match ontology {
                    PhotonOntology::Quantum => {
                        let mut all = selections.clone();
                        all.extend(fibers.iter().cloned());
                        let full = compose(&all, &grid)?;
                        let sampler = arrival_sampler(
                            &apply_filter(&psi, &full.values)?.state,
                            !fibers.is_empty(),
                        )?;
                        let (m, s) = sampler.moments();
                        (sampler, 0.0, m, s * s)
                    }
                    PhotonOntology::CoherenceTransformer => {
                        let sampler = timing.clone().expect("timing state");
                        let shift = transformer_shift(elements, &projective, &tag, &psi)?;
                        let (m, s) = sampler.moments();
                        (sampler, shift, m + shift, s * s)
                    }
                    PhotonOntology::HiddenVariable => {
                        let shift = fiber.group_delay(centroid);
                        let d = fiber.dispersion_s_per_hz;
                        (
                            emission.clone(),
                            shift,
                            emit_mean + shift,
                            emit_std * emit_std + d * d * var_delta,
                        )
                    }
                };
                leaves.push(Leaf {
                    tag,
                    probability: p,
                    conditional,
                    centroid_hz: centroid,
                    arrival,
                    shift,
                    mean_t: mean,
                    std_t: (var + jitter_var).sqrt(),
                });
            }
            // advance the odometer over outcome combinations
            let mut pos = combo.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                combo[pos] += 1;
                if combo[pos] < choices[pos].len() {
                    break;
                }
                combo[pos] = 0;
            }
            if combo.iter().all(|&c| c == 0) {
                break;
            }
        }
        if leaves.is_empty() {
            return Err(Error::EmptyChannel(0.0));
        }
        let leaf_cdf = cumulative(&leaves.iter().map(|l| l.probability).collect::<Vec<_>>());
        let leaf_index = leaves
            .iter()
            .enumerate()
            .map(|(i, l)| (l.tag.clone(), i))
            .collect();
        Ok(Self {
            grid,
            source: *source,
            psi,
            ontology,
            elements: elements.to_vec(),
            projective,
            fiber,
            detector,
            leaves,
            empty,
            leaf_cdf,
            leaf_index,
            detuning_sampler,
            emission,
        })
    }

    pub fn leaf_of(&self, tag: &ChannelTag) -> Option<usize> {
        self.leaf_index.get(tag).copied()
    }

    /// Emission-time law of the bare source.
    pub fn emission(&self) -> &ArrivalSampler {
        &self.emission
    }

    /// Single spectrometer of the chain, if there is exactly one.
    pub fn spectrometer(&self) -> Option<&SpectrometerSpec> {
        let mut it = self.elements.iter().filter_map(|e| match e {
            ElementSpec::Spectrometer(s) => Some(s),
            _ => None,
        });
        match (it.next(), it.next()) {
            (Some(s), None) => Some(s),
            _ => None,
        }
    }

    /// Samples which leaf a photon reaches and when it is detected.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Draw> {
        let draw = match self.ontology {
            PhotonOntology::Quantum | PhotonOntology::CoherenceTransformer => {
                let leaf = if self.leaves.len() > 1 {
                    sample_index(&self.leaf_cdf, rng.random())
                } else {
                    0
                };
                let l = &self.leaves[leaf];
                Draw {
                    leaf,
                    t: l.arrival.sample(rng.random()) + l.shift,
                    delta: None,
                }
            }
            PhotonOntology::HiddenVariable => {
                let delta = self.detuning_sampler.sample(rng.random());
                let t_emit = self.emission.sample(rng.random());
                let mut tag = Vec::with_capacity(self.projective.len());
                for &i in &self.projective {
                    match &self.elements[i] {
                        ElementSpec::Spectrometer(s) => {
                            let k = if s.n_channels() > 1 {
                                let cdf = cumulative(&s.intensity_responses(delta));
                                sample_index(&cdf, rng.random())
                            } else {
                                0
                            };
                            tag.push(Outcome::Channel(k));
                        }
                        ElementSpec::Michelson(m) => {
                            let bright = m.bright_probability_at(self.grid.carrier(), delta);
                            let port = if rng.random::<f64>() < bright {
                                Port::Bright
                            } else {
                                Port::Dark
                            };
                            tag.push(Outcome::Port(port));
                        }
                        _ => unreachable!("projective elements only"),
                    }
                }
                let tag = ChannelTag(tag);
                let leaf = self.leaf_of(&tag).ok_or(Error::EmptyChannel(0.0))?;
                Draw {
                    leaf,
                    t: t_emit + self.fiber.group_delay(delta),
                    delta: Some(delta),
                }
            }
        };
        Ok(Draw {
            t: apply_jitter(draw.t, &self.detector, rng),
            ..draw
        })
    }

    /// Draws for all trials with per-trial streams.
    pub fn run_trials(&self, trials: u64, seed: u64, exec: &Executor) -> Result<Vec<Draw>> {
        exec.map_trials(trials, |i| self.draw(&mut trial_rng(seed, i)))
    }
}

/// Deterministic delay added by fibers placed after the first projective
/// element: each contributes its group delay at the mean detuning of the
/// spectral state prepared so far.
fn transformer_shift(
    elements: &[ElementSpec],
    projective: &[usize],
    tag: &ChannelTag,
    psi: &SpectralAmplitude,
) -> Result<f64> {
    let grid = psi.grid();
    let mut weights = psi.intensity();
    let mut prepared = false;
    let mut shift = 0.0;
    for (i, e) in elements.iter().enumerate() {
        match e {
            ElementSpec::Spectrometer(_) | ElementSpec::Michelson(_) => {
                prepared = true;
                let slot = projective.iter().position(|&p| p == i).expect("projective");
                let op: Vec<Complex64> = selection(e, tag.0[slot]).operator(grid)?;
                for (w, t) in weights.iter_mut().zip(&op) {
                    *w *= t.norm_sqr();
                }
            }
            ElementSpec::Fiber(f) if prepared => {
                shift += f.group_delay(weighted_moments(grid, &weights).0);
            }
            _ => {}
        }
    }
    Ok(shift)
}
