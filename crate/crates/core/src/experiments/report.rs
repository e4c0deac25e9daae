use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::elements::{ClickRecord, FiberSpec};
use crate::estimators::{ChannelReport, DiscriminationReport, HupCheck, ScanPoint, SourceReport};
use crate::photon::PhotonOntology;
use crate::sampling::RngProvenance;

use super::config::{ExperimentConfig, Mode};

/// Diagnostics specific to the hidden-variable ontology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HvDiagnostics {
    /// Uncertainty product of a single photon with sharp frequency.
    pub per_photon_hup: HupCheck,
    pub violation: bool,
    /// Sup-norm distance between the ensemble-averaged Michelson curve of
    /// the sampled photons and the wave-packet curve.
    pub ensemble_max_deviation: Option<f64>,
    /// `3/√M` for the photons entering the ensemble curve.
    pub ensemble_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceResults {
    pub ontology: PhotonOntology,
    pub mode: Mode,
    pub source: SourceReport,
    pub nominal_linewidth_hz: f64,
    pub nominal_lifetime_s: f64,
    pub scan: Vec<ScanPoint>,
    pub clicks: u64,
    pub insufficient_statistics: bool,
    pub hv: Option<HvDiagnostics>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilteredResults {
    pub ontology: PhotonOntology,
    pub mode: Mode,
    /// Unfiltered source, for comparison.
    pub reference: SourceReport,
    pub channels: Vec<ChannelReport>,
    pub empty_channels: Vec<String>,
    pub clicks: u64,
    pub hv: Option<HvDiagnostics>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainResults {
    pub ontology: PhotonOntology,
    pub mode: Mode,
    pub total_fiber: FiberSpec,
    pub channels: Vec<ChannelReport>,
    pub empty_channels: Vec<String>,
    pub discrimination: Option<DiscriminationReport>,
    pub clicks: u64,
    pub hv: Option<HvDiagnostics>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayedResults {
    /// Spectrometer before the fibers.
    pub early: Box<ChainResults>,
    /// Spectrometer after the fibers.
    pub late: Box<ChainResults>,
    /// Byte equality of the two serialized results.
    pub identical: bool,
    /// `(slope_early − slope_late)/√(se_early² + se_late²)`.
    pub slope_difference_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "experiment")]
pub enum Results {
    #[serde(rename = "1")]
    Source(SourceResults),
    #[serde(rename = "2")]
    Filtered(FilteredResults),
    #[serde(rename = "3")]
    Dispersion(ChainResults),
    #[serde(rename = "delayed")]
    DelayedChoice(DelayedResults),
}

/// Clicks of one arrangement; `label` distinguishes arrangements of a
/// paired run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickSet {
    pub label: Option<&'static str>,
    pub clicks: Vec<ClickRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub results: Results,
    pub rng: RngProvenance,
    #[serde(skip)]
    pub click_sets: Vec<ClickSet>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunReport {
    /// Serialized results without the configuration echo.
    pub fn results_json(&self) -> String {
        to_json(&self.results)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// Michelson scan of the run, if it performed one.
    pub fn scan(&self) -> Option<&[ScanPoint]> {
        match &self.results {
            Results::Source(r) => Some(&r.scan),
            _ => None,
        }
    }
}

/// Pretty JSON with every float written to 17 significant digits and
/// non-finite floats written as `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits::default());
    value
        .serialize(&mut ser)
        .expect("report types serialize infallibly");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

#[derive(Default)]
struct FixedDigits {
    pretty: PrettyFormatter<'static>,
}

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}
