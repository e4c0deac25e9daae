//! The experiments as reproducible pipelines, parameterized by photon
//! ontology.

mod chain;
mod config;
mod report;
mod runs;

pub use chain::{Chain, Draw, Executor, Leaf};
pub use config::{
    total_fiber, validate_chain, ExperimentConfig, ExperimentKind, GridParams, Mode, ScanSpec,
    DEFAULT_CHANNELS, DEFAULT_CHANNEL_HWHM_HZ, DEFAULT_CHANNEL_SPACING_HZ,
    DEFAULT_DISPERSION_S_PER_HZ, DEFAULT_SEED, DEFAULT_TRIALS,
};
pub use report::{
    to_json, ChainResults, ClickSet, DelayedResults, FilteredResults, HvDiagnostics, Results,
    RunReport, SourceResults,
};
pub use runs::{
    run, run_delayed_choice, run_experiment_1, run_experiment_2, run_experiment_3,
    run_ordering_pair, OrderingPair, FINE_BINS,
};
