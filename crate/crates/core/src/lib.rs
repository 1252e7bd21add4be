//! Anytime-valid simultaneous lower confidence bounds for the true discovery
//! proportion (TDP).
//!
//! Each elementary hypothesis carries an e-process. Intersection hypotheses
//! are tested by averaging e-process values and rejecting when the average
//! reaches `1/alpha`; closed testing over those local tests yields an upper
//! confidence bound for the number of false discoveries in any discovery set,
//! valid simultaneously over all sets and all observation times.
//!
//! Modules:
//! - [`eprocess`]: elementary e-processes (Gaussian and t likelihood ratios,
//!   moment-prior mixture), merging, e-to-p conversion.
//! - [`closed_testing`]: the sorted-threshold shortcut, brute-force closed
//!   testing, per-time bound series with running-minimum tracking.
//! - [`distributions`]: t statistics, central and noncentral t densities,
//!   equicorrelated normal sampling.
//! - [`sim`]: Monte-Carlo harness for validity and power.
//! - [`io`]: CSV formats, discovery-set files, scenario files, resumable state.
//! - [`cli`]: command-line front end.

pub mod cli;
pub mod closed_testing;
pub mod distributions;
pub mod eprocess;
pub mod error;
pub mod io;
pub mod oracle;
pub mod quadrature;
pub mod sim;

pub use closed_testing::{
    brute_force_bound, bound_series, multi_r_bounds, p_value_closed_testing_bound, shortcut_bound,
    BoundSeries, BoundTracker, DiscoverySet, ShortcutTrace,
};
pub use eprocess::{
    e_to_p_process, local_test, merge_average, merge_product, EProcess, EProcessFamily,
    EValueMatrix, ElementaryState, FamilyKind, PProcessSeries, PriorSides, ProcessBank,
};
pub use error::{Error, Result};
pub use sim::{MetricsTable, ScenarioConfig};
