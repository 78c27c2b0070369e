//! Influence-diagram engine for early evaluation of clinical tests.
//!
//! Care pathways are modelled as influence diagrams whose conditional
//! probabilities come from expert judgement. The crate fits beta
//! distributions to elicited quantiles, answers event queries exactly,
//! propagates judgement uncertainty by Monte Carlo and ranks inputs by
//! correlation with each query.

pub mod beta;
pub mod bundled;
pub mod eval;
pub mod fit;
pub mod graph;
pub mod io;
pub mod model;
pub mod query;
pub mod report;
pub mod sampler;
pub mod sensitivity;
pub mod simulate;
pub mod stats;

pub use beta::{beta_cdf, beta_quantile, BetaParams};
pub use fit::{
    fit_moments, fit_three_point, fit_three_point_probability, fit_two_point, FitError, FitMethod,
    FitReport, Objective,
};
pub use graph::{drop_arc, reduce, remove_barren, reverse_arc, topological_order, GraphError};
pub use io::{parse_model, serialize_model, ModelFileError, SCHEMA_VERSION};
pub use model::{
    validate, BestIs, CellRef, Cpt, CptEntry, CptRow, ElicitedTriple, InfluenceDiagram, Node,
    NodeId, NodeKind, ReductionStep, RowRef, Violation, ViolationKind,
};
pub use query::{
    enumerate_joint, query_probability, run_named_queries, Event, QueryDefinition, QueryError,
    QueryResult, Reduction,
};
pub use sampler::{build_row_sampler, RowFit, RowSampler};
pub use sensitivity::{correlate, dependent_inputs, InputTrace, SensitivityEntry, SensitivityResult};
pub use simulate::{
    simulate, simulate_query, Coupling, QuerySamples, Scenario, SimulationConfig, SimulationError,
    SimulationRun,
};
pub use stats::{compare_scenarios, density_grid, summarize, ComparisonStats, Interval, SummaryStats};
pub use report::{build_report, emit_report, Manifest, QueryReport, ReportBundle, ReportError};
