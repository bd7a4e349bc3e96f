//! Case-count estimation for two-stream surveillance where one stream is a
//! random anchor sample of the population.

pub mod error;
pub mod estimators;
pub mod intervals;
pub mod io;
pub mod model;
pub mod report;
pub mod rng;
pub mod simulation;
pub mod variance;

pub use error::{Error, Result};
pub use estimators::{
    estimate_4cell, estimate_5cell, estimate_7cell, estimate_chapman, estimate_rs, stratified_estimate, PointEstimate,
};
pub use intervals::{credible_5cell, credible_rs, logit_chapman, wald, z_value, Interval, IntervalMethod};
pub use model::{CaptureRecord, CellCounts4, CellCounts5, CellCounts7, Fallback, ModelParams, RsSummary};
pub use report::{run_analysis, AnalysisConfig, AnalysisInput, EstimateReport, Method, OutputFormat};
pub use rng::RngStream;
pub use simulation::{run_scenario, SimScenario, SimSummary};
pub use variance::{var5, Adjustment, VarianceResult, VarianceVariant};
