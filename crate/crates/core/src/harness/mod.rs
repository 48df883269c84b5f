//! File-driven fit, forecast and evaluation runs.

pub mod baselines;
pub mod config;
pub mod eval;
pub mod ingest;
pub mod report;

pub use baselines::{baseline_panel_regression, baseline_univariate, PanelFit, UnivariateFit};
pub use config::{DataPaths, ModelKind, RunConfig};
pub use eval::{rmse, run_fit_predict, EvalReport, ModelResult};
pub use ingest::{ingest, Ingested};
pub use report::emit_report;
