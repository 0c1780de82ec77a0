//! Scoring forecasts against held-out observations and writing reports.

pub mod backtest;
pub mod metrics;
pub mod report;

pub use backtest::{backtest, score_runs, BacktestOutcome, OriginRun, SplitMode, SplitSpec};
pub use metrics::{kge, mae, mape, mse, rmse, score, Kge, MAPE_ZERO_TOL};
pub use report::{emit_report, SavedRun};
