//! Monte-Carlo error rates, reports, achievability tuples and sweeps.

mod rates;
mod report;
mod sweep;

pub(crate) use rates::draw_transmission;
pub use rates::{estimate_error_rates, wald_halfwidth, ErrorRates, RateEstimate, UserRates, CI_ERROR_FLOOR, EVAL_BATCH};
pub use report::{achievability_report, read_csv, write_csv, AchievabilityTuple, CsvRow, EvalReport, Labeled, LeakageEntry, CSV_HEADER};
pub use sweep::{apply_axis, evaluate, sweep, sweep_rows, EvalSettings, SweepAxis, SweepPoint};
