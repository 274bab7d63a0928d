//! Answer-set metrics, dataset reports and the negated-constraint dataset
//! transform.

mod metrics;
mod nest;
mod report;

pub use metrics::{exact_match, f1, MetricError};
pub use nest::{flip_join, flippable_joins, nest_eligibility, nest_transform, NestError, NestExample, NestSkip};
pub use report::{evaluate_dataset, Bucket, EvalError, EvalReport, ExampleScore};
