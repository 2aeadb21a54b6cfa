//! Pipeline audit.
//!
//! [`lint_pipeline`] checks a declarative pipeline against the units and
//! geometry types of its schema. [`test_covariance`] samples group elements
//! and measures how far a black-box function is from commuting with them.

pub mod covtest;
pub mod lint;
pub mod models;

pub use covtest::{
    random_probes, relative_deviation, test_covariance, CovarianceReport, CovarianceTestSpec, GroupElement, GroupTag,
    EPSILON,
};
pub use lint::{fired_rules, has_errors, lint_pipeline, Diagnostic, PipelineDesc, PipelineOp, RuleId, Severity};
pub use models::ModelDesc;
