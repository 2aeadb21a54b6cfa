//! `audit lint` and `audit covtest`.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use covariant_core::audit::{
    has_errors, lint_pipeline, random_probes, test_covariance, CovarianceTestSpec, Diagnostic, GroupTag, ModelDesc,
    PipelineDesc,
};
use covariant_core::{Dataset, FeatureSchema, GeomFeature};
use serde::Serialize;

use crate::io::{check_inputs, check_outputs, write_report};
use crate::{CmdResult, Failure};

#[derive(Subcommand, Debug)]
pub enum AuditCommand {
    /// Check a pipeline description against rules R1-R7; exits 3 when any
    /// error-severity diagnostic fires.
    Lint(LintArgs),
    /// Sample group elements and measure how far a model is from commuting
    /// with them; exits 3 when the deviation exceeds the tolerance.
    Covtest(CovtestArgs),
}

#[derive(Args, Debug)]
pub struct LintArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    pipeline: PathBuf,
    /// Write diagnostics as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CovtestArgs {
    #[arg(long)]
    schema: PathBuf,
    /// Model description JSON (raw-mlp, gram-mlp or units-covariant).
    #[arg(long)]
    model: PathBuf,
    /// O3, O3-proper or UnitsRescaling.
    #[arg(long, value_parser = parse_group)]
    group: GroupTag,
    #[arg(long, default_value_t = 32)]
    trials: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probe records as CSV; random probes are drawn when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of random probes.
    #[arg(long, default_value_t = 16)]
    probes: usize,
    /// Features the group acts on (default: all).
    #[arg(long, num_args = 1..)]
    transform: Option<Vec<String>>,
    /// Write the covariance report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_group(s: &str) -> Result<GroupTag, String> {
    s.parse().map_err(|e: covariant_core::Error| e.to_string())
}

#[derive(Serialize)]
struct LintReport {
    errors: usize,
    warnings: usize,
    diagnostics: Vec<Diagnostic>,
}

pub fn run(cmd: AuditCommand) -> CmdResult {
    match cmd {
        AuditCommand::Lint(a) => {
            check_inputs([&a.schema, &a.pipeline])?;
            check_outputs([&a.out])?;
            let schema = FeatureSchema::load(&a.schema)?;
            let pipe = PipelineDesc::load(&a.pipeline)?;
            let diagnostics = lint_pipeline(&schema, &pipe)?;
            for d in &diagnostics {
                say!("{d}");
            }
            let errors = diagnostics.iter().filter(|d| d.severity == covariant_core::audit::Severity::Error).count();
            let report = LintReport { errors, warnings: diagnostics.len() - errors, diagnostics };
            say!("{} error(s), {} warning(s)", report.errors, report.warnings);
            write_report(a.out.as_deref(), &report)?;
            if has_errors(&report.diagnostics) {
                return Err(Failure::Check(format!("lint failed: {} error(s)", report.errors)));
            }
            Ok(())
        }
        AuditCommand::Covtest(a) => {
            check_inputs([&a.schema, &a.model])?;
            check_inputs(a.data.iter())?;
            check_outputs([&a.out])?;
            if a.trials == 0 {
                return Err(Failure::Usage("--trials must be at least 1".into()));
            }
            if !(a.tol > 0.0 && a.tol.is_finite()) {
                return Err(Failure::Usage("--tol must be positive".into()));
            }
            if a.data.is_none() && a.probes == 0 {
                return Err(Failure::Usage("--probes must be at least 1".into()));
            }
            let schema = FeatureSchema::load(&a.schema)?;
            let model = ModelDesc::load(&a.model)?;
            model.check(&schema)?;
            let probes: Vec<Vec<GeomFeature>> = match &a.data {
                Some(p) => Dataset::load_csv(p)?.records(&schema)?,
                None => random_probes(&schema, a.probes, a.seed),
            };
            let spec = CovarianceTestSpec {
                group: a.group,
                trials: a.trials,
                seed: a.seed,
                tolerance: a.tol,
                transform: a.transform.clone(),
                output: model.output_schema(&schema)?,
            };
            let f = |x: &[GeomFeature]| model.evaluate(&schema, x);
            let report = test_covariance(&f, &schema, &spec, &probes)?;
            say!(
                "{} over {} trial(s), {} probe(s): max deviation {:e} (tolerance {:e}) -> {}",
                report.group,
                report.trials,
                report.probes,
                report.max_deviation,
                report.tolerance,
                if report.pass { "pass" } else { "FAIL" }
            );
            if !report.self_check.pass {
                eprintln!("harness self-check failed: deviation {:e}", report.self_check.max_deviation);
            }
            write_report(a.out.as_deref(), &report)?;
            if !report.pass {
                return Err(Failure::Check("covariance test failed".into()));
            }
            Ok(())
        }
    }
}
