//! `normalize fit` and `normalize apply`.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use covariant_core::normalize::{apply_normalizer, fit_base_unit_scales, fit_normalizer, Normalizer};
use covariant_core::{Dataset, FeatureSchema};

use crate::io::{check_inputs, check_outputs, load_config, write_report};
use crate::CmdResult;

#[derive(Subcommand, Debug)]
pub enum NormalizeCommand {
    /// Fit shifts and scales per units class, vector and tensor feature.
    Fit(FitArgs),
    /// Apply a fitted normalizer, writing dimensionless CSV.
    Apply(ApplyArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Feature schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// CSV with one column per schema column.
    #[arg(long)]
    data: PathBuf,
    /// Also fit one scale per base unit.
    #[arg(long)]
    base_units: bool,
    /// Normalizer JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ApplyArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Normalizer JSON written by `normalize fit`.
    #[arg(long)]
    normalizer: PathBuf,
    /// Normalized CSV output.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(cmd: NormalizeCommand) -> CmdResult {
    match cmd {
        NormalizeCommand::Fit(a) => {
            check_inputs([&a.schema, &a.data])?;
            check_outputs([&Some(a.out.clone())])?;
            let schema = FeatureSchema::load(&a.schema)?;
            let data = Dataset::load_csv(&a.data)?;
            let mut n = fit_normalizer(&data, &schema)?;
            if a.base_units {
                n.unit_scales = Some(fit_base_unit_scales(&data, &schema)?);
            }
            for w in &n.warnings {
                eprintln!("warning: {w}");
            }
            say!(
                "fitted {} scalar class(es), {} vector(s), {} tensor(s)",
                n.scalar_classes.len(),
                n.vectors.len(),
                n.tensors.len()
            );
            write_report(Some(&a.out), &n)
        }
        NormalizeCommand::Apply(a) => {
            check_inputs([&a.schema, &a.data, &a.normalizer])?;
            check_outputs([&Some(a.out.clone())])?;
            let schema = FeatureSchema::load(&a.schema)?;
            let data = Dataset::load_csv(&a.data)?;
            let n: Normalizer = load_config(&a.normalizer)?;
            let out = apply_normalizer(&n, &data, &schema)?;
            let file = std::fs::File::create(&a.out).map_err(covariant_core::Error::from)?;
            out.write_csv(file)?;
            say!("wrote {} row(s) to {}", out.len(), a.out.display());
            Ok(())
        }
    }
}

