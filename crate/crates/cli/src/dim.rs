//! `dim solve` and `dim pi`.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use covariant_core::dimensions::format_rational;
use covariant_core::{pi_basis, solve_target, Dimension, Rational};
use serde::Serialize;

use crate::io::{check_outputs, write_report};
use crate::{CmdResult, Failure};

#[derive(Subcommand, Debug)]
pub enum DimCommand {
    /// Exponents of the inputs whose product carries the target units.
    Solve(SolveArgs),
    /// Basis of dimensionless power products of the inputs.
    Pi(PiArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Inputs as NAME:UNIT, e.g. m:kg g:"m/s^2" h:m.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<String>,
    /// Target units, e.g. s or "kg m^2/s^2".
    #[arg(long)]
    target: String,
    /// Write the solution as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PiArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct NamedInput {
    name: String,
    dim: Dimension,
}

#[derive(Serialize)]
struct SolveReport {
    inputs: Vec<NamedInput>,
    target: Dimension,
    particular: Vec<String>,
    nullspace: Vec<Vec<String>>,
    unique: bool,
}

#[derive(Serialize)]
struct PiReport {
    inputs: Vec<NamedInput>,
    basis: Vec<Vec<String>>,
}

fn parse_inputs(raw: &[String]) -> Result<Vec<NamedInput>, Failure> {
    let mut out: Vec<NamedInput> = Vec::with_capacity(raw.len());
    for item in raw {
        let (name, unit) = item
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("input `{item}` must look like NAME:UNIT")))?;
        if name.is_empty() {
            return Err(Failure::Usage(format!("input `{item}` has an empty name")));
        }
        if out.iter().any(|n| n.name == name) {
            return Err(Failure::Usage(format!("input `{name}` given twice")));
        }
        let dim = Dimension::parse(unit).map_err(|e| Failure::Usage(e.to_string()))?;
        out.push(NamedInput { name: name.to_string(), dim });
    }
    Ok(out)
}

fn strings(v: &[Rational]) -> Vec<String> {
    v.iter().map(format_rational).collect()
}

fn tuple(v: &[Rational]) -> String {
    format!("({})", strings(v).join(", "))
}

fn product(names: &[NamedInput], v: &[Rational]) -> String {
    let factors: Vec<String> = names
        .iter()
        .zip(v)
        .filter(|(_, e)| **e != Rational::from_integer(0))
        .map(|(n, e)| if *e == Rational::from_integer(1) { n.name.clone() } else { format!("{}^({})", n.name, format_rational(e)) })
        .collect();
    if factors.is_empty() { "1".into() } else { factors.join(" · ") }
}

pub fn run(cmd: DimCommand) -> CmdResult {
    match cmd {
        DimCommand::Solve(a) => {
            check_outputs([&a.out])?;
            let inputs = parse_inputs(&a.inputs)?;
            let target = Dimension::parse(&a.target).map_err(|e| Failure::Usage(e.to_string()))?;
            let dims: Vec<Dimension> = inputs.iter().map(|n| n.dim).collect();
            let sol = solve_target(&dims, &target)?;
            let names: Vec<&str> = inputs.iter().map(|n| n.name.as_str()).collect();
            say!("exponents ({}): {}", names.join(", "), tuple(&sol.particular));
            say!("product: {}", product(&inputs, &sol.particular));
            if sol.nullspace.is_empty() {
                say!("nullspace: none (unique)");
            } else {
                for v in &sol.nullspace {
                    say!("nullspace: {}  [{}]", tuple(v), product(&inputs, v));
                }
            }
            let report = SolveReport {
                target,
                particular: strings(&sol.particular),
                nullspace: sol.nullspace.iter().map(|v| strings(v)).collect(),
                unique: sol.is_unique(),
                inputs,
            };
            write_report(a.out.as_deref(), &report)
        }
        DimCommand::Pi(a) => {
            check_outputs([&a.out])?;
            let inputs = parse_inputs(&a.inputs)?;
            let dims: Vec<Dimension> = inputs.iter().map(|n| n.dim).collect();
            let basis = pi_basis(&dims);
            if basis.is_empty() {
                say!("no dimensionless combinations");
            }
            for v in &basis {
                say!("pi: {}  [{}]", tuple(v), product(&inputs, v));
            }
            let report = PiReport { basis: basis.iter().map(|v| strings(v)).collect(), inputs };
            write_report(a.out.as_deref(), &report)
        }
    }
}
