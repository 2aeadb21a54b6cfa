//! Static checks of declarative pipeline descriptions.
//!
//! Each rule looks at one op and the schema types of the columns it touches.
//! Rules never inspect data values.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dimensions::Dimension;
use crate::schema::{FeatureKind, FeatureSchema};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
}

impl RuleId {
    pub const ALL: [RuleId; 7] = [RuleId::R1, RuleId::R2, RuleId::R3, RuleId::R4, RuleId::R5, RuleId::R6, RuleId::R7];

    pub fn summary(self) -> &'static str {
        match self {
            RuleId::R1 => "PCA over columns with different units",
            RuleId::R2 => "kernel exponentiates a dimensional input",
            RuleId::R3 => "nonlinearity applied to vector or tensor components",
            RuleId::R4 => "non-homogeneous nonlinearity on a dimensional scalar",
            RuleId::R5 => "L1/L-infinity norm over mixed units or geometric components",
            RuleId::R6 => "per-component scaling of a vector or tensor",
            RuleId::R7 => "loss sums terms with different units",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub rule: RuleId,
    pub severity: Severity,
    /// Index of the offending op in the pipeline.
    pub position: usize,
    pub message: String,
    pub columns: Vec<String>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}] op {}: {} ({})", self.rule, self.position, self.message, self.columns.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Poly,
    /// Product of per-factor kernels, one factor per group of columns.
    Product,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub name: String,
    pub units: Dimension,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum PipelineOp {
    Pca {
        columns: Vec<String>,
    },
    Kernel {
        kind: KernelKind,
        #[serde(default)]
        columns: Vec<String>,
        /// Column groups of a product kernel.
        #[serde(default)]
        factors: Vec<Vec<String>>,
        /// Units of the length scale that divides the inputs, if any.
        #[serde(default)]
        scale_units: Option<Dimension>,
    },
    Norm {
        kind: NormKind,
        columns: Vec<String>,
    },
    Nonlinearity {
        name: String,
        #[serde(default)]
        homogeneous: bool,
        columns: Vec<String>,
    },
    Normalize {
        #[serde(default = "default_variant")]
        variant: String,
        #[serde(default)]
        per_component: bool,
        columns: Vec<String>,
    },
    Loss {
        terms: Vec<LossTerm>,
    },
}

fn default_variant() -> String {
    "standardize".into()
}

fn default_version() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineDesc {
    #[serde(default = "default_version")]
    pub version: u32,
    pub ops: Vec<PipelineOp>,
}

impl PipelineDesc {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// A schema-resolved column.
#[derive(Clone, Debug)]
struct Col {
    name: String,
    kind: FeatureKind,
    dim: Dimension,
}

fn resolve(schema: &FeatureSchema, refs: &[String]) -> Result<Vec<Col>> {
    let mut out = Vec::new();
    for r in refs {
        for (fi, ci) in schema.resolve_ref(r)? {
            let f = &schema.features[fi];
            out.push(Col { name: f.column_names()[ci].clone(), kind: f.kind, dim: f.dim });
        }
    }
    Ok(out)
}

fn distinct_dims(cols: &[Col]) -> Vec<Dimension> {
    let mut seen: Vec<Dimension> = Vec::new();
    for c in cols {
        if !seen.contains(&c.dim) {
            seen.push(c.dim);
        }
    }
    seen
}

fn names<'a>(cols: impl IntoIterator<Item = &'a Col>) -> Vec<String> {
    cols.into_iter().map(|c| c.name.clone()).collect()
}

fn dims_text(dims: &[Dimension]) -> String {
    dims.iter().map(|d| format!("[{d}]")).collect::<Vec<_>>().join(", ")
}

fn diag(rule: RuleId, severity: Severity, position: usize, message: String, columns: Vec<String>) -> Diagnostic {
    Diagnostic { rule, severity, position, message, columns }
}

/// Why a kernel over `cols` would exponentiate a dimensional quantity.
fn kernel_problem(cols: &[Col], scale_units: Option<&Dimension>) -> Option<String> {
    match distinct_dims(cols).as_slice() {
        [] => None,
        [d] if d.is_dimensionless() => None,
        [d] if scale_units == Some(d) => None,
        [d] => Some(format!("inputs carry [{d}] with no length scale in the same units")),
        many => Some(format!("inputs mix units {}", dims_text(many))),
    }
}

fn lint_op(schema: &FeatureSchema, pos: usize, op: &PipelineOp, out: &mut Vec<Diagnostic>) -> Result<()> {
    use RuleId::*;
    use Severity::Error as E;
    match op {
        PipelineOp::Pca { columns } => {
            let cols = resolve(schema, columns)?;
            let dims = distinct_dims(&cols);
            if dims.len() > 1 {
                out.push(diag(R1, E, pos, format!("PCA is not units covariant across {}", dims_text(&dims)), names(&cols)));
            }
        }
        PipelineOp::Kernel { kind, columns, factors, scale_units } => match kind {
            KernelKind::Rbf | KernelKind::Poly => {
                let cols = resolve(schema, columns)?;
                if let Some(why) = kernel_problem(&cols, scale_units.as_ref()) {
                    out.push(diag(R2, E, pos, format!("{} kernel: {why}", format!("{kind:?}").to_lowercase()), names(&cols)));
                }
            }
            KernelKind::Product => {
                let mut groups = factors.clone();
                if !columns.is_empty() {
                    groups.push(columns.clone());
                }
                for group in &groups {
                    let cols = resolve(schema, group)?;
                    // Each factor owns a length scale in its own units.
                    let dims = distinct_dims(&cols);
                    if dims.len() > 1 {
                        out.push(diag(R2, E, pos, format!("product kernel factor mixes units {}", dims_text(&dims)), names(&cols)));
                    }
                }
            }
        },
        PipelineOp::Norm { kind, columns } => {
            let cols = resolve(schema, columns)?;
            let dims = distinct_dims(&cols);
            let geometric: Vec<&Col> = cols.iter().filter(|c| c.kind.is_geometric()).collect();
            match kind {
                NormKind::L1 | NormKind::Linf => {
                    if dims.len() > 1 {
                        out.push(diag(R5, E, pos, format!("{kind:?} norm over mixed units {}", dims_text(&dims)), names(&cols)));
                    } else if !geometric.is_empty() {
                        out.push(diag(R5, E, pos, format!("{kind:?} norm over vector or tensor components is not rotation invariant"), names(geometric)));
                    }
                }
                NormKind::L2 => {
                    if dims.len() > 1 {
                        out.push(diag(R5, Severity::Warning, pos, format!("L2 norm over mixed units {}", dims_text(&dims)), names(&cols)));
                    }
                }
            }
        }
        PipelineOp::Nonlinearity { name, homogeneous, columns } => {
            let cols = resolve(schema, columns)?;
            let geometric: Vec<&Col> = cols.iter().filter(|c| c.kind.is_geometric()).collect();
            if !geometric.is_empty() {
                out.push(diag(R3, E, pos, format!("`{name}` applied componentwise to geometric features"), names(geometric)));
            }
            if !homogeneous {
                let dimensional: Vec<&Col> = cols.iter().filter(|c| !c.kind.is_geometric() && !c.dim.is_dimensionless()).collect();
                if !dimensional.is_empty() {
                    out.push(diag(R4, E, pos, format!("non-homogeneous `{name}` applied to dimensional scalars"), names(dimensional)));
                }
            }
        }
        PipelineOp::Normalize { variant, per_component, columns } => {
            let cols = resolve(schema, columns)?;
            if *per_component {
                let geometric: Vec<&Col> = cols.iter().filter(|c| c.kind.is_geometric()).collect();
                if !geometric.is_empty() {
                    out.push(diag(R6, E, pos, format!("`{variant}` scales vector or tensor components independently"), names(geometric)));
                }
            }
        }
        PipelineOp::Loss { terms } => {
            let mut dims: Vec<Dimension> = Vec::new();
            for t in terms {
                if !dims.contains(&t.units) {
                    dims.push(t.units);
                }
            }
            if dims.len() > 1 {
                let cols = terms.iter().map(|t| t.name.clone()).collect();
                out.push(diag(R7, E, pos, format!("loss terms carry different units {}", dims_text(&dims)), cols));
            }
        }
    }
    Ok(())
}

/// Run every rule over `pipe`. Diagnostics come back ordered by op position,
/// then rule id. Unknown column references fail with `SchemaMismatch`.
pub fn lint_pipeline(schema: &FeatureSchema, pipe: &PipelineDesc) -> Result<Vec<Diagnostic>> {
    schema.validate()?;
    let mut out = Vec::new();
    for (pos, op) in pipe.ops.iter().enumerate() {
        lint_op(schema, pos, op, &mut out)?;
    }
    out.sort_by_key(|d| (d.position, d.rule));
    Ok(out)
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Rule ids that fired, deduplicated.
pub fn fired_rules(diags: &[Diagnostic]) -> BTreeSet<RuleId> {
    diags.iter().map(|d| d.rule).collect()
}
