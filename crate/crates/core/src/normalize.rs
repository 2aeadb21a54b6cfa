//! Covariant data normalization.
//!
//! Scalars are pooled by exact dimension ("units class"): every member of a
//! class shares one shift and one scale. Each vector feature is shifted by
//! its mean vector and divided by one common scale derived from dot products,
//! so the normalization commutes with rotations. Tensors are shifted by their
//! mean tensor and scaled by a mean spectral norm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dimensions::{Dimension, UnitScaling, N_BASE};
use crate::geometry::{spectral_norm, Tensor3, Vec3};
use crate::linalg::lstsq_min_norm;
use crate::schema::{Dataset, FeatureKind, FeatureSchema};
use crate::{Error, Result};

/// Scalar features sharing one exact dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitsClass {
    pub dim: Dimension,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarClassStats {
    pub class: UnitsClass,
    pub shift: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorStats {
    pub name: String,
    pub shift: Vec3,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorStats {
    pub name: String,
    pub shift: Tensor3,
    pub scale: f64,
}

/// Fitted base-unit scales. `scales[u]` is the size of the fitted unit for
/// base unit `u`, in the data's units (a length scale of 5 m gives 5).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub scales: [f64; N_BASE],
    /// Root-mean-square of `log σⱼ − log(fitted scale for feature j)`.
    pub residual: f64,
}

impl ScaleFit {
    /// The change of units that measures everything in the fitted units.
    pub fn as_unit_scaling(&self) -> UnitScaling {
        UnitScaling::new(self.scales.map(|s| 1.0 / s)).expect("fitted scales are positive")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub version: u32,
    pub scalar_classes: Vec<ScalarClassStats>,
    pub vectors: Vec<VectorStats>,
    pub tensors: Vec<TensorStats>,
    #[serde(default)]
    pub unit_scales: Option<ScaleFit>,
    /// Degenerate-scale notices raised during fitting.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Normalizer {
    /// The multipliers applied to each component of vector feature `name`.
    /// All three are the same value.
    pub fn component_multipliers(&self, name: &str) -> Option<[f64; 3]> {
        self.vectors.iter().find(|v| v.name == name).map(|v| [1.0 / v.scale; 3])
    }

    fn scalar_stats(&self, name: &str) -> Option<&ScalarClassStats> {
        self.scalar_classes.iter().find(|c| c.class.members.iter().any(|m| m == name))
    }
}

/// Split values into per-feature slices in schema order.
fn feature_columns(data: &Dataset, schema: &FeatureSchema) -> Result<Vec<Vec<Vec<f64>>>> {
    let layout = data.schema_layout(schema)?;
    let mut off = 0;
    let mut out = Vec::with_capacity(schema.features.len());
    for f in &schema.features {
        let w = f.kind.width();
        let cols = &layout[off..off + w];
        off += w;
        out.push(data.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect());
    }
    Ok(out)
}

fn mean_components(samples: &[Vec<f64>], width: usize) -> Vec<f64> {
    let n = samples.len() as f64;
    (0..width).map(|k| samples.iter().map(|s| s[k]).sum::<f64>() / n).collect()
}

fn vector_spread(samples: &[Vec<f64>], mean: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let ms: f64 = samples
        .iter()
        .map(|s| s.iter().zip(mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>() / 3.0)
        .sum::<f64>()
        / n;
    ms.sqrt()
}

fn tensor_spread(samples: &[Vec<f64>], mean: &[f64], dim: Dimension) -> f64 {
    let n = samples.len() as f64;
    samples
        .iter()
        .map(|s| {
            let mut m = [[0.0; 3]; 3];
            for k in 0..9 {
                m[k / 3][k % 3] = s[k] - mean[k];
            }
            spectral_norm(&Tensor3::new(m, dim)).value
        })
        .sum::<f64>()
        / n
}

fn guard_scale(scale: f64, what: &str, warnings: &mut Vec<String>) -> f64 {
    if scale > 0.0 && scale.is_finite() {
        scale
    } else {
        warnings.push(format!("degenerate scale for {what}; using 1"));
        1.0
    }
}

/// Fit shifts and scales. Scalars are pooled per units class (population
/// mean and root-variance); vectors and tensors are handled per feature.
pub fn fit_normalizer(data: &Dataset, schema: &FeatureSchema) -> Result<Normalizer> {
    if data.is_empty() {
        return Err(Error::EmptyClass("dataset has no samples".into()));
    }
    let cols = feature_columns(data, schema)?;
    let mut warnings = Vec::new();

    // Classes are ordered by first appearance in the schema.
    let mut class_order: Vec<Dimension> = Vec::new();
    let mut classes: BTreeMap<usize, (UnitsClass, Vec<f64>)> = BTreeMap::new();
    let mut vectors = Vec::new();
    let mut tensors = Vec::new();

    for (f, samples) in schema.features.iter().zip(&cols) {
        match f.kind {
            FeatureKind::Scalar => {
                let idx = match class_order.iter().position(|d| *d == f.dim) {
                    Some(i) => i,
                    None => {
                        class_order.push(f.dim);
                        class_order.len() - 1
                    }
                };
                let entry = classes
                    .entry(idx)
                    .or_insert_with(|| (UnitsClass { dim: f.dim, members: Vec::new() }, Vec::new()));
                entry.0.members.push(f.name.clone());
                entry.1.extend(samples.iter().map(|s| s[0]));
            }
            FeatureKind::Vector3 => {
                let mean = mean_components(samples, 3);
                let scale = guard_scale(vector_spread(samples, &mean), &format!("vector `{}`", f.name), &mut warnings);
                vectors.push(VectorStats {
                    name: f.name.clone(),
                    shift: Vec3::new([mean[0], mean[1], mean[2]], f.dim),
                    scale,
                });
            }
            FeatureKind::Tensor3 => {
                let mean = mean_components(samples, 9);
                let scale = guard_scale(tensor_spread(samples, &mean, f.dim), &format!("tensor `{}`", f.name), &mut warnings);
                let mut m = [[0.0; 3]; 3];
                for k in 0..9 {
                    m[k / 3][k % 3] = mean[k];
                }
                tensors.push(TensorStats { name: f.name.clone(), shift: Tensor3::new(m, f.dim), scale });
            }
        }
    }

    let scalar_classes = classes
        .into_values()
        .map(|(class, values)| {
            let n = values.len() as f64;
            let shift = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - shift) * (v - shift)).sum::<f64>() / n;
            let scale = guard_scale(var.sqrt(), &format!("units class {}", class.dim), &mut warnings);
            ScalarClassStats { class, shift, scale }
        })
        .collect();

    Ok(Normalizer { version: 1, scalar_classes, vectors, tensors, unit_scales: None, warnings })
}

/// Apply a fitted normalizer. Output columns keep their names; values are
/// dimensionless.
pub fn apply_normalizer(n: &Normalizer, data: &Dataset, schema: &FeatureSchema) -> Result<Dataset> {
    let layout = data.schema_layout(schema)?;
    // Per schema column: (shift, divisor)
    let mut plan: Vec<(usize, f64, f64)> = Vec::with_capacity(layout.len());
    let mut off = 0;
    for f in &schema.features {
        let w = f.kind.width();
        match f.kind {
            FeatureKind::Scalar => {
                let s = n
                    .scalar_stats(&f.name)
                    .ok_or_else(|| Error::SchemaMismatch(format!("normalizer has no class for scalar `{}`", f.name)))?;
                if s.class.dim != f.dim {
                    return Err(Error::SchemaMismatch(format!("scalar `{}` changed dimension", f.name)));
                }
                plan.push((layout[off], s.shift, s.scale));
            }
            FeatureKind::Vector3 => {
                let s = n
                    .vectors
                    .iter()
                    .find(|v| v.name == f.name)
                    .ok_or_else(|| Error::SchemaMismatch(format!("normalizer has no vector `{}`", f.name)))?;
                if s.shift.dim != f.dim {
                    return Err(Error::SchemaMismatch(format!("vector `{}` changed dimension", f.name)));
                }
                for k in 0..3 {
                    plan.push((layout[off + k], s.shift.v[k], s.scale));
                }
            }
            FeatureKind::Tensor3 => {
                let s = n
                    .tensors
                    .iter()
                    .find(|t| t.name == f.name)
                    .ok_or_else(|| Error::SchemaMismatch(format!("normalizer has no tensor `{}`", f.name)))?;
                if s.shift.dim != f.dim {
                    return Err(Error::SchemaMismatch(format!("tensor `{}` changed dimension", f.name)));
                }
                for k in 0..9 {
                    plan.push((layout[off + k], s.shift.m[k / 3][k % 3], s.scale));
                }
            }
        }
        off += w;
    }
    let rows = data
        .rows
        .iter()
        .map(|r| plan.iter().map(|&(c, mu, sigma)| (r[c] - mu) / sigma).collect())
        .collect();
    Dataset::new(schema.all_columns(), rows)
}

/// Fit one scale per base unit so that each feature, measured in the fitted
/// units, has spread as close to one as possible (least squares in log
/// space, minimum-norm when under-determined).
pub fn fit_base_unit_scales(data: &Dataset, schema: &FeatureSchema) -> Result<ScaleFit> {
    if data.is_empty() {
        return Err(Error::EmptyClass("dataset has no samples".into()));
    }
    let cols = feature_columns(data, schema)?;
    let mut rows = Vec::new();
    let mut log_spread = Vec::new();
    for (f, samples) in schema.features.iter().zip(&cols) {
        let spread = match f.kind {
            FeatureKind::Scalar => {
                let mean = mean_components(samples, 1);
                let n = samples.len() as f64;
                (samples.iter().map(|v| (v[0] - mean[0]).powi(2)).sum::<f64>() / n).sqrt()
            }
            FeatureKind::Vector3 => vector_spread(samples, &mean_components(samples, 3)),
            FeatureKind::Tensor3 => tensor_spread(samples, &mean_components(samples, 9), f.dim),
        };
        if !(spread > 0.0 && spread.is_finite()) {
            continue;
        }
        rows.push(f.dim.exponents_f64().to_vec());
        log_spread.push(spread.ln());
    }
    if rows.is_empty() {
        return Ok(ScaleFit { scales: [1.0; N_BASE], residual: 0.0 });
    }
    let log_scales = lstsq_min_norm(&rows, &log_spread, N_BASE);
    let ms: f64 = rows
        .iter()
        .zip(&log_spread)
        .map(|(a, b)| {
            let fit: f64 = a.iter().zip(&log_scales).map(|(x, y)| x * y).sum();
            (b - fit).powi(2)
        })
        .sum::<f64>()
        / rows.len() as f64;
    let mut scales = [1.0; N_BASE];
    for (s, l) in scales.iter_mut().zip(&log_scales) {
        *s = l.exp();
    }
    Ok(ScaleFit { scales, residual: ms.sqrt() })
}
