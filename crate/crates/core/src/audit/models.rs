//! Serializable black-box models for `audit covtest`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dimensions::{Dimension, Quantity};
use crate::geometry::{equivariant_combination, GeomFeature, GeomValue, Vec3};
use crate::model::{Mlp, UnitsCovariantModel};
use crate::schema::{kind_of, value_from_components, FeatureEntry, FeatureKind, FeatureSchema};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelDesc {
    /// MLP on the raw components of the listed features (all, when empty).
    /// Outputs are cut from the network output in declaration order.
    RawMlp {
        mlp: Mlp,
        #[serde(default)]
        inputs: Vec<String>,
        output: Vec<FeatureEntry>,
    },
    /// `Σ cᵢ vᵢ` over same-unit vectors, with coefficients from an MLP on the
    /// Gram matrix divided by `v₀·v₀`. Rotation and units covariant.
    GramMlp {
        mlp: Mlp,
        vectors: Vec<String>,
        #[serde(default = "default_output_name")]
        output: String,
    },
    /// A fitted units-covariant regressor over scalar features. A schema
    /// feature named like the learned constant overrides its value, so a
    /// passive units test can rescale the constant with everything else.
    UnitsCovariant {
        model: UnitsCovariantModel,
        #[serde(default = "default_output_name")]
        output: String,
    },
}

fn default_output_name() -> String {
    "y".into()
}

impl ModelDesc {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(text)?;
        m.prepare()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Networks given without parameters are initialized from their seed.
    fn prepare(&mut self) -> Result<()> {
        if let ModelDesc::RawMlp { mlp, .. } | ModelDesc::GramMlp { mlp, .. } = self {
            if mlp.widths.len() < 2 || mlp.widths.contains(&0) {
                return Err(Error::InvalidArgument(format!("bad network widths {:?}", mlp.widths)));
            }
            if mlp.params.is_empty() {
                *mlp = if mlp.first_layer_bias {
                    Mlp::new(&mlp.widths, mlp.activation, mlp.seed)
                } else {
                    Mlp::without_first_layer_bias(&mlp.widths, mlp.activation, mlp.seed)
                };
            }
            if mlp.params.len() != mlp.num_params() {
                return Err(Error::WidthMismatch { expected: mlp.num_params(), found: mlp.params.len() });
            }
        }
        Ok(())
    }

    /// Declared output features, used as the output transformation rule.
    pub fn output_schema(&self, schema: &FeatureSchema) -> Result<Vec<FeatureEntry>> {
        match self {
            ModelDesc::RawMlp { output, .. } => Ok(output.clone()),
            ModelDesc::GramMlp { vectors, output, .. } => {
                let dim = vector_dim(schema, vectors)?;
                Ok(vec![FeatureEntry::new(output.clone(), FeatureKind::Vector3, dim)])
            }
            ModelDesc::UnitsCovariant { model, output } => Ok(vec![FeatureEntry::new(output.clone(), FeatureKind::Scalar, model.target_dim)]),
        }
    }

    /// Check the model against `schema` before any evaluation.
    pub fn check(&self, schema: &FeatureSchema) -> Result<()> {
        match self {
            ModelDesc::RawMlp { mlp, inputs, output } => {
                let width: usize = self.raw_inputs(schema, inputs)?.iter().map(|&i| schema.features[i].kind.width()).sum();
                if width != mlp.input_width() {
                    return Err(Error::WidthMismatch { expected: mlp.input_width(), found: width });
                }
                let out: usize = output.iter().map(|o| o.kind.width()).sum();
                if out != mlp.output_width() {
                    return Err(Error::WidthMismatch { expected: mlp.output_width(), found: out });
                }
                FeatureSchema::new(output.clone()).map(|_| ())
            }
            ModelDesc::GramMlp { mlp, vectors, .. } => {
                vector_dim(schema, vectors)?;
                let n = vectors.len();
                if mlp.input_width() != n * (n + 1) / 2 || mlp.output_width() != n {
                    return Err(Error::WidthMismatch { expected: n * (n + 1) / 2, found: mlp.input_width() });
                }
                Ok(())
            }
            ModelDesc::UnitsCovariant { model, .. } => {
                for (name, dim) in model.input_names.iter().zip(&model.input_dims) {
                    let f = schema.feature(name).ok_or_else(|| Error::SchemaMismatch(format!("model input `{name}` missing from schema")))?;
                    if f.kind != FeatureKind::Scalar || f.dim != *dim {
                        return Err(Error::SchemaMismatch(format!("model input `{name}` must be a scalar with units [{dim}]")));
                    }
                }
                if let Some(c) = &model.constant {
                    if let Some(f) = schema.feature(&c.name) {
                        if f.kind != FeatureKind::Scalar || f.dim != c.dim {
                            return Err(Error::SchemaMismatch(format!("constant `{}` must be a scalar with units [{}]", c.name, c.dim)));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn raw_inputs(&self, schema: &FeatureSchema, inputs: &[String]) -> Result<Vec<usize>> {
        if inputs.is_empty() {
            return Ok((0..schema.features.len()).collect());
        }
        inputs
            .iter()
            .map(|n| schema.features.iter().position(|f| &f.name == n).ok_or_else(|| Error::SchemaMismatch(format!("unknown feature `{n}`"))))
            .collect()
    }

    /// Evaluate on one record laid out as `schema`.
    pub fn evaluate(&self, schema: &FeatureSchema, record: &[GeomFeature]) -> Result<Vec<GeomFeature>> {
        let get = |name: &str| -> Result<&GeomFeature> {
            record.iter().find(|f| f.name == name).ok_or_else(|| Error::SchemaMismatch(format!("record lacks `{name}`")))
        };
        match self {
            ModelDesc::RawMlp { mlp, inputs, output } => {
                let mut x = Vec::new();
                for i in self.raw_inputs(schema, inputs)? {
                    x.extend(get(&schema.features[i].name)?.value.components());
                }
                let y = mlp.predict(&x)?;
                let mut off = 0;
                Ok(output
                    .iter()
                    .map(|o| {
                        let w = o.kind.width();
                        off += w;
                        GeomFeature { name: o.name.clone(), value: value_from_components(o.kind, o.dim, &y[off - w..off]) }
                    })
                    .collect())
            }
            ModelDesc::GramMlp { mlp, vectors, output } => {
                let vs = vectors
                    .iter()
                    .map(|n| match &get(n)?.value {
                        GeomValue::Vector(v) => Ok(*v),
                        other => Err(Error::SchemaMismatch(format!("`{n}` is a {:?}, expected a vector", kind_of(other)))),
                    })
                    .collect::<Result<Vec<Vec3>>>()?;
                let g = crate::geometry::gram_invariants(&vs)?;
                let g00 = g[0][0].value;
                if g00 <= 0.0 {
                    return Err(Error::Singularity(format!("`{}` has zero length", vectors[0])));
                }
                let mut feats = Vec::with_capacity(vs.len() * (vs.len() + 1) / 2);
                for i in 0..vs.len() {
                    for j in i..vs.len() {
                        feats.push(g[i][j].value / g00);
                    }
                }
                let c = mlp.predict(&feats)?;
                Ok(vec![GeomFeature::vector(output.clone(), equivariant_combination(&c, &vs)?)])
            }
            ModelDesc::UnitsCovariant { model, output } => {
                let mut x = Vec::with_capacity(model.input_names.len());
                for n in &model.input_names {
                    match &get(n)?.value {
                        GeomValue::Scalar(q) => x.push(q.value),
                        _ => return Err(Error::SchemaMismatch(format!("`{n}` must be a scalar"))),
                    }
                }
                let y = match model.constant.as_ref().and_then(|c| record.iter().find(|f| f.name == c.name)) {
                    Some(GeomFeature { value: GeomValue::Scalar(q), .. }) => {
                        let mut m = model.clone();
                        if let Some(c) = m.constant.as_mut() {
                            if q.value <= 0.0 {
                                return Err(Error::DimensionError(format!("constant `{}` must be positive", c.name)));
                            }
                            c.log_magnitude = q.value.ln();
                        }
                        m.predict(&x)?
                    }
                    _ => model.predict(&x)?,
                };
                Ok(vec![GeomFeature::scalar(output.clone(), Quantity::new(y, model.target_dim))])
            }
        }
    }
}

fn vector_dim(schema: &FeatureSchema, vectors: &[String]) -> Result<Dimension> {
    let mut dim = None;
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("gram-mlp needs at least one vector".into()));
    }
    for n in vectors {
        let f = schema.feature(n).ok_or_else(|| Error::SchemaMismatch(format!("unknown feature `{n}`")))?;
        if f.kind != FeatureKind::Vector3 {
            return Err(Error::SchemaMismatch(format!("`{n}` is not a vector")));
        }
        match dim {
            None => dim = Some(f.dim),
            Some(d) if d != f.dim => return Err(Error::MixedDims(d.to_string(), f.dim.to_string())),
            Some(_) => {}
        }
    }
    Ok(dim.expect("nonempty"))
}
