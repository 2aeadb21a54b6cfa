//! Feature schemas and tabular datasets.
//!
//! A schema groups flat CSV columns into typed features: a scalar owns one
//! column, a 3-vector `name` owns `name.x,name.y,name.z`, a 3×3 tensor owns
//! `name.xx … name.zz` (row-major). Every feature carries a [`Dimension`].

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dimensions::{Dimension, Quantity};
use crate::geometry::{GeomFeature, GeomValue, Tensor3, Vec3};
use crate::{Error, Result};

pub const VECTOR_SUFFIXES: [&str; 3] = ["x", "y", "z"];
pub const TENSOR_SUFFIXES: [&str; 9] = ["xx", "xy", "xz", "yx", "yy", "yz", "zx", "zy", "zz"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Scalar,
    Vector3,
    Tensor3,
}

impl FeatureKind {
    pub fn width(self) -> usize {
        match self {
            FeatureKind::Scalar => 1,
            FeatureKind::Vector3 => 3,
            FeatureKind::Tensor3 => 9,
        }
    }

    pub fn is_geometric(self) -> bool {
        self != FeatureKind::Scalar
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub dim: Dimension,
    /// Explicit column names; derived from `name` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
}

impl FeatureEntry {
    pub fn new(name: impl Into<String>, kind: FeatureKind, dim: Dimension) -> Self {
        Self { name: name.into(), kind, dim, columns: None }
    }

    pub fn column_names(&self) -> Vec<String> {
        if let Some(cols) = &self.columns {
            return cols.clone();
        }
        match self.kind {
            FeatureKind::Scalar => vec![self.name.clone()],
            FeatureKind::Vector3 => VECTOR_SUFFIXES.iter().map(|s| format!("{}.{s}", self.name)).collect(),
            FeatureKind::Tensor3 => TENSOR_SUFFIXES.iter().map(|s| format!("{}.{s}", self.name)).collect(),
        }
    }
}

fn default_version() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(default = "default_version")]
    pub version: u32,
    pub features: Vec<FeatureEntry>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureEntry>) -> Result<Self> {
        let s = Self { version: 1, features };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        let mut cols = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate feature `{}`", f.name)));
            }
            let c = f.column_names();
            if c.len() != f.kind.width() {
                return Err(Error::SchemaMismatch(format!(
                    "feature `{}` maps {} columns, expected {}",
                    f.name,
                    c.len(),
                    f.kind.width()
                )));
            }
            for col in c {
                if !cols.insert(col.clone()) {
                    return Err(Error::SchemaMismatch(format!("column `{col}` mapped twice")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureEntry> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn all_columns(&self) -> Vec<String> {
        self.features.iter().flat_map(FeatureEntry::column_names).collect()
    }

    /// Resolve a column name to `(feature index, component index)`.
    pub fn resolve_column(&self, column: &str) -> Option<(usize, usize)> {
        self.features.iter().enumerate().find_map(|(i, f)| {
            f.column_names().iter().position(|c| c == column).map(|k| (i, k))
        })
    }

    /// Resolve a reference that is either a feature name (all its columns) or
    /// a single column name.
    pub fn resolve_ref(&self, reference: &str) -> Result<Vec<(usize, usize)>> {
        if let Some(i) = self.features.iter().position(|f| f.name == reference) {
            return Ok((0..self.features[i].kind.width()).map(|k| (i, k)).collect());
        }
        self.resolve_column(reference)
            .map(|ik| vec![ik])
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown column or feature `{reference}`")))
    }

    /// Width of one flattened record.
    pub fn width(&self) -> usize {
        self.features.iter().map(|f| f.kind.width()).sum()
    }

    /// Build typed features from a flat row ordered as [`Self::all_columns`].
    pub fn record_from_flat(&self, flat: &[f64]) -> Result<Vec<GeomFeature>> {
        if flat.len() != self.width() {
            return Err(Error::WidthMismatch { expected: self.width(), found: flat.len() });
        }
        let mut off = 0;
        let mut out = Vec::with_capacity(self.features.len());
        for f in &self.features {
            let w = f.kind.width();
            let vals = &flat[off..off + w];
            off += w;
            out.push(GeomFeature { name: f.name.clone(), value: value_from_components(f.kind, f.dim, vals) });
        }
        Ok(out)
    }

    /// Flatten typed features, checking names, kinds and dimensions.
    pub fn record_to_flat(&self, record: &[GeomFeature]) -> Result<Vec<f64>> {
        if record.len() != self.features.len() {
            return Err(Error::SchemaMismatch(format!(
                "record has {} features, schema has {}",
                record.len(),
                self.features.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.width());
        for (f, r) in self.features.iter().zip(record) {
            if f.name != r.name || kind_of(&r.value) != f.kind || r.value.dim() != f.dim {
                return Err(Error::SchemaMismatch(format!("record feature `{}` does not match schema entry `{}`", r.name, f.name)));
            }
            flat.extend(r.value.components());
        }
        Ok(flat)
    }
}

pub fn kind_of(v: &GeomValue) -> FeatureKind {
    match v {
        GeomValue::Scalar(_) => FeatureKind::Scalar,
        GeomValue::Vector(_) => FeatureKind::Vector3,
        GeomValue::Tensor(_) => FeatureKind::Tensor3,
    }
}

pub fn value_from_components(kind: FeatureKind, dim: Dimension, vals: &[f64]) -> GeomValue {
    match kind {
        FeatureKind::Scalar => GeomValue::Scalar(Quantity::new(vals[0], dim)),
        FeatureKind::Vector3 => GeomValue::Vector(Vec3::new([vals[0], vals[1], vals[2]], dim)),
        FeatureKind::Tensor3 => {
            let mut m = [[0.0; 3]; 3];
            for (k, v) in vals.iter().enumerate() {
                m[k / 3][k % 3] = *v;
            }
            GeomValue::Tensor(Tensor3::new(m, dim))
        }
    }
}

/// Rows of named numeric columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::WidthMismatch { expected: columns.len(), found: bad.len() });
        }
        Ok(Self { columns, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad number `{s}`", line + 1))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(columns, rows)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| crate::report::fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Column permutation mapping schema order onto this dataset's columns.
    /// Fails unless the schema covers exactly the dataset's columns.
    pub fn schema_layout(&self, schema: &FeatureSchema) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> = self.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let wanted = schema.all_columns();
        let mut layout = Vec::with_capacity(wanted.len());
        for c in &wanted {
            match index.get(c.as_str()) {
                Some(&i) => layout.push(i),
                None => return Err(Error::SchemaMismatch(format!("dataset lacks column `{c}`"))),
            }
        }
        if wanted.len() != self.columns.len() {
            let known: HashSet<&String> = wanted.iter().collect();
            let extra: Vec<&String> = self.columns.iter().filter(|c| !known.contains(c)).collect();
            return Err(Error::SchemaMismatch(format!("columns not covered by schema: {extra:?}")));
        }
        Ok(layout)
    }

    /// All rows as typed records.
    pub fn records(&self, schema: &FeatureSchema) -> Result<Vec<Vec<GeomFeature>>> {
        let layout = self.schema_layout(schema)?;
        self.rows
            .iter()
            .map(|row| {
                let flat: Vec<f64> = layout.iter().map(|&i| row[i]).collect();
                schema.record_from_flat(&flat)
            })
            .collect()
    }

    /// Apply `f` to every typed feature of every row, e.g. a rotation or a
    /// change of units. Columns come back in schema order.
    pub fn transformed(&self, schema: &FeatureSchema, f: impl Fn(&GeomFeature) -> GeomFeature) -> Result<Self> {
        let recs: Vec<Vec<GeomFeature>> = self.records(schema)?.iter().map(|r| r.iter().map(&f).collect()).collect();
        Self::from_records(schema, &recs)
    }

    pub fn from_records(schema: &FeatureSchema, records: &[Vec<GeomFeature>]) -> Result<Self> {
        let rows = records.iter().map(|r| schema.record_to_flat(r)).collect::<Result<Vec<_>>>()?;
        Self::new(schema.all_columns(), rows)
    }
}
