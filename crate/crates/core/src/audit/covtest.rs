//! Sampled commuting-diagram checks.
//!
//! For a group element `g` acting on inputs and `ρ(g)` on outputs, a
//! covariant function satisfies `f(g·x) = ρ(g)·f(x)`. The harness samples
//! `g`, evaluates both sides on every probe record and reports the largest
//! relative gap.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dimensions::{Dimension, UnitScaling, N_BASE};
use crate::geometry::{equivariant_combination, gram_invariants, haar_orthogonal, rotate_feature, GeomFeature, GeomValue, Orthogonal3, Vec3};
use crate::schema::{kind_of, value_from_components, FeatureEntry, FeatureKind, FeatureSchema};
use crate::{Error, Result};

/// Guards the relative deviation against zero outputs.
pub const EPSILON: f64 = 1e-30;
/// Tolerance of the built-in equivariant fixture run on every invocation.
pub const SELF_CHECK_TOLERANCE: f64 = 1e-10;
/// Unit scales are drawn log-uniformly from `[e^-LOG_SCALE_RANGE, e^LOG_SCALE_RANGE]`.
pub const LOG_SCALE_RANGE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupTag {
    O3,
    #[serde(rename = "O3-proper")]
    O3Proper,
    UnitsRescaling,
}

impl fmt::Display for GroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupTag::O3 => "O3",
            GroupTag::O3Proper => "O3-proper",
            GroupTag::UnitsRescaling => "UnitsRescaling",
        })
    }
}

impl FromStr for GroupTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O3" => Ok(GroupTag::O3),
            "O3-proper" => Ok(GroupTag::O3Proper),
            "UnitsRescaling" => Ok(GroupTag::UnitsRescaling),
            _ => Err(Error::Parse(format!("unknown group `{s}` (expected O3, O3-proper or UnitsRescaling)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupElement {
    Orthogonal(Orthogonal3),
    Units(UnitScaling),
}

impl GroupElement {
    pub fn identity(group: GroupTag) -> Self {
        match group {
            GroupTag::O3 | GroupTag::O3Proper => GroupElement::Orthogonal(Orthogonal3::identity()),
            GroupTag::UnitsRescaling => GroupElement::Units(UnitScaling::identity()),
        }
    }

    /// Element for trial `trial` of a run seeded with `seed`.
    pub fn sample(group: GroupTag, seed: u64, trial: usize) -> Self {
        let s = trial_seed(seed, trial);
        match group {
            GroupTag::O3 => GroupElement::Orthogonal(haar_orthogonal(s, false)),
            GroupTag::O3Proper => GroupElement::Orthogonal(haar_orthogonal(s, true)),
            GroupTag::UnitsRescaling => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let mut scale = [1.0; N_BASE];
                for x in &mut scale {
                    *x = rng.random_range(-LOG_SCALE_RANGE..=LOG_SCALE_RANGE).exp();
                }
                GroupElement::Units(UnitScaling::new(scale).expect("exp is positive"))
            }
        }
    }

    pub fn act(&self, f: &GeomFeature) -> GeomFeature {
        match self {
            GroupElement::Orthogonal(r) => rotate_feature(f, r),
            GroupElement::Units(s) => GeomFeature { name: f.name.clone(), value: f.value.scaled(s.factor(&f.value.dim())) },
        }
    }
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn default_trials() -> usize {
    32
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTestSpec {
    pub group: GroupTag,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Input features acted on by the group; all of them when absent.
    #[serde(default)]
    pub transform: Option<Vec<String>>,
    /// Declared outputs. `ρ(g)` rotates vectors and tensors and rescales each
    /// output by the factor of its declared dimension.
    pub output: Vec<FeatureEntry>,
}

impl CovarianceTestSpec {
    pub fn new(group: GroupTag, output: Vec<FeatureEntry>) -> Self {
        Self { group, trials: default_trials(), seed: 0, tolerance: default_tolerance(), transform: None, output }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        FeatureSchema::new(self.output.clone()).map(|_| ())
    }

    fn transforms(&self, name: &str) -> bool {
        self.transform.as_ref().is_none_or(|t| t.iter().any(|n| n == name))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialDeviation {
    pub trial: usize,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub max_deviation: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub group: GroupTag,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub probes: usize,
    pub deviations: Vec<TrialDeviation>,
    pub max_deviation: f64,
    pub pass: bool,
    /// Result of the built-in equivariant fixture. A failure here means the
    /// harness itself is broken, and the whole report fails.
    pub self_check: SelfCheck,
}

/// `‖a − b‖ / (‖a‖ + ‖b‖ + ε)`; infinite when either side is non-finite or
/// the lengths differ.
pub fn relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.iter().chain(b).any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    diff / (norm(&mut a.iter().copied()) + norm(&mut b.iter().copied()) + EPSILON)
}

/// A black-box function over schema-typed records.
pub type RecordFn<'a> = dyn Fn(&[GeomFeature]) -> Result<Vec<GeomFeature>> + 'a;

/// Apply `ρ(g)` to outputs according to the declared output rule.
fn act_on_output(g: &GroupElement, out: &[GeomFeature], decl: &[FeatureEntry]) -> Option<Vec<f64>> {
    if out.len() != decl.len() {
        return None;
    }
    let mut flat = Vec::new();
    for (o, d) in out.iter().zip(decl) {
        if kind_of(&o.value) != d.kind {
            return None;
        }
        let v = GeomFeature { name: d.name.clone(), value: value_from_components(d.kind, d.dim, &o.value.components()) };
        flat.extend(g.act(&v).value.components());
    }
    Some(flat)
}

fn flatten(out: &[GeomFeature]) -> Vec<f64> {
    out.iter().flat_map(|f| f.value.components()).collect()
}

/// Largest relative deviation over `probes` for one group element.
/// Evaluation failures count as infinite deviation.
pub fn deviation_for(f: &RecordFn<'_>, spec: &CovarianceTestSpec, g: &GroupElement, probes: &[Vec<GeomFeature>]) -> f64 {
    let mut worst = 0.0_f64;
    for x in probes {
        let gx: Vec<GeomFeature> = x.iter().map(|feat| if spec.transforms(&feat.name) { g.act(feat) } else { feat.clone() }).collect();
        let dev = match (f(&gx), f(x)) {
            (Ok(lhs), Ok(fx)) => match act_on_output(g, &fx, &spec.output) {
                Some(rhs) => relative_deviation(&flatten(&lhs), &rhs),
                None => f64::INFINITY,
            },
            _ => f64::INFINITY,
        };
        // NaN must not hide behind max().
        worst = if dev.is_nan() { f64::INFINITY } else { worst.max(dev) };
    }
    worst
}

/// Sample `spec.trials` group elements and compare both paths of the
/// diagram on every probe. Probes must conform to `schema`.
pub fn test_covariance(f: &RecordFn<'_>, schema: &FeatureSchema, spec: &CovarianceTestSpec, probes: &[Vec<GeomFeature>]) -> Result<CovarianceReport> {
    spec.validate()?;
    if probes.is_empty() {
        return Err(Error::InvalidArgument("at least one probe record is needed".into()));
    }
    for p in probes {
        schema.record_to_flat(p)?;
    }
    let mut deviations: Vec<TrialDeviation> = (0..spec.trials)
        .map(|trial| TrialDeviation { trial, deviation: deviation_for(f, spec, &GroupElement::sample(spec.group, spec.seed, trial), probes) })
        .collect();
    deviations.sort_by_key(|d| d.trial);
    let max_deviation = deviations.iter().map(|d| d.deviation).fold(0.0, f64::max);
    let self_check = run_self_check(spec.group, spec.trials, spec.seed);
    Ok(CovarianceReport {
        group: spec.group,
        trials: spec.trials,
        seed: spec.seed,
        tolerance: spec.tolerance,
        probes: probes.len(),
        deviations,
        max_deviation,
        pass: max_deviation <= spec.tolerance && self_check.pass,
        self_check,
    })
}

/// Seeded probe records: positive log-normal scalars, Gaussian components
/// for vectors and tensors.
pub fn random_probes(schema: &FeatureSchema, n: usize, seed: u64) -> Vec<Vec<GeomFeature>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9b0b_e5ee_d000_0001);
    (0..n)
        .map(|_| {
            schema
                .features
                .iter()
                .map(|e| {
                    let comps: Vec<f64> = (0..e.kind.width())
                        .map(|_| {
                            let z: f64 = rng.sample(StandardNormal);
                            if e.kind == FeatureKind::Scalar { z.exp() } else { z }
                        })
                        .collect();
                    GeomFeature { name: e.name.clone(), value: value_from_components(e.kind, e.dim, &comps) }
                })
                .collect()
        })
        .collect()
}

/// Schema of the built-in fixture: two length vectors and a time.
pub fn fixture_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FeatureEntry::new("a", FeatureKind::Vector3, Dimension::length()),
        FeatureEntry::new("b", FeatureKind::Vector3, Dimension::length()),
        FeatureEntry::new("t", FeatureKind::Scalar, Dimension::time()),
    ])
    .expect("static schema")
}

pub fn fixture_output() -> Vec<FeatureEntry> {
    vec![FeatureEntry::new("v", FeatureKind::Vector3, Dimension::length() / Dimension::time())]
}

/// Covariant by construction under rotations, reflections and unit changes:
/// `(c₁ a + c₂ b) / t`, with coefficients from dimensionless Gram ratios.
pub fn fixture_fn(x: &[GeomFeature]) -> Result<Vec<GeomFeature>> {
    let (GeomValue::Vector(a), GeomValue::Vector(b), GeomValue::Scalar(t)) = (&x[0].value, &x[1].value, &x[2].value) else {
        return Err(Error::SchemaMismatch("fixture expects (vector, vector, scalar)".into()));
    };
    let g = gram_invariants(&[*a, *b])?;
    let (aa, ab, bb) = (g[0][0].value, g[0][1].value, g[1][1].value);
    let c1 = (ab / aa).tanh() + 0.5;
    let c2 = (bb / aa).sqrt().sin();
    let v = equivariant_combination(&[c1, c2], &[*a, *b])?;
    let out = Vec3::new(v.v.map(|c| c / t.value), v.dim / t.dim);
    Ok(vec![GeomFeature::vector("v", out)])
}

fn run_self_check(group: GroupTag, trials: usize, seed: u64) -> SelfCheck {
    let schema = fixture_schema();
    let probes = random_probes(&schema, 8, seed);
    let spec = CovarianceTestSpec { trials, seed, ..CovarianceTestSpec::new(group, fixture_output()) };
    let max_deviation = (0..trials)
        .map(|t| deviation_for(&fixture_fn, &spec, &GroupElement::sample(group, seed, t), &probes))
        .fold(0.0, f64::max);
    SelfCheck { max_deviation, pass: max_deviation <= SELF_CHECK_TOLERANCE }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GROUPS: [GroupTag; 3] = [GroupTag::O3, GroupTag::O3Proper, GroupTag::UnitsRescaling];

    #[test]
    fn fixture_passes_every_group() {
        let schema = fixture_schema();
        let probes = random_probes(&schema, 16, 3);
        for g in GROUPS {
            let spec = CovarianceTestSpec::new(g, fixture_output());
            let r = test_covariance(&fixture_fn, &schema, &spec, &probes).unwrap();
            assert!(r.pass && r.max_deviation < 1e-10, "{g}: {}", r.max_deviation);
            assert!(r.self_check.pass);
            assert_eq!(r.deviations.len(), 32);
        }
    }

    #[test]
    fn identity_element_gives_exact_zero() {
        let schema = fixture_schema();
        let probes = random_probes(&schema, 4, 0);
        let broken = |x: &[GeomFeature]| -> Result<Vec<GeomFeature>> {
            let GeomValue::Vector(a) = x[0].value else { unreachable!() };
            Ok(vec![GeomFeature::vector("v", Vec3::new([a.v[0].sin(), 1.0, a.v[2] * a.v[1]], Dimension::length() / Dimension::time()))])
        };
        for g in GROUPS {
            let spec = CovarianceTestSpec::new(g, fixture_output());
            assert_eq!(deviation_for(&fixture_fn, &spec, &GroupElement::identity(g), &probes), 0.0);
            assert_eq!(deviation_for(&broken, &spec, &GroupElement::identity(g), &probes), 0.0);
        }
    }

    #[test]
    fn non_covariant_function_fails() {
        let schema = fixture_schema();
        let probes = random_probes(&schema, 8, 1);
        let broken = |x: &[GeomFeature]| -> Result<Vec<GeomFeature>> {
            let GeomValue::Vector(a) = x[0].value else { unreachable!() };
            Ok(vec![GeomFeature::vector("v", Vec3::new([a.v[0].tanh(), 0.0, 0.0], Dimension::length() / Dimension::time()))])
        };
        for g in GROUPS {
            let spec = CovarianceTestSpec::new(g, fixture_output());
            let r = test_covariance(&broken, &schema, &spec, &probes).unwrap();
            assert!(!r.pass && r.max_deviation > 1e-3, "{g}");
            assert!(r.self_check.pass);
        }
    }

    #[test]
    fn untransformed_features_stay_fixed() {
        // `b` is held fixed, so a function depending on it alone is invariant
        // once the output rule declares a dimensionless scalar.
        let schema = fixture_schema();
        let probes = random_probes(&schema, 4, 2);
        let f = |x: &[GeomFeature]| -> Result<Vec<GeomFeature>> {
            let GeomValue::Vector(b) = x[1].value else { unreachable!() };
            Ok(vec![GeomFeature::scalar("s", crate::Quantity::dimensionless(b.v[0]))])
        };
        let mut spec = CovarianceTestSpec::new(GroupTag::O3, vec![FeatureEntry::new("s", FeatureKind::Scalar, Dimension::dimensionless())]);
        assert!(!test_covariance(&f, &schema, &spec, &probes).unwrap().pass);
        spec.transform = Some(vec!["a".into(), "t".into()]);
        assert!(test_covariance(&f, &schema, &spec, &probes).unwrap().pass);
    }

    #[test]
    fn evaluation_errors_and_bad_specs() {
        let schema = fixture_schema();
        let probes = random_probes(&schema, 2, 0);
        let failing = |_: &[GeomFeature]| -> Result<Vec<GeomFeature>> { Err(Error::Infeasible) };
        let spec = CovarianceTestSpec::new(GroupTag::O3, fixture_output());
        let r = test_covariance(&failing, &schema, &spec, &probes).unwrap();
        assert!(r.max_deviation.is_infinite() && !r.pass);
        let zero = CovarianceTestSpec { trials: 0, ..spec.clone() };
        assert!(test_covariance(&fixture_fn, &schema, &zero, &probes).is_err());
        let neg = CovarianceTestSpec { tolerance: -1.0, ..spec.clone() };
        assert!(test_covariance(&fixture_fn, &schema, &neg, &probes).is_err());
        let wrong = random_probes(&FeatureSchema::new(vec![FeatureEntry::new("a", FeatureKind::Scalar, Dimension::dimensionless())]).unwrap(), 1, 0);
        assert!(matches!(test_covariance(&fixture_fn, &schema, &spec, &wrong), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn zero_outputs_do_not_divide_by_zero() {
        assert_eq!(relative_deviation(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(relative_deviation(&[f64::NAN], &[0.0]).is_infinite());
        assert!((relative_deviation(&[1.0], &[-1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn group_sampling_is_seeded() {
        for g in GROUPS {
            assert_eq!(GroupElement::sample(g, 5, 3), GroupElement::sample(g, 5, 3));
            assert_ne!(GroupElement::sample(g, 5, 3), GroupElement::sample(g, 5, 4));
        }
        let GroupElement::Orthogonal(r) = GroupElement::sample(GroupTag::O3Proper, 1, 0) else { unreachable!() };
        assert!((r.det() - 1.0).abs() < 1e-12);
        let GroupElement::Units(s) = GroupElement::sample(GroupTag::UnitsRescaling, 1, 0) else { unreachable!() };
        assert!(s.scales().iter().all(|x| x.ln().abs() <= LOG_SCALE_RANGE));
        assert_eq!("O3-proper".parse::<GroupTag>().unwrap(), GroupTag::O3Proper);
        assert!("SO3".parse::<GroupTag>().is_err());
    }
}
