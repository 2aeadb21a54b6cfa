//! Exact dimension algebra over the base units (kg, m, s, K).
//!
//! A [`Dimension`] is a tuple of rational exponents, one per base unit.
//! Products of quantities add exponents, powers scale them. Because the
//! exponents are exact rationals, repeated products never drift and the
//! nullspace computations behind [`pi_basis`] are exact.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Div, Mul};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg;
use crate::{Error, Result};

pub type Rational = Ratio<i64>;

/// Ordered base units. Exponent index `i` of a [`Dimension`] refers to
/// `BASE_UNITS[i]`.
pub const BASE_UNITS: [&str; 4] = ["kg", "m", "s", "K"];
pub const N_BASE: usize = BASE_UNITS.len();

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Dimension {
    exps: [Rational; N_BASE],
}

impl Default for Dimension {
    fn default() -> Self {
        Self::dimensionless()
    }
}

impl Dimension {
    pub fn dimensionless() -> Self {
        Self { exps: [Rational::zero(); N_BASE] }
    }

    pub fn new(exps: [Rational; N_BASE]) -> Self {
        Self { exps }
    }

    /// Integer exponents in (kg, m, s, K) order.
    pub fn from_ints(exps: [i64; N_BASE]) -> Self {
        Self { exps: exps.map(Rational::from_integer) }
    }

    pub fn mass() -> Self {
        Self::from_ints([1, 0, 0, 0])
    }
    pub fn length() -> Self {
        Self::from_ints([0, 1, 0, 0])
    }
    pub fn time() -> Self {
        Self::from_ints([0, 0, 1, 0])
    }
    pub fn temperature() -> Self {
        Self::from_ints([0, 0, 0, 1])
    }

    pub fn exponents(&self) -> &[Rational; N_BASE] {
        &self.exps
    }

    pub fn exponent(&self, unit: usize) -> Rational {
        self.exps[unit]
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exps.iter().all(Zero::is_zero)
    }

    /// Exponents as floats, for numerical work on magnitudes.
    pub fn exponents_f64(&self) -> [f64; N_BASE] {
        self.exps.map(|e| e.to_f64().unwrap_or(f64::NAN))
    }

    pub fn pow(&self, r: Rational) -> Self {
        Self { exps: self.exps.map(|e| e * r) }
    }

    pub fn inv(&self) -> Self {
        self.pow(-Rational::one())
    }

    /// Parse the unit grammar used on the command line: factors `kg`, `m`,
    /// `s`, `K` (or `1`) joined by `*`, `·` or whitespace, each optionally
    /// raised with `^n` or `^(p/q)`; a `/` divides by the factor that
    /// follows it.
    pub fn parse(text: &str) -> Result<Self> {
        let err = |msg: &str| Error::Parse(format!("unit `{text}`: {msg}"));
        let mut out = Self::dimensionless();
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        let mut divide = false;
        let mut expect_factor = true;
        let mut seen_any = false;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() || c == '*' || c == '·' {
                i += 1;
                continue;
            }
            if c == '/' {
                if divide {
                    return Err(err("repeated `/`"));
                }
                divide = true;
                expect_factor = true;
                i += 1;
                continue;
            }
            if !c.is_ascii_alphanumeric() {
                return Err(err(&format!("unexpected character `{c}`")));
            }
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let token: String = chars[start..i].iter().collect();
            let base = match token.as_str() {
                "1" => None,
                t => match BASE_UNITS.iter().position(|u| *u == t) {
                    Some(p) => Some(p),
                    None => return Err(err(&format!("unknown unit `{t}`"))),
                },
            };
            let mut exp = Rational::one();
            if i < chars.len() && chars[i] == '^' {
                i += 1;
                let (e, next) = parse_exponent(&chars, i).ok_or_else(|| err("bad exponent"))?;
                exp = e;
                i = next;
            }
            if divide {
                exp = -exp;
                divide = false;
            }
            if let Some(p) = base {
                out.exps[p] += exp;
            }
            expect_factor = false;
            seen_any = true;
        }
        if !seen_any || expect_factor && divide {
            return Err(err("empty unit expression"));
        }
        Ok(out)
    }
}

fn parse_exponent(chars: &[char], mut i: usize) -> Option<(Rational, usize)> {
    let paren = chars.get(i) == Some(&'(');
    if paren {
        i += 1;
    }
    let start = i;
    if matches!(chars.get(i), Some('-') | Some('+')) {
        i += 1;
    }
    while i < chars.len() && (chars[i].is_ascii_digit() || (paren && chars[i] == '/') || (paren && chars[i] == '-' && chars[i - 1] == '/')) {
        i += 1;
    }
    let text: String = chars[start..i].iter().collect();
    if paren {
        if chars.get(i) != Some(&')') {
            return None;
        }
        i += 1;
    }
    parse_rational(&text).ok().map(|r| (r, i))
}

/// Parse `p`, `p/q`, or a short decimal like `-0.5` into a rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let t = text.trim();
    let err = || Error::Parse(format!("bad rational `{text}`"));
    if let Some((n, d)) = t.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| err())?;
        let d: i64 = d.trim().parse().map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        if frac.len() > 9 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let neg = whole.starts_with('-');
        let w: i64 = if whole.is_empty() || whole == "-" || whole == "+" { 0 } else { whole.parse().map_err(|_| err())? };
        let scale = 10i64.pow(frac.len() as u32);
        let f: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        let num = w.abs() * scale + f;
        return Ok(Rational::new(if neg { -num } else { num }, scale));
    }
    t.parse::<i64>().map(Rational::from_integer).map_err(|_| err())
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl Mul for Dimension {
    type Output = Dimension;
    fn mul(self, rhs: Dimension) -> Dimension {
        let mut exps = self.exps;
        for (e, r) in exps.iter_mut().zip(rhs.exps) {
            *e += r;
        }
        Dimension { exps }
    }
}

impl Div for Dimension {
    type Output = Dimension;
    fn div(self, rhs: Dimension) -> Dimension {
        self * rhs.inv()
    }
}

/// Componentwise exponent addition.
pub fn dim_mul(a: &Dimension, b: &Dimension) -> Dimension {
    *a * *b
}

/// Exponents scaled by `r`.
pub fn dim_pow(a: &Dimension, r: Rational) -> Dimension {
    a.pow(r)
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("1");
        }
        let mut first = true;
        for (unit, e) in BASE_UNITS.iter().zip(&self.exps) {
            if e.is_zero() {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if e.is_one() {
                write!(f, "{unit}")?;
            } else if e.is_integer() {
                write!(f, "{unit}^{}", e.numer())?;
            } else {
                write!(f, "{unit}^({})", format_rational(e))?;
            }
        }
        Ok(())
    }
}

impl FromStr for Dimension {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Dimension::parse(s)
    }
}

impl Serialize for Dimension {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<usize, (&str, String)> = self
            .exps
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.is_zero())
            .map(|(i, e)| (i, (BASE_UNITS[i], format_rational(e))))
            .collect();
        use serde::ser::SerializeMap;
        let mut m = serializer.serialize_map(Some(map.len()))?;
        for (_, (k, v)) in map {
            m.serialize_entry(k, &v)?;
        }
        m.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Text(String),
    Int(i64),
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum DimRepr {
            Text(String),
            Map(BTreeMap<String, ExponentRepr>),
        }
        let raw = match DimRepr::deserialize(deserializer)? {
            DimRepr::Text(t) => return Dimension::parse(&t).map_err(D::Error::custom),
            DimRepr::Map(m) => m,
        };
        let mut out = Dimension::dimensionless();
        for (k, v) in raw {
            let idx = BASE_UNITS
                .iter()
                .position(|u| *u == k)
                .ok_or_else(|| D::Error::custom(format!("unknown base unit `{k}`")))?;
            out.exps[idx] = match v {
                ExponentRepr::Int(n) => Rational::from_integer(n),
                ExponentRepr::Text(t) => parse_rational(&t).map_err(D::Error::custom)?,
            };
        }
        Ok(out)
    }
}

/// A real value expressed in some unit convention, tagged with its dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub dim: Dimension,
}

impl Quantity {
    pub fn new(value: f64, dim: Dimension) -> Self {
        Self { value, dim }
    }

    pub fn dimensionless(value: f64) -> Self {
        Self { value, dim: Dimension::dimensionless() }
    }

    /// Re-express the value under a change of unit convention. The dimension
    /// is unchanged.
    pub fn rescale(&self, s: &UnitScaling) -> Quantity {
        Quantity { value: self.value * s.factor(&self.dim), dim: self.dim }
    }
}

pub fn rescale_quantity(q: &Quantity, s: &UnitScaling) -> Quantity {
    q.rescale(s)
}

/// A change of unit convention. `scale[u]` is the factor by which the value
/// of a quantity with dimension `u¹` is multiplied when base unit `u` is
/// replaced (metres to centimetres gives 100 for `m`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitScaling {
    scale: [f64; N_BASE],
}

impl UnitScaling {
    pub fn new(scale: [f64; N_BASE]) -> Result<Self> {
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(format!("unit scales must be positive and finite: {scale:?}")));
        }
        Ok(Self { scale })
    }

    pub fn identity() -> Self {
        Self { scale: [1.0; N_BASE] }
    }

    pub fn scales(&self) -> &[f64; N_BASE] {
        &self.scale
    }

    /// Multiplier Π_u s_u^{e_u} applied to values of dimension `dim`.
    pub fn factor(&self, dim: &Dimension) -> f64 {
        self.scale
            .iter()
            .zip(dim.exponents())
            .filter(|(_, e)| !e.is_zero())
            .map(|(s, e)| {
                if e.is_integer() {
                    s.powi(e.to_integer() as i32)
                } else {
                    s.powf(e.to_f64().unwrap_or(f64::NAN))
                }
            })
            .product()
    }

    /// Apply `self` first, then `then`.
    pub fn compose(&self, then: &UnitScaling) -> UnitScaling {
        let mut scale = self.scale;
        for (a, b) in scale.iter_mut().zip(then.scale) {
            *a *= b;
        }
        UnitScaling { scale }
    }

    pub fn inverse(&self) -> UnitScaling {
        UnitScaling { scale: self.scale.map(|s| 1.0 / s) }
    }
}

/// Result of solving for a power product of inputs with a given dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentSolution {
    /// One exponent per input; Π inputᵢ^{particularᵢ} has the target dimension.
    #[serde(with = "rational_vec")]
    pub particular: Vec<Rational>,
    /// Basis of exponent vectors whose power products are dimensionless.
    #[serde(with = "rational_vec_vec")]
    pub nullspace: Vec<Vec<Rational>>,
}

impl ExponentSolution {
    pub fn is_unique(&self) -> bool {
        self.nullspace.is_empty()
    }
}

/// Dimension of Π inputsᵢ^{exponentsᵢ}.
pub fn combine(inputs: &[Dimension], exponents: &[Rational]) -> Dimension {
    inputs
        .iter()
        .zip(exponents)
        .fold(Dimension::dimensionless(), |acc, (d, e)| acc * d.pow(*e))
}

fn exponent_matrix(inputs: &[Dimension]) -> Vec<Vec<Rational>> {
    (0..N_BASE)
        .map(|u| inputs.iter().map(|d| d.exponent(u)).collect())
        .collect()
}

/// Find exponents e with Π inputsᵢ^{eᵢ} carrying dimension `target`, plus a
/// basis of all dimensionless combinations.
///
/// The particular solution returned is the one of minimum Euclidean norm, so
/// it has no component along any dimensionless direction and is unique.
pub fn solve_target(inputs: &[Dimension], target: &Dimension) -> Result<ExponentSolution> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("solve_target needs at least one input".into()));
    }
    let m = exponent_matrix(inputs);
    let n = inputs.len();
    let basic = linalg::solve_basic(&m, target.exponents(), n).ok_or(Error::Infeasible)?;
    let nullspace = linalg::nullspace(&m, n);
    let particular = linalg::project_out(&basic, &nullspace);
    debug_assert_eq!(combine(inputs, &particular), *target);
    Ok(ExponentSolution { particular, nullspace })
}

/// Basis of the dimensionless power products of `inputs`, each a primitive
/// integer exponent vector with positive leading entry.
pub fn pi_basis(inputs: &[Dimension]) -> Vec<Vec<Rational>> {
    if inputs.is_empty() {
        return Vec::new();
    }
    linalg::nullspace(&exponent_matrix(inputs), inputs.len())
}

pub(crate) mod rational_vec {
    use super::*;
    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let text: Vec<String> = v.iter().map(format_rational).collect();
        text.serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Rational>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(d)?;
        raw.iter().map(|t| parse_rational(t).map_err(D::Error::custom)).collect()
    }
}

pub(crate) mod rational_vec_vec {
    use super::*;
    pub fn serialize<S: Serializer>(v: &[Vec<Rational>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let text: Vec<Vec<String>> = v.iter().map(|r| r.iter().map(format_rational).collect()).collect();
        text.serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<Rational>>, D::Error> {
        let raw: Vec<Vec<String>> = Vec::deserialize(d)?;
        raw.iter()
            .map(|r| r.iter().map(|t| parse_rational(t).map_err(D::Error::custom)).collect())
            .collect()
    }
}

/// Absolute value of the largest exponent, handy for lattice bookkeeping.
pub fn max_abs_exponent(v: &[Rational]) -> Rational {
    v.iter().map(|x| x.abs()).max().unwrap_or_else(Rational::zero)
}
