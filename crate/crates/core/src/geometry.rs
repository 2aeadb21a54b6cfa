//! O(3)-covariant values: scalars, 3-vectors and 3×3 tensors carrying a
//! [`Dimension`], the orthogonal group action on them, and scalarization
//! through Gram matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dimensions::{Dimension, Quantity};
use crate::linalg::symmetric_eigen;
use crate::{Error, Result};

/// Spatial dimension. Only three is supported.
pub const D: usize = 3;

pub type Mat3 = [[f64; D]; D];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub v: [f64; D],
    pub dim: Dimension,
}

impl Vec3 {
    pub fn new(v: [f64; D], dim: Dimension) -> Self {
        Self { v, dim }
    }

    pub fn dimensionless(v: [f64; D]) -> Self {
        Self { v, dim: Dimension::dimensionless() }
    }

    pub fn dot(&self, other: &Vec3) -> Quantity {
        Quantity::new(dot3(&self.v, &other.v), self.dim * other.dim)
    }

    pub fn norm(&self) -> f64 {
        dot3(&self.v, &self.v).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub m: Mat3,
    pub dim: Dimension,
}

impl Tensor3 {
    pub fn new(m: Mat3, dim: Dimension) -> Self {
        Self { m, dim }
    }

    pub fn identity() -> Self {
        Self { m: IDENTITY, dim: Dimension::dimensionless() }
    }
}

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn dot3(a: &[f64; D], b: &[f64; D]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn matvec(m: &Mat3, v: &[f64; D]) -> [f64; D] {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}

pub fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..D {
            out[i][j] = (0..D).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..D {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// An element of O(3): `RᵀR = I` and `det R = ±1`, both within 1e-12.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Mat3", into = "Mat3")]
pub struct Orthogonal3 {
    m: Mat3,
}

impl TryFrom<Mat3> for Orthogonal3 {
    type Error = Error;
    fn try_from(m: Mat3) -> Result<Self> {
        Orthogonal3::new(m)
    }
}

impl From<Orthogonal3> for Mat3 {
    fn from(r: Orthogonal3) -> Mat3 {
        r.m
    }
}

impl Orthogonal3 {
    pub const TOL: f64 = 1e-12;

    pub fn new(m: Mat3) -> Result<Self> {
        let rtr = matmul(&transpose(&m), &m);
        let off = (0..D)
            .flat_map(|i| (0..D).map(move |j| (i, j)))
            .map(|(i, j)| (rtr[i][j] - IDENTITY[i][j]).abs())
            .fold(0.0, f64::max);
        if off > Self::TOL || (det(&m).abs() - 1.0).abs() > Self::TOL {
            return Err(Error::InvalidArgument(format!("matrix is not orthogonal: {m:?}")));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self { m: IDENTITY }
    }

    /// Right-handed rotation by `angle` radians about the unit axis `axis`.
    pub fn rotation(axis: [f64; D], angle: f64) -> Self {
        let n = dot3(&axis, &axis).sqrt();
        let [x, y, z] = axis.map(|a| a / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Self {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    /// Reflection through the plane with unit normal `normal`.
    pub fn reflection(normal: [f64; D]) -> Self {
        let n2 = dot3(&normal, &normal);
        let mut m = IDENTITY;
        for i in 0..D {
            for j in 0..D {
                m[i][j] -= 2.0 * normal[i] * normal[j] / n2;
            }
        }
        Self { m }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn det(&self) -> f64 {
        det(&self.m)
    }

    pub fn apply(&self, v: &[f64; D]) -> [f64; D] {
        matvec(&self.m, v)
    }

    /// `self · other`: apply `other` first.
    pub fn compose(&self, other: &Orthogonal3) -> Orthogonal3 {
        Orthogonal3 { m: matmul(&self.m, &other.m) }
    }

    pub fn inverse(&self) -> Orthogonal3 {
        Orthogonal3 { m: transpose(&self.m) }
    }

    pub fn rotate_vec(&self, v: &Vec3) -> Vec3 {
        Vec3 { v: self.apply(&v.v), dim: v.dim }
    }

    pub fn rotate_tensor(&self, t: &Tensor3) -> Tensor3 {
        Tensor3 { m: matmul(&matmul(&self.m, &t.m), &transpose(&self.m)), dim: t.dim }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeomValue {
    Scalar(Quantity),
    Vector(Vec3),
    Tensor(Tensor3),
}

impl GeomValue {
    pub fn dim(&self) -> Dimension {
        match self {
            GeomValue::Scalar(q) => q.dim,
            GeomValue::Vector(v) => v.dim,
            GeomValue::Tensor(t) => t.dim,
        }
    }

    /// Raw components: 1, 3 or 9 numbers (tensors row-major).
    pub fn components(&self) -> Vec<f64> {
        match self {
            GeomValue::Scalar(q) => vec![q.value],
            GeomValue::Vector(v) => v.v.to_vec(),
            GeomValue::Tensor(t) => t.m.iter().flatten().copied().collect(),
        }
    }

    /// Multiply every component by `factor`.
    pub fn scaled(&self, factor: f64) -> GeomValue {
        match self {
            GeomValue::Scalar(q) => GeomValue::Scalar(Quantity::new(q.value * factor, q.dim)),
            GeomValue::Vector(v) => GeomValue::Vector(Vec3::new(v.v.map(|x| x * factor), v.dim)),
            GeomValue::Tensor(t) => GeomValue::Tensor(Tensor3::new(t.m.map(|r| r.map(|x| x * factor)), t.dim)),
        }
    }
}

/// A named scalar, vector or tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeomFeature {
    pub name: String,
    pub value: GeomValue,
}

impl GeomFeature {
    pub fn scalar(name: impl Into<String>, q: Quantity) -> Self {
        Self { name: name.into(), value: GeomValue::Scalar(q) }
    }
    pub fn vector(name: impl Into<String>, v: Vec3) -> Self {
        Self { name: name.into(), value: GeomValue::Vector(v) }
    }
    pub fn tensor(name: impl Into<String>, t: Tensor3) -> Self {
        Self { name: name.into(), value: GeomValue::Tensor(t) }
    }
}

/// Scalars are unchanged, vectors map to `R v`, tensors to `R T Rᵀ`.
pub fn rotate_feature(f: &GeomFeature, r: &Orthogonal3) -> GeomFeature {
    let value = match &f.value {
        GeomValue::Scalar(q) => GeomValue::Scalar(*q),
        GeomValue::Vector(v) => GeomValue::Vector(r.rotate_vec(v)),
        GeomValue::Tensor(t) => GeomValue::Tensor(r.rotate_tensor(t)),
    };
    GeomFeature { name: f.name.clone(), value }
}

/// Matrix of pairwise inner products `vᵢ·vⱼ`, each carrying `dimᵢ·dimⱼ`.
/// These are the complete O(3) invariants of the list.
pub fn gram_invariants(vectors: &[Vec3]) -> Result<Vec<Vec<Quantity>>> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("gram_invariants needs at least one vector".into()));
    }
    let n = vectors.len();
    let mut g = vec![vec![Quantity::dimensionless(0.0); n]; n];
    for i in 0..n {
        for j in i..n {
            let q = vectors[i].dot(&vectors[j]);
            g[i][j] = q;
            g[j][i] = q;
        }
    }
    Ok(g)
}

/// `Σⱼ cⱼ vⱼ`. All vectors must share one dimension.
pub fn equivariant_combination(coeffs: &[f64], vectors: &[Vec3]) -> Result<Vec3> {
    if coeffs.len() != vectors.len() {
        return Err(Error::WidthMismatch { expected: vectors.len(), found: coeffs.len() });
    }
    let Some(first) = vectors.first() else {
        return Err(Error::InvalidArgument("equivariant_combination needs at least one vector".into()));
    };
    let mut out = [0.0; D];
    for (c, v) in coeffs.iter().zip(vectors) {
        if v.dim != first.dim {
            return Err(Error::MixedDims(first.dim.to_string(), v.dim.to_string()));
        }
        for k in 0..D {
            out[k] += c * v.v[k];
        }
    }
    Ok(Vec3::new(out, first.dim))
}

/// Largest singular value, from the Jacobi eigen-decomposition of `TᵀT`.
pub fn spectral_norm(t: &Tensor3) -> Quantity {
    let tt = matmul(&transpose(&t.m), &t.m);
    let rows: Vec<Vec<f64>> = tt.iter().map(|r| r.to_vec()).collect();
    let (vals, _) = symmetric_eigen(&rows, 1e-12, 100);
    let top = vals.into_iter().fold(0.0_f64, f64::max);
    Quantity::new(top.sqrt(), t.dim)
}

/// Haar-distributed element of O(3) (or SO(3) when `proper_only`), from the
/// QR decomposition of a seeded Gaussian matrix with the sign of R's diagonal
/// fixed positive.
pub fn haar_orthogonal(seed: u64, proper_only: bool) -> Orthogonal3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = [[0.0; D]; D];
    for col in cols.iter_mut() {
        for x in col.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
    }
    // Modified Gram-Schmidt on columns; the positive-diagonal convention is
    // what makes Q Haar distributed.
    let mut q = [[0.0; D]; D];
    for j in 0..D {
        let mut v = cols[j];
        for qk in q.iter().take(j) {
            let p = dot3(qk, &v);
            for i in 0..D {
                v[i] -= p * qk[i];
            }
        }
        let n = dot3(&v, &v).sqrt();
        q[j] = v.map(|x| x / n);
    }
    // q holds columns; transpose into row-major matrix form.
    let mut m = transpose(&q);
    if proper_only && det(&m) < 0.0 {
        for row in m.iter_mut() {
            row[0] = -row[0];
        }
    }
    Orthogonal3 { m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn scalar_is_invariant() {
        let f = GeomFeature::scalar("t", Quantity::dimensionless(3.0));
        let g = rotate_feature(&f, &haar_orthogonal(3, false));
        assert_eq!(g, f);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Orthogonal3::rotation([0.0, 0.0, 1.0], FRAC_PI_2);
        let v = r.apply(&[1.0, 0.0, 0.0]);
        assert!(close(v[0], 0.0, 1e-15) && close(v[1], 1.0, 1e-15) && close(v[2], 0.0, 1e-15));
    }

    #[test]
    fn identity_tensor_is_invariant() {
        let r = haar_orthogonal(11, false);
        let t = r.rotate_tensor(&Tensor3::identity());
        for i in 0..D {
            for j in 0..D {
                assert!(close(t.m[i][j], IDENTITY[i][j], 1e-14));
            }
        }
    }

    #[test]
    fn gram_examples() {
        let e = [Vec3::dimensionless([1.0, 0.0, 0.0]), Vec3::dimensionless([0.0, 1.0, 0.0])];
        let g = gram_invariants(&e).unwrap();
        assert_eq!(g[0][0].value, 1.0);
        assert_eq!(g[0][1].value, 0.0);
        assert_eq!(g[1][1].value, 1.0);
        let g = gram_invariants(&[Vec3::new([1.0, 2.0, 2.0], Dimension::length())]).unwrap();
        assert_eq!(g[0][0].value, 9.0);
        assert_eq!(g[0][0].dim, Dimension::length() * Dimension::length());
        assert!(gram_invariants(&[]).is_err());
    }

    #[test]
    fn combination_examples() {
        let a = Vec3::dimensionless([1.0, 0.0, 0.0]);
        let b = Vec3::dimensionless([0.0, 1.0, 0.0]);
        assert_eq!(equivariant_combination(&[1.0, 0.0], &[a, b]).unwrap(), a);
        assert_eq!(equivariant_combination(&[1.0, 1.0], &[a, b]).unwrap().v, [1.0, 1.0, 0.0]);
        let c = Vec3::new([0.0, 0.0, 1.0], Dimension::length());
        assert!(matches!(equivariant_combination(&[1.0, 1.0], &[a, c]), Err(Error::MixedDims(_, _))));
        assert!(matches!(equivariant_combination(&[1.0], &[a, b]), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn spectral_examples() {
        assert!(close(spectral_norm(&Tensor3::identity()).value, 1.0, 1e-14));
        let t = Tensor3::new([[3.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]], Dimension::mass());
        let s = spectral_norm(&t);
        assert!(close(s.value, 3.0, 1e-14));
        assert_eq!(s.dim, Dimension::mass());
        let zero = Tensor3::new([[0.0; 3]; 3], Dimension::dimensionless());
        assert_eq!(spectral_norm(&zero).value, 0.0);
    }

    #[test]
    fn spectral_norm_of_non_symmetric() {
        // [[0, 2], [0, 0]] block has singular values 2 and 0.
        let t = Tensor3::new([[0.0, 2.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]], Dimension::dimensionless());
        assert!(close(spectral_norm(&t).value, 2.0, 1e-13));
    }

    #[test]
    fn haar_properties() {
        for seed in 0..50 {
            let r = haar_orthogonal(seed, false);
            assert!(Orthogonal3::new(*r.matrix()).is_ok());
            let p = haar_orthogonal(seed, true);
            assert!((p.det() - 1.0).abs() < 1e-12);
            assert_eq!(haar_orthogonal(seed, false), r);
        }
        // Both cosets appear when reflections are allowed.
        let dets: Vec<f64> = (0..50).map(|s| haar_orthogonal(s, false).det()).collect();
        assert!(dets.iter().any(|d| *d < 0.0) && dets.iter().any(|d| *d > 0.0));
    }

    #[test]
    fn non_orthogonal_rejected() {
        assert!(Orthogonal3::new([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(serde_json::from_str::<Orthogonal3>("[[1,0,0],[0,1,0],[0,0,2]]").is_err());
    }

    #[test]
    fn reflection_has_negative_determinant() {
        let r = Orthogonal3::reflection([0.0, 0.0, 1.0]);
        assert!((r.det() + 1.0).abs() < 1e-15);
        assert_eq!(r.apply(&[1.0, 2.0, 3.0]), [1.0, 2.0, -3.0]);
    }
}
