//! Small dense linear algebra: exact rational elimination and a symmetric
//! Jacobi eigensolver. Matrices here are at most a handful of rows wide, so
//! plain `Vec<Vec<_>>` storage is used throughout.

use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::dimensions::Rational;

/// Row-reduced echelon form of a rational matrix.
#[derive(Debug, Clone)]
pub struct Rref {
    pub rows: Vec<Vec<Rational>>,
    /// Pivot column of each nonzero row, in row order.
    pub pivots: Vec<usize>,
}

impl Rref {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}

/// Gauss-Jordan elimination to reduced row echelon form. Pivots are taken
/// column by column, left to right; within a column the first nonzero row wins.
pub fn rref(mut m: Vec<Vec<Rational>>) -> Rref {
    let n_rows = m.len();
    let n_cols = m.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n_cols {
        if row == n_rows {
            break;
        }
        let Some(p) = (row..n_rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        let inv = m[row][col].recip();
        for x in m[row].iter_mut() {
            *x *= inv;
        }
        let pivot_row = m[row].clone();
        for (r, other) in m.iter_mut().enumerate() {
            if r == row || other[col].is_zero() {
                continue;
            }
            let f = other[col];
            for (x, p) in other.iter_mut().zip(&pivot_row) {
                *x -= f * *p;
            }
        }
        pivots.push(col);
        row += 1;
    }
    m.truncate(n_rows);
    Rref { rows: m, pivots }
}

/// Basis of the right nullspace of `m` (`m · x = 0`), one vector per free
/// column. Each vector is scaled to a primitive integer vector whose first
/// nonzero entry is positive.
pub fn nullspace(m: &[Vec<Rational>], n_cols: usize) -> Vec<Vec<Rational>> {
    let reduced = rref(m.to_vec());
    let free: Vec<usize> = (0..n_cols).filter(|c| !reduced.pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Rational::zero(); n_cols];
            v[f] = Rational::one();
            for (r, &pc) in reduced.pivots.iter().enumerate() {
                v[pc] = -reduced.rows[r][f];
            }
            primitive(v)
        })
        .collect()
}

/// Scale a nonzero rational vector to the primitive integer vector on its ray
/// with a positive leading entry.
pub fn primitive(v: Vec<Rational>) -> Vec<Rational> {
    let lcm = v
        .iter()
        .fold(1i64, |acc, x| acc.lcm(x.denom()));
    let ints: Vec<i64> = v.iter().map(|x| (x * Rational::from(lcm)).to_integer()).collect();
    let g = ints.iter().fold(0i64, |acc, &x| acc.gcd(&x));
    if g == 0 {
        return v;
    }
    let sign = ints.iter().find(|x| **x != 0).map_or(1, |x| x.signum());
    ints.into_iter()
        .map(|x| Rational::from(sign * x / g))
        .collect()
}

/// Solve `m · x = b` exactly. Returns the solution with every free variable
/// set to zero, or `None` if the system is inconsistent.
pub fn solve_basic(m: &[Vec<Rational>], b: &[Rational], n_cols: usize) -> Option<Vec<Rational>> {
    let augmented: Vec<Vec<Rational>> = m
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    let reduced = rref(augmented);
    if reduced.pivots.contains(&n_cols) {
        return None;
    }
    let mut x = vec![Rational::zero(); n_cols];
    for (r, &pc) in reduced.pivots.iter().enumerate() {
        x[pc] = reduced.rows[r][n_cols];
    }
    Some(x)
}

pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Remove from `x` its component in the span of `basis`, exactly. The result
/// is the minimum Euclidean norm member of `x + span(basis)`.
pub fn project_out(x: &[Rational], basis: &[Vec<Rational>]) -> Vec<Rational> {
    if basis.is_empty() {
        return x.to_vec();
    }
    let k = basis.len();
    let gram: Vec<Vec<Rational>> = (0..k)
        .map(|i| (0..k).map(|j| dot(&basis[i], &basis[j])).collect())
        .collect();
    let rhs: Vec<Rational> = basis.iter().map(|b| dot(b, x)).collect();
    let coeffs = solve_basic(&gram, &rhs, k).expect("nullspace basis is linearly independent");
    let mut out = x.to_vec();
    for (c, b) in coeffs.iter().zip(basis) {
        for (o, bi) in out.iter_mut().zip(b) {
            *o -= c * bi;
        }
    }
    out
}

/// Whether `x` lies in the rational span of `basis`.
pub fn in_span(x: &[Rational], basis: &[Vec<Rational>]) -> bool {
    if x.iter().all(Zero::is_zero) {
        return true;
    }
    if basis.is_empty() {
        return false;
    }
    // Columns are basis vectors; solve B c = x.
    let n = x.len();
    let m: Vec<Vec<Rational>> = (0..n)
        .map(|i| basis.iter().map(|b| b[i]).collect())
        .collect();
    solve_basic(&m, x, basis.len()).is_some()
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and the matrix whose columns are the matching
/// eigenvectors. Iterates until the off-diagonal Frobenius norm drops below
/// `tol` times the matrix norm or `max_sweeps` sweeps have run.
pub fn symmetric_eigen(a: &[Vec<f64>], tol: f64, max_sweeps: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let total: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if total == 0.0 {
        return (vec![0.0; n], v);
    }
    for _ in 0..max_sweeps {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= tol * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

/// Minimum-norm least-squares solution of `a · x ≈ b` through the
/// eigen-decomposition of `aᵀa`. Directions with eigenvalue below
/// `1e-12 · λ_max` are treated as the nullspace and receive zero weight.
pub fn lstsq_min_norm(a: &[Vec<f64>], b: &[f64], n_cols: usize) -> Vec<f64> {
    let ata: Vec<Vec<f64>> = (0..n_cols)
        .map(|i| (0..n_cols).map(|j| a.iter().map(|r| r[i] * r[j]).sum()).collect())
        .collect();
    let atb: Vec<f64> = (0..n_cols)
        .map(|i| a.iter().zip(b).map(|(r, y)| r[i] * y).sum())
        .collect();
    let (vals, vecs) = symmetric_eigen(&ata, 1e-15, 100);
    let max = vals.iter().cloned().fold(0.0_f64, f64::max);
    let mut x = vec![0.0; n_cols];
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 1e-12 * max || lam <= 0.0 {
            continue;
        }
        let proj: f64 = (0..n_cols).map(|i| vecs[i][k] * atb[i]).sum();
        for i in 0..n_cols {
            x[i] += vecs[i][k] * proj / lam;
        }
    }
    x
}
