//! Vector norms, induced matrix norms and matrix measures.
//!
//! The matrix measure (logarithmic norm) of a square matrix `A` under an
//! induced norm is the one-sided derivative `lim_{h->0+} (||I + hA|| - 1) / h`.
//! For the three supported norms it has a closed form:
//!
//! | norm     | measure                                         |
//! |----------|-------------------------------------------------|
//! | one      | `max_j (a_jj + sum_{i != j} |a_ij|)` (columns)  |
//! | infinity | `max_i (a_ii + sum_{j != i} |a_ij|)` (rows)     |
//! | two      | `lambda_max((A + A^T) / 2)`                     |
//!
//! [`matrix_measure_limit_estimate`] evaluates the difference quotient at a
//! finite step and is kept as an independent cross-check.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Step used by the difference-quotient cross-check.
pub const DEFAULT_LIMIT_STEP: f64 = 1e-8;

/// Tolerance applied to off-diagonal entries by [`is_metzler`] by default.
pub const DEFAULT_METZLER_TOL: f64 = 1e-9;

const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;
// sweeps stop well below the acceptance tolerance
const JACOBI_STOP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    One,
    Two,
    #[serde(rename = "inf")]
    Infinity,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::One, NormKind::Two, NormKind::Infinity];

    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::One => "one",
            NormKind::Two => "two",
            NormKind::Infinity => "inf",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one" | "1" | "l1" => Ok(NormKind::One),
            "two" | "2" | "l2" => Ok(NormKind::Two),
            "inf" | "infinity" | "linf" => Ok(NormKind::Infinity),
            other => Err(invalid(format!(
                "unknown norm kind `{other}` (expected one, two or inf)"
            ))),
        }
    }
}

/// Dense real vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn sub(&self, other: &[f64]) -> Vector {
        assert_eq!(self.len(), other.len(), "vector dimension mismatch");
        Vector(self.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Dense real matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting ragged or non-finite input.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix must have at least one row and column"));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(invalid(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_row_major(n_rows, n_cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scaled(&self, a: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(invalid(format!(
                "cannot add {}x{} and {}x{} matrices",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(invalid(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(Vector(
            (0..self.rows)
                .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }

    /// Sum of the entries of column `j`.
    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self[(i, j)]).sum()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

fn require_square(a: &Matrix, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(invalid(format!(
            "{what} requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(invalid(format!("{what} requires finite entries")));
    }
    Ok(())
}

pub fn vector_norm(v: &[f64], kind: NormKind) -> Result<f64> {
    if v.is_empty() {
        return Err(invalid("norm of an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("vector has non-finite entries"));
    }
    Ok(match kind {
        NormKind::One => v.iter().map(|x| x.abs()).sum(),
        NormKind::Two => {
            // scaled to avoid overflow for large entries
            let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if scale == 0.0 {
                0.0
            } else {
                scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
            }
        }
        NormKind::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    })
}

/// Operator norm induced by `kind`.
pub fn induced_matrix_norm(a: &Matrix, kind: NormKind) -> Result<f64> {
    require_square(a, "induced matrix norm")?;
    let n = a.rows();
    Ok(match kind {
        NormKind::One => (0..n)
            .map(|j| (0..n).map(|i| a[(i, j)].abs()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max),
        NormKind::Infinity => (0..n)
            .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max),
        NormKind::Two => {
            let gram = a.transpose().mul(a)?;
            let lambda = symmetric_eigenvalues(&gram)?
                .into_iter()
                .fold(0.0_f64, f64::max);
            lambda.max(0.0).sqrt()
        }
    })
}

/// Closed-form matrix measure induced by `kind`.
pub fn matrix_measure(a: &Matrix, kind: NormKind) -> Result<f64> {
    require_square(a, "matrix measure")?;
    let n = a.rows();
    Ok(match kind {
        // summed in index order so Metzler columns reproduce plain sums bit for bit
        NormKind::One => (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| if i == j { a[(i, j)] } else { a[(i, j)].abs() })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max),
        NormKind::Infinity => (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { a[(i, j)] } else { a[(i, j)].abs() })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max),
        NormKind::Two => {
            let sym = a.add(&a.transpose())?.scaled(0.5);
            symmetric_eigenvalues(&sym)?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        }
    })
}

/// Difference quotient `(||I + hA|| - 1) / h`.
///
/// By convexity of the norm the quotient is nondecreasing in `h` and bounds
/// the matrix measure from above for every `h > 0`.
pub fn matrix_measure_limit_estimate(a: &Matrix, kind: NormKind, h: f64) -> Result<f64> {
    require_square(a, "matrix measure estimate")?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!(
            "step h must be positive and finite, got {h}"
        )));
    }
    let shifted = Matrix::identity(a.rows()).add(&a.scaled(h))?;
    Ok((induced_matrix_norm(&shifted, kind)? - 1.0) / h)
}

/// True iff every off-diagonal entry is at least `-tol`.
pub fn is_metzler(a: &Matrix, tol: f64) -> Result<bool> {
    require_square(a, "Metzler test")?;
    if !(tol >= 0.0) {
        return Err(invalid(format!("tolerance must be nonnegative, got {tol}")));
    }
    let n = a.rows();
    Ok((0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] >= -tol)))
}

/// Largest plain column sum. Equals the one-norm measure for Metzler matrices.
pub fn max_column_sum(a: &Matrix) -> f64 {
    (0..a.cols())
        .map(|j| a.column_sum(j))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, unsorted.
pub fn symmetric_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    require_square(s, "symmetric eigensolver")?;
    let n = s.rows();
    let mut a = s.clone();
    // symmetrize against input roundoff
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let frob: f64 = a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let off = |a: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                acc += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        acc.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= JACOBI_STOP * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    if off(&a) > JACOBI_TOL * frob {
        return Err(invalid("Jacobi eigensolver did not converge"));
    }
    Ok((0..n).map(|i| a[(i, i)]).collect())
}
