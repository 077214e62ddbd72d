//! Dense complex linear algebra.
//!
//! Everything downstream (channels, precoders, equalizers) is expressed with
//! [`ComplexMatrix`], a row-major `f64` complex matrix. The kernels here are
//! sized for the small matrices that show up in link-level work (a handful of
//! antennas, at most a few hundred RIS elements), so the SVD is a one-sided
//! Jacobi iteration rather than a blocked LAPACK-style routine.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Dense complex matrix stored in row-major order.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl TryFrom<RawMatrix> for ComplexMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        ComplexMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<ComplexMatrix> for RawMatrix {
    fn from(m: ComplexMatrix) -> Self {
        RawMatrix { rows: m.rows, cols: m.cols, data: m.data }
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting length mismatches and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if !data.iter().all(|z| z.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { ZERO })
    }

    /// Column vector (n × 1).
    pub fn column_vector(entries: &[C64]) -> Self {
        ComplexMatrix { rows: entries.len(), cols: 1, data: entries.to_vec() }
    }

    /// Stacks equally long columns side by side.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Dimension("columns of unequal length".into()));
        }
        Ok(Self::from_fn(rows, columns.len(), |i, j| columns[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major entries.
    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<C64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lhs_row = self.row(i);
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᴴ · self`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = ZERO;
                for r in 0..self.rows {
                    acc += self[(r, i)].conj() * self[(r, j)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
        }
        out
    }

    pub fn scale(&self, alpha: C64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * alpha).collect(),
        }
    }

    pub fn scale_real(&self, alpha: f64) -> Self {
        self.scale(C64::new(alpha, 0.0))
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &ComplexMatrix, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::Dimension(format!(
                "shapes {:?} and {:?} differ",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// In-place `self += alpha · rhs`; shapes must agree.
    pub fn axpy(&mut self, alpha: C64, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "axpy shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += alpha * b;
        }
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Largest entry-wise distance to `other`; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Inner product `aᴴ b`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Kronecker product `a ⊗ b`.
pub fn kronecker(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (br, bc) = b.shape();
    ComplexMatrix::from_fn(a.rows * br, a.cols * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

/// Singular value decomposition `A = U Σ Vᴴ` with full unitary factors.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × rows` unitary.
    pub u: ComplexMatrix,
    /// Length `min(rows, cols)`, non-increasing.
    pub singular_values: Vec<f64>,
    /// `cols × cols` unitary.
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = ComplexMatrix::zeros(m, n);
        for (k, &s) in self.singular_values.iter().enumerate() {
            for i in 0..m {
                let us = self.u[(i, k)] * s;
                for j in 0..n {
                    out[(i, j)] += us * self.v[(j, k)].conj();
                }
            }
        }
        out
    }

    /// `k`-th right singular vector.
    pub fn right_vector(&self, k: usize) -> Vec<C64> {
        self.v.column(k)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-15;

/// Computes the SVD with singular values sorted non-increasing.
///
/// One-sided (Hestenes) Jacobi on the narrower orientation of the input.
/// Fails with [`Error::NoConvergence`] instead of returning a partially
/// orthogonalized result.
pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::Dimension("svd of an empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if a.cols > a.rows {
        let t = jacobi_svd(&a.hermitian())?;
        return Ok(Svd { u: t.v, singular_values: t.singular_values, v: t.u });
    }
    jacobi_svd(a)
}

fn jacobi_svd(a: &ComplexMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    let mut work: Vec<Vec<C64>> = a.columns();
    let mut vcols: Vec<Vec<C64>> =
        (0..n).map(|j| (0..n).map(|i| if i == j { ONE } else { ZERO }).collect()).collect();

    // columns this small are numerically zero and need no further rotation
    let negligible = (1e-14 * a.frobenius_norm()).powi(2);
    let mut converged = n == 1;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = work[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = work[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma = dot(&work[p], &work[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= JACOBI_TOL * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut work, p, q, phase, c, s);
                rotate(&mut vcols, p, q, phase, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: JACOBI_MAX_SWEEPS });
    }

    let norms: Vec<f64> = work.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let k = m.min(n);
    let singular_values: Vec<f64> = order[..k].iter().map(|&j| norms[j]).collect();
    let v_sorted: Vec<Vec<C64>> = order.iter().map(|&j| vcols[j].clone()).collect();
    let v = ComplexMatrix::from_columns(&v_sorted)?;

    let smax = singular_values[0];
    let mut ucols: Vec<Vec<C64>> = Vec::with_capacity(m);
    for (idx, &j) in order[..k].iter().enumerate() {
        let s = singular_values[idx];
        if s > 0.0 && s > smax * 1e-14 {
            let cand: Vec<C64> = work[j].iter().map(|z| z / s).collect();
            if let Some(col) = orthonormalize_against(&ucols, cand) {
                ucols.push(col);
                continue;
            }
        }
        ucols.push(next_basis_completion(&ucols, m));
    }
    while ucols.len() < m {
        ucols.push(next_basis_completion(&ucols, m));
    }
    let u = ComplexMatrix::from_columns(&ucols)?;

    if !singular_values.iter().all(|s| s.is_finite()) || !u.is_finite() || !v.is_finite() {
        return Err(Error::NonFinite("svd output"));
    }
    Ok(Svd { u, singular_values, v })
}

fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, phase: C64, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *xp;
        let b = *xq * phase;
        *xp = a * c - b * s;
        *xq = a * s + b * c;
    }
}

/// Twice-iterated Gram–Schmidt; `None` if `v` is (numerically) in the span.
fn orthonormalize_against(basis: &[Vec<C64>], mut v: Vec<C64>) -> Option<Vec<C64>> {
    let start = norm(&v);
    for _ in 0..2 {
        for b in basis {
            let proj = dot(b, &v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
    }
    let n = norm(&v);
    if n <= 1e-8 * start.max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(v.into_iter().map(|z| z / n).collect())
}

fn next_basis_completion(basis: &[Vec<C64>], m: usize) -> Vec<C64> {
    (0..m)
        .find_map(|e| {
            let mut unit = vec![ZERO; m];
            unit[e] = ONE;
            orthonormalize_against(basis, unit)
        })
        .expect("basis of dimension < m always admits a completion")
}

/// Maximum tolerated condition number for Hermitian solves.
pub const MAX_CONDITION: f64 = 1e12;

/// Solves `a x = b` for Hermitian positive definite `a`.
///
/// Cholesky factorization with one step of iterative refinement. The
/// condition number is measured from the singular values of `a`.
pub fn hermitian_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.rows;
    if a.cols != n || n == 0 {
        return Err(Error::Dimension(format!("hermitian solve needs a square matrix, got {:?}", a.shape())));
    }
    if b.rows != n {
        return Err(Error::Dimension(format!("rhs has {} rows, expected {n}", b.rows)));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("hermitian solve input"));
    }
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    if a.sub(&a.hermitian())?.frobenius_norm() > 1e-10 * scale {
        return Err(Error::Domain("matrix is not Hermitian".into()));
    }
    let condition = condition_number(a)?;
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let l = cholesky(a).ok_or(Error::RankDeficient { condition })?;
    let mut x = cholesky_solve(&l, b);
    let residual = b.sub(&a.matmul(&x)?)?;
    let correction = cholesky_solve(&l, &residual);
    x = x.add(&correction)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("hermitian solve output"));
    }
    Ok(x)
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(a: &ComplexMatrix) -> Result<f64> {
    let s = svd(a)?.singular_values;
    let (max, min) = (s[0], *s.last().unwrap());
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

fn cholesky(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = a.rows;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = l.rows;
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}
