//! Thin helpers over `faer` dense complex matrices.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

pub use faer::c64;

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn cx(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

pub fn re(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn eye(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::zeros(r, c)
}

pub fn from_rows(rows: &[Vec<c64>]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

pub fn real_rows(rows: &[&[f64]]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| re(rows[i][j]))
}

pub fn diag(v: &[c64]) -> CMat {
    Mat::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { ZERO })
}

pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn conj(a: MatRef<'_, c64>) -> CMat {
    a.conjugate().to_owned()
}

pub fn adj(a: MatRef<'_, c64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn scale(a: MatRef<'_, c64>, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn add_scaled(a: MatRef<'_, c64>, b: MatRef<'_, c64>, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)] * s)
}

pub fn sub_identity(a: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| if i == j { a[(i, j)] - ONE } else { a[(i, j)] })
}

/// Largest entry modulus.
pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn frobenius(a: MatRef<'_, c64>) -> f64 {
    a.norm_l2()
}

/// Spectral norm. Exact zero for empty or zero matrices.
pub fn opnorm(a: MatRef<'_, c64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 || max_abs(a) == 0.0 {
        return 0.0;
    }
    if a.nrows() == 1 || a.ncols() == 1 {
        return frobenius(a);
    }
    match a.singular_values() {
        Ok(s) => s[0],
        Err(_) => frobenius(a),
    }
}

pub fn singular_values(a: MatRef<'_, c64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.singular_values().unwrap_or_else(|_| vec![f64::NAN])
}

pub fn min_singular_value(a: MatRef<'_, c64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Eigenvalues ascending and eigenvectors (columns) of a Hermitian matrix.
pub fn herm_eig(a: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NotConverged(format!("hermitian eigensolver: {e:?}")))?;
    let vals = e.S().column_vector().iter().map(|x| x.re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn herm_eigvals(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NotConverged(format!("hermitian eigensolver: {e:?}")))
}

pub fn eigvals(a: MatRef<'_, c64>) -> Result<Vec<c64>> {
    a.eigenvalues()
        .map_err(|e| Error::NotConverged(format!("eigensolver: {e:?}")))
}

/// `U diag(f(λ)) U*`.
pub fn spectral_apply(vals: &[f64], vecs: MatRef<'_, c64>, f: impl Fn(f64) -> c64) -> CMat {
    let fv: Vec<c64> = vals.iter().map(|&v| f(v)).collect();
    let n = vecs.nrows();
    let scaled = Mat::from_fn(n, vals.len(), |i, j| vecs[(i, j)] * fv[j]);
    &scaled * vecs.adjoint()
}

pub fn inverse(a: MatRef<'_, c64>) -> CMat {
    a.partial_piv_lu().inverse()
}

pub fn commutator(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    a * b + b * a
}

pub fn dist(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    opnorm((a - b).as_ref())
}

/// Sum of the diagonal of `a * b` without forming the product.
pub fn trace_of_product(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut s = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn trace(a: MatRef<'_, c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).fold(ZERO, |x, y| x + y)
}

/// Rows and columns `idx` of `a`.
pub fn submatrix(a: MatRef<'_, c64>, rows: &[usize], cols: &[usize]) -> CMat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn is_zero(a: MatRef<'_, c64>) -> bool {
    max_abs(a) == 0.0
}

fn full_left_svd(a: MatRef<'_, c64>) -> Result<(CMat, Vec<f64>)> {
    let svd = a.svd().map_err(|e| Error::NotConverged(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|x| x.re).collect();
    Ok((svd.U().to_owned(), s))
}

fn numerical_rank(s: &[f64], rtol: f64) -> usize {
    let top = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&v| v > rtol * top && v > 0.0).count()
}

/// Orthonormal basis of the column space (relative cutoff `rtol`).
pub fn orth_range(a: MatRef<'_, c64>, rtol: f64) -> Result<CMat> {
    let (u, s) = full_left_svd(a)?;
    let r = numerical_rank(&s, rtol);
    Ok(u.as_ref().subcols(0, r).to_owned())
}

/// Orthonormal basis of the orthogonal complement of the column space.
pub fn orth_complement(a: MatRef<'_, c64>, rtol: f64) -> Result<CMat> {
    let (u, s) = full_left_svd(a)?;
    let r = numerical_rank(&s, rtol);
    Ok(u.as_ref().subcols(r, a.nrows() - r).to_owned())
}

/// Horizontal concatenation.
pub fn hcat(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols() + b.ncols(), |i, j| if j < a.ncols() { a[(i, j)] } else { b[(i, j - a.ncols())] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_layout() {
        let a = real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = eye(2);
        let k = kron(a.as_ref(), b.as_ref());
        assert_eq!(k[(2, 0)], re(3.0));
        assert_eq!(k[(3, 1)], re(3.0));
        assert_eq!(k[(2, 1)], ZERO);
    }

    #[test]
    fn norms() {
        let a = real_rows(&[&[3.0, 0.0], &[0.0, -4.0]]);
        assert!((opnorm(a.as_ref()) - 4.0).abs() < 1e-12);
        assert_eq!(opnorm(zeros(3, 2).as_ref()), 0.0);
        assert!((min_singular_value(a.as_ref()) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn trace_product_matches() {
        let a = Mat::from_fn(3, 3, |i, j| cx(i as f64, j as f64));
        let b = Mat::from_fn(3, 3, |i, j| cx((i * j) as f64, 1.0));
        let t = trace((&a * &b).as_ref());
        assert!((trace_of_product(a.as_ref(), b.as_ref()) - t).norm() < 1e-12);
    }
}
