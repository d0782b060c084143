//! Dense symmetric spectral decomposition, Moore-Penrose inverses, null-space
//! bases and tolerance-based numeric rank.
//!
//! Every rank decision in the crate goes through [`Tolerance`]: a value is
//! treated as nonzero only when it is strictly larger than the resolved
//! threshold, so ties at the boundary count as zero.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry admitted before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Threshold rule separating numerically zero eigen/singular values from
/// positive ones.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
#[serde(tag = "policy", content = "value", rename_all = "kebab-case")]
pub enum Tolerance {
    /// `max(rows, cols) * eps * largest`, the usual relative rule.
    #[default]
    Default,
    /// Fixed absolute threshold.
    Absolute(f64),
}

impl Tolerance {
    pub fn resolve(self, rows: usize, cols: usize, largest: f64) -> f64 {
        match self {
            Tolerance::Default => rows.max(cols) as f64 * f64::EPSILON * largest,
            Tolerance::Absolute(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub numeric_rank: usize,
    /// Singular (or eigen-) values in descending order.
    pub values: Vec<f64>,
    pub tolerance: f64,
    pub deficient: bool,
}

/// Eigen-decomposition of a symmetric nonnegative definite matrix split into
/// its null block `A` and positive block `(F, Λ)`, so that `S = F Λ F'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    null_vectors: Matrix,
    pos_vectors: Matrix,
    pos_values: Vector,
    discarded: Vector,
    tolerance: f64,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.pos_vectors.nrows()
    }

    /// Number of retained (positive) eigenvalues, `M`.
    pub fn rank(&self) -> usize {
        self.pos_values.len()
    }

    /// `A`: orthonormal basis of the null space, `T x (T - M)`.
    pub fn null_vectors(&self) -> &Matrix {
        &self.null_vectors
    }

    /// `F`: eigenvectors of the positive eigenvalues, `T x M`.
    pub fn pos_vectors(&self) -> &Matrix {
        &self.pos_vectors
    }

    /// `Λ`: positive eigenvalues in descending order.
    pub fn pos_values(&self) -> &Vector {
        &self.pos_values
    }

    /// Eigenvalues judged to be zero, descending.
    pub fn discarded_values(&self) -> &Vector {
        &self.discarded
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn is_regular(&self) -> bool {
        self.rank() == self.dim()
    }

    pub fn reconstruct(&self) -> Matrix {
        scale_columns(&self.pos_vectors, self.pos_values.iter().copied())
            * self.pos_vectors.transpose()
    }

    /// `F Λ⁻¹ F'`.
    pub fn pseudo_inverse(&self) -> Matrix {
        scale_columns(&self.pos_vectors, self.pos_values.iter().map(|l| 1.0 / l))
            * self.pos_vectors.transpose()
    }

    /// `Λ^{-1/2} F'`, the whitening map onto the positive eigenspace.
    pub fn whitener(&self) -> Matrix {
        let mut w = self.pos_vectors.transpose();
        for (mut row, l) in w.row_iter_mut().zip(self.pos_values.iter()) {
            row /= l.sqrt();
        }
        w
    }

    /// `F Λ^{1/2}`, maps standard normal draws onto errors with dispersion `S`.
    pub fn sqrt_factor(&self) -> Matrix {
        scale_columns(&self.pos_vectors, self.pos_values.iter().map(|l| l.sqrt()))
    }
}

fn scale_columns(m: &Matrix, scales: impl Iterator<Item = f64>) -> Matrix {
    let mut out = m.clone();
    for (mut col, s) in out.column_iter_mut().zip(scales) {
        col *= s;
    }
    out
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Flip `v` so that its first entry of largest magnitude is positive.
fn canonical_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let scale = max_abs(s);
    let asym = max_abs(&(s - s.transpose()));
    if asym > SYMMETRY_TOL * (1.0 + scale) {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    Ok(())
}

pub fn spectral_decompose(s: &Matrix, tol: Tolerance) -> Result<SpectralDecomposition> {
    ensure_finite(s)?;
    check_symmetric(s)?;
    let n = s.nrows();
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let largest = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let threshold = tol.resolve(n, n, largest);

    if let Some(&lowest) = order.last() {
        let l = eig.eigenvalues[lowest];
        if l < -threshold {
            return Err(Error::IndefiniteInput { eigenvalue: l, tolerance: threshold });
        }
    }

    let rank = order.iter().take_while(|&&i| eig.eigenvalues[i] > threshold).count();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        canonical_sign(vectors.column_mut(dst));
    }
    let values: Vector = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));

    Ok(SpectralDecomposition {
        pos_vectors: vectors.columns(0, rank).into_owned(),
        null_vectors: vectors.columns(rank, n - rank).into_owned(),
        pos_values: values.rows(0, rank).into_owned(),
        discarded: values.rows(rank, n - rank).into_owned(),
        tolerance: threshold,
    })
}

/// Moore-Penrose inverse of a symmetric nonnegative definite matrix.
pub fn pseudo_inverse(s: &Matrix, tol: Tolerance) -> Result<Matrix> {
    Ok(spectral_decompose(s, tol)?.pseudo_inverse())
}

struct SortedSvd {
    u: Matrix,
    values: Vec<f64>,
    v: Matrix,
}

fn to_faer(b: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Full SVD (`U` rows x rows, `V` cols x cols) with singular values sorted
/// descending.
fn full_svd(b: &Matrix) -> Result<SortedSvd> {
    let svd = to_faer(b)
        .svd()
        .map_err(|_| Error::NoConvergence(format!("SVD of a {}x{} matrix", b.nrows(), b.ncols())))?;
    let s = svd.S().column_vector();
    let u = from_faer(svd.U());
    let v = from_faer(svd.V());
    let p = s.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &c| s[c].total_cmp(&s[a]).then(a.cmp(&c)));
    let values = order.iter().map(|&i| s[i]).collect();
    let mut us = u.clone();
    let mut vs = v.clone();
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v.column(src));
    }
    Ok(SortedSvd { u: us, values, v: vs })
}

fn singular_values(b: &Matrix) -> Result<Vec<f64>> {
    let s = to_faer(b)
        .singular_values()
        .map_err(|_| Error::NoConvergence(format!("SVD of a {}x{} matrix", b.nrows(), b.ncols())))?;
    let mut v = s;
    v.sort_by(|a, c| c.total_cmp(a));
    Ok(v)
}

pub fn numeric_rank(b: &Matrix, tol: Tolerance) -> Result<RankReport> {
    ensure_finite(b)?;
    let (rows, cols) = b.shape();
    if rows == 0 || cols == 0 {
        return Ok(RankReport {
            numeric_rank: 0,
            values: Vec::new(),
            tolerance: tol.resolve(rows, cols, 0.0),
            deficient: false,
        });
    }
    let values = singular_values(b)?;
    let largest = values.first().copied().unwrap_or(0.0);
    let threshold = tol.resolve(rows, cols, largest);
    let numeric_rank = values.iter().filter(|&&v| v > threshold).count();
    Ok(RankReport {
        numeric_rank,
        deficient: numeric_rank < rows.min(cols),
        values,
        tolerance: threshold,
    })
}

/// Orthonormal basis `N` of `{x : B x = 0}`, with `cols(B) - rank(B)` columns.
pub fn null_space_basis(b: &Matrix, tol: Tolerance) -> Result<Matrix> {
    ensure_finite(b)?;
    let (rows, cols) = b.shape();
    if rows == 0 {
        return Ok(Matrix::identity(cols, cols));
    }
    if cols == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let svd = full_svd(b)?;
    let threshold = tol.resolve(rows, cols, svd.values[0]);
    let rank = svd.values.iter().filter(|&&v| v > threshold).count();
    let mut n = svd.v.columns(rank, cols - rank).into_owned();
    for j in 0..n.ncols() {
        canonical_sign(n.column_mut(j));
    }
    Ok(n)
}

/// Orthonormal basis of the column space of `B`.
pub fn column_space_basis(b: &Matrix, tol: Tolerance) -> Result<Matrix> {
    ensure_finite(b)?;
    let (rows, cols) = b.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(rows, 0));
    }
    let svd = full_svd(b)?;
    let threshold = tol.resolve(rows, cols, svd.values[0]);
    let rank = svd.values.iter().filter(|&&v| v > threshold).count();
    Ok(svd.u.columns(0, rank).into_owned())
}

/// Moore-Penrose inverse of an arbitrary rectangular matrix.
pub fn pseudo_inverse_general(b: &Matrix, tol: Tolerance) -> Result<Matrix> {
    ensure_finite(b)?;
    let (rows, cols) = b.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    let svd = full_svd(b)?;
    let threshold = tol.resolve(rows, cols, svd.values[0]);
    let mut out = Matrix::zeros(cols, rows);
    for (k, &s) in svd.values.iter().enumerate() {
        if s <= threshold {
            break;
        }
        out += svd.v.column(k) * svd.u.column(k).transpose() * (1.0 / s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        let d = max_abs(&(a - b));
        assert!(d <= tol, "max deviation {d:e} > {tol:e}\n{a}\n{b}");
    }

    #[test]
    fn identity_is_fully_ranked() {
        let d = spectral_decompose(&Matrix::identity(3, 3), Tolerance::Default).unwrap();
        assert_eq!(d.rank(), 3);
        assert_eq!(d.null_vectors().ncols(), 0);
        assert_eq!(d.pos_values().as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_with_zero() {
        let s = dmatrix![2.0, 0.0; 0.0, 0.0];
        let d = spectral_decompose(&s, Tolerance::Default).unwrap();
        assert_eq!(d.rank(), 1);
        assert_eq!(d.pos_values()[0], 2.0);
        assert_close(d.null_vectors(), &dmatrix![0.0; 1.0], 1e-15);
        assert_close(&d.pseudo_inverse(), &dmatrix![0.5, 0.0; 0.0, 0.0], 1e-15);
    }

    #[test]
    fn centering_matrix_eigensystem() {
        let s = dmatrix![0.5, -0.5; -0.5, 0.5];
        let d = spectral_decompose(&s, Tolerance::Default).unwrap();
        assert_eq!(d.rank(), 1);
        assert!((d.pos_values()[0] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(d.null_vectors(), &dmatrix![h; h], 1e-14);
    }

    #[test]
    fn zero_matrix_is_legal() {
        let d = spectral_decompose(&Matrix::zeros(3, 3), Tolerance::Default).unwrap();
        assert_eq!(d.rank(), 0);
        assert_eq!(d.pos_vectors().ncols(), 0);
        assert_close(&(d.null_vectors().transpose() * d.null_vectors()), &Matrix::identity(3, 3), 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let asym = dmatrix![1.0, 2.0; 0.0, 1.0];
        assert!(matches!(spectral_decompose(&asym, Tolerance::Default), Err(Error::NonSymmetric { .. })));
        let indef = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(matches!(spectral_decompose(&indef, Tolerance::Default), Err(Error::IndefiniteInput { .. })));
        let nan = dmatrix![f64::NAN];
        assert_eq!(spectral_decompose(&nan, Tolerance::Default), Err(Error::NonFinite));
        assert_eq!(numeric_rank(&nan, Tolerance::Default), Err(Error::NonFinite));
    }

    #[test]
    fn tie_at_threshold_counts_as_zero() {
        let s = dmatrix![1.0, 0.0; 0.0, 0.25];
        let d = spectral_decompose(&s, Tolerance::Absolute(0.25)).unwrap();
        assert_eq!(d.rank(), 1);
        let r = numeric_rank(&s, Tolerance::Absolute(0.25)).unwrap();
        assert_eq!(r.numeric_rank, 1);
    }

    #[test]
    fn eigenvector_sign_convention() {
        let s = dmatrix![1.0, -0.9; -0.9, 1.0];
        let d = spectral_decompose(&s, Tolerance::Default).unwrap();
        for col in d.pos_vectors().column_iter() {
            let (i, _) = col.iter().enumerate().fold((0, -1.0), |(bi, bv), (i, v)| {
                if v.abs() > bv { (i, v.abs()) } else { (bi, bv) }
            });
            assert!(col[i] > 0.0);
        }
    }

    #[test]
    fn null_space_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let n = null_space_basis(&dmatrix![1.0, 1.0], Tolerance::Default).unwrap();
        assert_eq!(n.ncols(), 1);
        assert!((n[(0, 0)].abs() - h).abs() < 1e-15 && (n[(0, 0)] + n[(1, 0)]).abs() < 1e-15);

        let n = null_space_basis(&Matrix::identity(3, 3), Tolerance::Default).unwrap();
        assert_eq!(n.shape(), (3, 0));

        let n = null_space_basis(&dmatrix![1.0, 0.0; 1.0, 0.0], Tolerance::Default).unwrap();
        assert_close(&n, &dmatrix![0.0; 1.0], 1e-15);

        let n = null_space_basis(&Matrix::zeros(0, 2), Tolerance::Default).unwrap();
        assert_close(&n, &Matrix::identity(2, 2), 0.0);
    }

    #[test]
    fn rank_examples() {
        let r = numeric_rank(&Matrix::identity(3, 3), Tolerance::Default).unwrap();
        assert_eq!((r.numeric_rank, r.deficient), (3, false));
        let r = numeric_rank(&dmatrix![1.0, 1.0; 2.0, 2.0; 3.0, 3.0], Tolerance::Default).unwrap();
        assert_eq!((r.numeric_rank, r.deficient), (1, true));
    }

    #[test]
    fn general_pseudo_inverse_min_norm() {
        let p = pseudo_inverse_general(&dmatrix![1.0, 1.0], Tolerance::Default).unwrap();
        assert_close(&p, &dmatrix![0.5; 0.5], 1e-15);
        let p = pseudo_inverse_general(&dmatrix![1.0, 0.0; 1.0, 0.0], Tolerance::Default).unwrap();
        assert_close(&p, &dmatrix![0.5, 0.5; 0.0, 0.0], 1e-15);
    }
}
