//! Small dense helpers shared by the estimators.

use nalgebra::Cholesky;

use crate::spectral::{Matrix, Vector};

pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn vstack(top: &Matrix, bottom: &Matrix) -> Matrix {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

pub fn hstack(left: &Matrix, right: &Matrix) -> Matrix {
    assert_eq!(left.nrows(), right.nrows());
    let mut out = Matrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    out
}

pub fn vstack_vec(top: &Vector, bottom: &Vector) -> Vector {
    let mut out = Vector::zeros(top.len() + bottom.len());
    out.rows_mut(0, top.len()).copy_from(top);
    out.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    out
}

/// `I_n ⊗ b`.
pub fn kron_identity(n: usize, b: &Matrix) -> Matrix {
    block_diag(&vec![b.clone(); n])
}

/// `a ⊗ b` for dense operands.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * a[(i, j)]));
        }
    }
    out
}

/// `I_m - e e'/m`.
pub fn centering(m: usize) -> Matrix {
    Matrix::identity(m, m) - Matrix::from_element(m, m, 1.0 / m as f64)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Cholesky factor of a symmetric matrix, `None` if it is not numerically
/// positive definite.
pub fn cholesky(s: &Matrix) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(symmetrize(s))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(s: &Matrix) -> Option<Matrix> {
    cholesky(s).map(|c| symmetrize(&c.inverse()))
}

pub fn sum_compensated(values: impl IntoIterator<Item = f64>) -> f64 {
    // Neumaier's variant of Kahan summation.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
