//! Rank and identification diagnostics: restriction consistency, joint
//! identification of `(R; X)`, implicit restrictions induced by a singular
//! dispersion matrix, and Theil's rank condition with constructive witnesses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hstack, vstack, vstack_vec};
use crate::model::{CombinedRestrictions, GaussMarkoffModel, LinearRestrictions, SurLayout};
use crate::spectral::{
    max_abs, null_space_basis, numeric_rank, spectral_decompose, Matrix, RankReport, SpectralDecomposition,
    Tolerance, Vector,
};

/// Weights `|a_i|` at or below this are treated as zero when building a
/// cross-equation witness.
pub const WEIGHT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyCheck {
    pub consistent: bool,
    pub rank: RankReport,
    pub augmented_rank: RankReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationCheck {
    pub identified: bool,
    pub rank: RankReport,
    pub required: usize,
}

/// `rk(R) = rk(R, r)`.
pub fn check_restriction_consistency(res: &LinearRestrictions, tol: Tolerance) -> Result<ConsistencyCheck> {
    let rank = numeric_rank(res.matrix(), tol)?;
    let aug = hstack(res.matrix(), &Matrix::from_column_slice(res.q(), 1, res.rhs().as_slice()));
    let augmented_rank = numeric_rank(&aug, tol)?;
    Ok(ConsistencyCheck { consistent: rank.numeric_rank == augmented_rank.numeric_rank, rank, augmented_rank })
}

/// Full column rank of the vertical stack `(R; X)`.
pub fn check_joint_identification(x: &Matrix, r_mat: &Matrix, tol: Tolerance) -> Result<IdentificationCheck> {
    if x.ncols() != r_mat.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} columns, R has {}",
            x.ncols(),
            r_mat.ncols()
        )));
    }
    let rank = numeric_rank(&vstack(r_mat, x), tol)?;
    Ok(IdentificationCheck { identified: rank.numeric_rank == x.ncols(), rank, required: x.ncols() })
}

/// Full column rank of `F'X`, the condition for `(X'Ω⁺X)⁻¹` to exist.
pub fn check_mls_invertibility(
    x: &Matrix,
    omega_spec: &SpectralDecomposition,
    tol: Tolerance,
) -> Result<IdentificationCheck> {
    if x.nrows() != omega_spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, dispersion is {}x{}",
            x.nrows(),
            omega_spec.dim(),
            omega_spec.dim()
        )));
    }
    let fx = omega_spec.pos_vectors().transpose() * x;
    let rank = numeric_rank(&fx, tol)?;
    Ok(IdentificationCheck { identified: rank.numeric_rank == x.ncols(), rank, required: x.ncols() })
}

/// Size below which `A'(X : y)` is indistinguishable from rounding noise:
/// the tolerance rule applied with `T·max|(X : y)|` scaled by the condition
/// number of `Ω` on its positive space as the reference magnitude.
fn rounding_floor(model: &GaussMarkoffModel, rows: usize, cols: usize) -> f64 {
    let spec = model.dispersion_spectrum();
    let kappa = match (spec.pos_values().iter().next(), spec.pos_values().iter().last()) {
        (Some(hi), Some(lo)) if *lo > 0.0 => hi / lo,
        _ => 1.0,
    };
    let data = model.x().amax().max(model.y().amax());
    match model.tolerance() {
        Tolerance::Absolute(t) => t,
        Tolerance::Default => Tolerance::Default.resolve(rows, cols, model.t() as f64 * data * kappa),
    }
}

/// `G β = g` with `G = A'X`, `g = A'y`, where the columns of `A` span the
/// null space of `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitRestrictions {
    pub g_mat: Matrix,
    pub g_vec: Vector,
    pub null_vectors: Matrix,
}

impl ImplicitRestrictions {
    /// Implicit restrictions from a caller-chosen basis of the null space.
    pub fn from_null_vectors(model: &GaussMarkoffModel, a: Matrix) -> Result<Self> {
        if a.nrows() != model.t() {
            return Err(Error::DimensionMismatch(format!("A has {} rows, T = {}", a.nrows(), model.t())));
        }
        let at = a.transpose();
        let mut g_mat = &at * model.x();
        let mut g_vec = &at * model.y();
        if g_mat.nrows() > 0 {
            let aug = hstack(&g_mat, &Matrix::from_column_slice(g_vec.len(), 1, g_vec.as_slice()));
            let largest = numeric_rank(&aug, Tolerance::Absolute(0.0))?.values.first().copied().unwrap_or(0.0);
            if largest <= rounding_floor(model, aug.nrows(), aug.ncols()) {
                g_mat.fill(0.0);
                g_vec.fill(0.0);
            }
        }
        Ok(Self { g_mat, g_vec, null_vectors: a })
    }

    pub fn is_empty(&self) -> bool {
        self.g_mat.nrows() == 0
    }

    pub fn rows(&self) -> usize {
        self.g_mat.nrows()
    }

    pub fn violation(&self, beta: &Vector) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (&self.g_mat * beta - &self.g_vec).amax()
    }
}

pub fn extract_implicit_restrictions(model: &GaussMarkoffModel) -> Result<ImplicitRestrictions> {
    ImplicitRestrictions::from_null_vectors(model, model.dispersion_spectrum().null_vectors().clone())
}

/// Stack explicit rows `R β = r` over implicit rows `G β = g` and record
/// whether the combined system is consistent.
pub fn combine_restrictions(
    k: usize,
    explicit: Option<&LinearRestrictions>,
    implicit: Option<&ImplicitRestrictions>,
    tol: Tolerance,
) -> Result<CombinedRestrictions> {
    let empty = LinearRestrictions::empty(k);
    let explicit = explicit.unwrap_or(&empty);
    if explicit.k() != k {
        return Err(Error::DimensionMismatch(format!("R has {} columns, K = {k}", explicit.k())));
    }
    let (g_mat, g_vec) = match implicit {
        Some(imp) => {
            if imp.g_mat.ncols() != k {
                return Err(Error::DimensionMismatch(format!("G has {} columns, K = {k}", imp.g_mat.ncols())));
            }
            (imp.g_mat.clone(), imp.g_vec.clone())
        }
        None => (Matrix::zeros(0, k), Vector::zeros(0)),
    };
    let q = explicit.q();
    let h_mat = vstack(explicit.matrix(), &g_mat);
    let h_vec = vstack_vec(explicit.rhs(), &g_vec);
    let rows = h_mat.nrows();
    let rank = numeric_rank(&h_mat, tol)?;
    let aug = hstack(&h_mat, &Matrix::from_column_slice(rows, 1, h_vec.as_slice()));
    let augmented_rank = numeric_rank(&aug, tol)?.numeric_rank;
    Ok(CombinedRestrictions {
        consistent: rank.numeric_rank == augmented_rank,
        h_mat,
        h_vec,
        explicit_rows: 0..q,
        implicit_rows: q..rows,
        rank,
        augmented_rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    None,
    WithinEquationCollinearity,
    CrossEquationLinearCombination,
}

/// Outcome of Theil's rank condition for a SUR system whose period blocks
/// `Σ_t` share a single null vector `a`. When the condition fails, `d` is a
/// nonzero vector with `F_t' X_{t,•} d = 0` for every period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheilWitness {
    pub kind: WitnessKind,
    /// `K`-vector, zero when the condition holds.
    pub d: Vec<f64>,
    /// Common combination `s` (one entry per period), when applicable.
    pub s: Option<Vec<f64>>,
    /// Null vector weights `a`.
    pub a: Vec<f64>,
    /// Per-equation coefficients `h_i` with `X_{•,i} h_i = s` for `a_i ≠ 0`.
    pub h: Vec<Option<Vec<f64>>>,
    /// Zero-based index of the collinear equation.
    pub violating_equation: Option<usize>,
    /// Only one equation carries nonzero weight, so the cross-equation case
    /// degenerates to a statement about that equation alone.
    pub single_weight: bool,
    pub rank: RankReport,
    pub k: usize,
}

impl TheilWitness {
    pub fn is_violated(&self) -> bool {
        self.kind != WitnessKind::None
    }

    pub fn d_vector(&self) -> Vector {
        Vector::from_column_slice(&self.d)
    }

    /// `max_t ‖F_t' X_{t,•} d‖∞`.
    pub fn positive_space_residual(&self, layout: &SurLayout, sigma_blocks: &[Matrix], tol: Tolerance) -> Result<f64> {
        let d = self.d_vector();
        let mut worst = 0.0f64;
        for (t, sigma) in sigma_blocks.iter().enumerate() {
            let spec = spectral_decompose(sigma, tol)?;
            let r = spec.pos_vectors().transpose() * (layout.period_design(t) * &d);
            worst = worst.max(r.amax());
        }
        Ok(worst)
    }
}

fn common_null_vector(sigma_blocks: &[Matrix], n: usize, tol: Tolerance) -> Result<(Vector, Vec<SpectralDecomposition>)> {
    let mut specs = Vec::with_capacity(sigma_blocks.len());
    for (t, sigma) in sigma_blocks.iter().enumerate() {
        if sigma.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "Sigma_{} is {}x{}, expected {n}x{n}",
                t + 1,
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let spec = spectral_decompose(sigma, tol)?;
        let null_dim = spec.null_vectors().ncols();
        if null_dim != 1 {
            return Err(Error::UnsupportedNullStructure { period: t + 1, null_dim });
        }
        specs.push(spec);
    }
    let a: Vector = specs[0].null_vectors().column(0).into_owned();
    for (t, sigma) in sigma_blocks.iter().enumerate() {
        let residual = (sigma * &a).amax();
        if residual > 1e-8 * (1.0 + max_abs(sigma)) {
            return Err(Error::NullVectorMismatch { period: t + 1, residual });
        }
    }
    Ok((a, specs))
}

/// Theil's first rank condition with a constructive witness when it fails.
///
/// Case one looks for an equation with collinear covariates; case two
/// builds a nonzero `s` common to the column spaces of all equations with
/// nonzero weight, then sets `d_i = a_i h_i` where `X_{•,i} h_i = s`.
pub fn check_theil_condition(layout: &SurLayout, sigma_blocks: &[Matrix], tol: Tolerance) -> Result<TheilWitness> {
    let (n, m, k) = (layout.n(), layout.m(), layout.k());
    if sigma_blocks.len() != m {
        return Err(Error::DimensionMismatch(format!("{} period blocks for m = {m}", sigma_blocks.len())));
    }
    let (a, specs) = common_null_vector(sigma_blocks, n, tol)?;

    let mut fx = Matrix::zeros(0, k);
    for (t, spec) in specs.iter().enumerate() {
        fx = vstack(&fx, &(spec.pos_vectors().transpose() * layout.period_design(t)));
    }
    let rank = numeric_rank(&fx, tol)?;
    let mut witness = TheilWitness {
        kind: WitnessKind::None,
        d: vec![0.0; k],
        s: None,
        a: a.iter().copied().collect(),
        h: vec![None; n],
        violating_equation: None,
        single_weight: false,
        rank,
        k,
    };
    if witness.rank.numeric_rank == k {
        return Ok(witness);
    }

    for j in 0..n {
        let nb = null_space_basis(layout.block(j), tol)?;
        if nb.ncols() > 0 {
            let cols = layout.columns(j);
            witness.d[cols].copy_from_slice(nb.column(0).as_slice());
            witness.kind = WitnessKind::WithinEquationCollinearity;
            witness.violating_equation = Some(j);
            return Ok(witness);
        }
    }

    witness.kind = WitnessKind::CrossEquationLinearCombination;
    let active: Vec<usize> = (0..n).filter(|&i| a[i].abs() > WEIGHT_TOL).collect();
    let coefficients: Option<Vec<Vector>> = match active.as_slice() {
        [] => None,
        [j] => {
            witness.single_weight = true;
            let mut h = Vector::zeros(layout.block(*j).ncols());
            h[0] = 1.0;
            Some(vec![h])
        }
        [first, rest @ ..] => {
            // X_first h_first - X_i h_i = 0 for every other active equation.
            let widths: Vec<usize> = active.iter().map(|&i| layout.block(i).ncols()).collect();
            let total: usize = widths.iter().sum();
            let mut sys = Matrix::zeros(rest.len() * m, total);
            let mut offset = widths[0];
            for (p, &i) in rest.iter().enumerate() {
                sys.view_mut((p * m, 0), (m, widths[0])).copy_from(layout.block(*first));
                sys.view_mut((p * m, offset), (m, widths[p + 1])).copy_from(&(-layout.block(i)));
                offset += widths[p + 1];
            }
            let nb = null_space_basis(&sys, tol)?;
            (nb.ncols() > 0).then(|| {
                let v = nb.column(0);
                let mut start = 0;
                widths
                    .iter()
                    .map(|&w| {
                        let h = v.rows(start, w).into_owned();
                        start += w;
                        h
                    })
                    .collect()
            })
        }
    };

    match coefficients {
        Some(hs) => {
            let s = layout.block(active[0]) * &hs[0];
            for (&i, h) in active.iter().zip(hs) {
                let cols = layout.columns(i);
                for (dst, v) in witness.d[cols].iter_mut().zip(h.iter()) {
                    *dst = a[i] * v;
                }
                witness.h[i] = Some(h.iter().copied().collect());
            }
            witness.s = Some(s.iter().copied().collect());
        }
        None => {
            // Numerical fallback: read the witness straight off null(F'X).
            let nb = null_space_basis(&fx, tol)?;
            let d: Vector = nb.column(0).into_owned();
            let s: Vec<f64> = (0..m).map(|t| a.dot(&(layout.period_design(t) * &d))).collect();
            for &i in &active {
                let cols = layout.columns(i);
                witness.h[i] = Some(d.rows(cols.start, cols.len()).iter().map(|v| v / a[i]).collect());
            }
            witness.d = d.iter().copied().collect();
            witness.s = Some(s);
        }
    }
    Ok(witness)
}
