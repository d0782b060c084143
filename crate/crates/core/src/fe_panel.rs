//! One-way fixed-effects panels `y = Xβ + Zγ + u` with `Z = I_n ⊗ e_m` and
//! block-diagonal dispersion (Kronecker `I_n ⊗ Σ` or per-equation `Σ_{i,i}`).
//!
//! The dummy-variable GLS estimator, the Moore-Penrose estimator of the
//! within-transformed model and the drop-one-period estimator all coincide;
//! [`verify_theorem5`] measures how closely they do numerically.
//!
//! Rows are equation-major: observation `(t, i)` sits at row `i * m + t`.

use serde::Serialize;

use crate::error::{Condition, Error, Result};
use crate::linalg::{block_diag, centering, kron, spd_inverse, symmetrize};
use crate::model::{ConditionCheck, EstimateResult, EstimatorTag, GaussMarkoffModel};
use crate::spectral::{ensure_finite, max_abs, numeric_rank, spectral_decompose, Matrix, Tolerance, Vector};

/// Largest `T` for which dense `T x T` projectors are materialized.
pub const DEFAULT_DENSE_CAP: usize = 2000;

/// Pass threshold for coefficient agreement, relative to `1 + ‖β̂‖∞`.
pub const BETA_TOL: f64 = 1e-8;
/// Pass threshold for the projector identity, entrywise.
pub const PROJECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum PanelDispersion {
    /// Common intertemporal `Σ` (`m x m`) for every equation.
    Kronecker(Matrix),
    /// One `Σ_{i,i}` per equation.
    BlockDiagonal(Vec<Matrix>),
}

#[derive(Debug, Clone)]
pub struct FePanelModel {
    n: usize,
    m: usize,
    x: Matrix,
    y: Vector,
    dispersion: PanelDispersion,
    sigma_inv: Vec<Matrix>,
    tol: Tolerance,
    dense_cap: usize,
}

pub fn build_fe_model(
    designs: &[Matrix],
    responses: &[Vector],
    dispersion: PanelDispersion,
    tol: Tolerance,
) -> Result<FePanelModel> {
    let n = designs.len();
    if n == 0 || responses.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} designs and {} responses", responses.len())));
    }
    let (m, k) = designs[0].shape();
    if m < 2 {
        return Err(Error::DimensionMismatch(format!("fixed-effects panels need m >= 2 periods, got {m}")));
    }
    for (i, (xd, yd)) in designs.iter().zip(responses).enumerate() {
        if xd.shape() != (m, k) || yd.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "equation {}: design {}x{}, response {}, expected {m}x{k} and {m}",
                i + 1,
                xd.nrows(),
                xd.ncols(),
                yd.len()
            )));
        }
        ensure_finite(xd)?;
        if !yd.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    let blocks: Vec<&Matrix> = match &dispersion {
        PanelDispersion::Kronecker(s) => vec![s],
        PanelDispersion::BlockDiagonal(b) => {
            if b.len() != n {
                return Err(Error::DimensionMismatch(format!("{} dispersion blocks for n = {n}", b.len())));
            }
            b.iter().collect()
        }
    };
    let mut sigma_inv = Vec::with_capacity(blocks.len());
    for (j, s) in blocks.into_iter().enumerate() {
        if s.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "Sigma block {} is {}x{}, expected {m}x{m}",
                j + 1,
                s.nrows(),
                s.ncols()
            )));
        }
        let spec = spectral_decompose(s, tol).map_err(|e| match e {
            Error::NonFinite => e,
            other => Error::DispersionNotPd(format!("block {}: {other}", j + 1)),
        })?;
        let not_pd = || Error::DispersionNotPd(format!("block {} has rank {} < {m}", j + 1, spec.rank()));
        if !spec.is_regular() {
            return Err(not_pd());
        }
        sigma_inv.push(spd_inverse(s).ok_or_else(not_pd)?);
    }

    let mut x = Matrix::zeros(n * m, k);
    let mut y = Vector::zeros(n * m);
    for (i, (xd, yd)) in designs.iter().zip(responses).enumerate() {
        x.rows_mut(i * m, m).copy_from(xd);
        y.rows_mut(i * m, m).copy_from(yd);
    }
    Ok(FePanelModel { n, m, x, y, dispersion, sigma_inv, tol, dense_cap: DEFAULT_DENSE_CAP })
}

impl FePanelModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn t(&self) -> usize {
        self.n * self.m
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn dispersion(&self) -> &PanelDispersion {
        &self.dispersion
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    pub fn with_dense_cap(mut self, cap: usize) -> Self {
        self.dense_cap = cap;
        self
    }

    pub fn with_response(&self, y: Vector) -> Result<Self> {
        if y.len() != self.t() {
            return Err(Error::DimensionMismatch(format!("y has {} rows, T = {}", y.len(), self.t())));
        }
        Ok(Self { y, ..self.clone() })
    }

    pub fn row_index(&self, t: usize, i: usize) -> usize {
        i * self.m + t
    }

    /// `Σ_{i,i}` of equation `i`.
    pub fn sigma_block(&self, i: usize) -> &Matrix {
        match &self.dispersion {
            PanelDispersion::Kronecker(s) => s,
            PanelDispersion::BlockDiagonal(b) => &b[i],
        }
    }

    fn sigma_inv_block(&self, i: usize) -> &Matrix {
        if self.sigma_inv.len() == 1 {
            &self.sigma_inv[0]
        } else {
            &self.sigma_inv[i]
        }
    }

    pub fn x_block(&self, i: usize) -> Matrix {
        self.x.rows(i * self.m, self.m).into_owned()
    }

    pub fn y_block(&self, i: usize) -> Vector {
        self.y.rows(i * self.m, self.m).into_owned()
    }

    /// Dense system dispersion `diag(Σ_{1,1}, …, Σ_{n,n})`.
    pub fn omega(&self) -> Matrix {
        block_diag(&(0..self.n).map(|i| self.sigma_block(i).clone()).collect::<Vec<_>>())
    }

    /// Dense dummy matrix `Z = I_n ⊗ e_m`.
    pub fn z(&self) -> Matrix {
        kron(&Matrix::identity(self.n, self.n), &Matrix::from_element(self.m, 1, 1.0))
    }

    /// Rank condition on `(X, Z)`: full column rank `K + n`. Evaluated as
    /// `n + rk(MX)`, since `M` projects onto the orthogonal complement of `Z`.
    pub fn identification(&self) -> Result<ConditionCheck> {
        let required = self.k() + self.n;
        let cm = centering(self.m);
        let mut mx = Matrix::zeros(self.t(), self.k());
        for i in 0..self.n {
            mx.rows_mut(i * self.m, self.m).copy_from(&(&cm * self.x_block(i)));
        }
        let x_norm = numeric_rank(&self.x, Tolerance::Absolute(0.0))?.values.first().copied().unwrap_or(0.0);
        let scale = x_norm.max((self.m as f64).sqrt());
        let threshold = self.tol.resolve(self.t(), required, scale);
        let rank = self.n + numeric_rank(&mx, Tolerance::Absolute(threshold))?.numeric_rank;
        Ok(ConditionCheck { condition: Condition::JointIdentification, satisfied: rank == required, rank, required })
    }

    fn require_identified(&self) -> Result<ConditionCheck> {
        let c = self.identification()?;
        if !c.satisfied {
            return Err(Error::IdentificationFailure { condition: c.condition, rank: c.rank, required: c.required });
        }
        Ok(c)
    }

    /// `M_m Σ_{i,i} M_m`.
    pub fn within_block(&self, i: usize) -> Matrix {
        let c = centering(self.m);
        symmetrize(&(&c * self.sigma_block(i) * &c))
    }

    /// `P_i = Σ⁻¹ − Σ⁻¹e(e'Σ⁻¹e)⁻¹e'Σ⁻¹`, the diagonal block of `P`.
    fn p_block(&self, i: usize) -> Matrix {
        let w = self.sigma_inv_block(i);
        let we = w.column_sum();
        let ewe = we.sum();
        symmetrize(&(w - &we * we.transpose() / ewe))
    }
}

/// Dense `M`, `Q`, `P` and the centering matrix `M_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    pub m_proj: Matrix,
    pub q: Matrix,
    pub p: Matrix,
    pub centering: Matrix,
}

pub fn build_projectors(model: &FePanelModel) -> Result<ProjectorSet> {
    let t = model.t();
    if t > model.dense_cap {
        return Err(Error::ProjectorTooLarge { t, cap: model.dense_cap });
    }
    let cm = centering(model.m);
    let m_proj = kron(&Matrix::identity(model.n, model.n), &cm);
    let w = block_diag(&(0..model.n).map(|i| model.sigma_inv_block(i).clone()).collect::<Vec<_>>());
    let z = model.z();
    let zwz = z.transpose() * &w * &z;
    let zwz_inv = spd_inverse(&zwz).ok_or_else(|| Error::DispersionNotPd("Z'(I ⊗ Σ⁻¹)Z is singular".into()))?;
    let q = &z * zwz_inv * z.transpose() * &w;
    let p = &w * (Matrix::identity(t, t) - &q);
    Ok(ProjectorSet { m_proj, q, p, centering: cm })
}

/// The six projector identities, each as a max-abs residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectorResiduals {
    pub q_idempotent: f64,
    pub qz_eq_z: f64,
    pub pz_eq_0: f64,
    pub pm_eq_p: f64,
    pub mpm_eq_p: f64,
    pub p_omega_p_eq_p: f64,
}

impl ProjectorResiduals {
    pub fn max(&self) -> f64 {
        [self.q_idempotent, self.qz_eq_z, self.pz_eq_0, self.pm_eq_p, self.mpm_eq_p, self.p_omega_p_eq_p]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

impl ProjectorSet {
    pub fn residuals(&self, model: &FePanelModel) -> ProjectorResiduals {
        let z = model.z();
        let omega = model.omega();
        ProjectorResiduals {
            q_idempotent: max_abs(&(&self.q * &self.q - &self.q)),
            qz_eq_z: max_abs(&(&self.q * &z - &z)),
            pz_eq_0: max_abs(&(&self.p * &z)),
            pm_eq_p: max_abs(&(&self.p * &self.m_proj - &self.p)),
            mpm_eq_p: max_abs(&(&self.m_proj * &self.p * &self.m_proj - &self.p)),
            p_omega_p_eq_p: max_abs(&(&self.p * omega * &self.p - &self.p)),
        }
    }
}

fn solve_accumulated(c: Matrix, rhs: Vector, fail: Error) -> Result<(Vector, Matrix)> {
    let c_inv = spd_inverse(&c).ok_or(fail)?;
    Ok((&c_inv * rhs, c_inv))
}

/// Dummy-variable GLS `(X'PX)⁻¹X'Py`, accumulated block by block.
pub fn fe_gls(model: &FePanelModel) -> Result<EstimateResult> {
    let ident = model.require_identified()?;
    let k = model.k();
    let mut c = Matrix::zeros(k, k);
    let mut rhs = Vector::zeros(k);
    for i in 0..model.n {
        let xi = model.x_block(i);
        let xp = xi.transpose() * model.p_block(i);
        c += &xp * &xi;
        rhs += &xp * model.y_block(i);
    }
    let fail = Error::IdentificationFailure { condition: ident.condition, rank: ident.rank, required: ident.required };
    let (beta, c_inv) = solve_accumulated(symmetrize(&c), rhs, fail)?;
    Ok(EstimateResult::new(EstimatorTag::PanelGls, beta, c_inv, &model.y, &model.x, vec![ident]))
}

/// `My = MXβ + Mu` with dispersion `diag(M_m Σ_{i,i} M_m)` of rank `n(m − 1)`.
pub fn within_transform(model: &FePanelModel) -> Result<GaussMarkoffModel> {
    let cm = centering(model.m);
    let mut x = Matrix::zeros(model.t(), model.k());
    let mut y = Vector::zeros(model.t());
    let mut blocks = Vec::with_capacity(model.n);
    for i in 0..model.n {
        x.rows_mut(i * model.m, model.m).copy_from(&(&cm * model.x_block(i)));
        y.rows_mut(i * model.m, model.m).copy_from(&(&cm * model.y_block(i)));
        blocks.push(model.within_block(i));
    }
    GaussMarkoffModel::from_parts_unchecked(y, x, block_diag(&blocks), model.tol)
}

/// Null vectors `A = I_n ⊗ e_m/√m` of the within dispersion.
pub fn within_null_vectors(model: &FePanelModel) -> Matrix {
    model.z() / (model.m as f64).sqrt()
}

/// Moore-Penrose least squares on the within-transformed model, with the
/// pseudoinverse taken block by block.
pub fn fe_mls(model: &FePanelModel) -> Result<EstimateResult> {
    let ident = model.require_identified()?;
    let cm = centering(model.m);
    let k = model.k();
    let mut c = Matrix::zeros(k, k);
    let mut rhs = Vector::zeros(k);
    let mut fx_rows = Vec::with_capacity(model.t());
    for i in 0..model.n {
        let spec = spectral_decompose(&model.within_block(i), model.tol)?;
        let mx = &cm * model.x_block(i);
        let xp = mx.transpose() * spec.pseudo_inverse();
        c += &xp * &mx;
        rhs += &xp * model.y_block(i);
        let fxi = spec.pos_vectors().transpose() * &mx;
        fx_rows.extend(fxi.row_iter().map(|r| r.into_owned()));
    }
    let fx = if fx_rows.is_empty() { Matrix::zeros(0, k) } else { Matrix::from_rows(&fx_rows) };
    let rank = numeric_rank(&fx, model.tol)?.numeric_rank;
    let violated = Error::TheilConditionViolated { rank, k, witness: None };
    if rank < k {
        return Err(violated);
    }
    let (beta, c_inv) = solve_accumulated(symmetrize(&c), rhs, violated)?;
    let theil = ConditionCheck { condition: Condition::PositiveSpaceRank, satisfied: true, rank, required: k };
    Ok(EstimateResult::new(EstimatorTag::PanelMls, beta, c_inv, &model.y, &model.x, vec![ident, theil]))
}

/// GLS on the within model after deleting period `period` (one based) from
/// every equation, using the induced `(m − 1)`-dimensional dispersion.
pub fn fe_drop_period(model: &FePanelModel, period: usize) -> Result<EstimateResult> {
    let m = model.m;
    if period == 0 || period > m {
        return Err(Error::PeriodOutOfRange { period, m });
    }
    let ident = model.require_identified()?;
    let drop = period - 1;
    let keep: Vec<usize> = (0..m).filter(|&t| t != drop).collect();
    let cm = centering(m);
    let k = model.k();
    let mut c = Matrix::zeros(k, k);
    let mut rhs = Vector::zeros(k);
    for i in 0..model.n {
        let mx = &cm * model.x_block(i);
        let my = &cm * model.y_block(i);
        let wb = model.within_block(i);
        let reduced = Matrix::from_fn(m - 1, m - 1, |r, s| wb[(keep[r], keep[s])]);
        let d_inv = spd_inverse(&reduced).ok_or(Error::ReducedDispersionSingular { period })?;
        let xr = Matrix::from_fn(m - 1, k, |r, s| mx[(keep[r], s)]);
        let yr = Vector::from_fn(m - 1, |r, _| my[keep[r]]);
        let xd = xr.transpose() * d_inv;
        c += &xd * &xr;
        rhs += &xd * yr;
    }
    let fail = Error::IdentificationFailure { condition: ident.condition, rank: ident.rank, required: ident.required };
    let (beta, c_inv) = solve_accumulated(symmetrize(&c), rhs, fail)?;
    Ok(EstimateResult::new(EstimatorTag::PanelGls, beta, c_inv, &model.y, &model.x, vec![ident]))
}

/// Max-abs deviation of a candidate `P` from `M (I_n ⊗ M_mΣM_m)⁺ M`.
pub fn projector_discrepancy(model: &FePanelModel, p: &Matrix) -> Result<f64> {
    let t = model.t();
    if p.shape() != (t, t) {
        return Err(Error::DimensionMismatch(format!("P is {}x{}, expected {t}x{t}", p.nrows(), p.ncols())));
    }
    let cm = centering(model.m);
    let mut worst = 0.0f64;
    for i in 0..model.n {
        for j in 0..model.n {
            let block = p.view((i * model.m, j * model.m), (model.m, model.m));
            let d = if i == j {
                let pinv = spectral_decompose(&model.within_block(i), model.tol)?.pseudo_inverse();
                max_abs(&(block - &cm * pinv * &cm))
            } else {
                block.amax()
            };
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

/// Blockwise `max |P − M(I ⊗ M_mΣM_m)⁺M|` without materializing `T x T` matrices.
fn blockwise_projector_discrepancy(model: &FePanelModel) -> Result<f64> {
    let cm = centering(model.m);
    let mut worst = 0.0f64;
    for i in 0..model.n {
        let pinv = spectral_decompose(&model.within_block(i), model.tol)?.pseudo_inverse();
        worst = worst.max(max_abs(&(model.p_block(i) - &cm * pinv * &cm)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem5Report {
    pub beta_gls: Option<Vec<f64>>,
    pub beta_mls: Option<Vec<f64>>,
    /// `‖β̂_GLS − β̂_MLS‖∞`.
    pub beta_discrepancy: f64,
    /// `‖P − M(I ⊗ M_mΣM_m)⁺M‖∞`.
    pub projector_discrepancy: f64,
    /// Largest deviation of any drop-one-period estimate from `β̂_MLS`.
    pub drop_period_discrepancy: f64,
    pub beta_tolerance: f64,
    pub projector_tolerance: f64,
    pub pass: bool,
    pub error: Option<String>,
}

/// Compare dummy-variable GLS, within MLS and every drop-one-period
/// estimate, and check the projector identity behind their equality.
pub fn verify_theorem5(model: &FePanelModel) -> Theorem5Report {
    let outcome = (|| -> Result<Theorem5Report> {
        let gls = fe_gls(model)?;
        let mls = fe_mls(model)?;
        let beta_discrepancy = (&gls.beta_hat - &mls.beta_hat).amax();
        let mut drop_period_discrepancy = 0.0f64;
        for t0 in 1..=model.m {
            let d = fe_drop_period(model, t0)?;
            drop_period_discrepancy = drop_period_discrepancy.max((&d.beta_hat - &mls.beta_hat).amax());
        }
        let projector_discrepancy = blockwise_projector_discrepancy(model)?;
        let beta_tolerance = BETA_TOL * (1.0 + gls.beta_hat.amax());
        let pass = beta_discrepancy <= beta_tolerance
            && drop_period_discrepancy <= beta_tolerance
            && projector_discrepancy <= PROJECTOR_TOL;
        Ok(Theorem5Report {
            beta_gls: Some(gls.beta_hat.iter().copied().collect()),
            beta_mls: Some(mls.beta_hat.iter().copied().collect()),
            beta_discrepancy,
            projector_discrepancy,
            drop_period_discrepancy,
            beta_tolerance,
            projector_tolerance: PROJECTOR_TOL,
            pass,
            error: None,
        })
    })();
    outcome.unwrap_or_else(|e| Theorem5Report {
        beta_gls: None,
        beta_mls: None,
        beta_discrepancy: f64::NAN,
        projector_discrepancy: f64::NAN,
        drop_period_discrepancy: f64::NAN,
        beta_tolerance: f64::NAN,
        projector_tolerance: PROJECTOR_TOL,
        pass: false,
        error: Some(e.to_string()),
    })
}
