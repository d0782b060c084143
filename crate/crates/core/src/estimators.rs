//! Least-squares estimators for `{y, Xβ, σ²Ω}`: OLS, GLS, their explicitly
//! restricted variants, ridge, mixed (stochastic restriction) estimation,
//! Moore-Penrose least squares, TKN and the null-space constrained estimator
//! for collinear designs with singular dispersion.
//!
//! All restricted closed forms apply the correction as
//! `C⁻¹R'(RC⁻¹R')⁻¹(r − Rβ̂)`, the orientation under which `Rβ̂ = r` holds.
//!
//! `covariance_factor` is always `Var(β̂)/σ²` under the model's `Ω`, i.e. the
//! sandwich `L Ω L'` of the estimator's linear map `L`.

use crate::error::{Condition, Error, Result};
use crate::identification::{
    check_joint_identification, check_mls_invertibility, check_restriction_consistency, check_theil_condition,
    IdentificationCheck, ImplicitRestrictions,
};
use crate::linalg::{cholesky, spd_inverse, symmetrize, vstack, vstack_vec};
use crate::model::{
    CombinedRestrictions, ConditionCheck, DispersionBlocks, EstimateResult, EstimatorTag, GaussMarkoffModel,
    LinearRestrictions,
};
use crate::spectral::{
    null_space_basis, numeric_rank, pseudo_inverse_general, spectral_decompose, Matrix, Tolerance, Vector,
};

/// Relative tolerance for `‖Hβ* − h‖∞` when a caller supplies a particular point.
pub const FEASIBILITY_TOL: f64 = 1e-9;

fn check_of(condition: Condition, c: &IdentificationCheck) -> ConditionCheck {
    ConditionCheck { condition, satisfied: c.identified, rank: c.rank.numeric_rank, required: c.required }
}

fn sandwich(l: &Matrix, omega: &Matrix) -> Matrix {
    symmetrize(&(l * omega * l.transpose()))
}

fn design_rank(model: &GaussMarkoffModel) -> Result<ConditionCheck> {
    let rank = numeric_rank(model.x(), model.tolerance())?.numeric_rank;
    let check = ConditionCheck { condition: Condition::DesignRank, satisfied: rank == model.k(), rank, required: model.k() };
    if !check.satisfied {
        return Err(Error::DesignRankDeficient { rank, k: model.k() });
    }
    Ok(check)
}

fn regular_dispersion_inverse(model: &GaussMarkoffModel) -> Result<(Matrix, ConditionCheck)> {
    let spec = model.dispersion_spectrum();
    let check = ConditionCheck {
        condition: Condition::DispersionRegular,
        satisfied: spec.is_regular(),
        rank: spec.rank(),
        required: model.t(),
    };
    let singular = Error::DispersionSingular { rank: spec.rank(), t: model.t() };
    if !check.satisfied {
        return Err(singular);
    }
    let inv = spd_inverse(model.dispersion()).ok_or(singular)?;
    Ok((inv, check))
}

/// `β̂ = (X'WX)⁻¹X'Wy` together with the linear map `(X'WX)⁻¹X'W`.
fn weighted_fit(x: &Matrix, w: &Matrix, y: &Vector) -> Option<(Vector, Matrix, Matrix)> {
    let xtw = x.transpose() * w;
    let c = symmetrize(&(&xtw * x));
    let chol = cholesky(&c)?;
    let c_inv = symmetrize(&chol.inverse());
    let map = &c_inv * &xtw;
    Some((&map * y, map, c_inv))
}

pub fn ols(model: &GaussMarkoffModel) -> Result<EstimateResult> {
    let diag = design_rank(model)?;
    let eye = Matrix::identity(model.t(), model.t());
    let (beta, map, _) = weighted_fit(model.x(), &eye, model.y())
        .ok_or(Error::DesignRankDeficient { rank: diag.rank, k: model.k() })?;
    let cov = sandwich(&map, model.dispersion());
    Ok(EstimateResult::new(EstimatorTag::Ols, beta, cov, model.y(), model.x(), vec![diag]))
}

pub fn gls(model: &GaussMarkoffModel) -> Result<EstimateResult> {
    let (w, disp) = regular_dispersion_inverse(model)?;
    let diag = design_rank(model)?;
    let (beta, _, c_inv) =
        weighted_fit(model.x(), &w, model.y()).ok_or(Error::DesignRankDeficient { rank: diag.rank, k: model.k() })?;
    Ok(EstimateResult::new(EstimatorTag::Gls, beta, c_inv, model.y(), model.x(), vec![disp, diag]))
}

fn restriction_preconditions(
    model: &GaussMarkoffModel,
    res: &LinearRestrictions,
) -> Result<Vec<ConditionCheck>> {
    if res.k() != model.k() {
        return Err(Error::DimensionMismatch(format!("R has {} columns, K = {}", res.k(), model.k())));
    }
    let tol = model.tolerance();
    let cons = check_restriction_consistency(res, tol)?;
    let cons_check = ConditionCheck {
        condition: Condition::RestrictionConsistency,
        satisfied: cons.consistent,
        rank: cons.augmented_rank.numeric_rank,
        required: cons.rank.numeric_rank,
    };
    if !cons.consistent {
        return Err(Error::InconsistentRestrictions {
            rank: cons.rank.numeric_rank,
            augmented_rank: cons.augmented_rank.numeric_rank,
        });
    }
    let ident = check_joint_identification(model.x(), res.matrix(), tol)?;
    if !ident.identified {
        return Err(Error::IdentificationFailure {
            condition: Condition::JointIdentification,
            rank: ident.rank.numeric_rank,
            required: ident.required,
        });
    }
    Ok(vec![cons_check, check_of(Condition::JointIdentification, &ident)])
}

/// Minimizer of `(y − Xβ)'W(y − Xβ)` subject to `Rβ = r`, with its linear map.
///
/// Computed as `β = p + NS⁻¹N'(X'Wy − Cp)` with `p = R⁺r`, `N` a basis of
/// the null space of `R` and `S = N'CN`. This equals the correction form
/// `β̂ + C⁻¹R'(RC⁻¹R')⁻¹(r − Rβ̂)` whenever the latter is defined.
fn restricted_weighted(
    x: &Matrix,
    w: &Matrix,
    y: &Vector,
    res: &LinearRestrictions,
    tol: Tolerance,
) -> Result<(Vector, Matrix)> {
    let r = res.matrix();
    let particular = pseudo_inverse_general(r, tol)? * res.rhs();
    let n = null_space_basis(r, tol)?;
    let xtw = x.transpose() * w;
    let c = symmetrize(&(&xtw * x));
    let (nsn, _) = reduced_inverse(&n, &c, tol)?;
    let map = &nsn * &xtw;
    let beta = &particular + &nsn * (&xtw * y - &c * &particular);
    Ok((beta, map))
}

/// `N S⁻¹ N'` with `S = N'CN`; fails when `S` is singular.
fn reduced_inverse(n: &Matrix, c: &Matrix, tol: Tolerance) -> Result<(Matrix, usize)> {
    let order = n.ncols();
    if order == 0 {
        return Ok((Matrix::zeros(n.nrows(), n.nrows()), 0));
    }
    let s = symmetrize(&(n.transpose() * c * n));
    let rank = numeric_rank(&s, tol)?.numeric_rank;
    let singular = Error::SMatrixSingular { rank, order };
    if rank < order {
        return Err(singular);
    }
    let s_inv = spd_inverse(&s).ok_or(singular)?;
    Ok((symmetrize(&(n * s_inv * n.transpose())), rank))
}

pub fn rols(model: &GaussMarkoffModel, res: &LinearRestrictions) -> Result<EstimateResult> {
    let diags = restriction_preconditions(model, res)?;
    let eye = Matrix::identity(model.t(), model.t());
    let (beta, map) = restricted_weighted(model.x(), &eye, model.y(), res, model.tolerance())?;
    let cov = sandwich(&map, model.dispersion());
    Ok(EstimateResult::new(EstimatorTag::Rols, beta, cov, model.y(), model.x(), diags))
}

pub fn rgls(model: &GaussMarkoffModel, res: &LinearRestrictions) -> Result<EstimateResult> {
    let (w, disp) = regular_dispersion_inverse(model)?;
    let mut diags = restriction_preconditions(model, res)?;
    diags.insert(0, disp);
    let (beta, map) = restricted_weighted(model.x(), &w, model.y(), res, model.tolerance())?;
    let cov = sandwich(&map, model.dispersion());
    Ok(EstimateResult::new(EstimatorTag::Rgls, beta, cov, model.y(), model.x(), diags))
}

/// Ridge penalty `Ψ`, either one `ψ_i` per equation (expanded to
/// `diag(ψ_1 I_{K_1}, …, ψ_n I_{K_n})`) or a full symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum RidgeSpec {
    Block(Vec<f64>),
    Full(Matrix),
}

impl RidgeSpec {
    pub fn scalar(psi: f64) -> Self {
        RidgeSpec::Block(vec![psi])
    }

    /// Dense `Ψ` for equation widths `widths`.
    pub fn expand(&self, widths: &[usize]) -> Result<Matrix> {
        let k: usize = widths.iter().sum();
        match self {
            RidgeSpec::Block(psi) => {
                if psi.len() != widths.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} ridge parameters for {} equations",
                        psi.len(),
                        widths.len()
                    )));
                }
                if let Some(bad) = psi.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
                    return Err(Error::InvalidConfig(format!("ridge parameter {bad} is not a nonnegative real")));
                }
                let diag = widths.iter().zip(psi).flat_map(|(&w, &p)| std::iter::repeat_n(p, w));
                Ok(Matrix::from_diagonal(&Vector::from_iterator(k, diag)))
            }
            RidgeSpec::Full(m) => {
                if m.shape() != (k, k) {
                    return Err(Error::DimensionMismatch(format!("Psi is {}x{}, expected {k}x{k}", m.nrows(), m.ncols())));
                }
                spectral_decompose(m, Tolerance::Default)?;
                Ok(m.clone())
            }
        }
    }
}

fn equation_widths(model: &GaussMarkoffModel) -> Vec<usize> {
    model.sur().map(|s| s.layout.widths()).unwrap_or_else(|| vec![model.k()])
}

pub fn ridge(model: &GaussMarkoffModel, spec: &RidgeSpec) -> Result<EstimateResult> {
    let psi = spec.expand(&equation_widths(model))?;
    let x = model.x();
    let shifted = symmetrize(&(x.transpose() * x + psi));
    if numeric_rank(&shifted, model.tolerance())?.numeric_rank < model.k() {
        return Err(Error::ShiftInsufficient);
    }
    let inv = spd_inverse(&shifted).ok_or(Error::ShiftInsufficient)?;
    let map = inv * x.transpose();
    let beta = &map * model.y();
    let cov = sandwich(&map, model.dispersion());
    Ok(EstimateResult::new(EstimatorTag::Ridge, beta, cov, model.y(), x, Vec::new()))
}

/// Stochastic prior information `r = R X_f β + v` with `Var(v) = Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticRestrictions {
    pub r_mat: Matrix,
    pub rhs: Vector,
    /// Covariates of the additional observations; `None` means `I_K`.
    pub forecast_design: Option<Matrix>,
    pub theta: Matrix,
}

impl StochasticRestrictions {
    pub fn new(r_mat: Matrix, rhs: Vector, theta: Matrix) -> Self {
        Self { r_mat, rhs, forecast_design: None, theta }
    }

    pub fn q(&self) -> usize {
        self.r_mat.nrows()
    }

    /// `R X_f`, the design of the pseudo-observations.
    pub fn stacked_rows(&self, k: usize) -> Result<Matrix> {
        let rx = match &self.forecast_design {
            Some(xf) => {
                if xf.ncols() != k || self.r_mat.ncols() != xf.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "R is {}x{}, X_f is {}x{}, K = {k}",
                        self.r_mat.nrows(),
                        self.r_mat.ncols(),
                        xf.nrows(),
                        xf.ncols()
                    )));
                }
                &self.r_mat * xf
            }
            None => {
                if self.r_mat.ncols() != k {
                    return Err(Error::DimensionMismatch(format!("R has {} columns, K = {k}", self.r_mat.ncols())));
                }
                self.r_mat.clone()
            }
        };
        if self.rhs.len() != self.q() || self.theta.shape() != (self.q(), self.q()) {
            return Err(Error::DimensionMismatch(format!(
                "q = {}, r has {} rows, Theta is {}x{}",
                self.q(),
                self.rhs.len(),
                self.theta.nrows(),
                self.theta.ncols()
            )));
        }
        Ok(rx)
    }
}

/// GLS on `(y; r) = (X; R X_f) β + (u; v)` with dispersion `diag(σ²Ω, Θ)`.
/// `σ²` is taken from the model and defaults to one.
pub fn stochastic_restricted_gls(model: &GaussMarkoffModel, sres: &StochasticRestrictions) -> Result<EstimateResult> {
    let rx = sres.stacked_rows(model.k())?;
    if sres.q() == 0 {
        let mut out = gls(model)?;
        out.tag = EstimatorTag::StochasticRestricted;
        return Ok(out);
    }
    let (w, disp) = regular_dispersion_inverse(model)?;
    let theta_spec = spectral_decompose(&sres.theta, model.tolerance())?;
    let theta_singular = Error::DispersionSingular { rank: theta_spec.rank(), t: sres.q() };
    if !theta_spec.is_regular() {
        return Err(theta_singular);
    }
    let theta_inv = spd_inverse(&sres.theta).ok_or(theta_singular)?;
    let ident = check_joint_identification(model.x(), &rx, model.tolerance())?;
    if !ident.identified {
        return Err(Error::IdentificationFailure {
            condition: Condition::JointIdentification,
            rank: ident.rank.numeric_rank,
            required: ident.required,
        });
    }
    let sigma2 = model.sigma2().unwrap_or(1.0);
    let x = model.x();
    let xtw = x.transpose() * &w;
    let rtt = rx.transpose() * &theta_inv * sigma2;
    let c = symmetrize(&(&xtw * x + &rtt * &rx));
    let fail = Error::IdentificationFailure {
        condition: Condition::JointIdentification,
        rank: ident.rank.numeric_rank,
        required: ident.required,
    };
    let c_inv = spd_inverse(&c).ok_or(fail)?;
    let beta = &c_inv * (&xtw * model.y() + &rtt * &sres.rhs);
    Ok(EstimateResult::new(
        EstimatorTag::StochasticRestricted,
        beta,
        c_inv,
        model.y(),
        x,
        vec![disp, check_of(Condition::JointIdentification, &ident)],
    ))
}

/// `C₊ = X'Ω⁺X` and `X'Ω⁺y`.
struct PseudoNormal {
    omega_pinv: Matrix,
    c_plus: Matrix,
    rhs: Vector,
}

fn pseudo_normal(model: &GaussMarkoffModel) -> PseudoNormal {
    let omega_pinv = model.dispersion_spectrum().pseudo_inverse();
    let xtp = model.x().transpose() * &omega_pinv;
    let c_plus = symmetrize(&(&xtp * model.x()));
    let rhs = xtp * model.y();
    PseudoNormal { omega_pinv, c_plus, rhs }
}

fn theil_witness(model: &GaussMarkoffModel) -> Option<Box<crate::identification::TheilWitness>> {
    let sur = model.sur()?;
    match &sur.blocks {
        DispersionBlocks::PerPeriod(blocks) => {
            check_theil_condition(&sur.layout, blocks, model.tolerance()).ok().map(Box::new)
        }
        DispersionBlocks::PerEquation(_) => None,
    }
}

fn mls_core(model: &GaussMarkoffModel) -> Result<(PseudoNormal, Matrix, ConditionCheck)> {
    let check = check_mls_invertibility(model.x(), model.dispersion_spectrum(), model.tolerance())?;
    let violated = |rank| Error::TheilConditionViolated { rank, k: model.k(), witness: theil_witness(model) };
    if !check.identified {
        return Err(violated(check.rank.numeric_rank));
    }
    let pn = pseudo_normal(model);
    let c_inv = spd_inverse(&pn.c_plus).ok_or_else(|| violated(check.rank.numeric_rank))?;
    Ok((pn, c_inv, check_of(Condition::PositiveSpaceRank, &check)))
}

pub fn mls(model: &GaussMarkoffModel) -> Result<EstimateResult> {
    let (pn, c_inv, diag) = mls_core(model)?;
    let beta = &c_inv * &pn.rhs;
    Ok(EstimateResult::new(EstimatorTag::Mls, beta, c_inv, model.y(), model.x(), vec![diag]))
}

pub fn tkn(model: &GaussMarkoffModel, res: &LinearRestrictions) -> Result<EstimateResult> {
    if res.k() != model.k() {
        return Err(Error::DimensionMismatch(format!("R has {} columns, K = {}", res.k(), model.k())));
    }
    let tol = model.tolerance();
    let cons = check_restriction_consistency(res, tol)?;
    if !cons.consistent {
        return Err(Error::InconsistentRestrictions {
            rank: cons.rank.numeric_rank,
            augmented_rank: cons.augmented_rank.numeric_rank,
        });
    }
    let (pn, _, diag) = mls_core(model)?;
    let rank = numeric_rank(res.matrix(), tol)?.numeric_rank;
    if rank < res.q() {
        return Err(Error::RestrictionGramSingular { rank, q: res.q() });
    }
    let (beta, map) = restricted_weighted(model.x(), &pn.omega_pinv, model.y(), res, tol)?;
    let cov = sandwich(&map, model.dispersion());
    let cons_check = ConditionCheck {
        condition: Condition::RestrictionConsistency,
        satisfied: true,
        rank: cons.augmented_rank.numeric_rank,
        required: cons.rank.numeric_rank,
    };
    Ok(EstimateResult::new(EstimatorTag::Tkn, beta, cov, model.y(), model.x(), vec![cons_check, diag]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalSystemSolution {
    pub beta_hat: Vector,
    /// Minimum-norm Lagrange multipliers.
    pub lagrange: Vector,
    /// `‖B z − b‖₂` of the bordered system.
    pub residual_norm: f64,
    /// False when `H` has redundant rows and the multipliers are not unique.
    pub lagrange_unique: bool,
}

fn combined_preconditions(model: &GaussMarkoffModel, combined: &CombinedRestrictions) -> Result<ConditionCheck> {
    if combined.matrix().ncols() != model.k() {
        return Err(Error::DimensionMismatch(format!(
            "H has {} columns, K = {}",
            combined.matrix().ncols(),
            model.k()
        )));
    }
    if !combined.is_consistent() {
        return Err(Error::InconsistentRestrictions {
            rank: combined.rank().numeric_rank,
            augmented_rank: combined.augmented_rank(),
        });
    }
    Ok(ConditionCheck {
        condition: Condition::CombinedConsistency,
        satisfied: true,
        rank: combined.augmented_rank(),
        required: combined.rank().numeric_rank,
    })
}

/// Solve the bordered normal equations `[C₊ H'; H 0] (β; λ) = (X'Ω⁺y; h)` by
/// minimum-norm least squares.
pub fn solve_normal_system(model: &GaussMarkoffModel, combined: &CombinedRestrictions) -> Result<NormalSystemSolution> {
    combined_preconditions(model, combined)?;
    let tol = model.tolerance();
    let pn = pseudo_normal(model);
    let k = model.k();
    let h = combined.matrix();
    let stacked = numeric_rank(&vstack(h, &pn.c_plus), tol)?.numeric_rank;
    if stacked < k {
        return Err(Error::IdentificationFailure { condition: Condition::JointIdentification, rank: stacked, required: k });
    }
    let rows = h.nrows();
    let mut bordered = Matrix::zeros(k + rows, k + rows);
    bordered.view_mut((0, 0), (k, k)).copy_from(&pn.c_plus);
    bordered.view_mut((0, k), (k, rows)).copy_from(&h.transpose());
    bordered.view_mut((k, 0), (rows, k)).copy_from(h);
    let rhs = vstack_vec(&pn.rhs, combined.rhs());
    let z = pseudo_inverse_general(&bordered, tol)? * &rhs;
    let residual_norm = (&bordered * &z - &rhs).norm();
    let lagrange_unique = numeric_rank(&bordered, tol)?.numeric_rank == k + rows;
    Ok(NormalSystemSolution {
        beta_hat: z.rows(0, k).into_owned(),
        lagrange: z.rows(k, rows).into_owned(),
        residual_norm,
        lagrange_unique,
    })
}

/// Pieces of the null-space representation shared by the constrained
/// estimator and its linear-representation class.
struct ConstrainedCore {
    pn: PseudoNormal,
    nsn: Matrix,
    beta_star: Vector,
    diags: Vec<ConditionCheck>,
}

fn constrained_core(
    model: &GaussMarkoffModel,
    combined: &CombinedRestrictions,
    particular: Option<&Vector>,
) -> Result<ConstrainedCore> {
    let cons = combined_preconditions(model, combined)?;
    let tol = model.tolerance();
    let h = combined.matrix();
    let beta_star = match particular {
        Some(p) => {
            if p.len() != model.k() {
                return Err(Error::DimensionMismatch(format!("particular point has {} entries, K = {}", p.len(), model.k())));
            }
            let residual = combined.violation(p);
            if residual > FEASIBILITY_TOL * (1.0 + combined.rhs().amax()) {
                return Err(Error::InfeasibleParticular { residual });
            }
            p.clone()
        }
        None => pseudo_inverse_general(h, tol)? * combined.rhs(),
    };
    let n = null_space_basis(h, tol)?;
    let pn = pseudo_normal(model);
    let (nsn, rank) = reduced_inverse(&n, &pn.c_plus, tol)?;
    let s_check = ConditionCheck {
        condition: Condition::ReducedNormalMatrix,
        satisfied: true,
        rank,
        required: n.ncols(),
    };
    Ok(ConstrainedCore { pn, nsn, beta_star, diags: vec![cons, s_check] })
}

/// `β̂ = NS⁻¹N'X'Ω⁺y + (I − NS⁻¹N'C₊)β*` with `S = N'C₊N`, where the columns
/// of `N` are an orthonormal basis of the null space of `H`. The result does
/// not depend on the feasible point `β*`; the default is `H⁺h`.
pub fn constrained_singular_gls(
    model: &GaussMarkoffModel,
    combined: &CombinedRestrictions,
    particular: Option<&Vector>,
) -> Result<EstimateResult> {
    let core = constrained_core(model, combined, particular)?;
    let correction = &core.pn.rhs - &core.pn.c_plus * &core.beta_star;
    let beta = &core.beta_star + &core.nsn * correction;
    Ok(EstimateResult::new(EstimatorTag::ConstrainedSingular, beta, core.nsn, model.y(), model.x(), core.diags))
}

/// An affine representation `β̂ = L y + l` of the constrained estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRepresentation {
    pub estimate: EstimateResult,
    /// `L = NS⁻¹N'X'Ω⁺ + G A'`.
    pub operator: Matrix,
    /// `l = (I − NS⁻¹N'C₊)β* − G g`.
    pub offset: Vector,
}

/// One member of the class of linear representations, indexed by the free
/// matrix `g_free` (`K x (T − M)`). Every member gives the same value on any
/// response satisfying `A'y = g`.
pub fn linear_representation(
    model: &GaussMarkoffModel,
    combined: &CombinedRestrictions,
    g_free: &Matrix,
    implicit: &ImplicitRestrictions,
    particular: Option<&Vector>,
) -> Result<LinearRepresentation> {
    let a = &implicit.null_vectors;
    if g_free.shape() != (model.k(), a.ncols()) || a.nrows() != model.t() {
        return Err(Error::DimensionMismatch(format!(
            "G is {}x{}, expected {}x{}",
            g_free.nrows(),
            g_free.ncols(),
            model.k(),
            a.ncols()
        )));
    }
    let core = constrained_core(model, combined, particular)?;
    let k = model.k();
    let operator = &core.nsn * model.x().transpose() * &core.pn.omega_pinv + g_free * a.transpose();
    let offset = (Matrix::identity(k, k) - &core.nsn * &core.pn.c_plus) * &core.beta_star - g_free * &implicit.g_vec;
    let beta = &operator * model.y() + &offset;
    let estimate = EstimateResult::new(EstimatorTag::ConstrainedSingular, beta, core.nsn, model.y(), model.x(), core.diags);
    Ok(LinearRepresentation { estimate, operator, offset })
}
