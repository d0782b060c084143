//! The general Gauss-Markoff model `{y, Xβ, σ²Ω}`, seemingly-unrelated
//! regression stacking, explicit linear restrictions and estimator output.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Condition, Error, Result};
use crate::identification::check_restriction_consistency;
use crate::linalg::{block_diag, hstack};
use crate::spectral::{
    column_space_basis, ensure_finite, null_space_basis, pseudo_inverse_general, spectral_decompose,
    Matrix, RankReport, SpectralDecomposition, Tolerance, Vector,
};

/// Relative bound on `‖(I - P_(X:Ω)) y‖₂` before `y` counts as outside the
/// range of `(X : Ω)`.
pub const RANGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackOrder {
    /// Row `t * n + i`: all equations of period 1, then period 2, ...
    PeriodMajor,
    /// Row `i * m + t`: all periods of equation 1, then equation 2, ...
    EquationMajor,
}

/// Per-equation designs `X_{•,i}` (each `m x K_i`) of a SUR system.
#[derive(Debug, Clone, PartialEq)]
pub struct SurLayout {
    blocks: Vec<Matrix>,
    offsets: Vec<usize>,
}

impl SurLayout {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        let m = blocks
            .first()
            .map(|b| b.nrows())
            .ok_or_else(|| Error::DimensionMismatch("SUR layout needs at least one equation".into()))?;
        if m == 0 {
            return Err(Error::DimensionMismatch("SUR layout needs at least one period".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.nrows() != m {
                return Err(Error::DimensionMismatch(format!(
                    "equation {} has {} periods, expected {m}",
                    i + 1,
                    b.nrows()
                )));
            }
            ensure_finite(b)?;
        }
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        offsets.push(0);
        for b in &blocks {
            offsets.push(offsets.last().unwrap() + b.ncols());
        }
        Ok(Self { blocks, offsets })
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn m(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn t(&self) -> usize {
        self.n() * self.m()
    }

    pub fn k(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.ncols()).collect()
    }

    pub fn block(&self, i: usize) -> &Matrix {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    /// Columns of the stacked design belonging to equation `i`.
    pub fn columns(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Stacked row index of observation `(t, i)`, both zero based.
    pub fn row_index(&self, order: StackOrder, t: usize, i: usize) -> usize {
        match order {
            StackOrder::PeriodMajor => t * self.n() + i,
            StackOrder::EquationMajor => i * self.m() + t,
        }
    }

    /// Inverse of [`row_index`](Self::row_index): `(t, i)` of a stacked row.
    pub fn observation(&self, order: StackOrder, row: usize) -> (usize, usize) {
        match order {
            StackOrder::PeriodMajor => (row / self.n(), row % self.n()),
            StackOrder::EquationMajor => (row % self.m(), row / self.m()),
        }
    }

    /// `diag(X_{•,1}, …, X_{•,n})` with rows arranged in `order`.
    pub fn stacked_design(&self, order: StackOrder) -> Matrix {
        let mut x = Matrix::zeros(self.t(), self.k());
        for (i, b) in self.blocks.iter().enumerate() {
            let cols = self.columns(i);
            for t in 0..self.m() {
                let row = self.row_index(order, t, i);
                x.view_mut((row, cols.start), (1, cols.len())).copy_from(&b.row(t));
            }
        }
        x
    }

    /// `X_{t,•}`: the `n x K` design of period `t`.
    pub fn period_design(&self, t: usize) -> Matrix {
        let mut x = Matrix::zeros(self.n(), self.k());
        for (i, b) in self.blocks.iter().enumerate() {
            let cols = self.columns(i);
            x.view_mut((i, cols.start), (1, cols.len())).copy_from(&b.row(t));
        }
        x
    }

    /// Permutation `p` with `p[row_in_to] = row_in_from`.
    pub fn permutation(&self, from: StackOrder, to: StackOrder) -> Vec<usize> {
        (0..self.t())
            .map(|row| {
                let (t, i) = self.observation(to, row);
                self.row_index(from, t, i)
            })
            .collect()
    }
}

/// Dispersion blocks of a SUR system, either one `n x n` block `Σ_t` per
/// period or one `m x m` block `Σ_{i,i}` per equation.
#[derive(Debug, Clone, PartialEq)]
pub enum DispersionBlocks {
    PerPeriod(Vec<Matrix>),
    PerEquation(Vec<Matrix>),
}

impl DispersionBlocks {
    /// The stacking order in which these blocks are diagonal.
    pub fn order(&self) -> StackOrder {
        match self {
            DispersionBlocks::PerPeriod(_) => StackOrder::PeriodMajor,
            DispersionBlocks::PerEquation(_) => StackOrder::EquationMajor,
        }
    }

    pub fn blocks(&self) -> &[Matrix] {
        match self {
            DispersionBlocks::PerPeriod(b) | DispersionBlocks::PerEquation(b) => b,
        }
    }

    pub fn assemble(&self) -> Matrix {
        block_diag(self.blocks())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurMeta {
    pub layout: SurLayout,
    pub order: StackOrder,
    pub blocks: DispersionBlocks,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub tol: Tolerance,
    pub sigma2: Option<f64>,
    /// Reject responses outside `M(X : Ω)`.
    pub check_range: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { tol: Tolerance::Default, sigma2: None, check_range: true }
    }
}

/// The triplet `{y, Xβ, σ²Ω}` with validated dimensions and a cached
/// decomposition of `Ω`.
#[derive(Debug, Clone)]
pub struct GaussMarkoffModel {
    y: Vector,
    x: Matrix,
    omega: Matrix,
    omega_spec: SpectralDecomposition,
    sigma2: Option<f64>,
    tol: Tolerance,
    sur: Option<SurMeta>,
}

fn range_residual(y: &Vector, x: &Matrix, omega: &Matrix, tol: Tolerance) -> Result<f64> {
    let basis = column_space_basis(&hstack(x, omega), tol)?;
    let fitted = &basis * (basis.transpose() * y);
    Ok((y - fitted).norm())
}

pub fn build_model(y: Vector, x: Matrix, omega: Matrix, options: &ModelOptions) -> Result<GaussMarkoffModel> {
    let (t, k) = x.shape();
    if y.len() != t {
        return Err(Error::DimensionMismatch(format!("y has {} rows, X has {t}", y.len())));
    }
    if omega.shape() != (t, t) {
        return Err(Error::DimensionMismatch(format!(
            "dispersion is {}x{}, expected {t}x{t}",
            omega.nrows(),
            omega.ncols()
        )));
    }
    if t <= k {
        return Err(Error::TooFewObservations { t, k });
    }
    ensure_finite(&x)?;
    ensure_finite(&omega)?;
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if let Some(s) = options.sigma2 {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DimensionMismatch(format!("sigma2 must be positive and finite, got {s}")));
        }
    }
    let omega_spec = spectral_decompose(&omega, options.tol).map_err(|e| match e {
        Error::NonFinite => e,
        Error::DimensionMismatch(_) => e,
        other => Error::DispersionNotNnd(other.to_string()),
    })?;
    let model = GaussMarkoffModel {
        y,
        x,
        omega,
        omega_spec,
        sigma2: options.sigma2,
        tol: options.tol,
        sur: None,
    };
    if options.check_range {
        model.check_range()?;
    }
    Ok(model)
}

/// Stack a SUR system. Per-period blocks give period-major rows, per-equation
/// blocks equation-major rows.
pub fn stack_sur(
    layout: SurLayout,
    responses: &[Vector],
    blocks: DispersionBlocks,
    options: &ModelOptions,
) -> Result<GaussMarkoffModel> {
    let (n, m) = (layout.n(), layout.m());
    if responses.len() != n {
        return Err(Error::DimensionMismatch(format!("{} responses for {n} equations", responses.len())));
    }
    for (i, r) in responses.iter().enumerate() {
        if r.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "response of equation {} has {} periods, expected {m}",
                i + 1,
                r.len()
            )));
        }
    }
    let (count, dim) = match &blocks {
        DispersionBlocks::PerPeriod(b) => (b.len(), (m, n)),
        DispersionBlocks::PerEquation(b) => (b.len(), (n, m)),
    };
    if count != dim.0 {
        return Err(Error::DimensionMismatch(format!("{count} dispersion blocks, expected {}", dim.0)));
    }
    for (j, b) in blocks.blocks().iter().enumerate() {
        if b.shape() != (dim.1, dim.1) {
            return Err(Error::DimensionMismatch(format!(
                "dispersion block {} is {}x{}, expected {}x{}",
                j + 1,
                b.nrows(),
                b.ncols(),
                dim.1,
                dim.1
            )));
        }
        spectral_decompose(b, options.tol)
            .map_err(|e| Error::DispersionNotNnd(format!("block {}: {e}", j + 1)))?;
    }
    let order = blocks.order();
    let x = layout.stacked_design(order);
    let mut y = Vector::zeros(layout.t());
    for (i, r) in responses.iter().enumerate() {
        for t in 0..m {
            y[layout.row_index(order, t, i)] = r[t];
        }
    }
    let omega = blocks.assemble();
    let mut model = build_model(y, x, omega, options)?;
    model.sur = Some(SurMeta { layout, order, blocks });
    Ok(model)
}

impl GaussMarkoffModel {
    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn dispersion(&self) -> &Matrix {
        &self.omega
    }

    pub fn dispersion_spectrum(&self) -> &SpectralDecomposition {
        &self.omega_spec
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    pub fn t(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn sur(&self) -> Option<&SurMeta> {
        self.sur.as_ref()
    }

    pub(crate) fn from_parts_unchecked(y: Vector, x: Matrix, omega: Matrix, tol: Tolerance) -> Result<Self> {
        let omega_spec = spectral_decompose(&omega, tol)?;
        Ok(Self { y, x, omega, omega_spec, sigma2: None, tol, sur: None })
    }

    fn check_range(&self) -> Result<()> {
        let residual = range_residual(&self.y, &self.x, &self.omega, self.tol)?;
        let bound = RANGE_TOL * (1.0 + self.y.norm());
        if residual > bound {
            return Err(Error::ResponseOutsideRange { residual, bound });
        }
        Ok(())
    }

    /// Same design and dispersion with a new response, re-validated.
    pub fn with_response(&self, y: Vector) -> Result<Self> {
        if y.len() != self.t() {
            return Err(Error::DimensionMismatch(format!("y has {} rows, expected {}", y.len(), self.t())));
        }
        let model = Self { y, ..self.clone() };
        model.check_range()?;
        Ok(model)
    }

    pub(crate) fn with_response_unchecked(&self, y: Vector) -> Self {
        Self { y, ..self.clone() }
    }

    /// Copy with `Ω` rescaled so that `tr(Ω) = T`. Estimators are invariant
    /// to this rescaling.
    pub fn normalize_trace(&self) -> Result<Self> {
        let tr = self.omega.trace();
        if tr <= 0.0 {
            return Err(Error::DispersionNotNnd("trace is not positive".into()));
        }
        let c = self.t() as f64 / tr;
        let omega = &self.omega * c;
        let omega_spec = spectral_decompose(&omega, self.tol)?;
        let sur = self.sur.clone().map(|mut s| {
            let scaled: Vec<Matrix> = s.blocks.blocks().iter().map(|b| b * c).collect();
            s.blocks = match s.blocks {
                DispersionBlocks::PerPeriod(_) => DispersionBlocks::PerPeriod(scaled),
                DispersionBlocks::PerEquation(_) => DispersionBlocks::PerEquation(scaled),
            };
            s
        });
        Ok(Self { omega, omega_spec, sur, ..self.clone() })
    }

    /// Per-equation designs and responses of a stacked SUR model.
    pub fn extract_blocks(&self) -> Option<(Vec<Matrix>, Vec<Vector>)> {
        let sur = self.sur.as_ref()?;
        let layout = &sur.layout;
        let mut designs = Vec::with_capacity(layout.n());
        let mut responses = Vec::with_capacity(layout.n());
        for i in 0..layout.n() {
            let cols = layout.columns(i);
            let mut xb = Matrix::zeros(layout.m(), cols.len());
            let mut yb = Vector::zeros(layout.m());
            for t in 0..layout.m() {
                let row = layout.row_index(sur.order, t, i);
                xb.row_mut(t).copy_from(&self.x.view((row, cols.start), (1, cols.len())));
                yb[t] = self.y[row];
            }
            designs.push(xb);
            responses.push(yb);
        }
        Some((designs, responses))
    }

    /// Rows and dispersion permuted into `order`; a no-op for non-SUR models
    /// or when already in that order. The block metadata is dropped when the
    /// dispersion is no longer block diagonal in the new order.
    pub fn reorder(&self, order: StackOrder) -> Result<Self> {
        let Some(sur) = &self.sur else { return Ok(self.clone()) };
        if sur.order == order {
            return Ok(self.clone());
        }
        let perm = sur.layout.permutation(sur.order, order);
        let t = self.t();
        let y = Vector::from_iterator(t, perm.iter().map(|&p| self.y[p]));
        let x = Matrix::from_fn(t, self.k(), |r, c| self.x[(perm[r], c)]);
        let omega = Matrix::from_fn(t, t, |r, c| self.omega[(perm[r], perm[c])]);
        let omega_spec = spectral_decompose(&omega, self.tol)?;
        let mut sur = sur.clone();
        sur.order = order;
        Ok(Self { y, x, omega, omega_spec, sur: Some(sur), ..self.clone() })
    }
}

/// Explicit linear restrictions `R β = r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRestrictions {
    r_mat: Matrix,
    rhs: Vector,
}

impl LinearRestrictions {
    pub fn new(r_mat: Matrix, rhs: Vector) -> Result<Self> {
        if r_mat.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch(format!(
                "R has {} rows but r has {}",
                r_mat.nrows(),
                rhs.len()
            )));
        }
        ensure_finite(&r_mat)?;
        if !rhs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { r_mat, rhs })
    }

    pub fn empty(k: usize) -> Self {
        Self { r_mat: Matrix::zeros(0, k), rhs: Vector::zeros(0) }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.r_mat
    }

    pub fn rhs(&self) -> &Vector {
        &self.rhs
    }

    pub fn q(&self) -> usize {
        self.r_mat.nrows()
    }

    pub fn k(&self) -> usize {
        self.r_mat.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.q() == 0
    }

    /// `max |R b - r|`.
    pub fn violation(&self, beta: &Vector) -> f64 {
        (&self.r_mat * beta - &self.rhs).amax()
    }
}

/// `β = R⁺r + N_R c`: the affine solution set of consistent restrictions.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionSolutionSet {
    pub particular: Vector,
    pub null_basis: Matrix,
}

impl RestrictionSolutionSet {
    pub fn point(&self, c: &Vector) -> Vector {
        &self.particular + &self.null_basis * c
    }
}

pub fn invert_restrictions(res: &LinearRestrictions, tol: Tolerance) -> Result<RestrictionSolutionSet> {
    let check = check_restriction_consistency(res, tol)?;
    if !check.consistent {
        return Err(Error::InconsistentRestrictions {
            rank: check.rank.numeric_rank,
            augmented_rank: check.augmented_rank.numeric_rank,
        });
    }
    let particular = pseudo_inverse_general(res.matrix(), tol)? * res.rhs();
    let null_basis = null_space_basis(res.matrix(), tol)?;
    Ok(RestrictionSolutionSet { particular, null_basis })
}

/// `H β = h` with `H' = (R', X'A)` and `h' = (r', g')`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedRestrictions {
    pub(crate) h_mat: Matrix,
    pub(crate) h_vec: Vector,
    pub(crate) explicit_rows: Range<usize>,
    pub(crate) implicit_rows: Range<usize>,
    pub(crate) consistent: bool,
    pub(crate) rank: RankReport,
    pub(crate) augmented_rank: usize,
}

impl CombinedRestrictions {
    pub fn matrix(&self) -> &Matrix {
        &self.h_mat
    }

    pub fn rhs(&self) -> &Vector {
        &self.h_vec
    }

    pub fn explicit_rows(&self) -> Range<usize> {
        self.explicit_rows.clone()
    }

    pub fn implicit_rows(&self) -> Range<usize> {
        self.implicit_rows.clone()
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    pub fn rank(&self) -> &RankReport {
        &self.rank
    }

    pub fn augmented_rank(&self) -> usize {
        self.augmented_rank
    }

    pub fn rows(&self) -> usize {
        self.h_mat.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    /// More rows than rank: some restrictions are implied by the others.
    pub fn is_redundant(&self) -> bool {
        self.rank.numeric_rank < self.rows()
    }

    pub fn violation(&self, beta: &Vector) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (&self.h_mat * beta - &self.h_vec).amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EstimatorTag {
    #[serde(rename = "ols")]
    Ols,
    #[serde(rename = "gls")]
    Gls,
    #[serde(rename = "rols")]
    Rols,
    #[serde(rename = "rgls")]
    Rgls,
    #[serde(rename = "ridge")]
    Ridge,
    #[serde(rename = "mls")]
    Mls,
    #[serde(rename = "tkn")]
    Tkn,
    #[serde(rename = "constrained")]
    ConstrainedSingular,
    #[serde(rename = "stochastic")]
    StochasticRestricted,
    #[serde(rename = "panel-gls")]
    PanelGls,
    #[serde(rename = "panel-mls")]
    PanelMls,
}

impl EstimatorTag {
    pub const ALL: [EstimatorTag; 11] = [
        EstimatorTag::Ols,
        EstimatorTag::Gls,
        EstimatorTag::Rols,
        EstimatorTag::Rgls,
        EstimatorTag::Ridge,
        EstimatorTag::Mls,
        EstimatorTag::Tkn,
        EstimatorTag::ConstrainedSingular,
        EstimatorTag::StochasticRestricted,
        EstimatorTag::PanelGls,
        EstimatorTag::PanelMls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorTag::Ols => "ols",
            EstimatorTag::Gls => "gls",
            EstimatorTag::Rols => "rols",
            EstimatorTag::Rgls => "rgls",
            EstimatorTag::Ridge => "ridge",
            EstimatorTag::Mls => "mls",
            EstimatorTag::Tkn => "tkn",
            EstimatorTag::ConstrainedSingular => "constrained",
            EstimatorTag::StochasticRestricted => "stochastic",
            EstimatorTag::PanelGls => "panel-gls",
            EstimatorTag::PanelMls => "panel-mls",
        }
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        EstimatorTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown estimator '{s}'"))
    }
}

/// Outcome of one rank or consistency check consulted by an estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub satisfied: bool,
    pub rank: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub beta_hat: Vector,
    /// `Var(β̂) / σ²`.
    pub covariance_factor: Matrix,
    pub residuals: Vector,
    pub tag: EstimatorTag,
    pub diagnostics: Vec<ConditionCheck>,
}

impl EstimateResult {
    pub(crate) fn new(
        tag: EstimatorTag,
        beta_hat: Vector,
        covariance_factor: Matrix,
        y: &Vector,
        x: &Matrix,
        diagnostics: Vec<ConditionCheck>,
    ) -> Self {
        let residuals = y - x * &beta_hat;
        Self {
            beta_hat,
            covariance_factor: crate::linalg::symmetrize(&covariance_factor),
            residuals,
            tag,
            diagnostics,
        }
    }

    pub fn covariance(&self, sigma2: f64) -> Matrix {
        &self.covariance_factor * sigma2
    }
}
