//! Monte Carlo checks of unbiasedness, covariance formulas and estimator
//! equivalences on synthetic designs.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`). The design is drawn on
//! stream 0 of the configured seed and replication `r` draws its errors on
//! stream `r + 1`, so results do not depend on thread count or scheduling.
//! Errors are `σ F Λ^{1/2} z` with `z` standard normal, which keeps them
//! exactly inside the column space of the dispersion.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{constrained_singular_gls, gls, mls, ols, rgls, rols, tkn};
use crate::fe_panel::{build_fe_model, fe_gls, fe_mls, FePanelModel, PanelDispersion};
use crate::identification::{combine_restrictions, extract_implicit_restrictions};
use crate::linalg::{block_diag, sum_compensated, symmetrize};
use crate::model::{
    stack_sur, DispersionBlocks, EstimateResult, EstimatorTag, GaussMarkoffModel, LinearRestrictions, ModelOptions,
    SurLayout,
};
use crate::spectral::{spectral_decompose, Matrix, Tolerance, Vector};

/// Width of the pass band, in Monte Carlo standard errors.
pub const SE_MULTIPLIER: f64 = 4.0;
/// Replication-wise agreement required of equivalent estimators.
pub const EQUIVALENCE_TOL: f64 = 1e-8;
/// Allowed violation of `A'y = A'Xβ` in singular designs.
pub const NULL_DIRECTION_TOL: f64 = 1e-10;
/// Floor for entries whose Monte Carlo spread is exactly zero.
const DEGENERATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    RegularGls,
    SingularAddingUp,
    CollinearRestricted,
    FePanelKronecker,
    FePanelBlockDiagonal,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::RegularGls,
        Scenario::SingularAddingUp,
        Scenario::CollinearRestricted,
        Scenario::FePanelKronecker,
        Scenario::FePanelBlockDiagonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::RegularGls => "regular-gls",
            Scenario::SingularAddingUp => "singular-adding-up",
            Scenario::CollinearRestricted => "collinear-restricted",
            Scenario::FePanelKronecker => "fe-panel-kronecker",
            Scenario::FePanelBlockDiagonal => "fe-panel-block-diagonal",
        }
    }

    pub fn default_dims(self) -> Dims {
        match self {
            Scenario::RegularGls => Dims { n: 1, m: 40, k: 3 },
            Scenario::SingularAddingUp => Dims { n: 3, m: 20, k: 2 },
            Scenario::CollinearRestricted => Dims { n: 1, m: 30, k: 4 },
            Scenario::FePanelKronecker | Scenario::FePanelBlockDiagonal => Dims { n: 5, m: 4, k: 2 },
        }
    }

    pub fn default_estimators(self) -> Vec<EstimatorTag> {
        match self {
            Scenario::RegularGls => vec![EstimatorTag::Gls, EstimatorTag::Ols, EstimatorTag::Mls],
            Scenario::SingularAddingUp => vec![EstimatorTag::ConstrainedSingular],
            Scenario::CollinearRestricted => {
                vec![EstimatorTag::Rgls, EstimatorTag::Rols, EstimatorTag::ConstrainedSingular]
            }
            Scenario::FePanelKronecker | Scenario::FePanelBlockDiagonal => {
                vec![EstimatorTag::PanelGls, EstimatorTag::PanelMls]
            }
        }
    }

    /// Number of coefficients implied by `dims`.
    pub fn coefficient_count(self, dims: Dims) -> usize {
        match self {
            Scenario::SingularAddingUp => dims.n * dims.k,
            _ => dims.k,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown scenario '{s}'"))
    }
}

/// Equations `n`, periods `m` and regressors `k` (per equation in SUR designs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub replications: usize,
    pub seed: u64,
    /// Defaults to `(1, 2, …, K) / K` when absent.
    pub true_beta: Option<Vec<f64>>,
    pub sigma2: f64,
    pub dims: Dims,
    /// Added to every coefficient when generating data but not when scoring,
    /// so a nonzero value plants a known bias.
    pub bias_injection: f64,
}

impl SimulationConfig {
    pub fn new(scenario: Scenario, replications: usize, seed: u64) -> Self {
        Self {
            scenario,
            replications,
            seed,
            true_beta: None,
            sigma2: 1.0,
            dims: scenario.default_dims(),
            bias_injection: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        self.scenario.coefficient_count(self.dims)
    }

    pub fn beta(&self) -> Vector {
        let k = self.k();
        match &self.true_beta {
            Some(b) => Vector::from_column_slice(b),
            None => Vector::from_fn(k, |i, _| (i + 1) as f64 / k as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let Dims { n, m, k } = self.dims;
        if self.replications < 3 {
            return bad(format!("need at least 3 replications, got {}", self.replications));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !self.bias_injection.is_finite() {
            return bad("bias injection must be finite".into());
        }
        if n == 0 || m == 0 || k == 0 {
            return bad(format!("dimensions must be positive, got n = {n}, m = {m}, k = {k}"));
        }
        match self.scenario {
            Scenario::RegularGls if n * m <= k => return bad(format!("need n*m > k, got {} <= {k}", n * m)),
            Scenario::CollinearRestricted if k < 3 || n * m <= k => {
                return bad(format!("collinear design needs k >= 3 and n*m > k, got k = {k}, n*m = {}", n * m))
            }
            Scenario::SingularAddingUp if n < 2 || m <= k || n * (m - k) < m => {
                return bad(format!("adding-up system needs n >= 2 and enough periods, got n = {n}, m = {m}, k = {k}"))
            }
            Scenario::FePanelKronecker | Scenario::FePanelBlockDiagonal if m < 2 || n * (m - 1) < k => {
                return bad(format!("panel needs m >= 2 and n(m-1) >= k, got n = {n}, m = {m}, k = {k}"))
            }
            _ => {}
        }
        if let Some(b) = &self.true_beta {
            if b.len() != self.k() {
                return bad(format!("true beta has {} entries, scenario needs {}", b.len(), self.k()));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return bad("true beta must be finite".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum InstanceModel {
    Linear { model: GaussMarkoffModel, restrictions: Option<LinearRestrictions> },
    Panel(FePanelModel),
}

/// One replication: a model whose response carries freshly drawn errors.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: InstanceModel,
    pub true_beta: Vector,
    pub errors: Vector,
    /// Orthonormal null vectors of the dispersion (`T x 0` when regular).
    pub null_vectors: Matrix,
}

impl Instance {
    pub fn design(&self) -> &Matrix {
        match &self.model {
            InstanceModel::Linear { model, .. } => model.x(),
            InstanceModel::Panel(p) => p.x(),
        }
    }

    pub fn response(&self) -> &Vector {
        match &self.model {
            InstanceModel::Linear { model, .. } => model.y(),
            InstanceModel::Panel(p) => p.y(),
        }
    }

    /// `‖A'(y − Xβ)‖∞`.
    pub fn null_direction_violation(&self) -> f64 {
        if self.null_vectors.ncols() == 0 {
            return 0.0;
        }
        (self.null_vectors.transpose() * (self.response() - self.design() * &self.true_beta)).amax()
    }
}

/// Everything fixed across replications.
struct Prepared {
    base: InstanceModel,
    true_beta: Vector,
    mean: Vector,
    factor: Matrix,
    null_vectors: Matrix,
    sigma: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| normal(rng))
}

fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
    let b = normal_matrix(rng, dim, dim);
    symmetrize(&(&b * b.transpose() / dim as f64 + Matrix::identity(dim, dim) * 0.5))
}

/// Heteroskedastic AR(1) dispersion with standard deviations spanning `e^{±1.5}`.
fn hetero_ar1(t: usize, rho: f64) -> Matrix {
    let sd = |i: usize| {
        let u = if t > 1 { i as f64 / (t - 1) as f64 } else { 0.5 };
        (3.0 * u - 1.5).exp()
    };
    Matrix::from_fn(t, t, |i, j| sd(i) * sd(j) * rho.powi((i as i32 - j as i32).abs()))
}

fn ar1(m: usize, rho: f64) -> Matrix {
    Matrix::from_fn(m, m, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

fn with_intercept(rng: &mut ChaCha8Rng, t: usize, k: usize) -> Matrix {
    let mut x = normal_matrix(rng, t, k);
    x.column_mut(0).fill(1.0);
    x
}

fn linear_options(tol: Tolerance) -> ModelOptions {
    ModelOptions { tol, sigma2: None, check_range: false }
}

fn prepare(config: &SimulationConfig) -> Result<Prepared> {
    config.validate()?;
    let tol = Tolerance::Default;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let Dims { n, m, k } = config.dims;
    let true_beta = config.beta();
    let shifted = true_beta.add_scalar(config.bias_injection);
    let opts = linear_options(tol);

    let (base, omega) = match config.scenario {
        Scenario::RegularGls => {
            let t = n * m;
            let x = with_intercept(&mut rng, t, k);
            let omega = hetero_ar1(t, 0.6);
            let model = crate::model::build_model(&x * &shifted, x, omega.clone(), &opts)?;
            (InstanceModel::Linear { model, restrictions: None }, omega)
        }
        Scenario::CollinearRestricted => {
            let t = n * m;
            let mut x = with_intercept(&mut rng, t, k);
            let dup = x.column(1) + x.column(2);
            x.column_mut(k - 1).copy_from(&dup);
            let omega = hetero_ar1(t, 0.4);
            let mut r_mat = Matrix::zeros(1, k);
            r_mat[(0, k - 1)] = 1.0;
            let restrictions = LinearRestrictions::new(r_mat, Vector::from_element(1, true_beta[k - 1]))?;
            let model = crate::model::build_model(&x * &shifted, x, omega.clone(), &opts)?;
            (InstanceModel::Linear { model, restrictions: Some(restrictions) }, omega)
        }
        Scenario::SingularAddingUp => {
            let common = with_intercept(&mut rng, m, k);
            let layout = SurLayout::new(vec![common; n])?;
            let a = Vector::from_element(n, 1.0 / (n as f64).sqrt());
            let proj = Matrix::identity(n, n) - &a * a.transpose();
            let blocks: Vec<Matrix> =
                (0..m).map(|_| symmetrize(&(&proj * random_spd(&mut rng, n) * &proj))).collect();
            let omega = block_diag(&blocks);
            let mean = layout.stacked_design(crate::model::StackOrder::PeriodMajor) * &shifted;
            let responses: Vec<Vector> =
                (0..n).map(|i| Vector::from_fn(m, |t, _| mean[t * n + i])).collect();
            let model = stack_sur(layout, &responses, DispersionBlocks::PerPeriod(blocks), &opts)?;
            (InstanceModel::Linear { model, restrictions: None }, omega)
        }
        Scenario::FePanelKronecker | Scenario::FePanelBlockDiagonal => {
            let gammas: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let designs: Vec<Matrix> = gammas
                .iter()
                .map(|g| normal_matrix(&mut rng, m, k).add_scalar(0.5 * g))
                .collect();
            let responses: Vec<Vector> = designs
                .iter()
                .zip(&gammas)
                .map(|(x, g)| (x * &shifted).add_scalar(*g))
                .collect();
            let dispersion = if config.scenario == Scenario::FePanelKronecker {
                PanelDispersion::Kronecker(ar1(m, 0.5))
            } else {
                PanelDispersion::BlockDiagonal((0..n).map(|_| random_spd(&mut rng, m)).collect())
            };
            let panel = build_fe_model(&designs, &responses, dispersion, tol)?;
            let omega = panel.omega();
            (InstanceModel::Panel(panel), omega)
        }
    };
    let spec = spectral_decompose(&omega, tol)?;
    let mean = match &base {
        InstanceModel::Linear { model, .. } => model.y().clone(),
        InstanceModel::Panel(p) => p.y().clone(),
    };
    Ok(Prepared {
        base,
        true_beta,
        mean,
        factor: spec.sqrt_factor(),
        null_vectors: spec.null_vectors().clone(),
        sigma: config.sigma2.sqrt(),
    })
}

impl Prepared {
    fn draw(&self, config: &SimulationConfig, index: usize) -> Result<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index as u64 + 1);
        let z = Vector::from_fn(self.factor.ncols(), |_, _| normal(&mut rng));
        let errors = &self.factor * z * self.sigma;
        let y = &self.mean + &errors;
        let model = match &self.base {
            InstanceModel::Linear { model, restrictions } => {
                InstanceModel::Linear { model: model.with_response_unchecked(y), restrictions: restrictions.clone() }
            }
            InstanceModel::Panel(p) => InstanceModel::Panel(p.with_response(y)?),
        };
        Ok(Instance { model, true_beta: self.true_beta.clone(), errors, null_vectors: self.null_vectors.clone() })
    }
}

/// Replication `index` of `config`: a deterministic function of the seed,
/// the scenario and the index.
pub fn generate_instance(config: &SimulationConfig, index: usize) -> Result<Instance> {
    prepare(config)?.draw(config, index)
}

/// Apply estimator `tag` to a generated instance.
pub fn estimate(tag: EstimatorTag, instance: &Instance) -> Result<EstimateResult> {
    let unsupported = || Error::InvalidConfig(format!("estimator '{tag}' does not apply to this scenario"));
    match &instance.model {
        InstanceModel::Linear { model, restrictions } => {
            let need = || restrictions.as_ref().ok_or_else(unsupported);
            match tag {
                EstimatorTag::Ols => ols(model),
                EstimatorTag::Gls => gls(model),
                EstimatorTag::Mls => mls(model),
                EstimatorTag::Rols => rols(model, need()?),
                EstimatorTag::Rgls => rgls(model, need()?),
                EstimatorTag::Tkn => tkn(model, need()?),
                EstimatorTag::ConstrainedSingular => {
                    let implicit = extract_implicit_restrictions(model)?;
                    let combined =
                        combine_restrictions(model.k(), restrictions.as_ref(), Some(&implicit), model.tolerance())?;
                    constrained_singular_gls(model, &combined, None)
                }
                _ => Err(unsupported()),
            }
        }
        InstanceModel::Panel(p) => match tag {
            EstimatorTag::PanelGls => fe_gls(p),
            EstimatorTag::PanelMls => fe_mls(p),
            _ => Err(unsupported()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCReport {
    pub estimator: EstimatorTag,
    pub replications: usize,
    pub true_beta: Vec<f64>,
    pub mean_beta: Vec<f64>,
    pub bias: Vec<f64>,
    /// Sample standard deviation over `√R`.
    pub mc_standard_errors: Vec<f64>,
    pub sample_covariance: Vec<Vec<f64>>,
    /// `σ²` times the estimator's covariance factor.
    pub theoretical_covariance: Vec<Vec<f64>>,
    /// Jackknife standard errors of the sample covariance entries.
    pub covariance_standard_errors: Vec<Vec<f64>>,
    /// Largest `|bias_k| / se_k`.
    pub max_bias_ratio: f64,
    /// Largest `|S_jl − V_jl| / se_jl`.
    pub max_covariance_ratio: f64,
    pub unbiased: bool,
    pub covariance_matches: bool,
}

impl MCReport {
    pub fn pass(&self) -> bool {
        self.unbiased && self.covariance_matches
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceCheck {
    pub first: EstimatorTag,
    pub second: EstimatorTag,
    /// Largest replication-wise `‖β̂₁ − β̂₂‖∞ / (1 + ‖β̂₁‖∞)`.
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `tr Var(β̂_OLS) − tr Var(β̂_GLS)` with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyCheck {
    pub trace_gls: f64,
    pub trace_ols: f64,
    pub difference: f64,
    pub standard_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullDirectionCheck {
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub config: SimulationConfig,
    pub reports: Vec<MCReport>,
    pub equivalences: Vec<EquivalenceCheck>,
    pub efficiency: Option<EfficiencyCheck>,
    pub null_direction: Option<NullDirectionCheck>,
    pub pass: bool,
}

const EQUIVALENT_PAIRS: [(EstimatorTag, EstimatorTag); 4] = [
    (EstimatorTag::Gls, EstimatorTag::Mls),
    (EstimatorTag::Rgls, EstimatorTag::Tkn),
    (EstimatorTag::Rgls, EstimatorTag::ConstrainedSingular),
    (EstimatorTag::PanelGls, EstimatorTag::PanelMls),
];

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn mean_of(draws: &[Vector], k: usize) -> Vector {
    let r = draws.len() as f64;
    Vector::from_fn(k, |j, _| sum_compensated(draws.iter().map(|b| b[j])) / r)
}

fn summarize(tag: EstimatorTag, draws: &[Vector], beta: &Vector, theory: Matrix) -> MCReport {
    let k = beta.len();
    let r = draws.len();
    let rf = r as f64;
    let mean = mean_of(draws, k);
    let dev: Vec<Vector> = draws.iter().map(|b| b - &mean).collect();
    let mut cov = Matrix::zeros(k, k);
    let mut cov_se = Matrix::zeros(k, k);
    for j in 0..k {
        for l in j..k {
            let w: Vec<f64> = dev.iter().map(|d| d[j] * d[l]).collect();
            let total = sum_compensated(w.iter().copied());
            let s = total / (rf - 1.0);
            let loo: Vec<f64> = w.iter().map(|wr| (total - rf / (rf - 1.0) * wr) / (rf - 2.0)).collect();
            let loo_mean = sum_compensated(loo.iter().copied()) / rf;
            let jk = (rf - 1.0) / rf * sum_compensated(loo.iter().map(|v| (v - loo_mean).powi(2)));
            cov[(j, l)] = s;
            cov[(l, j)] = s;
            cov_se[(j, l)] = jk.sqrt();
            cov_se[(l, j)] = jk.sqrt();
        }
    }
    let bias = &mean - beta;
    let se = Vector::from_fn(k, |j, _| (cov[(j, j)] / rf).sqrt());
    let ratio = |diff: f64, se: f64, scale: f64| {
        if diff.abs() <= DEGENERATE_FLOOR * (1.0 + scale.abs()) {
            0.0
        } else {
            diff.abs() / se
        }
    };
    let max_bias_ratio = (0..k).map(|j| ratio(bias[j], se[j], beta[j])).fold(0.0, f64::max);
    let mut max_covariance_ratio = 0.0f64;
    for j in 0..k {
        for l in 0..k {
            let v = theory[(j, l)];
            max_covariance_ratio = max_covariance_ratio.max(ratio(cov[(j, l)] - v, cov_se[(j, l)], v));
        }
    }
    MCReport {
        estimator: tag,
        replications: r,
        true_beta: beta.iter().copied().collect(),
        mean_beta: mean.iter().copied().collect(),
        bias: bias.iter().copied().collect(),
        mc_standard_errors: se.iter().copied().collect(),
        sample_covariance: to_rows(&cov),
        theoretical_covariance: to_rows(&theory),
        covariance_standard_errors: to_rows(&cov_se),
        max_bias_ratio,
        max_covariance_ratio,
        unbiased: max_bias_ratio <= SE_MULTIPLIER,
        covariance_matches: max_covariance_ratio <= SE_MULTIPLIER,
    }
}

fn efficiency(gls_draws: &[Vector], ols_draws: &[Vector], k: usize) -> EfficiencyCheck {
    let r = gls_draws.len() as f64;
    let mg = mean_of(gls_draws, k);
    let mo = mean_of(ols_draws, k);
    let d: Vec<f64> = gls_draws
        .iter()
        .zip(ols_draws)
        .map(|(g, o)| (o - &mo).norm_squared() - (g - &mg).norm_squared())
        .collect();
    let trace_gls = sum_compensated(gls_draws.iter().map(|g| (g - &mg).norm_squared())) / (r - 1.0);
    let trace_ols = sum_compensated(ols_draws.iter().map(|o| (o - &mo).norm_squared())) / (r - 1.0);
    let d_mean = sum_compensated(d.iter().copied()) / r;
    let d_var = sum_compensated(d.iter().map(|v| (v - d_mean).powi(2))) / (r - 1.0);
    let standard_error = (d_var / r).sqrt();
    let difference = trace_ols - trace_gls;
    EfficiencyCheck { trace_gls, trace_ols, difference, standard_error, pass: difference > SE_MULTIPLIER * standard_error }
}

/// Run `config.replications` replications in parallel and score each
/// estimator in `estimators` (the scenario default when empty).
pub fn run_study(config: &SimulationConfig, estimators: &[EstimatorTag]) -> Result<StudyReport> {
    let prepared = prepare(config)?;
    let tags = if estimators.is_empty() { config.scenario.default_estimators() } else { estimators.to_vec() };
    let sigma2 = config.sigma2;

    let replication = |index: usize| -> Result<(Vec<EstimateResult>, f64)> {
        let wrap = |e: Error| Error::Replication { index, source: Box::new(e) };
        let inst = prepared.draw(config, index).map_err(wrap)?;
        let fits = tags.iter().map(|&t| estimate(t, &inst)).collect::<Result<Vec<_>>>().map_err(wrap)?;
        Ok((fits, inst.null_direction_violation()))
    };

    let first = replication(0)?;
    let theory: Vec<Matrix> = first.0.iter().map(|e| e.covariance(sigma2)).collect();
    let rest: Vec<(Vec<EstimateResult>, f64)> =
        (1..config.replications).into_par_iter().map(replication).collect::<Result<_>>()?;
    let all: Vec<&(Vec<EstimateResult>, f64)> = std::iter::once(&first).chain(rest.iter()).collect();

    let draws: Vec<Vec<Vector>> =
        (0..tags.len()).map(|e| all.iter().map(|(fits, _)| fits[e].beta_hat.clone()).collect()).collect();
    let reports: Vec<MCReport> = tags
        .iter()
        .zip(&draws)
        .zip(theory)
        .map(|((&tag, d), v)| summarize(tag, d, &prepared.true_beta, v))
        .collect();

    let position = |t: EstimatorTag| tags.iter().position(|&x| x == t);
    let equivalences: Vec<EquivalenceCheck> = EQUIVALENT_PAIRS
        .iter()
        .filter_map(|&(a, b)| Some((a, b, position(a)?, position(b)?)))
        .map(|(a, b, ia, ib)| {
            let max_discrepancy = draws[ia]
                .iter()
                .zip(&draws[ib])
                .map(|(x, y)| (x - y).amax() / (1.0 + x.amax()))
                .fold(0.0, f64::max);
            EquivalenceCheck {
                first: a,
                second: b,
                max_discrepancy,
                tolerance: EQUIVALENCE_TOL,
                pass: max_discrepancy <= EQUIVALENCE_TOL,
            }
        })
        .collect();

    let efficiency = match (position(EstimatorTag::Gls), position(EstimatorTag::Ols)) {
        (Some(g), Some(o)) => Some(efficiency(&draws[g], &draws[o], prepared.true_beta.len())),
        _ => None,
    };

    let null_direction = (prepared.null_vectors.ncols() > 0).then(|| {
        let max_violation = all.iter().map(|(_, v)| *v).fold(0.0, f64::max);
        NullDirectionCheck { max_violation, tolerance: NULL_DIRECTION_TOL, pass: max_violation <= NULL_DIRECTION_TOL }
    });

    let pass = reports.iter().all(MCReport::pass)
        && equivalences.iter().all(|e| e.pass)
        && efficiency.as_ref().is_none_or(|e| e.pass)
        && null_direction.as_ref().is_none_or(|n| n.pass);
    Ok(StudyReport { config: config.clone(), reports, equivalences, efficiency, null_direction, pass })
}
