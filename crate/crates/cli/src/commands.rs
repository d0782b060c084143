//! The four subcommands. Each fills a [`ReportDocument`] and never panics on
//! bad input; the exit status travels inside the document.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use gmls_core::estimators::{
    constrained_singular_gls, gls, mls, ols, ridge, rgls, rols, stochastic_restricted_gls, tkn, RidgeSpec,
    StochasticRestrictions,
};
use gmls_core::fe_panel::{build_fe_model, fe_drop_period, fe_gls, fe_mls, verify_theorem5, PanelDispersion};
use gmls_core::identification::{
    check_joint_identification, check_mls_invertibility, check_restriction_consistency, check_theil_condition,
    combine_restrictions, extract_implicit_restrictions,
};
use gmls_core::mc::{run_study, Dims, Scenario, SimulationConfig};
use gmls_core::spectral::numeric_rank;
use gmls_core::{
    build_model, stack_sur, Condition, DispersionBlocks, Error, EstimateResult, EstimatorTag, GaussMarkoffModel,
    LinearRestrictions, Matrix, ModelOptions, SurLayout, Tolerance, Vector,
};
use serde::Serialize;
use serde_json::json;

use crate::io::{read_matrix, read_panel, read_restrictions, read_vector, InputError};
use crate::report::{
    matrix, tolerance, vector, ErrorReport, ReportDocument, EXIT_INPUT, EXIT_NUMERICAL, EXIT_STATISTICAL,
};

/// Smallest replication count `simulate` accepts.
pub const MIN_REPLICATIONS: usize = 100;

enum Failure {
    Input(InputError),
    Core(Error),
    Usage(String),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl ReportDocument {
    fn fail_with(&mut self, f: Failure) {
        match f {
            Failure::Input(e) => self.fail_input(&e),
            Failure::Core(e) => self.fail_core(&e),
            Failure::Usage(msg) => self.fail(ErrorReport::usage(msg), EXIT_INPUT),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ols,
    Gls,
    Rols,
    Rgls,
    Ridge,
    Mls,
    Tkn,
    Constrained,
    Stochastic,
}

impl Method {
    /// Conditions checked before the estimator is allowed to run.
    fn requires(self) -> &'static [Condition] {
        use Condition::*;
        match self {
            Method::Ols => &[DesignRank],
            Method::Gls => &[DesignRank, DispersionRegular],
            Method::Rols => &[RestrictionConsistency, JointIdentification],
            Method::Rgls => &[RestrictionConsistency, JointIdentification, DispersionRegular],
            Method::Ridge => &[],
            Method::Mls => &[PositiveSpaceRank],
            Method::Tkn => &[RestrictionConsistency, PositiveSpaceRank],
            Method::Constrained => &[CombinedConsistency],
            Method::Stochastic => &[DispersionRegular],
        }
    }

    fn needs_restrictions(self) -> bool {
        matches!(self, Method::Rols | Method::Rgls | Method::Tkn)
    }
}

/// Files describing one linear model, shared by `estimate` and `diagnose`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Design matrix X (T x K). With --sur-widths, the period-major stack of
    /// the per-equation designs.
    #[arg(long)]
    pub design: PathBuf,
    /// Response vector y (T entries).
    #[arg(long)]
    pub response: PathBuf,
    /// Dispersion matrix Omega (T x T); identity when omitted.
    #[arg(long)]
    pub dispersion: Option<PathBuf>,
    /// Explicit restrictions R b = r: K coefficient columns then rhs.
    #[arg(long)]
    pub restrictions: Option<PathBuf>,
    /// Column counts K_1,...,K_n of the equations of a SUR system.
    #[arg(long, value_delimiter = ',')]
    pub sur_widths: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Ridge parameters, one value or one per equation.
    #[arg(long, value_delimiter = ',')]
    pub ridge: Vec<f64>,
    /// Stochastic restrictions r = R b + v, in the restrictions format.
    #[arg(long)]
    pub stochastic: Option<PathBuf>,
    /// Dispersion Theta of the stochastic restrictions (q x q).
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Error variance scale; reported covariances are scaled by it.
    #[arg(long)]
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PanelArgs {
    /// Long-format CSV with header equation,period,response,x1,...,xK.
    #[arg(long)]
    pub panel_data: PathBuf,
    /// Sigma (m x m, shared by all equations) or the full n*m x n*m
    /// block-diagonal dispersion in equation-major order.
    #[arg(long)]
    pub dispersion: PathBuf,
    /// One-based period dropped by the drop-period estimator.
    #[arg(long, default_value_t = 1)]
    pub drop_period: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Shift added to every true coefficient when generating data only.
    #[arg(long, default_value_t = 0.0)]
    pub inject_bias: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long)]
    pub equations: Option<usize>,
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long)]
    pub regressors: Option<usize>,
    /// Estimators to score; the scenario default when omitted.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Vec<String>,
}

fn echo(args: impl Serialize) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

struct LoadedModel {
    model: GaussMarkoffModel,
    restrictions: Option<LinearRestrictions>,
}

fn extract_sur(
    x: &Matrix,
    y: &Vector,
    omega: &Matrix,
    widths: &[usize],
) -> Outcome<(SurLayout, Vec<Vector>, Vec<Matrix>)> {
    let n = widths.len();
    let (t, k) = x.shape();
    if widths.iter().sum::<usize>() != k {
        return Err(Failure::Usage(format!("SUR widths sum to {}, design has {k} columns", widths.iter().sum::<usize>())));
    }
    if t % n != 0 {
        return Err(Failure::Usage(format!("{t} design rows do not split into {n} equations")));
    }
    let m = t / n;
    let mut offset = 0;
    let mut blocks = Vec::with_capacity(n);
    for (i, &w) in widths.iter().enumerate() {
        let block = Matrix::from_fn(m, w, |s, j| x[(s * n + i, offset + j)]);
        for s in 0..m {
            for j in (0..k).filter(|j| !(offset..offset + w).contains(j)) {
                if x[(s * n + i, j)] != 0.0 {
                    return Err(Failure::Usage(format!(
                        "design row {} has a nonzero entry outside the columns of equation {}",
                        s * n + i + 1,
                        i + 1
                    )));
                }
            }
        }
        blocks.push(block);
        offset += w;
    }
    let responses = (0..n).map(|i| Vector::from_fn(m, |s, _| y[s * n + i])).collect();
    let mut sigmas = Vec::with_capacity(m);
    for s in 0..m {
        for r in s * n..(s + 1) * n {
            for c in (0..t).filter(|c| !(s * n..(s + 1) * n).contains(c)) {
                if omega[(r, c)] != 0.0 {
                    return Err(Failure::Usage(format!(
                        "dispersion entry ({}, {}) links different periods of a SUR system",
                        r + 1,
                        c + 1
                    )));
                }
            }
        }
        sigmas.push(omega.view((s * n, s * n), (n, n)).into_owned());
    }
    Ok((SurLayout::new(blocks)?, responses, sigmas))
}

fn load_model(args: &ModelArgs, options: &ModelOptions, doc: &mut ReportDocument) -> Outcome<LoadedModel> {
    let x = read_matrix(&args.design)?;
    let y = read_vector(&args.response)?;
    let omega = match &args.dispersion {
        Some(p) => read_matrix(p)?,
        None => {
            doc.warn("no dispersion given, using the identity");
            Matrix::identity(x.nrows(), x.nrows())
        }
    };
    let restrictions = match &args.restrictions {
        Some(p) => {
            let (r, rhs) = read_restrictions(p)?;
            if r.ncols() != x.ncols() {
                return Err(Error::DimensionMismatch(format!("R has {} columns, X has {}", r.ncols(), x.ncols())).into());
            }
            Some(LinearRestrictions::new(r, rhs)?)
        }
        None => None,
    };
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!("y has {} rows, X has {}", y.len(), x.nrows())).into());
    }
    if omega.shape() != (x.nrows(), x.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "dispersion is {}x{}, expected {t}x{t}",
            omega.nrows(),
            omega.ncols(),
            t = x.nrows()
        ))
        .into());
    }
    let model = if args.sur_widths.is_empty() {
        build_model(y, x, omega, options)?
    } else {
        let (layout, responses, sigmas) = extract_sur(&x, &y, &omega, &args.sur_widths)?;
        stack_sur(layout, &responses, DispersionBlocks::PerPeriod(sigmas), options)?
    };
    Ok(LoadedModel { model, restrictions })
}

fn digest(doc: &mut ReportDocument, loaded: &LoadedModel) -> Outcome<()> {
    let model = &loaded.model;
    let tol = model.tolerance();
    doc.input("observations", model.t());
    doc.input("coefficients", model.k());
    if let Some(sur) = model.sur() {
        doc.input("equations", sur.layout.n());
        doc.input("periods", sur.layout.m());
        doc.input("equation_widths", sur.layout.widths());
    }
    doc.input("design_rank", numeric_rank(model.x(), tol)?.numeric_rank);
    doc.input("dispersion_rank", model.dispersion_spectrum().rank());
    if let Some(res) = &loaded.restrictions {
        doc.input("restriction_rows", res.q());
        doc.input("restriction_rank", numeric_rank(res.matrix(), tol)?.numeric_rank);
    }
    doc.input("tolerance", tolerance(tol));
    doc.input("dispersion_threshold", model.dispersion_spectrum().tolerance());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct CheckRecord {
    condition: &'static str,
    label: &'static str,
    satisfied: bool,
    rank: usize,
    required: usize,
}

impl CheckRecord {
    fn new(condition: Condition, satisfied: bool, rank: usize, required: usize) -> Self {
        Self { condition: condition.code(), label: condition.label(), satisfied, rank, required }
    }

    /// The error an estimator requiring this condition would raise.
    fn refusal(&self, condition: Condition, model: &GaussMarkoffModel) -> Error {
        match condition {
            Condition::RestrictionConsistency => {
                Error::InconsistentRestrictions { rank: self.rank, augmented_rank: self.required }
            }
            Condition::DesignRank => Error::DesignRankDeficient { rank: self.rank, k: self.required },
            Condition::DispersionRegular => Error::DispersionSingular { rank: self.rank, t: self.required },
            Condition::PositiveSpaceRank => Error::TheilConditionViolated {
                rank: self.rank,
                k: self.required,
                witness: theil_witness(model).ok().flatten().map(Box::new),
            },
            condition => Error::IdentificationFailure { condition, rank: self.rank, required: self.required },
        }
    }
}

fn theil_witness(model: &GaussMarkoffModel) -> gmls_core::Result<Option<gmls_core::identification::TheilWitness>> {
    match model.sur().map(|s| (&s.layout, &s.blocks)) {
        Some((layout, DispersionBlocks::PerPeriod(blocks))) => {
            check_theil_condition(layout, blocks, model.tolerance()).map(Some)
        }
        _ => Ok(None),
    }
}

/// Every structural check applicable to the model, in a fixed order.
fn run_checks(loaded: &LoadedModel) -> Outcome<Vec<(Condition, CheckRecord)>> {
    let model = &loaded.model;
    let tol = model.tolerance();
    let (t, k) = (model.t(), model.k());
    let mut checks = Vec::new();
    let mut push = |c: Condition, satisfied: bool, rank: usize, required: usize| {
        checks.push((c, CheckRecord::new(c, satisfied, rank, required)));
    };
    let design_rank = numeric_rank(model.x(), tol)?.numeric_rank;
    push(Condition::DesignRank, design_rank == k, design_rank, k);
    let disp_rank = model.dispersion_spectrum().rank();
    push(Condition::DispersionRegular, disp_rank == t, disp_rank, t);
    if let Some(res) = &loaded.restrictions {
        let cons = check_restriction_consistency(res, tol)?;
        push(
            Condition::RestrictionConsistency,
            cons.consistent,
            cons.rank.numeric_rank,
            cons.augmented_rank.numeric_rank,
        );
        let ident = check_joint_identification(model.x(), res.matrix(), tol)?;
        push(Condition::JointIdentification, ident.identified, ident.rank.numeric_rank, ident.required);
    }
    let pos = check_mls_invertibility(model.x(), model.dispersion_spectrum(), tol)?;
    push(Condition::PositiveSpaceRank, pos.identified, pos.rank.numeric_rank, pos.required);
    let implicit = extract_implicit_restrictions(model)?;
    let combined = combine_restrictions(k, loaded.restrictions.as_ref(), Some(&implicit), tol)?;
    push(
        Condition::CombinedConsistency,
        combined.is_consistent(),
        combined.rank().numeric_rank,
        combined.augmented_rank(),
    );
    Ok(checks)
}

fn options(tol: Tolerance, sigma2: Option<f64>) -> ModelOptions {
    ModelOptions { tol, sigma2, check_range: true }
}

fn emit_estimate(doc: &mut ReportDocument, key: &str, est: &EstimateResult, sigma2: Option<f64>) {
    let mut out = serde_json::Map::new();
    out.insert("estimator".into(), json!(est.tag.name()));
    out.insert("coefficients".into(), json!(vector(&est.beta_hat)));
    out.insert("covariance_factor".into(), json!(matrix(&est.covariance_factor)));
    if let Some(s2) = sigma2 {
        let se: Vec<f64> = est.covariance_factor.diagonal().iter().map(|v| (s2 * v.max(0.0)).sqrt()).collect();
        out.insert("standard_errors".into(), json!(se));
    }
    out.insert("residual_norm".into(), json!(est.residuals.norm()));
    out.insert("diagnostics".into(), serde_json::to_value(&est.diagnostics).expect("diagnostics serialize"));
    doc.result(key, out);
}

fn run_estimator(method: Method, args: &EstimateArgs, loaded: &LoadedModel) -> Outcome<EstimateResult> {
    let model = &loaded.model;
    let restrictions = || {
        loaded
            .restrictions
            .as_ref()
            .ok_or_else(|| Failure::Usage(format!("method {method:?} needs --restrictions").to_lowercase()))
    };
    let est = match method {
        Method::Ols => ols(model)?,
        Method::Gls => gls(model)?,
        Method::Rols => rols(model, restrictions()?)?,
        Method::Rgls => rgls(model, restrictions()?)?,
        Method::Tkn => tkn(model, restrictions()?)?,
        Method::Mls => mls(model)?,
        Method::Ridge => {
            let n = model.sur().map_or(1, |s| s.layout.n());
            let psi = match args.ridge.as_slice() {
                [] => return Err(Failure::Usage("method ridge needs --ridge".into())),
                [p] => vec![*p; n],
                many => many.to_vec(),
            };
            ridge(model, &RidgeSpec::Block(psi))?
        }
        Method::Constrained => {
            let implicit = extract_implicit_restrictions(model)?;
            let combined =
                combine_restrictions(model.k(), loaded.restrictions.as_ref(), Some(&implicit), model.tolerance())?;
            constrained_singular_gls(model, &combined, None)?
        }
        Method::Stochastic => {
            let (Some(sp), Some(tp)) = (&args.stochastic, &args.theta) else {
                return Err(Failure::Usage("method stochastic needs --stochastic and --theta".into()));
            };
            let (r, rhs) = read_restrictions(sp)?;
            let theta = read_matrix(tp)?;
            stochastic_restricted_gls(model, &StochasticRestrictions::new(r, rhs, theta))?
        }
    };
    Ok(est)
}

pub fn estimate(args: &EstimateArgs, tol: Tolerance) -> ReportDocument {
    let mut doc = ReportDocument::new("estimate", echo(args));
    if let Err(f) = estimate_inner(args, tol, &mut doc) {
        doc.fail_with(f);
    }
    doc
}

fn estimate_inner(args: &EstimateArgs, tol: Tolerance, doc: &mut ReportDocument) -> Outcome<()> {
    if args.method.needs_restrictions() && args.model.restrictions.is_none() {
        return Err(Failure::Usage(format!("method {} needs --restrictions", echo(args.method).as_str().unwrap_or(""))));
    }
    let loaded = load_model(&args.model, &options(tol, args.sigma2), doc)?;
    digest(doc, &loaded)?;
    let checks = run_checks(&loaded)?;
    doc.result("checks", checks.iter().map(|(_, r)| r).collect::<Vec<_>>());
    for &required in args.method.requires() {
        if let Some((c, record)) = checks.iter().find(|(c, r)| *c == required && !r.satisfied) {
            return Err(record.refusal(*c, &loaded.model).into());
        }
    }
    let est = run_estimator(args.method, args, &loaded)?;
    if let Some(res) = &loaded.restrictions {
        if args.method.needs_restrictions() || args.method == Method::Constrained {
            doc.result("restriction_violation", res.violation(&est.beta_hat));
        }
    }
    emit_estimate(doc, "estimate", &est, args.sigma2);
    Ok(())
}

pub fn diagnose(args: &DiagnoseArgs, tol: Tolerance) -> ReportDocument {
    let mut doc = ReportDocument::new("diagnose", echo(args));
    if let Err(f) = diagnose_inner(args, tol, &mut doc) {
        match f {
            Failure::Core(e) if e.kind() != gmls_core::ErrorKind::Input => {
                doc.warn(format!("diagnosis incomplete: {e}"));
            }
            f => doc.fail_with(f),
        }
    }
    doc
}

fn diagnose_inner(args: &DiagnoseArgs, tol: Tolerance, doc: &mut ReportDocument) -> Outcome<()> {
    let loaded = match load_model(&args.model, &options(tol, None), doc) {
        Err(Failure::Core(Error::ResponseOutsideRange { residual, bound })) => {
            doc.result("response_in_range", false);
            doc.warn(format!("response lies outside the column space of (X : Omega): residual {residual:e} exceeds {bound:e}"));
            load_model(&args.model, &ModelOptions { check_range: false, ..options(tol, None) }, &mut ReportDocument::new("", json!(null)))?
        }
        other => {
            let loaded = other?;
            doc.result("response_in_range", true);
            loaded
        }
    };
    digest(doc, &loaded)?;
    let checks = run_checks(&loaded)?;
    doc.result("checks", checks.iter().map(|(_, r)| r).collect::<Vec<_>>());
    match theil_witness(&loaded.model) {
        Ok(Some(w)) => {
            let equation = w.violating_equation.map(|i| i + 1);
            doc.result("theil_condition", json!({ "satisfied": !w.is_violated(), "equation": equation, "witness": w }));
        }
        Ok(None) => doc.warn("no SUR layout given, the constructive rank witness is not computed"),
        Err(e) => doc.warn(format!("constructive rank witness unavailable: {e}")),
    }
    Ok(())
}

fn load_panel_dispersion(path: &PathBuf, n: usize, m: usize) -> Outcome<PanelDispersion> {
    let d = read_matrix(path)?;
    if d.shape() == (m, m) {
        return Ok(PanelDispersion::Kronecker(d));
    }
    let t = n * m;
    if d.shape() != (t, t) {
        return Err(Error::DimensionMismatch(format!(
            "panel dispersion is {}x{}, expected {m}x{m} or {t}x{t}",
            d.nrows(),
            d.ncols()
        ))
        .into());
    }
    for r in 0..t {
        for c in 0..t {
            if r / m != c / m && d[(r, c)] != 0.0 {
                return Err(Failure::Usage(format!(
                    "dispersion entry ({}, {}) links different equations of the panel",
                    r + 1,
                    c + 1
                )));
            }
        }
    }
    Ok(PanelDispersion::BlockDiagonal((0..n).map(|i| d.view((i * m, i * m), (m, m)).into_owned()).collect()))
}

pub fn panel(args: &PanelArgs, tol: Tolerance) -> ReportDocument {
    let mut doc = ReportDocument::new("panel", echo(args));
    if let Err(f) = panel_inner(args, tol, &mut doc) {
        doc.fail_with(f);
    }
    doc
}

fn panel_inner(args: &PanelArgs, tol: Tolerance, doc: &mut ReportDocument) -> Outcome<()> {
    let data = read_panel(&args.panel_data)?;
    let (n, m) = (data.designs.len(), data.responses[0].len());
    let dispersion = load_panel_dispersion(&args.dispersion, n, m)?;
    let structure = match &dispersion {
        PanelDispersion::Kronecker(_) => "kronecker",
        PanelDispersion::BlockDiagonal(_) => "block-diagonal",
    };
    let model = build_fe_model(&data.designs, &data.responses, dispersion, tol)?;
    doc.input("equations", n);
    doc.input("periods", m);
    doc.input("coefficients", model.k());
    doc.input("observations", model.t());
    doc.input("dispersion_structure", structure);
    doc.input("design_rank", numeric_rank(model.x(), tol)?.numeric_rank);
    doc.input("tolerance", tolerance(tol));
    if args.drop_period == 0 || args.drop_period > m {
        return Err(Error::PeriodOutOfRange { period: args.drop_period, m }.into());
    }
    let ident = model.identification()?;
    doc.result("identification", &ident);
    if !ident.satisfied {
        return Err(Error::IdentificationFailure { condition: ident.condition, rank: ident.rank, required: ident.required }.into());
    }
    let g = fe_gls(&model)?;
    emit_estimate(doc, "dummy_variable_gls", &g, None);
    let w = fe_mls(&model)?;
    emit_estimate(doc, "within_mls", &w, None);
    let d = fe_drop_period(&model, args.drop_period)?;
    emit_estimate(doc, "drop_period", &d, None);
    let report = verify_theorem5(&model);
    doc.result("equivalence", &report);
    if !report.pass {
        let message = report
            .error
            .clone()
            .unwrap_or_else(|| "dummy-variable GLS, within MLS and drop-period estimates disagree".into());
        doc.fail(
            ErrorReport {
                code: "equivalence-failed".into(),
                kind: "numerical",
                message,
                condition: None,
                line: None,
                witness: None,
            },
            EXIT_NUMERICAL,
        );
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs, _tol: Tolerance) -> ReportDocument {
    let mut doc = ReportDocument::new("simulate", echo(args));
    if let Err(f) = simulate_inner(args, &mut doc) {
        doc.fail_with(f);
    }
    doc
}

fn simulate_inner(args: &SimulateArgs, doc: &mut ReportDocument) -> Outcome<()> {
    let scenario: Scenario = args.scenario.parse().map_err(Failure::Usage)?;
    if args.reps < MIN_REPLICATIONS {
        return Err(Failure::Usage(format!("--reps must be at least {MIN_REPLICATIONS}, got {}", args.reps)));
    }
    let estimators = args
        .estimators
        .iter()
        .map(|s| s.parse::<EstimatorTag>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::Usage)?;
    let defaults = scenario.default_dims();
    let dims = Dims {
        n: args.equations.unwrap_or(defaults.n),
        m: args.periods.unwrap_or(defaults.m),
        k: args.regressors.unwrap_or(defaults.k),
    };
    let config = SimulationConfig {
        sigma2: args.sigma2,
        dims,
        bias_injection: args.inject_bias,
        ..SimulationConfig::new(scenario, args.reps, args.seed)
    };
    config.validate()?;
    doc.input("scenario", scenario.name());
    doc.input("replications", config.replications);
    doc.input("seed", config.seed);
    doc.input("dimensions", dims);
    doc.input("coefficients", config.k());
    doc.input("rng", "ChaCha8, stream 0 for the design and stream i+1 for replication i");
    let study = run_study(&config, &estimators)?;
    doc.result("reports", &study.reports);
    doc.result("equivalences", &study.equivalences);
    doc.result("efficiency", &study.efficiency);
    doc.result("null_direction", &study.null_direction);
    doc.result("pass", study.pass);
    if !study.pass {
        doc.fail(
            ErrorReport {
                code: "statistical-check-failed".into(),
                kind: "statistical",
                message: "at least one Monte Carlo check fell outside its pass band".into(),
                condition: None,
                line: None,
                witness: None,
            },
            EXIT_STATISTICAL,
        );
    }
    Ok(())
}
