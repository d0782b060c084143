//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one PASS or FAIL line. The process exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use gmls_core::estimators::{
    constrained_singular_gls, gls, linear_representation, mls, ols, rgls, rols, stochastic_restricted_gls, tkn,
    StochasticRestrictions,
};
use gmls_core::fe_panel::{build_fe_model, build_projectors, fe_drop_period, fe_gls, fe_mls, FePanelModel, PanelDispersion};
use gmls_core::identification::{check_theil_condition, combine_restrictions, extract_implicit_restrictions};
use gmls_core::linalg::vstack;
use gmls_core::mc::{run_study, Scenario, SimulationConfig};
use gmls_core::spectral::{null_space_basis, numeric_rank, pseudo_inverse_general, spectral_decompose};
use gmls_core::{
    build_model, Error, GaussMarkoffModel, LinearRestrictions, Matrix, ModelOptions, SurLayout, Tolerance, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const TOL: Tolerance = Tolerance::Default;

type Verdict = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_matrix(g: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| g.sample(StandardNormal))
}

fn normal_vector(g: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| g.sample(StandardNormal))
}

/// `Q diag(λ) Q'` with `rank` eigenvalues in `[0.1, 10]`, the rest zero.
fn random_nnd(g: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let q = normal_matrix(g, n, n).qr().q();
    let lambda = Vector::from_fn(n, |i, _| if i < rank { g.random_range(0.1..10.0) } else { 0.0 });
    let s = &q * Matrix::from_diagonal(&lambda) * q.transpose();
    (&s + s.transpose()) * 0.5
}

fn random_spd(g: &mut ChaCha8Rng, n: usize) -> Matrix {
    random_nnd(g, n, n)
}

fn rel_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

fn within(value: f64, bound: f64, what: &str) -> Result<(), String> {
    if value <= bound {
        Ok(())
    } else {
        Err(format!("{what}: {value:.3e} exceeds {bound:.1e}"))
    }
}

fn in_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn regular_instance(g: &mut ChaCha8Rng, identity: bool) -> (GaussMarkoffModel, Vector) {
    let k = g.random_range(1..=6);
    let t = g.random_range(k + 2..=30);
    let mut x = normal_matrix(g, t, k);
    x.column_mut(0).fill(1.0);
    let beta = normal_vector(g, k);
    let omega = if identity { Matrix::identity(t, t) } else { random_spd(g, t) };
    let noise = omega.clone().cholesky().unwrap().l() * normal_vector(g, t);
    let y = &x * &beta + noise;
    (build_model(y, x, omega, &ModelOptions::default()).unwrap(), beta)
}

fn consistent_restrictions(g: &mut ChaCha8Rng, k: usize, beta0: &Vector) -> LinearRestrictions {
    let q = g.random_range(1..=k);
    let r = normal_matrix(g, q, k);
    let rhs = &r * beta0;
    LinearRestrictions::new(r, rhs).unwrap()
}

fn penrose() -> Verdict {
    let mut g = rng(1001);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..200 {
        let n = g.random_range(1..=20);
        let rank = if i < 20 { [0, n][i % 2] } else { g.random_range(0..=n) };
        let a = random_nnd(&mut g, n, rank);
        let spec = spectral_decompose(&a, TOL).map_err(|e| e.to_string())?;
        if spec.rank() != rank {
            return Err(format!("rank {} detected for planted rank {rank}", spec.rank()));
        }
        let p = spec.pseudo_inverse();
        let ap = &a * &p;
        let pa = &p * &a;
        for r in [
            &ap * &a - &a,
            &pa * &p - &p,
            &ap - ap.transpose(),
            &pa - pa.transpose(),
            &a * spec.null_vectors(),
            spec.reconstruct() - &a,
        ] {
            worst = worst.max(r.amax());
        }
    }
    within(worst, 1e-10, "Penrose residual")?;
    in_time(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("200 matrices, max residual {worst:.2e}, {:.2?}", start.elapsed()))
}

fn equivalence_lattice() -> Verdict {
    let mut g = rng(1002);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let err = |e: Error| e.to_string();
    for _ in 0..100 {
        let (m, _) = regular_instance(&mut g, true);
        worst = worst.max(rel_diff(&gls(&m).map_err(err)?.beta_hat, &ols(&m).map_err(err)?.beta_hat));

        let (m, beta0) = regular_instance(&mut g, false);
        let b_gls = gls(&m).map_err(err)?.beta_hat;
        worst = worst.max(rel_diff(&mls(&m).map_err(err)?.beta_hat, &b_gls));
        let empty = combine_restrictions(m.k(), None, None, TOL).map_err(err)?;
        let b_cs = constrained_singular_gls(&m, &empty, None).map_err(err)?.beta_hat;
        worst = worst.max(rel_diff(&b_cs, &mls(&m).map_err(err)?.beta_hat));

        let res = consistent_restrictions(&mut g, m.k(), &beta0);
        let b_rgls = rgls(&m, &res).map_err(err)?.beta_hat;
        worst = worst.max(rel_diff(&tkn(&m, &res).map_err(err)?.beta_hat, &b_rgls));
    }
    within(worst, 1e-10, "relative discrepancy")?;
    in_time(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("100 instances, max relative discrepancy {worst:.2e}, {:.2?}", start.elapsed()))
}

fn restriction_satisfaction() -> Verdict {
    let mut g = rng(1003);
    let mut worst = 0.0f64;
    let err = |e: Error| e.to_string();
    for _ in 0..100 {
        let (m, beta0) = regular_instance(&mut g, false);
        let res = consistent_restrictions(&mut g, m.k(), &beta0);
        let scale = 1.0 + res.rhs().amax();
        let combined = combine_restrictions(m.k(), Some(&res), None, TOL).map_err(err)?;
        for est in [
            rols(&m, &res).map_err(err)?,
            rgls(&m, &res).map_err(err)?,
            tkn(&m, &res).map_err(err)?,
            constrained_singular_gls(&m, &combined, None).map_err(err)?,
        ] {
            worst = worst.max(res.violation(&est.beta_hat) / scale);
        }
    }
    within(worst, 1e-9, "scaled violation")?;
    Ok(format!("100 instances, max scaled violation {worst:.2e}"))
}

fn singular_instance(g: &mut ChaCha8Rng) -> (GaussMarkoffModel, LinearRestrictions) {
    let k = g.random_range(2..=5);
    let t = g.random_range(k + 3..=20);
    let rank = g.random_range(k.max(t / 2)..t);
    let x = normal_matrix(g, t, k);
    let omega = random_nnd(g, t, rank);
    let beta0 = normal_vector(g, k);
    let spec = spectral_decompose(&omega, TOL).unwrap();
    let y = &x * &beta0 + spec.sqrt_factor() * normal_vector(g, rank);
    let model = build_model(y, x, omega, &ModelOptions::default()).unwrap();
    let q = g.random_range(0..k);
    let r = normal_matrix(g, q, k);
    let rhs = &r * &beta0;
    (model, LinearRestrictions::new(r, rhs).unwrap())
}

fn invariance_and_representation() -> Verdict {
    let mut g = rng(1004);
    let err = |e: Error| e.to_string();
    let (mut spread, mut rep_gap) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let (m, res) = singular_instance(&mut g);
        let implicit = extract_implicit_restrictions(&m).map_err(err)?;
        let combined = combine_restrictions(m.k(), Some(&res), Some(&implicit), TOL).map_err(err)?;
        let base = constrained_singular_gls(&m, &combined, None).map_err(err)?;
        let h_pinv = pseudo_inverse_general(combined.matrix(), TOL).map_err(err)?;
        let n = null_space_basis(combined.matrix(), TOL).map_err(err)?;
        let mut points = Vec::new();
        for _ in 0..10 {
            let p = &h_pinv * combined.rhs() + &n * normal_vector(&mut g, n.ncols()) * 5.0;
            points.push(constrained_singular_gls(&m, &combined, Some(&p)).map_err(err)?.beta_hat);
        }
        for a in &points {
            for b in &points {
                spread = spread.max(rel_diff(a, b));
            }
        }
        for _ in 0..10 {
            let gf = normal_matrix(&mut g, m.k(), implicit.null_vectors.ncols());
            let rep = linear_representation(&m, &combined, &gf, &implicit, None).map_err(err)?;
            let direct = &rep.operator * m.y() + &rep.offset;
            rep_gap = rep_gap.max(rel_diff(&direct, &base.beta_hat));
        }
    }
    within(spread, 1e-10, "particular-point spread")?;
    within(rep_gap, 1e-10, "linear representation gap")?;
    Ok(format!("50 instances, spread {spread:.2e}, representation gap {rep_gap:.2e}"))
}

/// `(I − aa')S(I − aa')` for a random SPD `S`.
fn singular_block(g: &mut ChaCha8Rng, a: &Vector) -> Matrix {
    let n = a.len();
    let p = Matrix::identity(n, n) - a * a.transpose();
    let s = &p * random_spd(g, n) * &p;
    (&s + s.transpose()) * 0.5
}

fn sur_instance(g: &mut ChaCha8Rng, plant: u8) -> (SurLayout, Vec<Matrix>) {
    let n = g.random_range(2..=4);
    let m = g.random_range(6..=10);
    let mut a = normal_vector(g, n);
    if n > 2 && g.random_bool(0.3) {
        a[g.random_range(0..n)] = 0.0;
    }
    let a = a.normalize();
    let mut blocks: Vec<Matrix> = (0..n)
        .map(|_| {
            let w = g.random_range(1..=2);
            normal_matrix(g, m, w)
        })
        .collect();
    match plant {
        1 => {
            let j = g.random_range(0..n);
            let c = blocks[j].column(0) * 2.0;
            blocks[j] = gmls_core::linalg::hstack(&blocks[j], &Matrix::from_columns(&[c]));
        }
        2 => {
            let s = normal_vector(g, m);
            for b in blocks.iter_mut() {
                let c = g.random_range(0.5..2.0);
                b.column_mut(0).copy_from(&(&s * c));
            }
        }
        _ => {}
    }
    let sigmas = (0..m).map(|_| singular_block(g, &a)).collect();
    (SurLayout::new(blocks).unwrap(), sigmas)
}

fn direct_rank(layout: &SurLayout, sigmas: &[Matrix]) -> usize {
    let mut fx = Matrix::zeros(0, layout.k());
    for (t, s) in sigmas.iter().enumerate() {
        let spec = spectral_decompose(s, TOL).unwrap();
        fx = vstack(&fx, &(spec.pos_vectors().transpose() * layout.period_design(t)));
    }
    numeric_rank(&fx, TOL).unwrap().numeric_rank
}

fn witness_residual(layout: &SurLayout, sigmas: &[Matrix], w: &gmls_core::identification::TheilWitness) -> f64 {
    let d = w.d_vector();
    let fxd = sigmas
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let spec = spectral_decompose(s, TOL).unwrap();
            (spec.pos_vectors().transpose() * layout.period_design(t) * &d).amax()
        })
        .fold(0.0, f64::max);
    if d.amax() < 1e-6 {
        f64::INFINITY
    } else {
        fxd / d.amax()
    }
}

fn theil_oracle() -> Verdict {
    let mut g = rng(1005);
    let start = Instant::now();
    let (mut agree, mut planted, mut worst) = (0, 0, 0.0f64);
    for i in 0..200 {
        let plant = if i < 50 { 1 + (i % 2) as u8 } else { 0 };
        let (layout, sigmas) = sur_instance(&mut g, plant);
        let w = check_theil_condition(&layout, &sigmas, TOL).map_err(|e| e.to_string())?;
        let violated = direct_rank(&layout, &sigmas) < layout.k();
        if w.is_violated() == violated {
            agree += 1;
        }
        if plant > 0 && w.is_violated() {
            planted += 1;
        }
        if w.is_violated() {
            worst = worst.max(witness_residual(&layout, &sigmas, &w));
        }
    }
    let mut flagged = 0;
    for _ in 0..100 {
        let n = g.random_range(2..=5);
        let m = g.random_range(4..=12);
        let k = g.random_range(1..=3.min(m - 1));
        let x0 = normal_matrix(&mut g, m, k);
        let a = Vector::from_element(n, 1.0 / (n as f64).sqrt());
        let sigma = singular_block(&mut g, &a);
        let layout = SurLayout::new(vec![x0; n]).unwrap();
        let sigmas = vec![sigma; m];
        let w = check_theil_condition(&layout, &sigmas, TOL).map_err(|e| e.to_string())?;
        if w.is_violated() {
            flagged += 1;
            worst = worst.max(witness_residual(&layout, &sigmas, &w));
        }
    }
    if agree != 200 || planted != 50 || flagged != 100 {
        return Err(format!("agreement {agree}/200, planted {planted}/50, adding-up flagged {flagged}/100"));
    }
    within(worst, 1e-8, "witness residual")?;
    in_time(start.elapsed(), Duration::from_secs(20))?;
    Ok(format!("200/200 agree, 50/50 planted, 100/100 adding-up flagged, witness residual {worst:.2e}, {:.2?}", start.elapsed()))
}

fn panel_instances() -> Vec<FePanelModel> {
    let mut g = rng(1006);
    let mut out = Vec::new();
    while out.len() < 50 {
        let n = g.random_range(1..=6);
        let m = g.random_range(2..=5);
        let k = g.random_range(1..=3);
        if n * (m - 1) < k + 1 {
            continue;
        }
        let designs: Vec<Matrix> = (0..n).map(|_| normal_matrix(&mut g, m, k)).collect();
        let responses: Vec<Vector> = designs
            .iter()
            .enumerate()
            .map(|(i, x)| x * Vector::from_element(k, 1.0) + normal_vector(&mut g, m) + Vector::from_element(m, i as f64))
            .collect();
        let dispersion = if out.len() % 2 == 0 {
            PanelDispersion::Kronecker(random_spd(&mut g, m))
        } else {
            PanelDispersion::BlockDiagonal((0..n).map(|_| random_spd(&mut g, m)).collect())
        };
        out.push(build_fe_model(&designs, &responses, dispersion, TOL).unwrap());
    }
    out
}

fn fe_equivalence(panels: &[FePanelModel]) -> Verdict {
    let start = Instant::now();
    let err = |e: Error| e.to_string();
    let (mut beta_gap, mut proj_gap, mut drop_gap) = (0.0f64, 0.0f64, 0.0f64);
    for p in panels {
        let b_gls = fe_gls(p).map_err(err)?.beta_hat;
        let b_mls = fe_mls(p).map_err(err)?.beta_hat;
        let scale = 1.0 + b_gls.amax();
        beta_gap = beta_gap.max((&b_gls - &b_mls).amax() / scale);
        for t0 in 1..=p.m() {
            let d = fe_drop_period(p, t0).map_err(err)?.beta_hat;
            drop_gap = drop_gap.max((&d - &b_gls).amax() / scale);
        }
        let proj = build_projectors(p).map_err(err)?;
        let m_mat = gmls_core::linalg::kron_identity(p.n(), &gmls_core::linalg::centering(p.m()));
        let inner = &m_mat * p.omega() * &m_mat;
        let pinv = spectral_decompose(&inner, TOL).map_err(err)?.pseudo_inverse();
        proj_gap = proj_gap.max((&proj.p - &m_mat * pinv * &m_mat).amax());
    }
    within(beta_gap, 1e-8, "GLS vs MLS")?;
    within(proj_gap, 1e-8, "projector identity")?;
    within(drop_gap, 1e-8, "drop-period")?;
    in_time(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "50 panels, beta {beta_gap:.2e}, projector {proj_gap:.2e}, drop-period {drop_gap:.2e}, {:.2?}",
        start.elapsed()
    ))
}

fn projector_identities(panels: &[FePanelModel]) -> Verdict {
    let mut worst = 0.0f64;
    for p in panels {
        let proj = build_projectors(p).map_err(|e| e.to_string())?;
        let z = p.z();
        let omega = p.omega();
        let pm = &proj.p;
        for r in [
            &proj.q * &z - &z,
            pm * &z,
            pm * &proj.m_proj - pm,
            &proj.m_proj * pm * &proj.m_proj - pm,
            pm * &omega * pm - pm,
        ] {
            worst = worst.max(r.amax());
        }
    }
    within(worst, 1e-10, "projector residual")?;
    Ok(format!("50 panels, max entrywise residual {worst:.2e}"))
}

fn monte_carlo() -> Verdict {
    let start = Instant::now();
    let cfg = SimulationConfig::new(Scenario::SingularAddingUp, 10_000, 42);
    let study = run_study(&cfg, &[]).map_err(|e| e.to_string())?;
    let r = &study.reports[0];
    if !(r.unbiased && r.covariance_matches) {
        return Err(format!(
            "bias ratio {:.2}, covariance ratio {:.2} (limit 4)",
            r.max_bias_ratio, r.max_covariance_ratio
        ));
    }
    in_time(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "10000 replications, max |bias|/SE {:.2}, max covariance gap/SE {:.2}, {:.2?}",
        r.max_bias_ratio,
        r.max_covariance_ratio,
        start.elapsed()
    ))
}

fn stochastic_limits() -> Verdict {
    let mut g = rng(1009);
    let err = |e: Error| e.to_string();
    let (mut tight_gap, mut loose_gap) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let (m, beta0) = regular_instance(&mut g, false);
        let k = m.k();
        let q = g.random_range(1..=k);
        let r = normal_matrix(&mut g, q, k);
        let rhs = &r * &beta0 + normal_vector(&mut g, q) * 0.5;
        let res = LinearRestrictions::new(r.clone(), rhs.clone()).unwrap();
        let tight = StochasticRestrictions::new(r.clone(), rhs.clone(), Matrix::identity(q, q) * 1e-10);
        let loose = StochasticRestrictions::new(r, rhs, Matrix::identity(q, q) * 1e12);
        let b_rgls = rgls(&m, &res).map_err(err)?.beta_hat;
        let b_gls = gls(&m).map_err(err)?.beta_hat;
        tight_gap = tight_gap.max(rel_diff(&stochastic_restricted_gls(&m, &tight).map_err(err)?.beta_hat, &b_rgls));
        loose_gap = loose_gap.max(rel_diff(&stochastic_restricted_gls(&m, &loose).map_err(err)?.beta_hat, &b_gls));
    }
    within(tight_gap, 1e-4, "tight prior vs rgls")?;
    within(loose_gap, 1e-4, "diffuse prior vs gls")?;
    Ok(format!("20 instances, tight {tight_gap:.2e}, diffuse {loose_gap:.2e}"))
}

fn cli_end_to_end() -> Verdict {
    let cases = common::cases();
    let mut commands = std::collections::BTreeSet::new();
    let mut exits = std::collections::BTreeSet::new();
    for case in &cases {
        let first = common::run_case(case);
        if first.status != case.exit {
            return Err(format!("{}: exit {} expected {}", case.name, first.status, case.exit));
        }
        common::check_golden(case, &first.stdout)?;
        if case.machine() && common::run_case(case).stdout != first.stdout {
            return Err(format!("{}: machine output differs between runs", case.name));
        }
        commands.insert(case.args[0].clone());
        exits.insert(case.exit);
    }
    if commands.len() != 4 || !exits.contains(&2) || !exits.contains(&4) {
        return Err(format!("coverage: commands {commands:?}, exit codes {exits:?}"));
    }
    Ok(format!("{} golden cases over {} commands, exit codes {exits:?}", cases.len(), commands.len()))
}

fn main() {
    let panels = panel_instances();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("Penrose conditions", Box::new(penrose)),
        ("equivalence lattice", Box::new(equivalence_lattice)),
        ("restriction satisfaction", Box::new(restriction_satisfaction)),
        ("particular-point invariance and linear representations", Box::new(invariance_and_representation)),
        ("rank-condition oracle", Box::new(theil_oracle)),
        ("fixed-effects equivalence", Box::new(|| fe_equivalence(&panels))),
        ("projector identities", Box::new(|| projector_identities(&panels))),
        ("Monte Carlo unbiasedness and covariance", Box::new(monte_carlo)),
        ("stochastic-restriction limits", Box::new(stochastic_limits)),
        ("CLI end-to-end", Box::new(cli_end_to_end)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
