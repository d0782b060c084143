mod common;

use common::{normal_matrix, normal_vector, random_spd, rel_diff, rng};
use gmls_core::estimators::{constrained_singular_gls, gls};
use gmls_core::fe_panel::{
    build_fe_model, build_projectors, fe_drop_period, fe_gls, fe_mls, verify_theorem5, within_transform, FePanelModel,
    PanelDispersion,
};
use gmls_core::identification::{combine_restrictions, extract_implicit_restrictions};
use gmls_core::linalg::{centering, hstack};
use gmls_core::spectral::numeric_rank;
use gmls_core::{
    build_model, stack_sur, DispersionBlocks, Matrix, ModelOptions, StackOrder, SurLayout, Tolerance, Vector,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const TOL: Tolerance = Tolerance::Default;

fn panel(g: &mut ChaCha8Rng, n: usize, m: usize, k: usize, kron: bool) -> FePanelModel {
    let designs: Vec<Matrix> = (0..n).map(|_| normal_matrix(g, m, k)).collect();
    let responses: Vec<Vector> = designs
        .iter()
        .enumerate()
        .map(|(i, x)| x * Vector::from_element(k, 1.0) + normal_vector(g, m) + Vector::from_element(m, i as f64))
        .collect();
    let dispersion = if kron {
        PanelDispersion::Kronecker(random_spd(g, m))
    } else {
        PanelDispersion::BlockDiagonal((0..n).map(|_| random_spd(g, m)).collect())
    };
    build_fe_model(&designs, &responses, dispersion, TOL).unwrap()
}

fn random_dims(g: &mut ChaCha8Rng) -> (usize, usize, usize) {
    loop {
        let n = g.random_range(1..=6);
        let m = g.random_range(2..=5);
        let k = g.random_range(1..=3);
        if n * (m - 1) >= k + 1 {
            return (n, m, k);
        }
    }
}

#[test]
fn theorem5_and_projector_identities_on_random_panels() {
    let mut g = rng(41);
    for i in 0..50 {
        let (n, m, k) = random_dims(&mut g);
        let p = panel(&mut g, n, m, k, i % 2 == 0);
        let report = verify_theorem5(&p);
        assert!(report.pass, "{report:?}");
        let proj = build_projectors(&p).unwrap();
        let r = proj.residuals(&p);
        assert!(r.max() <= 1e-10, "{r:?}");
        let q = &proj.q;
        assert!((q * q - q).amax() <= 1e-10);
    }
}

#[test]
fn fe_gls_equals_joint_dummy_gls() {
    let mut g = rng(42);
    for _ in 0..30 {
        let (n, m, k) = random_dims(&mut g);
        if k + n > 12 {
            continue;
        }
        let kron = g.random_bool(0.5);
        let p = panel(&mut g, n, m, k, kron);
        let xz = hstack(p.x(), &p.z());
        let joint = build_model(p.y().clone(), xz, p.omega(), &ModelOptions::default()).unwrap();
        let full = gls(&joint).unwrap().beta_hat;
        let beta = full.rows(0, k).into_owned();
        assert!(rel_diff(&fe_gls(&p).unwrap().beta_hat, &beta) <= 1e-9);
    }
}

#[test]
fn identity_sigma_gives_within_ols() {
    let mut g = rng(43);
    let designs: Vec<Matrix> = (0..4).map(|_| normal_matrix(&mut g, 3, 2)).collect();
    let responses: Vec<Vector> = (0..4).map(|_| normal_vector(&mut g, 3)).collect();
    let p = build_fe_model(&designs, &responses, PanelDispersion::Kronecker(Matrix::identity(3, 3)), TOL).unwrap();
    let mm = build_projectors(&p).unwrap().m_proj;
    let mx = &mm * p.x();
    let within = (mx.transpose() * &mx).try_inverse().unwrap() * mx.transpose() * &mm * p.y();
    assert!(rel_diff(&fe_gls(&p).unwrap().beta_hat, &within) <= 1e-12);
    assert!(rel_diff(&fe_mls(&p).unwrap().beta_hat, &within) <= 1e-12);
}

#[test]
fn index_map_matches_equation_major_sur_stacking() {
    let mut g = rng(44);
    let (n, m, k) = (3, 4, 2);
    let designs: Vec<Matrix> = (0..n).map(|_| normal_matrix(&mut g, m, k)).collect();
    let responses: Vec<Vector> = (0..n).map(|_| normal_vector(&mut g, m)).collect();
    let sigma = random_spd(&mut g, m);
    let p = build_fe_model(&designs, &responses, PanelDispersion::Kronecker(sigma.clone()), TOL).unwrap();
    let layout = SurLayout::new(designs.clone()).unwrap();
    let sur = stack_sur(
        layout.clone(),
        &responses,
        DispersionBlocks::PerEquation(vec![sigma; n]),
        &ModelOptions::default(),
    )
    .unwrap();
    for i in 0..n {
        for t in 0..m {
            let row = layout.row_index(StackOrder::EquationMajor, t, i);
            assert_eq!(p.row_index(t, i), row);
            assert_eq!(p.y()[row], sur.y()[row]);
            assert_eq!(p.x().row(row), designs[i].row(t));
        }
    }
    assert_eq!(&p.omega(), sur.dispersion());
}

#[test]
fn within_model_structure() {
    let mut g = rng(45);
    for _ in 0..20 {
        let (n, m, k) = random_dims(&mut g);
        let kron = g.random_bool(0.5);
        let p = panel(&mut g, n, m, k, kron);
        let w = within_transform(&p).unwrap();
        assert_eq!(w.dispersion_spectrum().rank(), n * (m - 1));
        for i in 0..n {
            let block_sum: f64 = w.y().rows(i * m, m).sum();
            assert!(block_sum.abs() <= 1e-12 * (1.0 + p.y().amax()));
            let ybar = p.y_block(i).mean();
            for t in 0..m {
                assert!((w.y()[i * m + t] - (p.y()[i * m + t] - ybar)).abs() <= 1e-12 * (1.0 + p.y().amax()));
            }
        }
        let implicit = extract_implicit_restrictions(&w).unwrap();
        let combined = combine_restrictions(k, None, Some(&implicit), TOL).unwrap();
        let c = constrained_singular_gls(&w, &combined, None).unwrap().beta_hat;
        assert!(rel_diff(&c, &fe_mls(&p).unwrap().beta_hat) <= 1e-8);
    }
}

#[test]
fn constant_responses_vanish_after_demeaning() {
    let designs = vec![Matrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0]); 2];
    let responses = vec![Vector::from_element(3, 5.0), Vector::from_element(3, -1.0)];
    let p = build_fe_model(&designs, &responses, PanelDispersion::Kronecker(Matrix::identity(3, 3)), TOL).unwrap();
    assert!(within_transform(&p).unwrap().y().amax() < 1e-15);
}

#[test]
fn two_period_drop_is_first_difference_regression() {
    let mut g = rng(46);
    let n = 5;
    let designs: Vec<Matrix> = (0..n).map(|_| normal_matrix(&mut g, 2, 1)).collect();
    let responses: Vec<Vector> = (0..n).map(|_| normal_vector(&mut g, 2)).collect();
    let sigma = random_spd(&mut g, 2);
    let p = build_fe_model(&designs, &responses, PanelDispersion::Kronecker(sigma), TOL).unwrap();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        let dx = designs[i][(0, 0)] - designs[i][(1, 0)];
        let dy = responses[i][0] - responses[i][1];
        sxy += dx * dy;
        sxx += dx * dx;
    }
    let hand = sxy / sxx;
    for t0 in 1..=2 {
        let b = fe_drop_period(&p, t0).unwrap().beta_hat[0];
        assert!((b - hand).abs() <= 1e-12 * (1.0 + hand.abs()));
    }
}

#[test]
fn single_equation_panel_is_regression_with_intercept() {
    let mut g = rng(47);
    let x = normal_matrix(&mut g, 6, 2);
    let y = normal_vector(&mut g, 6);
    let p = build_fe_model(&[x.clone()], &[y.clone()], PanelDispersion::Kronecker(Matrix::identity(6, 6)), TOL).unwrap();
    let with_const = hstack(&Matrix::from_element(6, 1, 1.0), &x);
    let ols = (with_const.transpose() * &with_const).try_inverse().unwrap() * with_const.transpose() * &y;
    assert!(rel_diff(&fe_gls(&p).unwrap().beta_hat, &ols.rows(1, 2).into_owned()) <= 1e-12);
    assert_eq!(centering(6).rank(1e-12), 5);
    assert_eq!(numeric_rank(&p.z(), TOL).unwrap().numeric_rank, 1);
}

#[test]
fn blockwise_identification_matches_dense_rank() {
    let mut g = rng(47);
    for i in 0..60 {
        let (n, m, k) = random_dims(&mut g);
        let mut designs: Vec<Matrix> = (0..n).map(|_| normal_matrix(&mut g, m, k)).collect();
        if i % 3 == 0 {
            for d in designs.iter_mut() {
                let level = g.random_range(-2.0..2.0);
                d.column_mut(0).fill(level);
            }
        }
        let responses: Vec<Vector> = (0..n).map(|_| normal_vector(&mut g, m)).collect();
        let p = build_fe_model(&designs, &responses, PanelDispersion::Kronecker(random_spd(&mut g, m)), TOL).unwrap();
        let dense = numeric_rank(&hstack(p.x(), &p.z()), TOL).unwrap().numeric_rank;
        let check = p.identification().unwrap();
        assert_eq!(check.rank, dense);
        assert_eq!(check.satisfied, i % 3 != 0);
    }
}
