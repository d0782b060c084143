#![allow(dead_code)]

use gmls_core::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    normal_matrix(rng, n, n).qr().q()
}

/// `Q diag(λ) Q'` with `rank` eigenvalues drawn from `[0.1, 10]` and the rest zero.
pub fn random_nnd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let q = random_orthogonal(rng, n);
    let lambda = Vector::from_fn(n, |i, _| if i < rank { rng.random_range(0.1..10.0) } else { 0.0 });
    let s = &q * Matrix::from_diagonal(&lambda) * q.transpose();
    (&s + s.transpose()) * 0.5
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    random_nnd(rng, n, n)
}

/// `‖a − b‖∞ / (1 + ‖b‖∞)`.
pub fn rel_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.amax()
}
