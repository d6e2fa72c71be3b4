#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ment_core::embedding::{EmbeddingSeries, Flavor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random series with n ≤ 50, d ≤ 6, T ≤ 10. Each block drifts from the
/// previous one so consecutive times are correlated.
pub fn random_series(seed: u64) -> EmbeddingSeries {
    let mut r = rng(seed);
    let d = r.random_range(1..=6);
    let n = r.random_range(d.max(2)..=50);
    let horizon = r.random_range(2..=10);
    let mut blocks = vec![uniform_matrix(&mut r, n, d)];
    for _ in 1..horizon {
        let step = uniform_matrix(&mut r, n, d) * r.random_range(0.05..0.8);
        blocks.push(blocks.last().unwrap() + step);
    }
    EmbeddingSeries::new(blocks, Flavor::Modified).unwrap()
}

/// Random orthogonal d×d matrix from the QR factor of a uniform matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    uniform_matrix(rng, d, d).qr().q()
}

/// Fixed non-orthogonal transform: scale the first axis by 2 and shear it
/// into the last one by 0.5. The identity for d = 1 is replaced by 2.
pub fn shear_scale(d: usize) -> DMatrix<f64> {
    let mut g = DMatrix::identity(d, d);
    g[(0, 0)] = 2.0;
    if d > 1 {
        g[(0, d - 1)] = 0.5;
    }
    g
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
