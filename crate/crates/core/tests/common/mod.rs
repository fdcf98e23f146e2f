#![allow(dead_code)]

use meef_core::{Matrix, RngStream, Vector};

pub fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

pub fn int(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + ((hi - lo + 1) as f64 * rng.uniform()).floor().min((hi - lo) as f64) as usize
}

pub fn normal_matrix(rng: &mut RngStream, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| scale * rng.standard_normal())
}

pub fn normal_vector(rng: &mut RngStream, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.standard_normal())
}

/// `BᵀB + shift I` with Gaussian `B`.
pub fn random_spd(rng: &mut RngStream, n: usize, shift: f64) -> Matrix {
    let b = normal_matrix(rng, n, n, 1.0);
    b.transpose() * &b + Matrix::identity(n, n) * shift
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}
