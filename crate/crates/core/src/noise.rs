//! Modified Sage-Husa estimation of the process and measurement noise
//! covariances.
//!
//! Raw recursive estimates are revised to `sqrt(diag(M Mᵀ))`, i.e. the
//! diagonal matrix of row 2-norms of the raw estimate, which keeps both
//! estimates diagonal and positive definite.

use crate::{Error, Matrix, Result, Vector};

pub const DEFAULT_FORGETTING: f64 = 0.998;

/// Smallest diagonal entry a revised estimate may hold.
pub const DIAGONAL_FLOOR: f64 = 1e-12;

/// `d_i = (1 - b) / (1 - b^(i+1))`.
pub fn forgetting_weight(i: u64, b: f64) -> f64 {
    // powi takes i32; past that range b^(i+1) has long underflowed for b < 1
    let exp = (i.saturating_add(1)).min(i32::MAX as u64) as i32;
    (1.0 - b) / (1.0 - b.powi(exp))
}

/// `sqrt(diag(M Mᵀ))` with the positivity floor applied.
pub fn revise_diagonal(raw: &Matrix) -> Matrix {
    let n = raw.nrows();
    let diag = Vector::from_fn(n, |i, _| raw.row(i).norm().max(DIAGONAL_FLOOR));
    Matrix::from_diagonal(&diag)
}

/// Raw process-noise estimate
/// `(1 - d) Q + d (K ỹ ỹᵀ Kᵀ + P_post - P_prior + Q)`.
pub fn raw_q(
    q_prev: &Matrix,
    gain: &Matrix,
    innovation: &Vector,
    p_post: &Matrix,
    p_prior: &Matrix,
    d: f64,
) -> Matrix {
    let ky = gain * innovation;
    let outer = &ky * ky.transpose();
    q_prev * (1.0 - d) + (outer + p_post - p_prior + q_prev) * d
}

/// Raw measurement-noise estimate `(1 - d) R + d (ỹ ỹᵀ - P_yy + R)`.
pub fn raw_r(r_prev: &Matrix, innovation: &Vector, p_yy: &Matrix, d: f64) -> Matrix {
    let outer = innovation * innovation.transpose();
    r_prev * (1.0 - d) + (outer - p_yy + r_prev) * d
}

pub fn update_q(
    q_prev: &Matrix,
    gain: &Matrix,
    innovation: &Vector,
    p_post: &Matrix,
    p_prior: &Matrix,
    d: f64,
) -> Matrix {
    revise_diagonal(&raw_q(q_prev, gain, innovation, p_post, p_prior, d))
}

pub fn update_r(r_prev: &Matrix, innovation: &Vector, p_yy: &Matrix, d: f64) -> Matrix {
    revise_diagonal(&raw_r(r_prev, innovation, p_yy, d))
}

/// Current noise estimates of one filter instance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimates {
    pub q: Matrix,
    pub r: Matrix,
    pub forgetting: f64,
    /// Index of the next time step; the first update uses `i = 1`.
    pub step: u64,
}

impl NoiseEstimates {
    pub fn new(q: Matrix, r: Matrix, forgetting: f64) -> Result<Self> {
        if !(forgetting > 0.0 && forgetting < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "forgetting factor {forgetting} not in (0, 1)"
            )));
        }
        if !q.is_square() || !r.is_square() {
            return Err(Error::dims("square Q and R", format!("{:?}, {:?}", q.shape(), r.shape())));
        }
        Ok(NoiseEstimates {
            q,
            r,
            forgetting,
            step: 1,
        })
    }

    pub fn weight(&self) -> f64 {
        forgetting_weight(self.step, self.forgetting)
    }

    /// Applies both revised updates for the current step and advances it.
    pub fn update(
        &mut self,
        gain: &Matrix,
        innovation: &Vector,
        p_post: &Matrix,
        p_prior: &Matrix,
        p_yy: &Matrix,
    ) {
        let d = self.weight();
        let q = update_q(&self.q, gain, innovation, p_post, p_prior, d);
        let r = update_r(&self.r, innovation, p_yy, d);
        self.q = q;
        self.r = r;
        self.step += 1;
    }

    /// Diagonal and floored, as every revised estimate must be.
    pub fn is_revised_form(&self) -> bool {
        let ok = |m: &Matrix| {
            (0..m.nrows()).all(|i| {
                (0..m.ncols()).all(|j| if i == j { m[(i, j)] >= DIAGONAL_FLOOR } else { m[(i, j)] == 0.0 })
            })
        };
        ok(&self.q) && ok(&self.r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn weight_values() {
        assert_eq!(forgetting_weight(0, 0.998), 1.0);
        let d1 = forgetting_weight(1, 0.998);
        assert!((d1 - 0.002 / (1.0 - 0.998f64 * 0.998)).abs() < 1e-15);
        assert!((d1 - 0.50050).abs() < 1e-5);
        assert!((forgetting_weight(100_000, 0.998) - 0.002).abs() < 1e-12);
        assert!((forgetting_weight(u64::MAX, 0.998) - 0.002).abs() < 1e-12);
    }

    #[test]
    fn weight_decreases_monotonically() {
        let mut prev = forgetting_weight(0, 0.998);
        for i in 1..=5000 {
            let d = forgetting_weight(i, 0.998);
            assert!(d < prev, "i={i}");
            assert!(d > 0.002);
            prev = d;
        }
    }

    #[test]
    fn stationary_q_update() {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![0.3, 2.0]));
        let p = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let out = update_q(&q, &Matrix::identity(2, 2), &Vector::zeros(2), &p, &p, 0.4);
        assert!((out - &q).amax() < 1e-15);
    }

    #[test]
    fn scalar_q_update() {
        let p = scalar(5.0);
        let raw = raw_q(&scalar(0.0), &scalar(1.0), &Vector::from_element(1, 2.0), &p, &p, 1.0);
        assert_eq!(raw[(0, 0)], 4.0);
        assert_eq!(revise_diagonal(&raw)[(0, 0)], 4.0);
    }

    #[test]
    fn negative_entry_is_flipped() {
        let raw = Matrix::from_diagonal(&Vector::from_vec(vec![-3.0, 2.0]));
        assert_eq!(revise_diagonal(&raw), Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 2.0])));
    }

    #[test]
    fn dense_raw_uses_row_norms() {
        let raw = Matrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, -2.0]);
        assert_eq!(revise_diagonal(&raw), Matrix::from_diagonal(&Vector::from_vec(vec![5.0, 2.0])));
    }

    #[test]
    fn zero_is_floored() {
        let out = revise_diagonal(&Matrix::zeros(2, 2));
        assert_eq!(out, Matrix::identity(2, 2) * DIAGONAL_FLOOR);
    }

    #[test]
    fn r_update_cancels() {
        let r = Matrix::from_diagonal(&Vector::from_vec(vec![1.5, 0.5]));
        let y = Vector::from_vec(vec![2.0, -1.0]);
        let p_yy = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 1.0]));
        // ỹỹᵀ has off-diagonals, so only the diagonal cancels exactly
        let raw = raw_r(&r, &y, &p_yy, 0.3);
        assert!((raw[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((raw[(1, 1)] - 0.5).abs() < 1e-15);
        let y1 = Vector::from_element(1, 2.0);
        let raw = raw_r(&scalar(3.0), &y1, &scalar(4.0), 0.7);
        assert!((raw[(0, 0)] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_r_update() {
        let raw = raw_r(&scalar(2.0), &Vector::from_element(1, 6f64.sqrt()), &scalar(4.0), 0.5);
        assert!((raw[(0, 0)] - 3.0).abs() < 1e-14);
        let revised = update_r(&scalar(2.0), &Vector::from_element(1, 0.0), &scalar(40.0), 0.5);
        assert!(revised[(0, 0)] > 0.0);
    }

    #[test]
    fn estimates_track_step() {
        let mut est = NoiseEstimates::new(scalar(1.0), scalar(1.0), 0.998).unwrap();
        assert_eq!(est.step, 1);
        est.update(&scalar(0.5), &Vector::from_element(1, 1.0), &scalar(1.0), &scalar(2.0), &scalar(3.0));
        assert_eq!(est.step, 2);
        assert!(est.is_revised_form());
        assert!(NoiseEstimates::new(scalar(1.0), scalar(1.0), 1.0).is_err());
    }
}
