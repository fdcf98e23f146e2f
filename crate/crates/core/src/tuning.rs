//! Online selection of the criterion's free parameters `(τ, σ1, σ2)`.
//!
//! The error density is modelled in the span of
//! `{G_σ1(x), G_σ2(x - e_1), …, G_σ2(x - e_N)}` with coefficient ("fusion")
//! vector `τ̄ = [2τσ1², (1-τ)σ2²/N, …]`. For fixed widths the integrated
//! squared difference to the error density reduces to the quadratic
//! `τ̄ᵀ Ḡ τ̄ - 2 τ̄ᵀ h̄`, whose ridge-regularized minimizer is
//! `(Ḡ + ιI)⁻¹ h̄`. The widths come from small candidate sets by alternating
//! coordinate search.

use std::f64::consts::PI;

use nalgebra::{Cholesky, LU};

use crate::meef::gaussian_kernel;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSearchSpace {
    pub sigma1_set: Vec<f64>,
    pub sigma2_set: Vec<f64>,
    /// Ridge term `ι`.
    pub regularization: f64,
    /// Number of alternating rounds `L`.
    pub rounds: usize,
}

impl Default for ParamSearchSpace {
    fn default() -> Self {
        let widths = vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
        ParamSearchSpace {
            sigma1_set: widths.clone(),
            sigma2_set: widths,
            regularization: 1e-4,
            rounds: 2,
        }
    }
}

impl ParamSearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ok = |set: &[f64]| !set.is_empty() && set.iter().all(|s| s.is_finite() && *s > 0.0);
        if !ok(&self.sigma1_set) || !ok(&self.sigma2_set) {
            return Err(Error::InvalidParameter(
                "candidate width sets must be nonempty and positive".into(),
            ));
        }
        if !(self.regularization > 0.0) {
            return Err(Error::InvalidParameter("regularization must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("at least one search round is required".into()));
        }
        Ok(())
    }
}

/// Fusion vector `τ̄ = [2τσ1², (1-τ)σ2²/N, …, (1-τ)σ2²/N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionVector(pub Vector);

impl FusionVector {
    pub fn from_triple(tau: f64, sigma1: f64, sigma2: f64, n_errors: usize) -> Self {
        let mut v = Vector::from_element(n_errors + 1, (1.0 - tau) * sigma2 * sigma2 / n_errors as f64);
        v[0] = 2.0 * tau * sigma1 * sigma1;
        FusionVector(v)
    }

    /// `τ = clamp(τ̄₁ / 2σ1², 0, 1)`.
    pub fn tau(&self, sigma1: f64) -> f64 {
        let t = self.0[0] / (2.0 * sigma1 * sigma1);
        if t.is_nan() {
            0.0
        } else {
            t.clamp(0.0, 1.0)
        }
    }
}

/// `∫ G_σa(x - u) G_σb(x - v) dx` for unnormalized Gaussian kernels.
pub fn gaussian_cross_integral(sigma_a: f64, sigma_b: f64, u: f64, v: f64) -> f64 {
    let s2 = sigma_a * sigma_a + sigma_b * sigma_b;
    let d = u - v;
    (2.0 * PI).sqrt() * sigma_a * sigma_b / s2.sqrt() * (-(d * d) / (2.0 * s2)).exp()
}

/// Gram matrix `Ḡ` of the basis and the empirical projection `h̄`.
pub fn build_gram_and_h(e: &Vector, sigma1: f64, sigma2: f64) -> (Matrix, Vector) {
    let big_n = e.len();
    // basis k: width and center
    let basis = |k: usize| -> (f64, f64) {
        if k == 0 {
            (sigma1, 0.0)
        } else {
            (sigma2, e[k - 1])
        }
    };
    let mut g = Matrix::zeros(big_n + 1, big_n + 1);
    for a in 0..=big_n {
        let (sa, ca) = basis(a);
        for b in a..=big_n {
            let (sb, cb) = basis(b);
            let v = gaussian_cross_integral(sa, sb, ca, cb);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    let mut h = Vector::zeros(big_n + 1);
    for a in 0..=big_n {
        let (sa, ca) = basis(a);
        h[a] = e.iter().map(|ej| gaussian_kernel(sa, ej - ca)).sum::<f64>() / big_n as f64;
    }
    (g, h)
}

/// `(Ḡ + ιI)⁻¹ h̄`.
pub fn solve_fusion_vector(gram: &Matrix, h: &Vector, regularization: f64) -> Result<FusionVector> {
    let k = gram.nrows();
    let reg = gram + Matrix::identity(k, k) * regularization;
    let sol = match Cholesky::new(reg.clone()) {
        Some(ch) => ch.solve(h),
        None => LU::new(reg).solve(h).ok_or(Error::SingularSystem)?,
    };
    if sol.iter().all(|v| v.is_finite()) {
        Ok(FusionVector(sol))
    } else {
        Err(Error::SingularSystem)
    }
}

/// `τ̄ᵀ Ḡ τ̄ - 2 τ̄ᵀ h̄`.
pub fn ise_objective(gram: &Matrix, h: &Vector, tau_bar: &Vector) -> f64 {
    (tau_bar.transpose() * gram * tau_bar)[(0, 0)] - 2.0 * tau_bar.dot(h)
}

/// Objective and fusion vector for one width pair.
pub fn evaluate_widths(e: &Vector, sigma1: f64, sigma2: f64, regularization: f64) -> Result<(f64, FusionVector)> {
    let (g, h) = build_gram_and_h(e, sigma1, sigma2);
    let tau_bar = solve_fusion_vector(&g, &h, regularization)?;
    Ok((ise_objective(&g, &h, &tau_bar.0), tau_bar))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub tau: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub objective: f64,
}

/// Alternating search over the candidate sets, `space.rounds` times.
///
/// Starts from the first candidate of each set; ties keep the earlier
/// candidate.
pub fn select_parameters(e: &Vector, space: &ParamSearchSpace) -> Result<Selection> {
    space.validate()?;
    if e.is_empty() || !e.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("error sample"));
    }
    let reg = space.regularization;
    let mut s1 = space.sigma1_set[0];
    let mut s2 = space.sigma2_set[0];

    for _ in 0..space.rounds {
        for coord in 0..2 {
            let candidates = if coord == 0 { &space.sigma1_set } else { &space.sigma2_set };
            let mut best: Option<(f64, f64)> = None;
            for &c in candidates {
                let (a, b) = if coord == 0 { (c, s2) } else { (s1, c) };
                let (obj, _) = evaluate_widths(e, a, b, reg)?;
                if best.is_none_or(|(bo, _)| obj < bo) {
                    best = Some((obj, c));
                }
            }
            let (_, c) = best.expect("nonempty candidate set");
            if coord == 0 {
                s1 = c;
            } else {
                s2 = c;
            }
        }
    }

    let (objective, tau_bar) = evaluate_widths(e, s1, s2, reg)?;
    Ok(Selection {
        tau: tau_bar.tau(s1),
        sigma1: s1,
        sigma2: s2,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cross_integral_equal_widths() {
        let s = 1.7;
        assert!((gaussian_cross_integral(s, s, 0.3, 0.3) - s * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn cross_integral_vanishes_and_is_symmetric() {
        assert!(gaussian_cross_integral(1.0, 2.0, 0.0, 1e3) < 1e-100);
        let a = gaussian_cross_integral(0.4, 2.5, -1.0, 0.7);
        let b = gaussian_cross_integral(2.5, 0.4, 0.7, -1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn cross_integral_matches_quadrature() {
        let (sa, sb, u, v) = (0.8, 1.9, -0.4, 1.1);
        let (lo, hi, steps) = (-30.0, 30.0, 200_000);
        let dx = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let x = lo + i as f64 * dx;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += w * gaussian_kernel(sa, x - u) * gaussian_kernel(sb, x - v);
        }
        assert!((acc * dx - gaussian_cross_integral(sa, sb, u, v)).abs() < 1e-10);
    }

    #[test]
    fn gram_single_error() {
        let (s1, s2) = (0.7, 2.2);
        let (g, h) = build_gram_and_h(&Vector::from_element(1, 0.0), s1, s2);
        assert!((g[(0, 0)] - s1 * PI.sqrt()).abs() < 1e-13);
        assert!((g[(1, 1)] - s2 * PI.sqrt()).abs() < 1e-13);
        let off = (2.0 * PI).sqrt() * s1 * s2 / (s1 * s1 + s2 * s2).sqrt();
        assert!((g[(0, 1)] - off).abs() < 1e-13);
        assert_eq!(g[(0, 1)], g[(1, 0)]);
        assert_eq!(h.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn gram_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for big_n in 1..=20 {
            let e = Vector::from_fn(big_n, |_, _| rng.random_range(-4.0..4.0));
            let (g, _) = build_gram_and_h(&e, rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
            assert_eq!(&g, &g.transpose());
            let min = SymmetricEigen::new(g).eigenvalues.min();
            assert!(min >= -1e-10, "N={big_n}: {min}");
        }
    }

    #[test]
    fn solve_identity() {
        let h = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let t = solve_fusion_vector(&Matrix::identity(3, 3), &h, 1e-12).unwrap();
        assert!((t.0 - &h).amax() < 1e-11);
    }

    #[test]
    fn solve_residual_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = Matrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let g = b.transpose() * b;
        let h = Vector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let iota = 1e-3;
        let t = solve_fusion_vector(&g, &h, iota).unwrap();
        let resid = (&g + Matrix::identity(5, 5) * iota) * &t.0 - &h;
        assert!(resid.amax() < 1e-10);
        let t3 = solve_fusion_vector(&g, &(&h * 3.0), iota).unwrap();
        assert!((t3.0 - t.0 * 3.0).amax() < 1e-9);
    }

    #[test]
    fn fusion_vector_structure() {
        let fv = FusionVector::from_triple(0.25, 2.0, 3.0, 4);
        assert_eq!(fv.0[0], 2.0 * 0.25 * 4.0);
        for k in 1..5 {
            assert_eq!(fv.0[k], 0.75 * 9.0 / 4.0);
        }
        assert_eq!(fv.tau(2.0), 0.25);
        assert_eq!(FusionVector(Vector::from_vec(vec![-1.0, 0.0])).tau(1.0), 0.0);
        assert_eq!(FusionVector(Vector::from_vec(vec![100.0, 0.0])).tau(1.0), 1.0);
    }

    #[test]
    fn singleton_sets_fix_widths() {
        let e = Vector::from_vec(vec![0.0, 0.2, -1.3]);
        for rounds in 1..4 {
            let space = ParamSearchSpace {
                sigma1_set: vec![1.5],
                sigma2_set: vec![0.7],
                regularization: 1e-4,
                rounds,
            };
            let sel = select_parameters(&e, &space).unwrap();
            assert_eq!((sel.sigma1, sel.sigma2), (1.5, 0.7));
            let (_, tb) = evaluate_widths(&e, 1.5, 0.7, 1e-4).unwrap();
            assert_eq!(sel.tau, tb.tau(1.5));
        }
    }

    #[test]
    fn selection_is_deterministic_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let e = Vector::from_fn(8, |_, _| rng.random_range(-2.0..2.0));
        let space = ParamSearchSpace::default();
        let a = select_parameters(&e, &space).unwrap();
        let b = select_parameters(&e, &space).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.tau));
        assert!(space.sigma1_set.contains(&a.sigma1));
        assert!(space.sigma2_set.contains(&a.sigma2));
    }
}
