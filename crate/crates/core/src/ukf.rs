//! Sigma points, unscented-transform moments and the standard UKF update.

use crate::linalg::{self, cholesky_lower, pseudo_inverse, symmetrize};
use crate::models::SystemModel;
use crate::{Error, Matrix, Result, Vector};

/// Unscented transform scaling.
///
/// `kappa = None` selects `3 - n` for the state dimension in use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: Option<f64>,
}

impl Default for UtParams {
    fn default() -> Self {
        UtParams {
            alpha: 1.0,
            beta: 0.0,
            kappa: None,
        }
    }
}

impl UtParams {
    pub fn kappa(&self, n: usize) -> f64 {
        self.kappa.unwrap_or(3.0 - n as f64)
    }

    pub fn lambda(&self, n: usize) -> f64 {
        let n = n as f64;
        let kappa = self.kappa.unwrap_or(3.0 - n);
        self.alpha * self.alpha * (n + kappa) - n
    }

    /// Mean and covariance weights for `2n + 1` points.
    pub fn weights(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let lambda = self.lambda(n);
        let spread = n as f64 + lambda;
        if !(spread > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "n + lambda must be positive, got {spread}"
            )));
        }
        let w = 1.0 / (2.0 * spread);
        let mut wm = vec![w; 2 * n + 1];
        let mut wc = vec![w; 2 * n + 1];
        wm[0] = lambda / spread;
        wc[0] = lambda / spread + 1.0 - self.alpha * self.alpha + self.beta;
        Ok((wm, wc))
    }
}

/// Mean and covariance of the state at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianBelief {
    /// Validates shape, symmetry and positive definiteness.
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || !cov.is_square() {
            return Err(Error::dims(
                format!("{0}x{0} covariance", mean.len()),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        linalg::check_finite_vector(&mean, "belief mean")?;
        cholesky_lower(&cov)?;
        Ok(GaussianBelief { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone)]
pub struct SigmaSet {
    pub points: Vec<Vector>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

impl SigmaSet {
    pub fn weighted_mean(&self) -> Vector {
        let mut acc = Vector::zeros(self.points[0].len());
        for (p, w) in self.points.iter().zip(&self.wm) {
            acc.axpy(*w, p, 1.0);
        }
        acc
    }

    /// `Σ w_c (χ - c)(χ - c)ᵀ` around the given center.
    pub fn weighted_cov(&self, center: &Vector) -> Matrix {
        let n = center.len();
        let mut acc = Matrix::zeros(n, n);
        for (p, w) in self.points.iter().zip(&self.wc) {
            let d = p - center;
            acc.ger(*w, &d, &d, 1.0);
        }
        acc
    }
}

/// Unscented-transform moments of the measurement.
#[derive(Debug, Clone)]
pub struct MeasurementMoments {
    pub y_hat: Vector,
    pub p_xy: Matrix,
    pub p_yy: Matrix,
}

pub fn make_sigma(belief: &GaussianBelief, params: &UtParams) -> Result<SigmaSet> {
    let n = belief.dim();
    let (wm, wc) = params.weights(n)?;
    let scale = n as f64 + params.lambda(n);
    let root = cholesky_lower(&(&belief.cov * scale))?;
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(belief.mean.clone());
    for s in 0..n {
        points.push(&belief.mean + root.column(s));
    }
    for s in 0..n {
        points.push(&belief.mean - root.column(s));
    }
    Ok(SigmaSet { points, wm, wc })
}

/// Time update. Returns the prior belief and the propagated sigma set.
pub fn predict(
    belief: &GaussianBelief,
    model: &dyn SystemModel,
    q: &Matrix,
    params: &UtParams,
) -> Result<(GaussianBelief, SigmaSet)> {
    let n = belief.dim();
    if q.shape() != (n, n) {
        return Err(Error::dims(format!("{n}x{n} Q"), format!("{:?}", q.shape())));
    }
    let sigma = make_sigma(belief, params)?;
    let propagated = SigmaSet {
        points: sigma.points.iter().map(|p| model.transition(p)).collect(),
        wm: sigma.wm,
        wc: sigma.wc,
    };
    let mean = propagated.weighted_mean();
    let cov = symmetrize(&(propagated.weighted_cov(&mean) + q));
    linalg::check_finite_vector(&mean, "predicted mean")?;
    cholesky_lower(&cov)?;
    Ok((GaussianBelief { mean, cov }, propagated))
}

/// Measurement moments over a fresh sigma set drawn from the prior.
pub fn measurement_moments(
    prior: &GaussianBelief,
    model: &dyn SystemModel,
    r: &Matrix,
    params: &UtParams,
) -> Result<MeasurementMoments> {
    let m = model.meas_dim();
    if r.shape() != (m, m) {
        return Err(Error::dims(format!("{m}x{m} R"), format!("{:?}", r.shape())));
    }
    let sigma = make_sigma(prior, params)?;
    let images = sigma
        .points
        .iter()
        .map(|p| model.measure(p))
        .collect::<Result<Vec<_>>>()?;

    let mut y_hat = Vector::zeros(m);
    for (img, w) in images.iter().zip(&sigma.wm) {
        y_hat.axpy(*w, img, 1.0);
    }
    let n = prior.dim();
    let mut p_xy = Matrix::zeros(n, m);
    let mut p_yy = Matrix::zeros(m, m);
    for ((pt, img), w) in sigma.points.iter().zip(&images).zip(&sigma.wc) {
        let xi = pt - &prior.mean;
        let zeta = img - &y_hat;
        p_xy.ger(*w, &xi, &zeta, 1.0);
        p_yy.ger(*w, &zeta, &zeta, 1.0);
    }
    let p_yy = symmetrize(&(p_yy + r));
    linalg::check_finite_vector(&y_hat, "predicted measurement")?;
    cholesky_lower(&p_yy)?;
    Ok(MeasurementMoments { y_hat, p_xy, p_yy })
}

#[derive(Debug, Clone)]
pub struct UkfUpdate {
    pub posterior: GaussianBelief,
    pub gain: Matrix,
}

/// Standard Kalman measurement update with gain `P_xy P_yy⁺`.
pub fn ukf_update(prior: &GaussianBelief, mom: &MeasurementMoments, y: &Vector) -> Result<UkfUpdate> {
    if y.len() != mom.y_hat.len() {
        return Err(Error::dims(mom.y_hat.len(), y.len()));
    }
    let gain = &mom.p_xy * pseudo_inverse(&mom.p_yy);
    let mean = &prior.mean + &gain * (y - &mom.y_hat);
    let cov = symmetrize(&(&prior.cov - &gain * &mom.p_yy * gain.transpose()));
    linalg::check_finite_vector(&mean, "posterior mean")?;
    cholesky_lower(&cov)?;
    Ok(UkfUpdate {
        posterior: GaussianBelief { mean, cov },
        gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearModel, Vehicle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        b.transpose() * b + Matrix::identity(n, n) * 0.5
    }

    struct ConstMeasure;
    impl SystemModel for ConstMeasure {
        fn state_dim(&self) -> usize {
            2
        }
        fn meas_dim(&self) -> usize {
            1
        }
        fn transition(&self, x: &Vector) -> Vector {
            x.clone()
        }
        fn measure(&self, _x: &Vector) -> Result<Vector> {
            Ok(Vector::from_element(1, 3.0))
        }
    }

    #[test]
    fn scalar_sigma_points_closed_form() {
        let belief = GaussianBelief::new(Vector::from_element(1, 0.7), Matrix::identity(1, 1)).unwrap();
        let params = UtParams::default(); // kappa = 2 for n = 1
        assert_eq!(params.lambda(1), 2.0);
        let s = make_sigma(&belief, &params).unwrap();
        let r3 = 3f64.sqrt();
        assert!((s.points[1][0] - (0.7 + r3)).abs() < 1e-15);
        assert!((s.points[2][0] - (0.7 - r3)).abs() < 1e-15);
        assert!((s.wm[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.wm[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((s.wm[2] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        for n in 1..8 {
            let (wm, wc) = UtParams::default().weights(n).unwrap();
            assert!((wm.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!((wc.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        let bad = UtParams { alpha: 1.0, beta: 0.0, kappa: Some(-5.0) };
        assert!(bad.weights(2).is_err());
    }

    #[test]
    fn sigma_set_reproduces_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..7 {
            let p = random_spd(&mut rng, n);
            let x = Vector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let b = GaussianBelief::new(x.clone(), p.clone()).unwrap();
            let s = make_sigma(&b, &UtParams::default()).unwrap();
            assert_eq!(s.points.len(), 2 * n + 1);
            assert!((s.weighted_mean() - &x).amax() < 1e-12);
            assert!((s.weighted_cov(&x) - &p).amax() < 1e-10);
        }
    }

    #[test]
    fn identity_dynamics_keep_belief() {
        let model = LinearModel::new(Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
        let b = GaussianBelief::new(
            Vector::from_vec(vec![1.0, -2.0]),
            Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let (prior, _) = predict(&b, &model, &Matrix::zeros(2, 2), &UtParams::default()).unwrap();
        assert!((prior.mean - &b.mean).amax() < 1e-12);
        assert!((prior.cov - &b.cov).amax() < 1e-12);
    }

    #[test]
    fn linear_prediction_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let model = LinearModel::new(f.clone(), Matrix::identity(3, 3)).unwrap();
        let p = random_spd(&mut rng, 3);
        let q = Matrix::identity(3, 3) * 0.1;
        let b = GaussianBelief::new(Vector::from_vec(vec![0.3, 1.0, -1.0]), p.clone()).unwrap();
        let (prior, _) = predict(&b, &model, &q, &UtParams::default()).unwrap();
        assert!((&prior.mean - &f * &b.mean).amax() < 1e-9);
        assert!((&prior.cov - (&f * &p * f.transpose() + &q)).amax() < 1e-9);
    }

    #[test]
    fn vehicle_prediction_mean() {
        let b = GaussianBelief::new(
            Vector::from_vec(vec![0.0, 0.0, 5.0, 10.0]),
            Matrix::from_diagonal(&Vector::from_vec(vec![10.0, 10.0, 50.0, 100.0])),
        )
        .unwrap();
        let q = Matrix::identity(4, 4) * 0.001;
        let (prior, _) = predict(&b, &Vehicle::default(), &q, &UtParams::default()).unwrap();
        assert!((prior.mean - Vector::from_vec(vec![1.0, 2.0, 5.0, 10.0])).amax() < 1e-12);
    }

    #[test]
    fn linear_measurement_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = Matrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let model = LinearModel::new(Matrix::identity(3, 3), h.clone()).unwrap();
        let p = random_spd(&mut rng, 3);
        let prior = GaussianBelief::new(Vector::from_vec(vec![1.0, 2.0, 3.0]), p.clone()).unwrap();
        let r = Matrix::identity(2, 2);
        let mom = measurement_moments(&prior, &model, &r, &UtParams::default()).unwrap();
        assert!((&mom.p_xy - &p * h.transpose()).amax() < 1e-9);
        // P_yy minus spread equals R
        assert!((&mom.p_yy - &h * &p * h.transpose() - &r).amax() < 1e-9);
    }

    #[test]
    fn constant_measurement_moments() {
        let prior = GaussianBelief::new(Vector::zeros(2), Matrix::identity(2, 2)).unwrap();
        let r = Matrix::from_element(1, 1, 0.4);
        let mom = measurement_moments(&prior, &ConstMeasure, &r, &UtParams::default()).unwrap();
        assert_eq!(mom.y_hat[0], 3.0);
        assert!(mom.p_xy.amax() < 1e-15);
        assert!((&mom.p_yy - &r).amax() < 1e-15);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_cov() {
        let prior = GaussianBelief::new(Vector::from_element(1, 2.0), Matrix::from_element(1, 1, 4.0)).unwrap();
        let mom = MeasurementMoments {
            y_hat: Vector::from_element(1, 2.0),
            p_xy: Matrix::from_element(1, 1, 4.0),
            p_yy: Matrix::from_element(1, 1, 5.0),
        };
        let up = ukf_update(&prior, &mom, &Vector::from_element(1, 2.0)).unwrap();
        assert_eq!(up.posterior.mean[0], 2.0);
        // scalar Kalman: K = 4/5, P = 4 - 16/5
        assert!((up.posterior.cov[(0, 0)] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn scalar_kalman_update() {
        // x ~ N(1, 2), y = 3x + r, r ~ N(0, 0.5), y = 4
        let (p, h, r, y) = (2.0, 3.0, 0.5, 4.0);
        let prior = GaussianBelief::new(Vector::from_element(1, 1.0), Matrix::from_element(1, 1, p)).unwrap();
        let mom = MeasurementMoments {
            y_hat: Vector::from_element(1, h * 1.0),
            p_xy: Matrix::from_element(1, 1, p * h),
            p_yy: Matrix::from_element(1, 1, h * p * h + r),
        };
        let up = ukf_update(&prior, &mom, &Vector::from_element(1, y)).unwrap();
        let k = p * h / (h * h * p + r);
        assert!((up.posterior.mean[0] - (1.0 + k * (y - h))).abs() < 1e-12);
        assert!((up.posterior.cov[(0, 0)] - (1.0 - k * h) * p).abs() < 1e-12);
    }

    #[test]
    fn uninformative_measurement_keeps_prior() {
        let prior = GaussianBelief::new(Vector::from_vec(vec![1.0, 2.0]), Matrix::identity(2, 2)).unwrap();
        let mom = MeasurementMoments {
            y_hat: Vector::from_element(1, 0.0),
            p_xy: Matrix::zeros(2, 1),
            p_yy: Matrix::from_element(1, 1, 1.0),
        };
        let up = ukf_update(&prior, &mom, &Vector::from_element(1, 10.0)).unwrap();
        assert_eq!(up.posterior, prior);
    }
}
