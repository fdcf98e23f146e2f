//! Robust measurement update under the MEEF criterion.
//!
//! The prior and the measurement are stacked into a whitened linear
//! regression `z = A x + e` with white residual `e`. The criterion's
//! stationarity condition gives a weighted least-squares fixed point
//! `x = (Aᵀ Φ A)⁻¹ Aᵀ Φ z`, where the weight matrix
//!
//! ```text
//! Φ = τ Λ + (1 - τ)(Ψ - Ω)
//! Λ = diag(G_σ1(e_k))
//! Ω_jk = G_σ2(e_j - e_k),   Ψ = diag(row sums of Ω)
//! ```
//!
//! depends on the residual. The fixed point is solved by iteration using the
//! equivalent gain form `x = x⁻ + K̄ (y - ŷ)`, with the inverse inside `K̄`
//! replaced by an SVD pseudo-inverse. The posterior covariance uses the Joseph
//! form, which stays positive semi-definite for any gain.
//!
//! Special cases:
//!
//! | configuration            | estimator |
//! |--------------------------|-----------|
//! | `τ = 1`, `σ1 = ∞`        | UKF       |
//! | `τ = 1`, finite `σ1`     | MCC-UKF   |
//! | `τ = 0`                  | MEE-UKF   |

use crate::linalg::{
    block_diag, check_finite_vector, cholesky_lower, dominant_cholesky, lower_triangular_inverse, pseudo_inverse,
    symmetrize,
};
use crate::tuning::{self, ParamSearchSpace};
use crate::ukf::{GaussianBelief, MeasurementMoments};
use crate::{Error, Matrix, Result, Vector};

/// Unnormalized Gaussian kernel `exp(-e² / 2σ²)`.
#[inline]
pub fn gaussian_kernel(sigma: f64, e: f64) -> f64 {
    (-(e * e) / (2.0 * sigma * sigma)).exp()
}

/// Width of the correntropy kernel. `Infinite` makes `Λ = I` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelWidth {
    Finite(f64),
    Infinite,
}

impl KernelWidth {
    pub fn kernel(self, e: f64) -> f64 {
        match self {
            KernelWidth::Finite(s) => gaussian_kernel(s, e),
            KernelWidth::Infinite => 1.0,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            KernelWidth::Finite(s) => Some(s),
            KernelWidth::Infinite => None,
        }
    }
}

impl std::fmt::Display for KernelWidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelWidth::Finite(s) => write!(f, "{s}"),
            KernelWidth::Infinite => f.write_str("inf"),
        }
    }
}

/// Free parameters of the criterion and the fixed-point stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionConfig {
    /// Fusion factor between correntropy (`1`) and error entropy (`0`).
    pub tau: f64,
    pub sigma1: KernelWidth,
    pub sigma2: f64,
    /// Relative step tolerance of the fixed-point iteration.
    pub tolerance: f64,
    pub max_iter: usize,
    /// When set, `(τ, σ1, σ2)` are re-selected once per update from the
    /// first residual and held fixed for the remaining iterations.
    pub tuning: Option<ParamSearchSpace>,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;

impl CriterionConfig {
    pub fn new(tau: f64, sigma1: KernelWidth, sigma2: f64) -> Result<Self> {
        let cfg = CriterionConfig {
            tau,
            sigma1,
            sigma2,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            tuning: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `Φ = I`: the plain UKF update.
    pub fn ukf() -> Self {
        Self::new(1.0, KernelWidth::Infinite, 1.0).expect("valid")
    }

    pub fn mcc(sigma: f64) -> Result<Self> {
        Self::new(1.0, KernelWidth::Finite(sigma), 1.0)
    }

    pub fn mee(sigma: f64) -> Result<Self> {
        Self::new(0.0, KernelWidth::Finite(sigma), sigma)
    }

    pub fn meef(tau: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        Self::new(tau, KernelWidth::Finite(sigma1), sigma2)
    }

    pub fn with_tuning(mut self, space: ParamSearchSpace) -> Self {
        self.tuning = Some(space);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter(format!("tau {} not in [0, 1]", self.tau)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be finite and positive, got {}",
                self.sigma2
            )));
        }
        match self.sigma1 {
            KernelWidth::Finite(s) if !(s.is_finite() && s > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "sigma1 must be positive, got {s}"
                )))
            }
            KernelWidth::Infinite if self.tau != 1.0 => {
                return Err(Error::InvalidParameter(
                    "an infinite sigma1 is only allowed with tau = 1".into(),
                ))
            }
            _ => {}
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "tolerance must be positive and max_iter at least 1".into(),
            ));
        }
        if let Some(space) = &self.tuning {
            space.validate()?;
        }
        Ok(())
    }
}

/// Whitened batch regression `z = A x + e` for one measurement update.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub z: Vector,
    pub a: Matrix,
    /// Cholesky factor of the prior covariance.
    pub xi_p: Matrix,
    /// Cholesky factor of the measurement covariance.
    pub xi_r: Matrix,
    pub xi_p_inv: Matrix,
    pub xi_r_inv: Matrix,
    /// Statistical-linearization slope `(P⁻¹ P_xy)ᵀ`, `m x n`.
    pub s: Matrix,
    pub prior_mean: Vector,
    /// `y - ŷ`.
    pub innovation: Vector,
}

impl RegressionModel {
    pub fn state_dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn meas_dim(&self) -> usize {
        self.innovation.len()
    }

    /// `e = z - A x`.
    pub fn residual(&self, x: &Vector) -> Vector {
        &self.z - &self.a * x
    }
}

pub fn build_regression(
    prior: &GaussianBelief,
    mom: &MeasurementMoments,
    y: &Vector,
    r: &Matrix,
) -> Result<RegressionModel> {
    let n = prior.dim();
    let m = y.len();
    if mom.y_hat.len() != m || r.shape() != (m, m) || mom.p_xy.shape() != (n, m) {
        return Err(Error::dims(
            format!("n={n}, m={m}"),
            format!("y_hat {}, R {:?}, P_xy {:?}", mom.y_hat.len(), r.shape(), mom.p_xy.shape()),
        ));
    }
    let xi_p = cholesky_lower(&prior.cov)?;
    let xi_r = cholesky_lower(r)?;
    let xi_p_inv = lower_triangular_inverse(&xi_p)?;
    let xi_r_inv = lower_triangular_inverse(&xi_r)?;
    let p_inv = xi_p_inv.transpose() * &xi_p_inv;
    let s = (p_inv * &mom.p_xy).transpose();

    let innovation = y - &mom.y_hat;
    let mut z = Vector::zeros(n + m);
    z.rows_mut(0, n).copy_from(&(&xi_p_inv * &prior.mean));
    z.rows_mut(n, m)
        .copy_from(&(&xi_r_inv * (&innovation + &s * &prior.mean)));

    let mut a = Matrix::zeros(n + m, n);
    a.view_mut((0, 0), (n, n)).copy_from(&xi_p_inv);
    a.view_mut((n, 0), (m, n)).copy_from(&(&xi_r_inv * &s));

    Ok(RegressionModel {
        z,
        a,
        xi_p,
        xi_r,
        xi_p_inv,
        xi_r_inv,
        s,
        prior_mean: prior.mean.clone(),
        innovation,
    })
}

impl RegressionModel {
    /// Block-diagonal whitening factor `diag(Ξ_p, Ξ_r)`.
    pub fn xi(&self) -> Matrix {
        block_diag(&self.xi_p, &self.xi_r)
    }
}

/// Weight matrix `Φ` and its four blocks.
///
/// Block naming follows the stacked layout
/// `[[Φ_xx, Φ_yx], [Φ_xy, Φ_yy]]`, so `Φ_xy` is `m x n`.
#[derive(Debug, Clone)]
pub struct PhiBlocks {
    pub full: Matrix,
    n: usize,
}

impl PhiBlocks {
    pub fn from_full(full: Matrix, n: usize) -> Self {
        PhiBlocks { full, n }
    }
    fn m(&self) -> usize {
        self.full.nrows() - self.n
    }
    pub fn xx(&self) -> Matrix {
        self.full.view((0, 0), (self.n, self.n)).into_owned()
    }
    pub fn yx(&self) -> Matrix {
        self.full.view((0, self.n), (self.n, self.m())).into_owned()
    }
    pub fn xy(&self) -> Matrix {
        self.full.view((self.n, 0), (self.m(), self.n)).into_owned()
    }
    pub fn yy(&self) -> Matrix {
        self.full.view((self.n, self.n), (self.m(), self.m())).into_owned()
    }
}

/// `Φ = τ Λ + (1 - τ)(Ψ - Ω)` for residual `e`.
pub fn phi_matrix(e: &Vector, tau: f64, sigma1: KernelWidth, sigma2: f64) -> Matrix {
    let big_n = e.len();
    let mut phi = Matrix::zeros(big_n, big_n);
    if tau < 1.0 {
        let w = 1.0 - tau;
        for j in 0..big_n {
            for k in (j + 1)..big_n {
                let g = w * gaussian_kernel(sigma2, e[j] - e[k]);
                phi[(j, k)] = -g;
                phi[(k, j)] = -g;
                phi[(j, j)] += g;
                phi[(k, k)] += g;
            }
        }
    }
    if tau > 0.0 {
        for k in 0..big_n {
            phi[(k, k)] += tau * sigma1.kernel(e[k]);
        }
    }
    phi
}

/// Cholesky factor of `Φ` computed from its structure: the off-diagonal
/// entropy weights and the correntropy excess `τ G_σ1(e_k)` on each row.
pub fn phi_cholesky(e: &Vector, tau: f64, sigma1: KernelWidth, sigma2: f64) -> Result<Matrix> {
    let mut off = phi_matrix(e, tau, sigma1, sigma2);
    off.fill_diagonal(0.0);
    let gap = Vector::from_fn(e.len(), |k, _| if tau > 0.0 { tau * sigma1.kernel(e[k]) } else { 0.0 });
    dominant_cholesky(&off, &gap)
}

pub fn compute_phi(e: &Vector, cfg: &CriterionConfig, n: usize) -> PhiBlocks {
    PhiBlocks::from_full(phi_matrix(e, cfg.tau, cfg.sigma1, cfg.sigma2), n)
}

/// Robust gain `K̄ = P_p⁺ (P̄_yx + Sᵀ R̄_yy)`, `n x m`.
pub fn compute_gain(reg: &RegressionModel, phi: &PhiBlocks) -> Matrix {
    let pi = &reg.xi_p_inv;
    let ri = &reg.xi_r_inv;
    let s = &reg.s;
    let p_xx = pi.transpose() * phi.xx() * pi;
    let p_xy = ri.transpose() * phi.xy() * pi;
    let p_yx = pi.transpose() * phi.yx() * ri;
    let r_yy = ri.transpose() * phi.yy() * ri;
    let st = s.transpose();
    let p_p = &p_xx + &st * &p_xy + &p_yx * s + &st * &r_yy * s;
    pseudo_inverse(&p_p) * (p_yx + st * r_yy)
}

/// Joseph-form covariance `(I - K S) P (I - K S)ᵀ + K R Kᵀ`, symmetrized.
pub fn joseph_covariance(p_prior: &Matrix, gain: &Matrix, s: &Matrix, r: &Matrix) -> Matrix {
    let n = p_prior.nrows();
    let i_ks = Matrix::identity(n, n) - gain * s;
    symmetrize(&(&i_ks * p_prior * i_ks.transpose() + gain * r * gain.transpose()))
}

/// Criterion parameters actually used by one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsedCriterion {
    pub tau: f64,
    pub sigma1: KernelWidth,
    pub sigma2: f64,
}

#[derive(Debug, Clone)]
pub struct MeefOutcome {
    pub posterior: GaussianBelief,
    pub gain: Matrix,
    pub iterations: usize,
    /// `false` when the iteration cap was hit; the last iterate is accepted.
    pub converged: bool,
    /// Relative step of the accepted iterate.
    pub last_step: f64,
    /// Residual `z - A x̂` at the accepted estimate.
    pub residual: Vector,
    pub criterion: UsedCriterion,
}

/// One MEEF measurement update with fixed-point iteration.
pub fn meef_update(
    prior: &GaussianBelief,
    mom: &MeasurementMoments,
    y: &Vector,
    r: &Matrix,
    cfg: &CriterionConfig,
) -> Result<MeefOutcome> {
    let reg = build_regression(prior, mom, y, r)?;
    meef_update_with(prior, &reg, r, cfg)
}

/// Same as [`meef_update`] for an already built regression model.
pub fn meef_update_with(
    prior: &GaussianBelief,
    reg: &RegressionModel,
    r: &Matrix,
    cfg: &CriterionConfig,
) -> Result<MeefOutcome> {
    cfg.validate()?;
    let n = prior.dim();
    let mut used = UsedCriterion {
        tau: cfg.tau,
        sigma1: cfg.sigma1,
        sigma2: cfg.sigma2,
    };

    let mut x_prev = prior.mean.clone();
    let mut gain = Matrix::zeros(n, reg.meas_dim());
    let mut iterations = 0;
    let mut converged = false;
    let mut last_step = f64::INFINITY;

    for t in 1..=cfg.max_iter {
        iterations = t;
        let e = reg.residual(&x_prev);
        if t == 1 {
            if let Some(space) = &cfg.tuning {
                let sel = tuning::select_parameters(&e, space)?;
                used = UsedCriterion {
                    tau: sel.tau,
                    sigma1: KernelWidth::Finite(sel.sigma1),
                    sigma2: sel.sigma2,
                };
            }
        }
        let phi = PhiBlocks::from_full(phi_matrix(&e, used.tau, used.sigma1, used.sigma2), n);
        gain = compute_gain(reg, &phi);
        let x = &prior.mean + &gain * &reg.innovation;
        check_finite_vector(&x, "fixed-point iterate")?;

        let step = (&x - &x_prev).norm();
        let base = x_prev.norm();
        last_step = if base < 1e-30 { step } else { step / base };
        x_prev = x;
        if last_step <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    let cov = joseph_covariance(&prior.cov, &gain, &reg.s, r);
    cholesky_lower(&cov)?;
    let residual = reg.residual(&x_prev);
    Ok(MeefOutcome {
        posterior: GaussianBelief { mean: x_prev, cov },
        gain,
        iterations,
        converged,
        last_step,
        residual,
        criterion: used,
    })
}
