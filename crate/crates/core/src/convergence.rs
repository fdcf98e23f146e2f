//! Sufficient conditions for the fixed-point iteration to contract, and an
//! empirical check of the contraction itself.
//!
//! Writing the stationarity condition as `x = g(x) = M(x)⁻¹ N(x)` with
//!
//! ```text
//! M = τ Σ_k G_σ1(e_k) a_kᵀ a_k + (1-τ) Σ_j Σ_k G_σ2(e_j - e_k) (a_j - a_k)ᵀ a_j
//! N = τ Σ_k G_σ1(e_k) a_kᵀ z_k + (1-τ) Σ_j Σ_k G_σ2(e_j - e_k) (a_j - a_k)ᵀ z_j
//! ```
//!
//! (`a_k` the rows of `A`, `e = z - A x`), the map sends the 1-norm ball of
//! radius `β` into itself when `β > ν`, and is an `α`-contraction there once
//! `σ2` exceeds both thresholds `σ2*` and `σ2⁺`. The kernel widths are tied by
//! `σ1 = b σ2`.
//!
//! Nothing in the filter gates on these diagnostics.

use crate::linalg::{min_eigenvalue_sym, norm1, pseudo_inverse, vec_norm1};
use crate::meef::{gaussian_kernel, RegressionModel};
use crate::models::RngStream;
use crate::{Error, Matrix, Result, Vector};

const BRACKET: (f64, f64) = (1e-3, 1e6);
const BRACKET_MAX: f64 = 1e12;
const ROOT_RTOL: f64 = 1e-9;

fn row(a: &Matrix, k: usize) -> Vector {
    a.row(k).transpose()
}

/// `τ Σ_k w1_k a_kᵀa_k + (1-τ) Σ_jk w2_jk (a_j - a_k)ᵀ a_j`.
fn weighted_moment(
    a: &Matrix,
    tau: f64,
    w1: impl Fn(usize) -> f64,
    w2: impl Fn(usize, usize) -> f64,
) -> Matrix {
    let (big_n, n) = a.shape();
    let mut out = Matrix::zeros(n, n);
    for k in 0..big_n {
        if tau > 0.0 {
            let ak = row(a, k);
            out.ger(tau * w1(k), &ak, &ak, 1.0);
        }
    }
    if tau < 1.0 {
        for j in 0..big_n {
            let aj = row(a, j);
            for k in 0..big_n {
                if j == k {
                    continue;
                }
                let d = &aj - row(a, k);
                out.ger((1.0 - tau) * w2(j, k), &d, &aj, 1.0);
            }
        }
    }
    out
}

fn numerator(a: &Matrix, z: &Vector, tau: f64) -> f64 {
    let (big_n, n) = a.shape();
    let mut first = 0.0;
    let mut second = 0.0;
    for k in 0..big_n {
        first += vec_norm1(&row(a, k)) * z[k].abs();
    }
    for j in 0..big_n {
        for k in 0..big_n {
            second += vec_norm1(&(row(a, j) - row(a, k))) * z[j].abs();
        }
    }
    (n as f64).sqrt() * (tau * first + (1.0 - tau) * second)
}

fn positive_min_eig(m: &Matrix) -> Result<f64> {
    let lam = min_eigenvalue_sym(m);
    if lam > 0.0 && lam.is_finite() {
        Ok(lam)
    } else {
        Err(Error::DegenerateDenominator(lam))
    }
}

/// Radius `ν` below which no invariant 1-norm ball is guaranteed.
pub fn compute_nu(a: &Matrix, z: &Vector, tau: f64) -> Result<f64> {
    let denom = positive_min_eig(&weighted_moment(a, tau, |_| 1.0, |_, _| 1.0))?;
    Ok(numerator(a, z, tau) / denom)
}

/// `η1_k = β |a_k|₁ + |z_k|`.
pub fn eta1(a: &Matrix, z: &Vector, beta: f64) -> Vec<f64> {
    (0..a.nrows())
        .map(|k| beta * vec_norm1(&row(a, k)) + z[k].abs())
        .collect()
}

/// `η2_jk = β |a_j - a_k|₁ + |z_j - z_k|`.
pub fn eta2(a: &Matrix, z: &Vector, beta: f64) -> Matrix {
    let big_n = a.nrows();
    Matrix::from_fn(big_n, big_n, |j, k| {
        beta * vec_norm1(&(row(a, j) - row(a, k))) + (z[j] - z[k]).abs()
    })
}

/// Bound `φ(σ2)` on `|g(x)|₁` over the `β`-ball.
pub fn phi_curve(sigma2: f64, beta: f64, a: &Matrix, z: &Vector, tau: f64, kernel_ratio: f64) -> Result<f64> {
    let sigma1 = kernel_ratio * sigma2;
    let e1 = eta1(a, z, beta);
    let e2 = eta2(a, z, beta);
    let denom = positive_min_eig(&weighted_moment(
        a,
        tau,
        |k| gaussian_kernel(sigma1, e1[k]),
        |j, k| gaussian_kernel(sigma2, e2[(j, k)]),
    ))?;
    Ok(numerator(a, z, tau) / denom)
}

/// Bound `φ̃(σ2)` on `|∇g(x)|₁` over the `β`-ball.
pub fn varphi_curve(sigma2: f64, beta: f64, a: &Matrix, z: &Vector, tau: f64, kernel_ratio: f64) -> Result<f64> {
    let (big_n, n) = a.shape();
    let sqrt_n = (n as f64).sqrt();
    let sigma1 = kernel_ratio * sigma2;
    let e1 = eta1(a, z, beta);
    let e2 = eta2(a, z, beta);
    let mut total = 0.0;

    if tau > 0.0 {
        let mut num = 0.0;
        for k in 0..big_n {
            let ak = row(a, k);
            let aka = &ak * ak.transpose();
            num += e1[k] * vec_norm1(&ak) * (beta * norm1(&aka) + vec_norm1(&(&ak * z[k])));
        }
        let denom = positive_min_eig(&weighted_moment(
            a,
            1.0,
            |k| gaussian_kernel(sigma1, e1[k]),
            |_, _| 0.0,
        ))?;
        total += tau * sqrt_n * num / (sigma1 * sigma1 * denom);
    }
    if tau < 1.0 {
        let mut num = 0.0;
        for j in 0..big_n {
            let aj = row(a, j);
            for k in 0..big_n {
                let d = &aj - row(a, k);
                let daj = &d * aj.transpose();
                num += e2[(j, k)] * vec_norm1(&d) * (beta * norm1(&daj) + vec_norm1(&(&d * z[j])));
            }
        }
        let denom = positive_min_eig(&weighted_moment(
            a,
            0.0,
            |_| 0.0,
            |j, k| gaussian_kernel(sigma2, e2[(j, k)]),
        ))?;
        total += (1.0 - tau) * sqrt_n * num / (sigma2 * sigma2 * denom);
    }
    Ok(total)
}

/// Largest `σ` where `curve(σ)` crosses down through `target`, by a log-spaced
/// scan followed by bisection. Degenerate evaluations count as `+∞`.
fn largest_crossing(curve: impl Fn(f64) -> Result<f64>, target: f64) -> Result<f64> {
    let eval = |s: f64| curve(s).ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY);
    let (lo, mut hi) = BRACKET;
    while eval(hi) >= target {
        if hi >= BRACKET_MAX {
            return Err(Error::NoRootInBracket { lo, hi });
        }
        hi *= 10.0;
    }
    let steps = 60 * ((hi / lo).log10().ceil() as usize);
    let ratio = (hi / lo).powf(1.0 / steps as f64);
    let mut upper = hi;
    let mut lower = None;
    for i in 1..=steps {
        let s = hi / ratio.powi(i as i32);
        if eval(s) >= target {
            lower = Some(s);
            break;
        }
        upper = s;
    }
    let mut lower = lower.ok_or(Error::NoRootInBracket { lo, hi })?;
    while (upper - lower) > ROOT_RTOL * upper {
        let mid = 0.5 * (lower + upper);
        if eval(mid) >= target {
            lower = mid;
        } else {
            upper = mid;
        }
    }
    Ok(0.5 * (lower + upper))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    /// Root of `φ(σ2) = β`.
    pub sigma2_star: Result<f64>,
    /// Root of `φ̃(σ2) = α`.
    pub sigma2_plus: Result<f64>,
}

pub fn solve_thresholds(beta: f64, alpha: f64, a: &Matrix, z: &Vector, tau: f64, kernel_ratio: f64) -> Thresholds {
    Thresholds {
        sigma2_star: largest_crossing(|s| phi_curve(s, beta, a, z, tau, kernel_ratio), beta),
        sigma2_plus: largest_crossing(|s| varphi_curve(s, beta, a, z, tau, kernel_ratio), alpha),
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub nu: f64,
    pub beta: f64,
    pub alpha: f64,
    pub kernel_ratio: f64,
    pub tau: f64,
    pub sigma2: f64,
    pub sigma2_star: Option<f64>,
    pub sigma2_plus: Option<f64>,
    pub conditions_met: bool,
    pub eta1: Vec<f64>,
    pub eta2: Matrix,
}

/// Evaluates every quantity of the sufficient condition for one regression.
pub fn convergence_report(
    a: &Matrix,
    z: &Vector,
    tau: f64,
    sigma2: f64,
    beta: f64,
    alpha: f64,
    kernel_ratio: f64,
) -> Result<ConvergenceReport> {
    if !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0) || !(kernel_ratio > 0.0) {
        return Err(Error::InvalidParameter(
            "need 0 < alpha < 1, beta > 0 and a positive kernel ratio".into(),
        ));
    }
    let nu = compute_nu(a, z, tau)?;
    let th = solve_thresholds(beta, alpha, a, z, tau, kernel_ratio);
    let star = th.sigma2_star.ok();
    let plus = th.sigma2_plus.ok();
    let conditions_met = match (star, plus) {
        (Some(s), Some(p)) => beta > nu && sigma2 > s.max(p),
        _ => false,
    };
    Ok(ConvergenceReport {
        nu,
        beta,
        alpha,
        kernel_ratio,
        tau,
        sigma2,
        sigma2_star: star,
        sigma2_plus: plus,
        conditions_met,
        eta1: eta1(a, z, beta),
        eta2: eta2(a, z, beta),
    })
}

/// Fixed-point map of the criterion with explicit kernel widths.
#[derive(Debug, Clone)]
pub struct FixedPointMap<'a> {
    pub a: &'a Matrix,
    pub z: &'a Vector,
    pub tau: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl FixedPointMap<'_> {
    fn kernels(&self, x: &Vector) -> (Vector, Vec<f64>, Matrix) {
        let e = self.z - self.a * x;
        let big_n = e.len();
        let g1 = (0..big_n).map(|k| gaussian_kernel(self.sigma1, e[k])).collect();
        let g2 = Matrix::from_fn(big_n, big_n, |j, k| gaussian_kernel(self.sigma2, e[j] - e[k]));
        (e, g1, g2)
    }

    fn rhs(&self, w1: &dyn Fn(usize) -> f64, w2: &dyn Fn(usize, usize) -> f64) -> Vector {
        let (big_n, n) = self.a.shape();
        let mut out = Vector::zeros(n);
        for k in 0..big_n {
            if self.tau > 0.0 {
                out.axpy(self.tau * w1(k) * self.z[k], &row(self.a, k), 1.0);
            }
        }
        if self.tau < 1.0 {
            for j in 0..big_n {
                for k in 0..big_n {
                    if j != k {
                        let d = row(self.a, j) - row(self.a, k);
                        out.axpy((1.0 - self.tau) * w2(j, k) * self.z[j], &d, 1.0);
                    }
                }
            }
        }
        out
    }

    /// `g(x) = M(x)⁻¹ N(x)`.
    pub fn eval(&self, x: &Vector) -> Vector {
        let (_, g1, g2) = self.kernels(x);
        let m = weighted_moment(self.a, self.tau, |k| g1[k], |j, k| g2[(j, k)]);
        let nv = self.rhs(&|k| g1[k], &|j, k| g2[(j, k)]);
        pseudo_inverse(&m) * nv
    }

    /// Analytic Jacobian `∂g/∂x`; column `f` is
    /// `M⁻¹ (∂N/∂x_f - (∂M/∂x_f) g)`.
    pub fn jacobian(&self, x: &Vector) -> Matrix {
        let n = self.a.ncols();
        let (e, g1, g2) = self.kernels(x);
        let m = weighted_moment(self.a, self.tau, |k| g1[k], |j, k| g2[(j, k)]);
        let m_inv = pseudo_inverse(&m);
        let nv = self.rhs(&|k| g1[k], &|j, k| g2[(j, k)]);
        let g = &m_inv * nv;

        let s1sq = self.sigma1 * self.sigma1;
        let s2sq = self.sigma2 * self.sigma2;
        let mut jac = Matrix::zeros(n, n);
        for f in 0..n {
            // derivatives of the kernel weights along x_f, without the τ factors
            let mu1 = |k: usize| e[k] * self.a[(k, f)] * g1[k] / s1sq;
            let mu2 = |j: usize, k: usize| {
                (e[j] - e[k]) * (self.a[(j, f)] - self.a[(k, f)]) * g2[(j, k)] / s2sq
            };
            let dm = weighted_moment(self.a, self.tau, mu1, mu2);
            let dn = self.rhs(&mu1, &mu2);
            jac.set_column(f, &(&m_inv * (dn - dm * &g)));
        }
        jac
    }

    /// Central differences with step `h·max(1, |x_f|)`.
    pub fn jacobian_fd(&self, x: &Vector, h: f64) -> Matrix {
        let n = x.len();
        let mut jac = Matrix::zeros(n, n);
        for f in 0..n {
            let step = h * x[f].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[f] += step;
            xm[f] -= step;
            jac.set_column(f, &((self.eval(&xp) - self.eval(&xm)) / (2.0 * step)));
        }
        jac
    }
}

/// Outcome of probing the map at random points of the `β`-ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionCheck {
    pub max_jacobian_norm: f64,
    pub max_map_norm: f64,
    /// Largest column-wise `|analytic - fd| / max(1, |analytic|)` seen.
    pub max_fd_discrepancy: f64,
    pub samples: usize,
}

/// Uniform draw from the 1-norm ball of radius `beta`.
pub fn sample_l1_ball(n: usize, beta: f64, rng: &mut RngStream) -> Vector {
    let mut v = Vector::from_fn(n, |_, _| -(1.0 - rng.uniform()).ln());
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        if rng.uniform() < 0.5 {
            *x = -*x;
        }
    }
    let radius = beta * rng.uniform().powf(1.0 / n as f64);
    v *= radius / total;
    v
}

pub fn empirical_contraction_check(
    reg: &RegressionModel,
    tau: f64,
    sigma1: f64,
    sigma2: f64,
    beta: f64,
    samples: usize,
    seed: u64,
) -> ContractionCheck {
    contraction_check(&reg.a, &reg.z, tau, sigma1, sigma2, beta, samples, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn contraction_check(
    a: &Matrix,
    z: &Vector,
    tau: f64,
    sigma1: f64,
    sigma2: f64,
    beta: f64,
    samples: usize,
    seed: u64,
) -> ContractionCheck {
    let map = FixedPointMap { a, z, tau, sigma1, sigma2 };
    let mut rng = RngStream::new(seed);
    let mut out = ContractionCheck {
        max_jacobian_norm: 0.0,
        max_map_norm: 0.0,
        max_fd_discrepancy: 0.0,
        samples,
    };
    for _ in 0..samples {
        let x = sample_l1_ball(a.ncols(), beta, &mut rng);
        let jac = map.jacobian(&x);
        let fd = map.jacobian_fd(&x, 1e-6);
        for f in 0..jac.ncols() {
            let col = jac.column(f);
            let scale = col.amax().max(1.0);
            let d = (col - fd.column(f)).amax() / scale;
            out.max_fd_discrepancy = out.max_fd_discrepancy.max(d);
        }
        out.max_jacobian_norm = out.max_jacobian_norm.max(norm1(&jac));
        out.max_map_norm = out.max_map_norm.max(vec_norm1(&map.eval(&x)));
    }
    out
}
