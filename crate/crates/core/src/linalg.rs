//! Dense kernels the filters lean on: Cholesky factorization, SVD-based
//! pseudo-inverse and symmetry helpers.
//!
//! Everything here is a pure function of its inputs.

use nalgebra::SymmetricEigen;

use crate::{Error, Matrix, Result, Vector};

/// Relative singular-value cutoff used by [`pseudo_inverse`].
pub const DEFAULT_PINV_RTOL: f64 = 1e-12;

/// Relative tolerance on `|M - Mᵀ|_F / |M|_F` accepted by [`cholesky_lower`].
pub const SYMMETRY_RTOL: f64 = 1e-10;

pub fn check_finite_matrix(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn check_finite_vector(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn ensure_square(m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::dims(
            format!("square matrix, {} rows", m.nrows()),
            format!("{}x{}", m.nrows(), m.ncols()),
        ))
    }
}

/// Frobenius norm of `M - Mᵀ`.
pub fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = m[(i, j)] - m[(j, i)];
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn is_symmetric(m: &Matrix, rtol: f64) -> bool {
    m.is_square() && asymmetry(m) <= rtol * m.norm().max(f64::MIN_POSITIVE)
}

/// Returns `(M + Mᵀ) / 2`. The result is exactly symmetric.
pub fn symmetrize(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
///
/// Fails with [`Error::NotPositiveDefinite`] on the first pivot that is not
/// strictly positive. A filter step receiving this error must be abandoned.
pub fn cholesky_lower(m: &Matrix) -> Result<Matrix> {
    ensure_square(m)?;
    check_finite_matrix(m, "cholesky input")?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_RTOL * m.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let n = m.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { row: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            // lower triangle only; upper triangle of m is never read
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Cholesky factor of a symmetric matrix with nonpositive off-diagonal
/// entries and nonnegative row-sum excess `gap`, i.e. with diagonal
/// `gap_i + Σ_k |m_ik|`. Only the off-diagonal part of `m` is read.
///
/// Elimination tracks the excess of each Schur complement directly, so every
/// pivot is a sum of nonnegative terms and small gaps are resolved to full
/// relative accuracy where [`cholesky_lower`] would cancel to zero.
pub fn dominant_cholesky(m: &Matrix, gap: &Vector) -> Result<Matrix> {
    ensure_square(m)?;
    let n = m.nrows();
    if gap.len() != n {
        return Err(Error::dims(n, gap.len()));
    }
    check_finite_matrix(m, "cholesky input")?;
    check_finite_vector(gap, "row-sum excess")?;
    if gap.iter().any(|g| *g < 0.0) || (0..n).any(|i| (0..n).any(|j| i != j && m[(i, j)] > 0.0)) {
        return Err(Error::InvalidParameter(
            "need nonpositive off-diagonals and a nonnegative excess".into(),
        ));
    }
    let mut a = symmetrize(m);
    let mut v = gap.clone();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let pivot = v[j] + ((j + 1)..n).map(|k| -a[(j, k)]).sum::<f64>();
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { row: j, pivot });
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            l[(i, j)] = a[(i, j)] / root;
        }
        for i in (j + 1)..n {
            let aij = a[(i, j)];
            v[i] += -aij * v[j] / pivot;
            for k in (i + 1)..n {
                let upd = a[(i, k)] - aij * a[(j, k)] / pivot;
                a[(i, k)] = upd;
                a[(k, i)] = upd;
            }
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix with nonzero diagonal by forward
/// substitution.
pub fn lower_triangular_inverse(l: &Matrix) -> Result<Matrix> {
    ensure_square(l)?;
    let n = l.nrows();
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let mut s = rhs;
            for k in col..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            let d = l[(i, i)];
            if d == 0.0 {
                return Err(Error::SingularSystem);
            }
            inv[(i, col)] = s / d;
        }
    }
    Ok(inv)
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Thin SVD `m = U diag(s) Vᵀ` of a matrix with at least as many rows as
/// columns, by one-sided Jacobi rotations. Columns of `U` belonging to zero
/// singular values are left at zero.
fn jacobi_svd_tall(m: &Matrix) -> (Matrix, Vector, Matrix) {
    let cols = m.ncols();
    let mut u = m.clone();
    let mut v = Matrix::identity(cols, cols);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for target in [&mut u, &mut v] {
                    for i in 0..target.nrows() {
                        let a = target[(i, p)];
                        let b = target[(i, q)];
                        target[(i, p)] = c * a - s * b;
                        target[(i, q)] = s * a + c * b;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = Vector::zeros(cols);
    for j in 0..cols {
        let norm = u.column(j).norm();
        sigma[j] = norm;
        if norm > 0.0 {
            u.column_mut(j).unscale_mut(norm);
        }
    }
    (u, sigma, v)
}

/// Moore-Penrose pseudo-inverse through the singular value decomposition.
///
/// Singular values at or below `rtol * s_max` are treated as zero. The result
/// always exists; an all-zero input yields an all-zero transpose-shaped output.
pub fn pseudo_inverse_with_rtol(m: &Matrix, rtol: f64) -> Matrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Matrix::zeros(cols, rows);
    }
    if rows < cols {
        return pseudo_inverse_with_rtol(&m.transpose(), rtol).transpose();
    }
    let (u, sigma, v) = jacobi_svd_tall(m);
    let cutoff = rtol * sigma.max();
    let mut out = Matrix::zeros(cols, rows);
    for j in 0..cols {
        let s = sigma[j];
        if s > cutoff && s > 0.0 {
            out.ger(1.0 / s, &v.column(j), &u.column(j), 1.0);
        }
    }
    out
}

pub fn pseudo_inverse(m: &Matrix) -> Matrix {
    pseudo_inverse_with_rtol(m, DEFAULT_PINV_RTOL)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue_sym(m: &Matrix) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Induced matrix 1-norm (largest absolute column sum).
pub fn norm1(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_norm1(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Matrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}
