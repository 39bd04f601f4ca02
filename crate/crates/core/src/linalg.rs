//! Dense real linear algebra used by every other module.
//!
//! Matrices are plain `nalgebra::DMatrix<f64>`. The operations here validate
//! their inputs (finite entries, squareness, symmetry) and return
//! [`crate::Error::InvalidInput`] rather than panicking.
//!
//! No general non-symmetric eigendecomposition is offered. Spectral
//! structure comes from constructed systems (see [`crate::spectral`]); for an
//! arbitrary matrix only norm-based quantities are available.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Every numerical tolerance used in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative accuracy contract of [`operator_norm`].
    pub norm_relative: f64,
    /// Symmetry check, relative to `1 + max|m_ij|`.
    pub symmetry: f64,
    /// Residual contract of [`psd_sqrt`], relative to `1 + ‖m‖`.
    pub psd_sqrt_residual: f64,
    /// Negative eigenvalues down to `-psd_negative·(1 + ‖m‖)` are clamped to zero.
    pub psd_negative: f64,
    /// Moore–Penrose condition tolerance.
    pub penrose: f64,
    /// Lyapunov residual contract, relative to `‖P‖`.
    pub lyapunov_residual: f64,
    /// Doubling stops once the increment norm falls below this times `‖P‖`.
    pub lyapunov_increment: f64,
    pub lyapunov_max_doublings: usize,
    /// A radius estimate at or above `1 - stability_margin` counts as unstable.
    pub stability_margin: f64,
    /// Power used by the stability check in [`solve_lyapunov`].
    pub stability_power: usize,
    /// Norm threshold at which powering and simulation report overflow.
    pub overflow: f64,
    /// Invariant-subspace and projection identities.
    pub projection: f64,
    /// OLS refuses when `σ_n(X) ≤ ols_min_relative_sv · σ_1(X)`.
    pub ols_min_relative_sv: f64,
    /// `|‖A‖ - 1|` band that selects the marginal transport constant.
    pub marginal_band: f64,
    /// Trace entries above this are kept in log space.
    pub log_space_threshold: f64,
}

pub const TOL: Tolerances = Tolerances {
    norm_relative: 1e-10,
    symmetry: 1e-10,
    psd_sqrt_residual: 1e-8,
    psd_negative: 1e-10,
    penrose: 1e-8,
    lyapunov_residual: 1e-8,
    lyapunov_increment: 1e-14,
    lyapunov_max_doublings: 200,
    stability_margin: 1e-6,
    stability_power: 4096,
    overflow: 1e150,
    projection: 1e-8,
    ols_min_relative_sv: 1e-12,
    marginal_band: 1e-9,
    log_space_threshold: 1e100,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOL
    }
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return invalid(format!("{what}: empty matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return invalid(format!("{what}: non-finite entry"));
    }
    Ok(())
}

pub fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    ensure_finite(m, what)?;
    if !m.is_square() {
        return invalid(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        ));
    }
    Ok(())
}

fn ensure_symmetric(m: &Matrix, what: &str) -> Result<()> {
    ensure_square(m, what)?;
    let scale = 1.0 + m.amax();
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > TOL.symmetry * scale {
                return invalid(format!("{what}: matrix is not symmetric at ({i},{j})"));
            }
        }
    }
    Ok(())
}

/// `(m + mᵀ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Singular values plus, optionally, the factors `m = U·diag(σ)·Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdResult {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    #[serde(skip)]
    pub u: Option<Matrix>,
    #[serde(skip)]
    pub v_t: Option<Matrix>,
}

impl SvdResult {
    pub fn largest(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn smallest(&self) -> f64 {
        *self.singular_values.last().expect("non-empty spectrum")
    }

    /// σ_1/σ_min; infinite for a singular matrix.
    pub fn condition_number(&self) -> f64 {
        let s = self.smallest();
        if s == 0.0 {
            f64::INFINITY
        } else {
            self.largest() / s
        }
    }
}

fn svd_sorted(m: &Matrix, factors: bool) -> Result<SvdResult> {
    let svd =
        nalgebra::SVD::try_new(m.clone(), factors, factors, f64::EPSILON, 0).ok_or_else(|| {
            Error::Convergence {
                what: "singular value decomposition".into(),
                iterations: 0,
            }
        })?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let (u, v_t) = if factors {
        let u_raw = svd.u.expect("requested");
        let vt_raw = svd.v_t.expect("requested");
        let u = Matrix::from_fn(u_raw.nrows(), order.len(), |r, c| u_raw[(r, order[c])]);
        let v_t = Matrix::from_fn(order.len(), vt_raw.ncols(), |r, c| vt_raw[(order[r], c)]);
        (Some(u), Some(v_t))
    } else {
        (None, None)
    };
    Ok(SvdResult {
        singular_values,
        u,
        v_t,
    })
}

/// Spectral norm ‖m‖₂ = σ₁(m).
pub fn operator_norm(m: &Matrix) -> Result<f64> {
    ensure_finite(m, "operator_norm")?;
    if m.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    Ok(svd_sorted(m, false)?.largest())
}

/// Full singular spectrum in non-increasing order, without factors.
pub fn singular_values(m: &Matrix) -> Result<SvdResult> {
    ensure_finite(m, "singular_values")?;
    svd_sorted(m, false)
}

/// Full SVD with factors, spectrum in non-increasing order.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    ensure_finite(m, "svd")?;
    svd_sorted(m, true)
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    ensure_symmetric(m, "symmetric_eigenvalues")?;
    let mut ev: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &Matrix) -> Result<f64> {
    Ok(*symmetric_eigenvalues(m)?.last().expect("non-empty"))
}

/// Symmetric PSD square root via the symmetric eigendecomposition.
pub fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    ensure_symmetric(m, "psd_sqrt")?;
    let sym = symmetrize(m);
    let scale = 1.0 + operator_norm(&sym)?;
    let eig = SymmetricEigen::new(sym);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -TOL.psd_negative * scale {
            return invalid(format!("psd_sqrt: negative eigenvalue {v:e}"));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let s = q * Matrix::from_diagonal(&roots) * q.transpose();
    Ok(symmetrize(&s))
}

/// Moore–Penrose pseudo-inverse with the usual `max(r, c)·ε·σ₁` cutoff.
pub fn pseudo_inverse(m: &Matrix) -> Result<Matrix> {
    ensure_finite(m, "pseudo_inverse")?;
    let cutoff = m.nrows().max(m.ncols()) as f64 * f64::EPSILON;
    pseudo_inverse_with_cutoff(m, cutoff)
}

/// Pseudo-inverse discarding singular values at or below `relative_cutoff·σ₁`.
pub fn pseudo_inverse_with_cutoff(m: &Matrix, relative_cutoff: f64) -> Result<Matrix> {
    ensure_finite(m, "pseudo_inverse")?;
    let res = svd_sorted(m, true)?;
    let (u, v_t) = (res.u.as_ref().unwrap(), res.v_t.as_ref().unwrap());
    let threshold = relative_cutoff * res.largest();
    let mut p = Matrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in res.singular_values.iter().enumerate() {
        if s > threshold && s > 0.0 {
            p += (v_t.row(i).transpose() * u.column(i).transpose()) / s;
        }
    }
    Ok(p)
}

/// Estimate of the spectral radius from ‖A^k‖^{1/k}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    /// ‖A^k‖^{1/k} at `power`, or the last estimate before overflow.
    pub value: f64,
    /// Power at which `value` was taken.
    pub power: usize,
    /// The norm of a power exceeded [`Tolerances::overflow`].
    pub overflowed: bool,
}

/// Gelfand-formula upper estimate of ρ(a) at `k = max_power`.
///
/// Powers are formed by repeated squaring with the running matrix rescaled
/// to unit norm, so underflow never corrupts the estimate. This is an
/// estimate, converging to ρ(a) from above as the power grows; it is not an
/// eigenvalue computation. If an intermediate power has norm above
/// [`Tolerances::overflow`] the last finite estimate is returned with
/// `overflowed = true`.
pub fn gelfand_radius(a: &Matrix, max_power: usize) -> Result<RadiusEstimate> {
    ensure_square(a, "gelfand_radius")?;
    if max_power < 8 {
        return invalid("gelfand_radius: max_power must be at least 8");
    }
    let ln_limit = TOL.overflow.ln();

    // (normalized matrix, log scale, power)
    let mut base = a.clone();
    let mut base_ln = 0.0;
    let mut base_pow = 1usize;
    let mut acc: Option<(Matrix, f64, usize)> = None;
    let mut last = RadiusEstimate {
        value: operator_norm(a)?,
        power: 1,
        overflowed: false,
    };
    if last.value == 0.0 {
        return Ok(RadiusEstimate {
            value: 0.0,
            power: max_power,
            overflowed: false,
        });
    }

    let mut remaining = max_power;
    loop {
        if remaining & 1 == 1 {
            let (m, ln, p) = match acc.take() {
                None => (base.clone(), base_ln, base_pow),
                Some((m, ln, p)) => (&m * &base, ln + base_ln, p + base_pow),
            };
            let nrm = operator_norm(&m)?;
            if nrm == 0.0 {
                return Ok(RadiusEstimate {
                    value: 0.0,
                    power: p,
                    overflowed: false,
                });
            }
            let ln_norm = ln + nrm.ln();
            if ln_norm > ln_limit {
                return Ok(RadiusEstimate {
                    overflowed: true,
                    ..last
                });
            }
            last = RadiusEstimate {
                value: (ln_norm / p as f64).exp(),
                power: p,
                overflowed: false,
            };
            acc = Some((m / nrm, ln_norm, p));
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        let sq = &base * &base;
        let nrm = operator_norm(&sq)?;
        if nrm == 0.0 {
            return Ok(RadiusEstimate {
                value: 0.0,
                power: base_pow * 2,
                overflowed: false,
            });
        }
        let ln_norm = 2.0 * base_ln + nrm.ln();
        base_pow *= 2;
        if ln_norm > ln_limit {
            return Ok(RadiusEstimate {
                overflowed: true,
                ..last
            });
        }
        if acc.is_none() {
            last = RadiusEstimate {
                value: (ln_norm / base_pow as f64).exp(),
                power: base_pow,
                overflowed: false,
            };
        }
        base = sq / nrm;
        base_ln = ln_norm;
    }
    Ok(last)
}

fn ensure_stable(a: &Matrix) -> Result<()> {
    let est = gelfand_radius(a, TOL.stability_power)?;
    if est.overflowed || est.value >= 1.0 - TOL.stability_margin {
        return Err(Error::UnstableSystem {
            estimate: if est.overflowed {
                f64::INFINITY
            } else {
                est.value
            },
        });
    }
    Ok(())
}

/// Unique positive definite solution of `AᵀPA − P + I = 0`.
///
/// Computed by doubling: with `B = Aᵀ`, `P ← P + B P Bᵀ`, `B ← B²`, which
/// accumulates `Σ_k (Aᵀ)^k A^k` in `2^j` terms after `j` rounds.
///
/// Note that the stationary covariance of `x_{t+1} = A x_t + w_t` solves the
/// transposed equation; use [`stationary_covariance`] for that.
pub fn solve_lyapunov(a: &Matrix) -> Result<Matrix> {
    ensure_square(a, "solve_lyapunov")?;
    ensure_stable(a)?;
    lyapunov_doubling(a.transpose())
}

/// Stationary covariance `P∞ = Σ_k A^k (A^k)ᵀ`, the solution of `A P Aᵀ − P + I = 0`.
pub fn stationary_covariance(a: &Matrix) -> Result<Matrix> {
    ensure_square(a, "stationary_covariance")?;
    ensure_stable(a)?;
    lyapunov_doubling(a.clone())
}

fn lyapunov_doubling(mut b: Matrix) -> Result<Matrix> {
    let n = b.nrows();
    let mut p = Matrix::identity(n, n);
    for _ in 0..TOL.lyapunov_max_doublings {
        let inc = &b * &p * b.transpose();
        let inc_norm = operator_norm(&inc)?;
        p += inc;
        if inc_norm < TOL.lyapunov_increment * operator_norm(&p)? {
            return Ok(symmetrize(&p));
        }
        b = &b * &b;
        if !b.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::Convergence {
        what: "Lyapunov doubling".into(),
        iterations: TOL.lyapunov_max_doublings,
    })
}

/// `‖AᵀPA − P + I‖₂`.
pub fn lyapunov_residual(a: &Matrix, p: &Matrix) -> Result<f64> {
    let n = a.nrows();
    operator_norm(&(a.transpose() * p * a - p + Matrix::identity(n, n)))
}

/// `a^k` by sequential multiplication.
pub fn matrix_power(a: &Matrix, k: usize) -> Matrix {
    let n = a.nrows();
    let mut out = Matrix::identity(n, n);
    for _ in 0..k {
        out = &out * a;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn operator_norm_examples() {
        assert_relative_eq!(
            operator_norm(&Matrix::identity(3, 3)).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_eq!(operator_norm(&Matrix::zeros(4, 4)).unwrap(), 0.0);
        // closed-form 2x2 oracle for [[a, b], [0, a]]
        let (a, b) = (0.9_f64, 1.0_f64);
        let s1 = ((2.0 * a * a + b * b + b * (b * b + 4.0 * a * a).sqrt()) / 2.0).sqrt();
        let m = Matrix::from_row_slice(2, 2, &[a, b, 0.0, a]);
        assert_relative_eq!(operator_norm(&m).unwrap(), s1, max_relative = 1e-10);
        assert_relative_eq!(s1, 1.5296, epsilon = 1e-4);
    }

    #[test]
    fn rejects_non_finite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(matches!(operator_norm(&m), Err(Error::InvalidInput(_))));
        assert!(singular_values(&m).is_err());
    }

    #[test]
    fn singular_values_diag() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0, 2.0]));
        let s = singular_values(&m).unwrap().singular_values;
        assert_eq!(s.len(), 3);
        for (got, want) in s.iter().zip([3.0, 2.0, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
        let s = singular_values(&Matrix::identity(5, 5)).unwrap();
        assert!(s.singular_values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn svd_factors_reconstruct() {
        let m = Matrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let r = svd(&m).unwrap();
        let u = r.u.as_ref().unwrap();
        let vt = r.v_t.as_ref().unwrap();
        let rec = u * Matrix::from_diagonal(&Vector::from_vec(r.singular_values.clone())) * vt;
        assert!((rec - &m).norm() <= 1e-12 * r.largest());
        assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn psd_sqrt_examples() {
        let i3 = Matrix::identity(3, 3);
        assert!((psd_sqrt(&i3).unwrap() - &i3).amax() < 1e-14);
        let s = psd_sqrt(&(&i3 * 4.0)).unwrap();
        assert!((s - &i3 * 2.0).amax() < 1e-14);

        // [[2,1],[1,2]] has eigenpairs (3, (1,1)/√2), (1, (1,-1)/√2)
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r3 = 3f64.sqrt();
        let expect = Matrix::from_row_slice(
            2,
            2,
            &[
                (r3 + 1.0) / 2.0,
                (r3 - 1.0) / 2.0,
                (r3 - 1.0) / 2.0,
                (r3 + 1.0) / 2.0,
            ],
        );
        let s = psd_sqrt(&m).unwrap();
        assert!((&s - expect).amax() < 1e-12);
        assert!((&s * &s - m).amax() < 1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_bad_input() {
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(psd_sqrt(&asym), Err(Error::InvalidInput(_))));
        let neg = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -0.1]));
        assert!(matches!(psd_sqrt(&neg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pseudo_inverse_examples() {
        let i3 = Matrix::identity(3, 3);
        assert!((pseudo_inverse(&i3).unwrap() - &i3).amax() < 1e-14);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let p = pseudo_inverse(&d).unwrap();
        let want = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        assert!((p - want).amax() < 1e-14);
    }

    #[test]
    fn lyapunov_examples() {
        let p = solve_lyapunov(&Matrix::zeros(3, 3)).unwrap();
        assert!((p - Matrix::identity(3, 3)).amax() < 1e-15);
        let p = solve_lyapunov(&Matrix::from_element(1, 1, 0.5)).unwrap();
        assert_relative_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = Matrix::from_element(1, 1, 1.0);
        assert!(matches!(
            solve_lyapunov(&a),
            Err(Error::UnstableSystem { .. })
        ));
        let a = Matrix::from_element(1, 1, 1.5);
        assert!(matches!(
            stationary_covariance(&a),
            Err(Error::UnstableSystem { .. })
        ));
    }

    #[test]
    fn lyapunov_forms_differ_for_non_normal() {
        let a = Matrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.3]);
        let p = solve_lyapunov(&a).unwrap();
        assert!(lyapunov_residual(&a, &p).unwrap() <= 1e-8 * operator_norm(&p).unwrap());
        let s = stationary_covariance(&a).unwrap();
        let r = &a * &s * a.transpose() - &s + Matrix::identity(2, 2);
        assert!(r.amax() < 1e-12);
        assert!((p - s).amax() > 0.1);
    }

    #[test]
    fn gelfand_examples() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.2]));
        for k in [8, 13, 64, 4096] {
            let est = gelfand_radius(&d, k).unwrap();
            assert!(!est.overflowed);
            assert_relative_eq!(est.value, 0.5, max_relative = 1e-12);
        }
        let est = gelfand_radius(&Matrix::identity(4, 4), 100).unwrap();
        assert_relative_eq!(est.value, 1.0, max_relative = 1e-12);
        assert!(gelfand_radius(&d, 4).is_err());
    }

    #[test]
    fn gelfand_reports_overflow() {
        let a = Matrix::from_element(1, 1, 10.0);
        let est = gelfand_radius(&a, 4096).unwrap();
        assert!(est.overflowed);
        assert!(est.power < 4096);
        assert_relative_eq!(est.value, 10.0, max_relative = 1e-10);
    }

    #[test]
    fn gelfand_jordan_block_converges_from_above() {
        let n = 20;
        let a = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                0.9
            } else if j == i + 1 {
                1.0
            } else {
                0.0
            }
        });
        let e4096 = gelfand_radius(&a, 4096).unwrap().value;
        let e16384 = gelfand_radius(&a, 16384).unwrap().value;
        assert!(e4096 > 0.9 && e16384 > 0.9);
        assert!(e16384 < e4096);
        // at 4096 the polynomial factor of the 20-block still inflates the
        // estimate by ~0.027; 0.01 accuracy needs a power near 16384
        assert!((e4096 - 0.9).abs() < 0.03, "{e4096}");
        assert!((e16384 - 0.9).abs() < 0.01, "{e16384}");
    }
}
