use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    ensure_finite, ensure_square, matrix_power, operator_norm, psd_sqrt, stationary_covariance,
    symmetrize, Matrix, Vector,
};
use crate::simulate::subtrajectory_covariance;

/// `W₂(N(m1, c1), N(m2, c2))`:
/// `√(‖m1 − m2‖² + Tr(c1 + c2 − 2 (c1^{1/2} c2 c1^{1/2})^{1/2}))`.
pub fn wasserstein_gaussians(m1: &Vector, c1: &Matrix, m2: &Vector, c2: &Matrix) -> Result<f64> {
    let n = m1.len();
    if m2.len() != n || c1.shape() != (n, n) || c2.shape() != (n, n) {
        return invalid("Gaussian parameters have mismatched dimensions");
    }
    ensure_finite(c1, "c1")?;
    ensure_finite(c2, "c2")?;
    let r1 = psd_sqrt(c1)?;
    let cross = psd_sqrt(&symmetrize(&(&r1 * c2 * &r1)))?;
    let trace = c1.trace() + c2.trace() - 2.0 * cross.trace();
    let mean = (m1 - m2).norm_squared();
    Ok((mean + trace.max(0.0)).sqrt())
}

/// `W₂(N(mean, P − deficit), N(0, P))` for PSD `deficit ≤ P`, accurate to
/// working precision relative to the result even when it is far below
/// `√(ε·Tr P)`.
///
/// With `M = P^{1/2} D P^{1/2}` and `Δ = P − (P² − M)^{1/2}`, the covariance
/// part is `2 Tr Δ − Tr D`. Splitting `Δ = Δ₁ + R` with `PΔ₁ + Δ₁P = M` gives
/// `2 Tr Δ₁ = Tr D` exactly, so the covariance part is `2 Tr R` where
/// `PR + RP = (Δ₁ + R)²`, solved by fixed-point iteration in the eigenbasis
/// of `P`. Large deficits fall back to [`wasserstein_gaussians`].
pub fn wasserstein_to_stationary(mean: &Vector, deficit: &Matrix, p: &Matrix) -> Result<f64> {
    let n = p.nrows();
    if mean.len() != n || deficit.shape() != (n, n) || p.shape() != (n, n) {
        return invalid("Gaussian parameters have mismatched dimensions");
    }
    ensure_finite(deficit, "deficit")?;
    let eig = symmetrize(p).symmetric_eigen();
    let pv = eig.eigenvalues.clone();
    let pmin = pv.min();
    if !(pmin > 0.0) {
        return invalid("stationary covariance must be positive definite");
    }
    let q = &eig.eigenvectors;
    let d = symmetrize(&(q.transpose() * deficit * q));
    let sylvester = |x: &Matrix| Matrix::from_fn(n, n, |i, j| x[(i, j)] / (pv[i] + pv[j]));
    let m = Matrix::from_fn(n, n, |i, j| pv[i].sqrt() * d[(i, j)] * pv[j].sqrt());
    let delta1 = sylvester(&m);
    let fallback = || {
        let c1 = symmetrize(&(p - deficit));
        wasserstein_gaussians(mean, &c1, &Vector::zeros(n), p)
    };
    if operator_norm(&delta1)? > 0.25 * pmin {
        return fallback();
    }
    let mut r = Matrix::zeros(n, n);
    for _ in 0..200 {
        let full = &delta1 + &r;
        let next = sylvester(&(&full * &full));
        let change = (&next - &r).norm();
        r = next;
        if change <= 1e-15 * r.norm() {
            let bures = (2.0 * r.trace()).max(0.0);
            return Ok((mean.norm_squared() + bures).sqrt());
        }
    }
    fallback()
}

/// One step count `m` of the mixing check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub m: usize,
    /// `W₂(Law(x_{k̂m} | x_0), N(0, P∞))`, from the exact Gaussian law.
    pub w2_exact: f64,
    pub bound: f64,
    pub bound_holds: bool,
    /// `w2_exact(m+1) / w2_exact(m)`; `None` on the last row.
    pub contraction_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub k_hat: usize,
    /// `‖A^k̂‖`
    pub contraction: f64,
    pub rows: Vec<MixingRow>,
    /// Step counts where the closed-form bound failed.
    pub violations: Vec<usize>,
}

/// Compares the exact distance to stationarity after `m` sub-chain steps
/// with `λ^m √(λ‖x_0‖ + Tr((Σ_k̂^{1/2} − P∞^{1/2})²))`, `λ = ‖A^k̂‖`.
///
/// The law after `m` steps is `N(A^{k̂m} x_0, Σ_{k̂m})`.
pub fn mixing_bound_check(
    a: &Matrix,
    k_hat: usize,
    x0: &Vector,
    m_max: usize,
) -> Result<MixingReport> {
    ensure_square(a, "A")?;
    let n = a.nrows();
    if x0.len() != n {
        return invalid(format!("x0 has length {}, expected {n}", x0.len()));
    }
    if k_hat == 0 || m_max == 0 {
        return invalid("k_hat and m_max must be positive");
    }
    let step = matrix_power(a, k_hat);
    let lambda = operator_norm(&step)?;
    if lambda >= 1.0 {
        return Err(Error::ContractViolation(format!(
            "‖A^{k_hat}‖ = {lambda:.6} is not below 1"
        )));
    }
    let p_inf = stationary_covariance(a)?;
    let sigma = subtrajectory_covariance(a, k_hat)?.covariance;
    let diff = psd_sqrt(&sigma)? - psd_sqrt(&p_inf)?;
    let shape = (&diff * &diff).trace();
    let root = (lambda * x0.norm() + shape).sqrt();

    // Σ_{k̂m} = P∞ − A^{k̂m} P∞ (A^{k̂m})ᵀ, so the deficit is formed directly
    let mut w2 = Vec::with_capacity(m_max);
    let mut power = Matrix::identity(n, n);
    for _ in 1..=m_max {
        power = &step * &power;
        let mean = &power * x0;
        let deficit = symmetrize(&(&power * &p_inf * power.transpose()));
        w2.push(wasserstein_to_stationary(&mean, &deficit, &p_inf)?);
    }

    let mut rows = Vec::with_capacity(m_max);
    let mut violations = Vec::new();
    for (i, &w) in w2.iter().enumerate() {
        let m = i + 1;
        let bound = lambda.powi(m as i32) * root;
        let holds = w <= bound * (1.0 + 1e-9) + 1e-12;
        if !holds {
            log::warn!("mixing bound fails at m={m}: W2={w:e} > {bound:e}");
            violations.push(m);
        }
        rows.push(MixingRow {
            m,
            w2_exact: w,
            bound,
            bound_holds: holds,
            contraction_ratio: w2.get(i + 1).filter(|_| w > 0.0).map(|next| next / w),
        });
    }
    Ok(MixingReport {
        k_hat,
        contraction: lambda,
        rows,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_example() {
        let z = Vector::zeros(1);
        let w = wasserstein_gaussians(&z, &scalar(4.0 / 3.0), &z, &scalar(1.0)).unwrap();
        assert_relative_eq!(w, 2.0 / 3f64.sqrt() - 1.0, max_relative = 1e-12);
        assert!((w - 0.15470).abs() < 1e-5);
    }

    #[test]
    fn identical_laws_have_zero_distance() {
        let c = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = Vector::from_vec(vec![1.0, 2.0]);
        assert!(wasserstein_gaussians(&m, &c, &m, &c).unwrap() < 1e-7);
        let m2 = Vector::from_vec(vec![4.0, 6.0]);
        assert_relative_eq!(
            wasserstein_gaussians(&m, &c, &m2, &c).unwrap(),
            5.0,
            max_relative = 1e-7
        );
    }

    #[test]
    fn commuting_covariances() {
        // diagonal case reduces to Σ (√a_i − √b_i)²
        let c1 = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let c2 = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0]));
        let z = Vector::zeros(2);
        assert_relative_eq!(
            wasserstein_gaussians(&z, &c1, &z, &c2).unwrap(),
            5f64.sqrt(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn stationary_form_matches_general_formula() {
        let p = Matrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let mean = Vector::from_vec(vec![0.01, -0.02]);
        for scale in [1e-1, 1e-2, 1e-3] {
            let d = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]) * scale;
            let fast = wasserstein_to_stationary(&mean, &d, &p).unwrap();
            let slow = wasserstein_gaussians(&mean, &(&p - &d), &Vector::zeros(2), &p).unwrap();
            assert_relative_eq!(fast, slow, max_relative = 1e-6);
        }
    }

    #[test]
    fn stationary_form_scalar_is_exact_for_tiny_deficits() {
        // W₂ = |√(p − d) − √p| for scalars, = d/(√(p − d) + √p) without cancellation
        let p = Matrix::from_element(1, 1, 4.0 / 3.0);
        for d in [1e-4, 1e-10, 1e-20] {
            let w =
                wasserstein_to_stationary(&Vector::zeros(1), &Matrix::from_element(1, 1, d), &p)
                    .unwrap();
            let exact = d / ((4.0f64 / 3.0 - d).sqrt() + (4.0f64 / 3.0).sqrt());
            assert_relative_eq!(w, exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn scalar_mixing_rows() {
        let report = mixing_bound_check(&scalar(0.5), 1, &Vector::from_vec(vec![2.0]), 8).unwrap();
        assert_eq!(report.rows.len(), 8);
        // exact law after m steps: N(0.5^m·2, (4/3)(1 − 0.25^m))
        for row in &report.rows {
            let m = row.m as i32;
            let mean = 2.0 * 0.5f64.powi(m);
            let var = 4.0 / 3.0 * (1.0 - 0.25f64.powi(m));
            let expected = (mean * mean + (var.sqrt() - (4.0f64 / 3.0).sqrt()).powi(2)).sqrt();
            assert_relative_eq!(row.w2_exact, expected, max_relative = 1e-8);
            if let Some(r) = row.contraction_ratio {
                assert!(r <= 0.5 + 1e-6);
            }
        }
    }

    #[test]
    fn rejects_non_contractive_spacing() {
        let a = Matrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
        assert!(matches!(
            mixing_bound_check(&a, 1, &Vector::zeros(2), 3),
            Err(Error::ContractViolation(_))
        ));
    }
}
