use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{lambda_max, pseudo_inverse, symmetric_eigenvalues, symmetrize, Matrix, TOL};
use crate::report::log_grid;

/// Which closed form a tail bound or transport constant comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Independent draws from the stationary law.
    IidStationary,
    /// k̂-spaced sub-chain started at stationarity.
    Subtrajectory,
    /// Singular values of the data matrix, `‖A‖ < 1`.
    SvStable,
    /// Singular values of the data matrix, `‖A‖ = 1`.
    SvMarginal,
    /// Singular values of the data matrix, `‖A‖ > 1`.
    SvExplosive,
    /// Singular values of the k̂-spaced data matrix.
    SvSubtrajectory,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::IidStationary => "iid-stationary",
            Regime::Subtrajectory => "subtrajectory",
            Regime::SvStable => "sv-stable",
            Regime::SvMarginal => "sv-marginal",
            Regime::SvExplosive => "sv-explosive",
            Regime::SvSubtrajectory => "sv-subtrajectory",
        }
    }

    /// Metric on the path space the constant refers to.
    pub fn metric(self) -> Metric {
        match self {
            Regime::IidStationary | Regime::Subtrajectory => Metric::Sum,
            _ => Metric::L2,
        }
    }
}

/// Path-space metric: `Σ d(x_i, y_i)` or `√(Σ d(x_i, y_i)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Sum,
    L2,
}

/// Transport-entropy constant `C` of a process law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportConstant {
    pub value: f64,
    pub regime: Regime,
    pub metric: Metric,
}

/// A two-sided tail bound `2·exp(−·)` at one ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub epsilon: f64,
    /// Unclipped formula value.
    pub bound_value: f64,
    pub regime: Regime,
    /// Second closed form of the same bound, where one exists.
    pub alternate_form: Option<f64>,
}

impl TailBound {
    /// Value for display, clipped to the trivial bound 2.
    pub fn reported(&self) -> f64 {
        self.bound_value.min(2.0)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return invalid(format!("{name} must be positive and finite, got {v}"));
    }
    Ok(())
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) {
        return invalid(format!("{name} must be non-negative, got {v}"));
    }
    Ok(())
}

/// `2·exp(−N ε² / (2 λ_max(P∞)))` for `N` independent stationary draws.
pub fn iid_tail_bound(n_samples: usize, epsilon: f64, lambda_max_pinf: f64) -> Result<TailBound> {
    if n_samples == 0 {
        return invalid("n_samples must be positive");
    }
    non_negative("epsilon", epsilon)?;
    positive("lambda_max_pinf", lambda_max_pinf)?;
    Ok(TailBound {
        epsilon,
        bound_value: 2.0
            * (-(n_samples as f64) * epsilon * epsilon / (2.0 * lambda_max_pinf)).exp(),
        regime: Regime::IidStationary,
        alternate_form: None,
    })
}

fn subtraj_value(n: usize, epsilon: f64, norm_a_khat: f64, lambda_max_pinf: f64) -> f64 {
    let gap = 1.0 - norm_a_khat;
    2.0 * (-(n as f64) * epsilon * epsilon * gap * gap / (2.0 * lambda_max_pinf)).exp()
}

fn check_contraction(norm_a_khat: f64) -> Result<()> {
    if !(0.0..1.0).contains(&norm_a_khat) {
        return Err(Error::ContractViolation(format!(
            "‖A^k̂‖ must lie in [0, 1), got {norm_a_khat}"
        )));
    }
    Ok(())
}

/// `2·exp(−N ε² (1 − ‖A^k̂‖)² / (2 λ_max(P∞)))` for the k̂-spaced sub-chain.
///
/// The alternate form writes `1/λ_max(P∞)` as `λ_min(P∞⁻¹)`.
pub fn subtraj_tail_bound(
    n_blocks: usize,
    epsilon: f64,
    norm_a_khat: f64,
    lambda_max_pinf: f64,
) -> Result<TailBound> {
    if n_blocks == 0 {
        return invalid("n_blocks must be positive");
    }
    non_negative("epsilon", epsilon)?;
    positive("lambda_max_pinf", lambda_max_pinf)?;
    check_contraction(norm_a_khat)?;
    let gap = 1.0 - norm_a_khat;
    let value = subtraj_value(n_blocks, epsilon, norm_a_khat, lambda_max_pinf);
    let alt = 2.0
        * (-(n_blocks as f64) * epsilon * epsilon * gap * gap * (1.0 / lambda_max_pinf) / 2.0)
            .exp();
    agree(value, alt)?;
    Ok(TailBound {
        epsilon,
        bound_value: value,
        regime: Regime::Subtrajectory,
        alternate_form: Some(alt),
    })
}

/// [`subtraj_tail_bound`] with `λ_max(P∞)` and `λ_min(P∞⁻¹)` computed from `P∞`.
pub fn subtraj_tail_bound_from_covariance(
    n_blocks: usize,
    epsilon: f64,
    norm_a_khat: f64,
    p_inf: &Matrix,
) -> Result<TailBound> {
    let lmax = lambda_max(p_inf)?;
    let mut bound = subtraj_tail_bound(n_blocks, epsilon, norm_a_khat, lmax)?;
    let inv = symmetrize(&pseudo_inverse(p_inf)?);
    let lmin_inv = symmetric_eigenvalues(&inv)?[0];
    let gap = 1.0 - norm_a_khat;
    let alt = 2.0 * (-(n_blocks as f64) * epsilon * epsilon * gap * gap * lmin_inv / 2.0).exp();
    agree(bound.bound_value, alt)?;
    bound.alternate_form = Some(alt);
    Ok(bound)
}

fn agree(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::ContractViolation(format!(
            "equivalent tail forms disagree: {a:e} vs {b:e}"
        )));
    }
    Ok(())
}

/// Transport constant of `Law(x_0, …, x_{N−1})` under the ℓ² path metric,
/// started at the origin:
///
/// - `‖A‖ < 1`: `1/(1 − ‖A‖)²`
/// - `‖A‖ = 1` (within [`crate::linalg::Tolerances::marginal_band`]): `N(N+1)/(e − 1)`
/// - `‖A‖ > 1`: `‖A‖^N e (N+1)/(N − 1)`, which needs `N ≥ 2`.
pub fn talagrand_constant(norm_a: f64, n_steps: usize) -> Result<TransportConstant> {
    non_negative("norm_a", norm_a)?;
    if n_steps == 0 {
        return invalid("n_steps must be positive");
    }
    let n = n_steps as f64;
    let (value, regime) = if (norm_a - 1.0).abs() <= TOL.marginal_band {
        (
            n * (n + 1.0) / (std::f64::consts::E - 1.0),
            Regime::SvMarginal,
        )
    } else if norm_a < 1.0 {
        (1.0 / (1.0 - norm_a).powi(2), Regime::SvStable)
    } else {
        if n_steps < 2 {
            return invalid("explosive transport constant needs at least 2 steps");
        }
        let value = (n * norm_a.ln()).exp() * std::f64::consts::E * (n + 1.0) / (n - 1.0);
        (value, Regime::SvExplosive)
    };
    Ok(TransportConstant {
        value,
        regime,
        metric: Metric::L2,
    })
}

/// `‖Σ_k̂^{1/2}‖² / (1 − ‖A^k̂‖)²` for the k̂-spaced data matrix.
pub fn subtrajectory_talagrand_constant(
    sigma_khat_sqrt_norm: f64,
    norm_a_khat: f64,
) -> Result<TransportConstant> {
    non_negative("sigma_khat_sqrt_norm", sigma_khat_sqrt_norm)?;
    check_contraction(norm_a_khat)?;
    Ok(TransportConstant {
        value: sigma_khat_sqrt_norm.powi(2) / (1.0 - norm_a_khat).powi(2),
        regime: Regime::SvSubtrajectory,
        metric: Metric::L2,
    })
}

/// `2·exp(−ε²/C)` for deviations of a 1-Lipschitz function of the path.
pub fn sv_tail_bound(epsilon: f64, constant: TransportConstant) -> Result<TailBound> {
    non_negative("epsilon", epsilon)?;
    positive("transport constant", constant.value)?;
    Ok(TailBound {
        epsilon,
        bound_value: 2.0 * (-epsilon * epsilon / constant.value).exp(),
        regime: constant.regime,
        alternate_form: None,
    })
}

/// `λ̂^k C / (1 − λ̂²)`, the covariance bound at lag `k`.
pub fn correlation_decay_bound(lag: usize, contraction: f64, constant: f64) -> Result<f64> {
    check_contraction(contraction)?;
    Ok(contraction.powi(lag as i32) * constant / (1.0 - contraction * contraction))
}

/// `e^{−δ²k/4} + e^{−δ²n/4}`: each one-sided tail of `‖x_S‖/‖x‖` around `√(k/n)`.
pub fn projection_tail_bound(n: usize, k: usize, delta: f64) -> Result<f64> {
    if k == 0 || k > n {
        return invalid(format!("need 1 ≤ k ≤ n, got k={k}, n={n}"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    let d2 = delta * delta;
    Ok((-d2 * k as f64 / 4.0).exp() + (-d2 * n as f64 / 4.0).exp())
}

/// Twelve log-spaced ε where `2·exp(−ε²/scale)` runs from 1.9 down to 1e-4.
pub fn default_epsilon_grid(scale: f64) -> Vec<f64> {
    let at = |b: f64| (scale * (2.0 / b).ln()).sqrt();
    log_grid(at(1.9), at(1e-4), 12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn iid_examples() {
        let b = iid_tail_bound(100, 0.5, 4.0 / 3.0).unwrap();
        assert_relative_eq!(b.bound_value, 2.0 * (-9.375f64).exp(), max_relative = 1e-14);
        assert_eq!(iid_tail_bound(100, 1e6, 1.0).unwrap().bound_value, 0.0);
        assert!(iid_tail_bound(0, 0.5, 1.0).is_err());
    }

    #[test]
    fn subtraj_examples() {
        for eps in [0.0, 0.1, 0.7, 2.0] {
            let s = subtraj_tail_bound(50, eps, 0.0, 3.0).unwrap();
            let i = iid_tail_bound(50, eps, 3.0).unwrap();
            assert_eq!(s.bound_value, i.bound_value);
        }
        assert_eq!(
            subtraj_tail_bound(10, 0.0, 0.5, 2.0).unwrap().bound_value,
            2.0
        );
        assert!(matches!(
            subtraj_tail_bound(10, 0.1, 1.0, 2.0),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn covariance_form_agrees() {
        let p = Matrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = subtraj_tail_bound_from_covariance(20, 0.4, 0.3, &p).unwrap();
        assert_relative_eq!(
            b.bound_value,
            b.alternate_form.unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn talagrand_examples() {
        let c = talagrand_constant(0.5, 10).unwrap();
        assert_eq!(c.regime, Regime::SvStable);
        assert_relative_eq!(c.value, 4.0, max_relative = 1e-14);

        let c = talagrand_constant(1.0, 10).unwrap();
        assert_eq!(c.regime, Regime::SvMarginal);
        assert_relative_eq!(c.value, 64.0174377556259, max_relative = 1e-12);
        let c = talagrand_constant(1.0 + 1e-10, 10).unwrap();
        assert_eq!(c.regime, Regime::SvMarginal);

        let c = talagrand_constant(1.5, 10).unwrap();
        assert_eq!(c.regime, Regime::SvExplosive);
        assert_relative_eq!(c.value, 191.58312289230247, max_relative = 1e-12);
        assert!(talagrand_constant(1.5, 1).is_err());

        let c = subtrajectory_talagrand_constant(2.0, 0.5).unwrap();
        assert_relative_eq!(c.value, 16.0, max_relative = 1e-14);
        assert_eq!(c.metric, Metric::L2);
    }

    #[test]
    fn sv_bound_matches_stable_case() {
        // 2·exp(−ε²(1 − ‖A‖)²) for ‖A‖ = 0.5
        let c = talagrand_constant(0.5, 50).unwrap();
        let b = sv_tail_bound(1.5, c).unwrap();
        assert_relative_eq!(
            b.bound_value,
            2.0 * (-1.5f64 * 1.5 * 0.25).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn projection_examples() {
        let b = projection_tail_bound(1000, 250, 0.2).unwrap();
        assert_relative_eq!(b, 0.08213039855366129, max_relative = 1e-12);
        assert!(projection_tail_bound(100_000, 50_000, 0.999).unwrap() < 1e-50);
        assert!(projection_tail_bound(10, 11, 0.5).is_err());
        assert!(projection_tail_bound(10, 5, 1.0).is_err());
    }

    #[test]
    fn correlation_bound_scalar() {
        for k in 0..10 {
            let b = correlation_decay_bound(k, 0.5, 1.0).unwrap();
            assert_relative_eq!(b, 4.0 / 3.0 * 0.5f64.powi(k as i32), max_relative = 1e-14);
        }
    }

    #[test]
    fn epsilon_grid_spans_informative_range() {
        let g = default_epsilon_grid(0.3);
        assert_eq!(g.len(), 12);
        let bound = |e: f64| 2.0 * (-e * e / 0.3).exp();
        assert_relative_eq!(bound(g[0]), 1.9, max_relative = 1e-12);
        assert_relative_eq!(bound(g[11]), 1e-4, max_relative = 1e-9);
    }
}
