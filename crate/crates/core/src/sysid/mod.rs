//! Least-squares identification of `A` from one trajectory, its error
//! diagnostics and the singular-value experiments.

mod case_study;
mod experiments;

pub use case_study::{
    case_study_matrix, ols_case_study, CaseStudyConfig, CaseStudyRecord, CaseStudyReport,
    CaseStudySummary, MAX_CASE_STUDY_STEPS,
};
pub use experiments::{
    lipschitz_sv_property_test, singular_value_concentration_experiment, singular_value_ratio,
    LipschitzSvReport, SvConfig, SvSelector,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    ensure_finite, operator_norm, pseudo_inverse, pseudo_inverse_with_cutoff, singular_values,
    Matrix, TOL,
};
use crate::simulate::Trajectory;

/// Data matrices `X₋ = [x_0 … x_{N−1}]`, `X₊ = [x_1 … x_N]` and, when known,
/// the noise `E` with `X₊ = A X₋ + E`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsProblem {
    pub x_minus: Matrix,
    pub x_plus: Matrix,
    pub noise_matrix: Option<Matrix>,
    pub true_a: Option<Matrix>,
}

impl OlsProblem {
    pub fn new(
        x_minus: Matrix,
        x_plus: Matrix,
        noise_matrix: Option<Matrix>,
        true_a: Option<Matrix>,
    ) -> Result<Self> {
        if x_minus.shape() != x_plus.shape() {
            return invalid(format!(
                "X₋ is {:?} but X₊ is {:?}",
                x_minus.shape(),
                x_plus.shape()
            ));
        }
        if x_minus.ncols() == 0 {
            return invalid("need at least one transition");
        }
        if let Some(e) = &noise_matrix {
            if e.shape() != x_minus.shape() {
                return invalid("noise matrix shape differs from the data matrices");
            }
        }
        if let Some(a) = &true_a {
            let n = x_minus.nrows();
            if a.shape() != (n, n) {
                return invalid(format!("true A must be {n}×{n}"));
            }
        }
        ensure_finite(&x_minus, "X₋")?;
        ensure_finite(&x_plus, "X₊")?;
        Ok(Self {
            x_minus,
            x_plus,
            noise_matrix,
            true_a,
        })
    }

    /// Problem from a raw-system trajectory; noise is taken when retained.
    pub fn from_trajectory(traj: &Trajectory, true_a: Option<&Matrix>) -> Result<Self> {
        if traj.spacing != 1 {
            return invalid("OLS expects a trajectory of the raw system");
        }
        let n_steps = traj.len();
        if n_steps == 0 {
            return invalid("trajectory has no transitions");
        }
        let x_minus = Matrix::from_columns(&traj.states[..n_steps]);
        let x_plus = Matrix::from_columns(&traj.states[1..]);
        let noise = traj.noises.as_ref().map(|e| Matrix::from_columns(e));
        Self::new(x_minus, x_plus, noise, true_a.cloned())
    }

    pub fn dimension(&self) -> usize {
        self.x_minus.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.x_minus.ncols()
    }
}

/// `Â = X₊ X₋ᵀ (X₋ X₋ᵀ)⁻¹`, computed as `X₊ X₋†`.
///
/// Refuses when `σ_n(X₋) ≤ 1e-12·σ₁(X₋)`.
pub fn ols_estimate(p: &OlsProblem) -> Result<Matrix> {
    let sv = singular_values(&p.x_minus)?;
    let n = p.dimension();
    let smallest = if p.n_steps() < n {
        0.0
    } else {
        sv.singular_values[n - 1]
    };
    if !(smallest > TOL.ols_min_relative_sv * sv.largest()) {
        return Err(Error::IllPosed {
            smallest,
            largest: sv.largest(),
            singular_values: sv.singular_values,
        });
    }
    Ok(&p.x_plus * pseudo_inverse(&p.x_minus)?)
}

/// `X₊ X₋†` keeping only singular values above `relative_cutoff·σ₁`, with
/// no conditioning check.
pub fn ols_estimate_truncated(p: &OlsProblem, relative_cutoff: f64) -> Result<Matrix> {
    Ok(&p.x_plus * pseudo_inverse_with_cutoff(&p.x_minus, relative_cutoff)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsReport {
    pub a_hat: Matrix,
    /// `‖A − Â‖₂`, computed directly.
    pub error_opnorm: f64,
    /// `‖E X₋†‖₂`.
    pub error_identity: f64,
    /// `σ₁(E) κ(X₋) / σ_n(X₋)`.
    pub error_upper_bound: f64,
    pub sigma1_xminus: f64,
    pub sigman_xminus: f64,
    pub kappa_xminus: f64,
    #[serde(rename = "sigma1_E")]
    pub sigma1_e: f64,
    pub n_steps: usize,
    pub init_mode: String,
}

impl OlsReport {
    pub fn bound_holds(&self) -> bool {
        self.error_opnorm <= self.error_upper_bound + 1e-6
    }
}

/// Error of [`ols_estimate`] with the exact identity `A − Â = −E X₋†` checked
/// to 1e-8 relative and the condition-number bound evaluated.
pub fn ols_error_report(p: &OlsProblem, init_mode: &str) -> Result<OlsReport> {
    let (Some(a), Some(e)) = (&p.true_a, &p.noise_matrix) else {
        return invalid("error report needs the true A and the noise matrix");
    };
    let a_hat = ols_estimate(p)?;
    let error = operator_norm(&(a - &a_hat))?;
    let identity = operator_norm(&(e * pseudo_inverse(&p.x_minus)?))?;
    let scale = error.max(identity);
    if (error - identity).abs() > 1e-8 * scale + 1e-12 * (1.0 + operator_norm(a)?) {
        return Err(Error::ContractViolation(format!(
            "‖A − Â‖ = {error:e} differs from ‖E X₋†‖ = {identity:e}"
        )));
    }
    let sv = singular_values(&p.x_minus)?;
    let n = p.dimension();
    let (s1, sn) = (sv.largest(), sv.singular_values[n - 1]);
    let sigma1_e = operator_norm(e)?;
    let kappa = s1 / sn;
    Ok(OlsReport {
        a_hat,
        error_opnorm: error,
        error_identity: identity,
        error_upper_bound: sigma1_e * kappa / sn,
        sigma1_xminus: s1,
        sigman_xminus: sn,
        kappa_xminus: kappa,
        sigma1_e,
        n_steps: p.n_steps(),
        init_mode: init_mode.to_string(),
    })
}
