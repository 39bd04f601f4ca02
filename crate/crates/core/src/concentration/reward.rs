use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Vector;

/// 1-Lipschitz functions `r : ℝⁿ → ℝ` used as test statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum LipschitzReward {
    /// `x ↦ x_i`
    Coordinate { index: usize },
    /// `x ↦ min(‖x‖, radius)`
    ClippedNorm { radius: f64 },
    /// `x ↦ clamp(uᵀx/‖u‖, −cap, cap)`
    Affine { direction: Vec<f64>, cap: f64 },
}

impl Default for LipschitzReward {
    fn default() -> Self {
        LipschitzReward::Coordinate { index: 0 }
    }
}

impl LipschitzReward {
    pub fn validate(&self, dimension: usize) -> Result<()> {
        match self {
            LipschitzReward::Coordinate { index } if *index >= dimension => invalid(format!(
                "coordinate {index} out of range for dimension {dimension}"
            )),
            LipschitzReward::ClippedNorm { radius } if !(*radius > 0.0) => {
                invalid("clipped-norm radius must be positive")
            }
            LipschitzReward::Affine { direction, cap } => {
                if direction.len() != dimension {
                    return invalid(format!(
                        "affine direction has length {}, expected {dimension}",
                        direction.len()
                    ));
                }
                let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(norm > 0.0) || !norm.is_finite() {
                    return invalid("affine direction must be non-zero and finite");
                }
                if !(*cap > 0.0) {
                    return invalid("affine cap must be positive");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        match self {
            LipschitzReward::Coordinate { index } => x[*index],
            LipschitzReward::ClippedNorm { radius } => x.norm().min(*radius),
            LipschitzReward::Affine { direction, cap } => {
                let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = direction.iter().zip(x.iter()).map(|(u, v)| u * v).sum();
                (dot / norm).clamp(-cap, *cap)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rewards() -> Vec<LipschitzReward> {
        vec![
            LipschitzReward::Coordinate { index: 2 },
            LipschitzReward::ClippedNorm { radius: 1.5 },
            LipschitzReward::Affine {
                direction: vec![3.0, -1.0, 0.5, 2.0],
                cap: 0.8,
            },
        ]
    }

    proptest! {
        #[test]
        fn rewards_are_one_lipschitz(
            x in prop::collection::vec(-5.0f64..5.0, 4),
            y in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let (x, y) = (Vector::from_vec(x), Vector::from_vec(y));
            for r in rewards() {
                r.validate(4).unwrap();
                prop_assert!((r.eval(&x) - r.eval(&y)).abs() <= (&x - &y).norm() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn validation() {
        assert!(LipschitzReward::Coordinate { index: 4 }
            .validate(4)
            .is_err());
        assert!(LipschitzReward::Affine {
            direction: vec![0.0; 4],
            cap: 1.0
        }
        .validate(4)
        .is_err());
        let r: LipschitzReward =
            serde_json::from_str(r#"{"kind":"clipped-norm","radius":2.0}"#).unwrap();
        assert_eq!(r, LipschitzReward::ClippedNorm { radius: 2.0 });
    }
}
