use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::OlsProblem;
use crate::concentration::{default_epsilon_grid, sv_tail_bound, talagrand_constant};
use crate::error::{invalid, Error, Result};
use crate::linalg::{ensure_square, operator_norm, singular_values, Matrix, Vector};
use crate::report::{tail_row, ExperimentReport};
use crate::rng::{derive_seed, gaussian_vector, stream_rng, Domain};
use crate::simulate::{LinearGaussianChain, NoiseSource};

/// Which singular value of `X₋` to track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SvSelector {
    Largest,
    Smallest,
    /// `σ_k`, 1-based in descending order.
    Index(usize),
}

impl SvSelector {
    fn pick(self, sv: &[f64]) -> Result<f64> {
        let i = match self {
            SvSelector::Largest => 0,
            SvSelector::Smallest => sv.len() - 1,
            SvSelector::Index(k) if k >= 1 && k <= sv.len() => k - 1,
            SvSelector::Index(k) => {
                return invalid(format!(
                    "σ_{k} requested but X₋ has {} singular values",
                    sv.len()
                ))
            }
        };
        Ok(sv[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvConfig {
    pub n_steps: usize,
    pub trials: usize,
    pub which: SvSelector,
    pub seed: u64,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    /// Trajectory lengths for the spread-versus-N diagnostic; always
    /// includes `n_steps`. Defaults to `{N/2, 3N/4, N}`.
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
}

/// Deviation of `σ_k(X₋)` from its ensemble mean against
/// `2·exp(−ε²/C)` with the transport constant of the regime of `‖A‖`.
///
/// Trajectories start at `x_0 = 0`. Trials that overflow are excluded and
/// counted. The centring mean is estimated from the same ensemble and its
/// standard error widens the bound as `ε − 3·se`.
pub fn singular_value_concentration_experiment(
    a: &Matrix,
    config: &SvConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    ensure_square(a, "A")?;
    let n = a.nrows();
    let big_n = config.n_steps;
    if big_n < 2 {
        return invalid("n_steps must be at least 2");
    }
    if config.trials < 2 {
        return invalid("trials must be at least 2");
    }
    let norm_a = operator_norm(a)?;
    let constant = talagrand_constant(norm_a, big_n)?;

    let mut grid: Vec<usize> = config
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![big_n / 2, 3 * big_n / 4]);
    grid.retain(|&m| m >= 2 && m < big_n);
    grid.push(big_n);
    grid.sort_unstable();
    grid.dedup();

    let chain = LinearGaussianChain::raw(a)?;
    let x0 = Vector::zeros(n);
    let outcomes: Vec<Option<Vec<f64>>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<Option<Vec<f64>>> {
            let noise = NoiseSource::Seeded {
                seed: config.seed,
                trial: trial as u64,
            };
            let traj = match chain.run(&x0, big_n, noise, false) {
                Ok(t) => t,
                Err(Error::Overflow { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            grid.iter()
                .map(|&m| {
                    let p = OlsProblem::from_trajectory(&traj.prefix(m), None)?;
                    config
                        .which
                        .pick(&singular_values(&p.x_minus)?.singular_values)
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some)
        })
        .collect::<Result<_>>()?;

    let kept: Vec<&Vec<f64>> = outcomes.iter().flatten().collect();
    let excluded = outcomes.len() - kept.len();
    if kept.len() < 2 {
        return Err(Error::Overflow {
            step: big_n,
            limit: crate::linalg::TOL.overflow,
            truncated: Box::new(crate::simulate::Trajectory {
                states: vec![x0],
                noises: None,
                seed: config.seed,
                trial: 0,
                spacing: 1,
                system_id: crate::simulate::system_fingerprint(a),
            }),
        });
    }
    let t = kept.len() as f64;
    let spread: Vec<(f64, f64)> = (0..grid.len())
        .map(|j| {
            let mean = kept.iter().map(|v| v[j]).sum::<f64>() / t;
            let var = kept.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (t - 1.0);
            (mean, var.sqrt())
        })
        .collect();
    let last = grid.len() - 1;
    let (mean, sd) = spread[last];
    let mean_se = sd / t.sqrt();
    let deviations: Vec<f64> = kept.iter().map(|v| v[last] - mean).collect();

    let epsilons = match &config.epsilons {
        Some(e) => {
            if e.is_empty() || e.iter().any(|v| !(*v > 0.0)) {
                return invalid("epsilons must be a non-empty list of positive numbers");
            }
            let mut e = e.clone();
            e.sort_by(f64::total_cmp);
            e
        }
        None => default_epsilon_grid(constant.value),
    };
    let mut rows = Vec::with_capacity(epsilons.len());
    let mut looseness = Vec::with_capacity(epsilons.len());
    for &eps in &epsilons {
        let hits = deviations.iter().filter(|d| d.abs() > eps).count();
        let bound = sv_tail_bound(eps, constant)?.bound_value;
        let slack = sv_tail_bound((eps - 3.0 * mean_se).max(0.0), constant)?.bound_value;
        let row = tail_row(eps, hits, kept.len(), Some(bound), Some(slack));
        looseness.push((row.empirical_tail > 0.0).then(|| bound / row.empirical_tail));
        rows.push(row);
    }

    Ok(ExperimentReport {
        experiment: "sv".into(),
        regime: constant.regime.label().into(),
        config: json!({
            "n_steps": big_n,
            "trials": config.trials,
            "which": config.which,
            "epsilons": epsilons,
            "n_grid": grid,
            "dimension": n,
        }),
        rows,
        seeds: vec![config.seed],
        diagnostics: json!({
            "operator_norm": norm_a,
            "transport_constant": constant.value,
            "metric": "l2",
            "mean": mean,
            "std": sd,
            "excluded_overflow": excluded,
            "bound_over_empirical": looseness,
            "spread_by_n": grid.iter().zip(&spread).map(|(m, (mu, s))| json!({
                "n_steps": m, "mean": mu, "std": s,
            })).collect::<Vec<_>>(),
        }),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSvReport {
    pub pairs: usize,
    /// Largest `max_k |σ_k(X) − σ_k(X′)| / ‖X − X′‖_F` observed.
    pub max_ratio: f64,
    pub passed: bool,
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64, stream: u64) -> Matrix {
    Matrix::from_column_slice(
        rows,
        cols,
        gaussian_vector(rows * cols, seed, stream).as_slice(),
    )
}

/// `max_k |σ_k(X) − σ_k(X′)| / ‖X − X′‖_F`, or 0 when `X = X′`.
pub fn singular_value_ratio(x: &Matrix, y: &Matrix) -> Result<f64> {
    let dist = (x - y).norm();
    if dist == 0.0 {
        return Ok(0.0);
    }
    let (sx, sy) = (singular_values(x)?, singular_values(y)?);
    let gap = sx
        .singular_values
        .iter()
        .zip(&sy.singular_values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(gap / dist)
}

/// Checks that every singular value of an `n × N` matrix moves by at most
/// the Frobenius size of a perturbation, over `trials` random pairs.
///
/// Perturbations cycle through dense Gaussian, rank-one and single-column
/// kinds with magnitude `10^u`, `u ∼ U[−3, 3]`.
pub fn lipschitz_sv_property_test(
    n: usize,
    n_steps: usize,
    trials: usize,
    seed: u64,
) -> Result<LipschitzSvReport> {
    if n == 0 || n_steps == 0 || trials == 0 {
        return invalid("n, n_steps and trials must be positive");
    }
    let mseed = derive_seed(seed, Domain::Matrix);
    let pseed = derive_seed(seed, Domain::Perturbation);
    let ratios: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let x = gaussian_matrix(n, n_steps, mseed, p);
            let mut rng = stream_rng(pseed, p);
            let scale = 10f64.powf(rng.random_range(-3.0..=3.0));
            let delta = match p % 3 {
                0 => gaussian_matrix(n, n_steps, pseed, (1 << 40) | p),
                1 => {
                    let g = gaussian_vector(n + n_steps, pseed, (1 << 40) | p);
                    let u = Vector::from_iterator(n, g.iter().take(n).copied());
                    let v = Vector::from_iterator(n_steps, g.iter().skip(n).copied());
                    u * v.transpose()
                }
                _ => {
                    let mut d = Matrix::zeros(n, n_steps);
                    let col = rng.random_range(0..n_steps);
                    d.set_column(col, &gaussian_vector(n, pseed, (1 << 40) | p));
                    d
                }
            };
            singular_value_ratio(&x, &(&x + delta * scale))
        })
        .collect::<Result<_>>()?;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(LipschitzSvReport {
        pairs: trials,
        max_ratio,
        passed: max_ratio <= 1.0 + 1e-9,
    })
}
