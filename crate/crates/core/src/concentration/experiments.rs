use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::bounds::{
    correlation_decay_bound, default_epsilon_grid, iid_tail_bound, projection_tail_bound,
    subtraj_tail_bound,
};
use super::reward::LipschitzReward;
use crate::error::{invalid, Error, Result};
use crate::linalg::{
    ensure_square, lambda_max, matrix_power, operator_norm, psd_sqrt, stationary_covariance, Matrix,
};
use crate::report::{tail_row, ExperimentReport};
use crate::rng::{derive_seed, gaussian_vector, Domain};
use crate::simulate::{stationary_draw, subtrajectory_covariance, LinearGaussianChain};
use crate::spectral::InvariantDecomposition;

/// Tail probabilities from fewer trials than this are refused.
pub const MIN_TAIL_TRIALS: usize = 100;

const BASELINE_MIN_DRAWS: usize = 1_000_000;
const BASELINE_CHUNK: usize = 4096;

/// How the `N` averaged states are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Independent draws from the stationary law.
    Iid,
    /// Every `s`-th state of one trajectory started at stationarity.
    Spacing(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicConfig {
    pub n_blocks: usize,
    pub sampling: Sampling,
    pub trials: usize,
    /// Defaults to [`default_epsilon_grid`] for the applicable bound.
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    pub seed: u64,
    /// Baseline size for `μ∞(r)`; defaults to `max(100·trials, 10⁶)`.
    #[serde(default)]
    pub baseline_draws: Option<usize>,
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TAIL_TRIALS {
        return Err(Error::Refused(format!(
            "{trials} trials is too few for tail estimates (minimum {MIN_TAIL_TRIALS})"
        )));
    }
    Ok(())
}

fn sorted_epsilons(eps: &[f64]) -> Result<Vec<f64>> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return invalid("epsilons must be a non-empty list of positive numbers");
    }
    let mut eps = eps.to_vec();
    eps.sort_by(f64::total_cmp);
    Ok(eps)
}

/// Mean and standard error of `r` under `N(0, P∞)`.
fn stationary_baseline(
    p_sqrt: &Matrix,
    reward: &LipschitzReward,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let seed = derive_seed(seed, Domain::Baseline);
    let chunks = draws.div_ceil(BASELINE_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let (mut s, mut s2) = (0.0, 0.0);
            for i in c * BASELINE_CHUNK..((c + 1) * BASELINE_CHUNK).min(draws) {
                let v = reward.eval(&stationary_draw(p_sqrt, seed, i as u64));
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = draws as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Tail of `|(1/N) Σ r(x_i) − μ∞(r)|` over independent trials, against
/// the independent-sampling bound or the sub-trajectory bound.
///
/// With `Spacing(s)` the bound needs `‖A^s‖ < 1`; otherwise rows carry no
/// bound. `μ∞(r)` comes from an independent stationary baseline and its
/// standard error widens each bound: the bound is evaluated at
/// `ε − 3·se_baseline`.
pub fn ergodic_average_experiment(
    a: &Matrix,
    reward: &LipschitzReward,
    config: &ErgodicConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    ensure_square(a, "A")?;
    let n = a.nrows();
    reward.validate(n)?;
    check_trials(config.trials)?;
    if config.n_blocks == 0 {
        return invalid("n_blocks must be positive");
    }
    let p_inf = stationary_covariance(a)?;
    let p_sqrt = psd_sqrt(&p_inf)?;
    let lmax = lambda_max(&p_inf)?;
    let seed = config.seed;
    let n_blocks = config.n_blocks;

    let draws = config
        .baseline_draws
        .unwrap_or_else(|| (100 * config.trials).max(BASELINE_MIN_DRAWS));
    if draws < 2 {
        return invalid("baseline_draws must be at least 2");
    }
    let (mu, mu_se) = stationary_baseline(&p_sqrt, reward, draws, seed);

    let (chain, contraction) = match config.sampling {
        Sampling::Iid => (None, 0.0),
        Sampling::Spacing(s) => {
            let chain = LinearGaussianChain::spaced(a, s)?;
            let c = operator_norm(chain.transition())?;
            (Some(chain), c)
        }
    };
    let bound_at = |eps: f64| -> Result<Option<f64>> {
        match config.sampling {
            Sampling::Iid => Ok(Some(iid_tail_bound(n_blocks, eps, lmax)?.bound_value)),
            Sampling::Spacing(_) if contraction < 1.0 => Ok(Some(
                subtraj_tail_bound(n_blocks, eps, contraction, lmax)?.bound_value,
            )),
            Sampling::Spacing(_) => Ok(None),
        }
    };
    let regime = match config.sampling {
        Sampling::Iid => "iid-stationary",
        Sampling::Spacing(_) if contraction < 1.0 => "subtrajectory",
        Sampling::Spacing(_) => "unbounded",
    };

    let init_seed = derive_seed(seed, Domain::Initial);
    let deviations: Vec<f64> = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<f64> {
            let mut sum = 0.0;
            match &chain {
                None => {
                    let base = (trial * n_blocks) as u64;
                    for i in 0..n_blocks as u64 {
                        sum += reward.eval(&stationary_draw(&p_sqrt, init_seed, base + i));
                    }
                }
                Some(chain) => {
                    let x0 = stationary_draw(&p_sqrt, seed, trial as u64);
                    chain.walk(&x0, n_blocks, seed, trial as u64, |_, x| {
                        sum += reward.eval(x)
                    })?;
                }
            }
            Ok(sum / n_blocks as f64 - mu)
        })
        .collect::<Result<_>>()?;

    let epsilons = match &config.epsilons {
        Some(e) => sorted_epsilons(e)?,
        None => {
            let scale = match config.sampling {
                Sampling::Iid => 2.0 * lmax / n_blocks as f64,
                Sampling::Spacing(_) if contraction < 1.0 => {
                    2.0 * lmax / (n_blocks as f64 * (1.0 - contraction).powi(2))
                }
                Sampling::Spacing(_) => {
                    let var =
                        deviations.iter().map(|d| d * d).sum::<f64>() / deviations.len() as f64;
                    (2.0 * var).max(f64::MIN_POSITIVE)
                }
            };
            default_epsilon_grid(scale)
        }
    };

    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in &epsilons {
        let hits = deviations.iter().filter(|d| d.abs() > eps).count();
        let bound = bound_at(eps)?;
        let slack = bound_at((eps - 3.0 * mu_se).max(0.0))?;
        rows.push(tail_row(eps, hits, config.trials, bound, slack));
    }

    let var = deviations.iter().map(|d| d * d).sum::<f64>() / deviations.len() as f64;
    let spacing = match config.sampling {
        Sampling::Iid => 0,
        Sampling::Spacing(s) => s,
    };
    Ok(ExperimentReport {
        experiment: "ergodic".into(),
        regime: regime.into(),
        config: json!({
            "n_blocks": n_blocks,
            "sampling": config.sampling,
            "trials": config.trials,
            "epsilons": epsilons,
            "reward": reward,
            "baseline_draws": draws,
            "dimension": n,
        }),
        rows,
        seeds: vec![seed],
        diagnostics: json!({
            "baseline_mean": mu,
            "baseline_standard_error": mu_se,
            "lambda_max_stationary": lmax,
            "spacing_contraction": contraction,
            "steps_per_trial": n_blocks * spacing.max(1),
            "deviation_rms": var.sqrt(),
            "metric": "sum",
        }),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub lag: usize,
    pub empirical_cov: f64,
    pub standard_error: f64,
    pub bound: f64,
    /// `|empirical_cov| − 3·standard_error ≤ bound`.
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub spacing: usize,
    /// `‖A^spacing‖`
    pub contraction: f64,
    /// `‖Σ_spacing^{1/2}‖²`
    pub constant: f64,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<CorrelationRow>,
}

/// Lag-`k` covariance of `r` along the `spacing`-sampled chain at
/// stationarity, for `k = 0..=gap_max`, against `λ̂^k C/(1 − λ̂²)`.
pub fn correlation_decay_experiment(
    a: &Matrix,
    reward: &LipschitzReward,
    spacing: usize,
    gap_max: usize,
    trials: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    ensure_square(a, "A")?;
    reward.validate(a.nrows())?;
    check_trials(trials)?;
    let chain = LinearGaussianChain::subsampled(a, spacing)?;
    let contraction = operator_norm(chain.transition())?;
    let constant = lambda_max(&subtrajectory_covariance(a, spacing)?.covariance)?;
    let p_sqrt = psd_sqrt(&stationary_covariance(a)?)?;

    let paths: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<f64>> {
            let x0 = stationary_draw(&p_sqrt, seed, trial as u64);
            let mut values = Vec::with_capacity(gap_max + 1);
            values.push(reward.eval(&x0));
            chain.walk(&x0, gap_max, seed, trial as u64, |_, x| {
                values.push(reward.eval(x))
            })?;
            Ok(values)
        })
        .collect::<Result<_>>()?;

    let t = trials as f64;
    let means: Vec<f64> = (0..=gap_max)
        .map(|k| paths.iter().map(|p| p[k]).sum::<f64>() / t)
        .collect();
    let mut rows = Vec::with_capacity(gap_max + 1);
    for k in 0..=gap_max {
        let products: Vec<f64> = paths
            .iter()
            .map(|p| (p[0] - means[0]) * (p[k] - means[k]))
            .collect();
        let cov = products.iter().sum::<f64>() / (t - 1.0);
        let spread = products.iter().map(|v| (v - cov).powi(2)).sum::<f64>() / (t - 1.0);
        let se = (spread / t).sqrt();
        let bound = correlation_decay_bound(k, contraction, constant)?;
        rows.push(CorrelationRow {
            lag: k,
            empirical_cov: cov,
            standard_error: se,
            bound,
            within_bound: cov.abs() - 3.0 * se <= bound,
        });
    }
    Ok(CorrelationReport {
        spacing,
        contraction,
        constant,
        trials,
        seed,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Steps `N` for the complement ratio `‖A^N (I − E) g‖ / ‖A^N E g‖`;
    /// defaults to 20 when the block is explosive.
    #[serde(default)]
    pub horizon: Option<usize>,
}

fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.5]
}

/// Distribution of `‖E g‖/‖g‖` for `g ∼ N(0, I)` and the projection `E`
/// onto one invariant subspace, against the two one-sided tails around
/// `√(k/n)`. Rows carry the two-sided frequency against twice the
/// one-sided bound; per-side frequencies are in the diagnostics.
pub fn projection_ratio_experiment(
    decomp: &InvariantDecomposition,
    block_index: usize,
    config: &ProjectionConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !decomp.orthogonal {
        return Err(Error::Refused(
            "projection geometry needs an orthogonal similarity; oblique projections do not \
             preserve the isotropic Gaussian"
                .into(),
        ));
    }
    let Some(block) = decomp.blocks.get(block_index) else {
        return invalid(format!(
            "block_index {block_index} out of range ({} blocks)",
            decomp.blocks.len()
        ));
    };
    if config.trials == 0 {
        return invalid("trials must be positive");
    }
    let deltas = sorted_epsilons(&config.deltas)?;
    let n = decomp.dimension();
    let k = block.size;
    let typical = (k as f64 / n as f64).sqrt();
    let e = &block.projection;
    let explosive = block.eigenvalue.abs() > 1.0;
    let horizon = config.horizon.or(explosive.then_some(20));
    let propagator = horizon.map(|h| matrix_power(&decomp.a, h));
    let complement = Matrix::identity(n, n) - e;

    let g_seed = derive_seed(config.seed, Domain::Initial);
    let samples: Vec<(f64, Option<f64>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let g = gaussian_vector(n, g_seed, trial as u64);
            let eg = e * &g;
            let ratio = eg.norm() / g.norm();
            let comp = propagator.as_ref().map(|p| {
                let inside = (p * &eg).norm();
                let outside = (p * (&complement * &g)).norm();
                outside / inside
            });
            (ratio, comp)
        })
        .collect();

    let t = config.trials as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / t;
    let mut rows = Vec::with_capacity(deltas.len());
    let mut sides = Vec::with_capacity(deltas.len());
    for &d in &deltas {
        if !(d < 1.0) {
            return invalid(format!("delta must lie in (0, 1), got {d}"));
        }
        let upper = samples
            .iter()
            .filter(|s| s.0 >= typical / (1.0 - d))
            .count();
        let lower = samples
            .iter()
            .filter(|s| s.0 <= typical * (1.0 - d))
            .count();
        let per_side = if k == n {
            0.0
        } else {
            projection_tail_bound(n, k, d)?
        };
        let bound = if k == n { None } else { Some(2.0 * per_side) };
        rows.push(tail_row(d, upper + lower, config.trials, bound, bound));
        sides.push(json!({
            "delta": d,
            "upper_frequency": upper as f64 / t,
            "lower_frequency": lower as f64 / t,
            "per_side_bound": per_side,
        }));
    }

    let complement_stats = horizon.map(|h| {
        let mut c: Vec<f64> = samples.iter().filter_map(|s| s.1).collect();
        c.sort_by(f64::total_cmp);
        let below = c.iter().filter(|v| **v < 1e-3).count() as f64 / c.len() as f64;
        json!({
            "horizon": h,
            "fraction_below_1e-3": below,
            "median": c[c.len() / 2],
            "max": c[c.len() - 1],
        })
    });

    Ok(ExperimentReport {
        experiment: "projection".into(),
        regime: format!("block{block_index}"),
        config: json!({
            "trials": config.trials,
            "deltas": deltas,
            "horizon": horizon,
            "block_index": block_index,
            "dimension": n,
            "block_size": k,
            "eigenvalue": block.eigenvalue,
        }),
        rows,
        seeds: vec![config.seed],
        diagnostics: json!({
            "mean_ratio": mean,
            "typical_ratio": typical,
            "relative_deviation": (mean - typical).abs() / typical,
            "one_sided": sides,
            "complement": complement_stats,
        }),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
