use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ols_estimate_truncated, OlsProblem};
use crate::error::{invalid, Result};
use crate::linalg::{operator_norm, singular_values, Matrix};
use crate::report::write_json;
use crate::rng::{derive_seed, gaussian_vector, stream_id, Domain};
use crate::simulate::{LinearGaussianChain, NoiseSource};
use crate::spectral::{build_system, InvariantDecomposition, Similarity, SpectralSpec};

/// Longest trajectory accepted; `1.5^120` times the transient growth of a
/// 47-block still fits in double precision.
pub const MAX_CASE_STUDY_STEPS: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyConfig {
    #[serde(default = "default_trials")]
    pub trials_per_mode: usize,
    #[serde(default = "default_grid")]
    pub n_grid: Vec<usize>,
    pub seed: u64,
    /// Also run the system with the explosive eigenvalue replaced by
    /// `control_lambda`.
    #[serde(default = "default_true")]
    pub include_control: bool,
    #[serde(default = "default_control")]
    pub control_lambda: f64,
    /// Basis of the constructed system; the direct sum of the two Jordan
    /// blocks by default.
    #[serde(default = "default_similarity")]
    pub similarity: Similarity,
}

fn default_trials() -> usize {
    100
}

fn default_grid() -> Vec<usize> {
    (50..=100).step_by(10).collect()
}

fn default_true() -> bool {
    true
}

fn default_control() -> f64 {
    0.8
}

fn default_similarity() -> Similarity {
    Similarity::Identity
}

impl CaseStudyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            trials_per_mode: default_trials(),
            n_grid: default_grid(),
            seed,
            include_control: true,
            control_lambda: default_control(),
            similarity: default_similarity(),
        }
    }
}

/// Error of one trial at one trajectory length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRecord {
    /// `E1`, `E2`, or `control-E1`, `control-E2`.
    pub mode: String,
    /// First or second half of the trials (1 or 2).
    pub batch: u8,
    #[serde(rename = "N")]
    pub n: usize,
    pub trial: usize,
    pub error_opnorm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudySummary {
    pub mode: String,
    /// `None` pools both batches.
    pub batch: Option<u8>,
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub experiment: String,
    pub config: CaseStudyConfig,
    pub seeds: Vec<u64>,
    pub records: Vec<CaseStudyRecord>,
    pub summaries: Vec<CaseStudySummary>,
    pub diagnostics: serde_json::Value,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl CaseStudyReport {
    /// Median error of `mode` at length `n` over both batches.
    pub fn median(&self, mode: &str, n: usize) -> Option<f64> {
        self.summaries
            .iter()
            .find(|s| s.mode == mode && s.batch.is_none() && s.n == n)
            .map(|s| s.median)
    }

    pub fn file_stem(&self) -> String {
        format!("case_study_seed{}", self.config.seed)
    }

    /// `mode,N,trial,error_opnorm` per record.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "N", "trial", "error_opnorm"])?;
        for r in &self.records {
            w.write_record([
                r.mode.clone(),
                r.n.to_string(),
                r.trial.to_string(),
                r.error_opnorm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `curve,N,median_error`: one curve per mode and batch.
    pub fn write_plot_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["curve", "N", "median_error"])?;
        for s in self.summaries.iter().filter(|s| s.batch.is_some()) {
            w.write_record([
                format!("{}-batch{}", s.mode, s.batch.unwrap()),
                s.n.to_string(),
                s.median.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let stem = self.file_stem();
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        let plot = dir.join(format!("{stem}_plot.csv"));
        write_json(&json, self)?;
        self.write_csv(std::fs::File::create(&csv)?)?;
        self.write_plot_csv(std::fs::File::create(&plot)?)?;
        Ok(vec![json, csv, plot])
    }
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

fn summarize(mode: &str, batch: Option<u8>, n: usize, values: &[f64]) -> CaseStudySummary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let t = v.len() as f64;
    let mean = v.iter().sum::<f64>() / t;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0)
    } else {
        0.0
    };
    CaseStudySummary {
        mode: mode.to_string(),
        batch,
        n,
        trials: v.len(),
        median: median(&v),
        mean,
        std: var.sqrt(),
    }
}

/// Per-trial OLS errors for both initialisations of one system.
fn run_system(
    decomp: &InvariantDecomposition,
    prefix: &str,
    config: &CaseStudyConfig,
) -> Result<(Vec<CaseStudyRecord>, (f64, f64))> {
    let a = &decomp.a;
    let n = a.nrows();
    let n_max = *config.n_grid.iter().max().unwrap();
    let chain = LinearGaussianChain::raw(a)?;
    let init_seed = derive_seed(config.seed, Domain::Initial);
    let half = config.trials_per_mode.div_ceil(2);

    let mut records = Vec::new();
    let (mut top, mut bottom) = (0.0f64, f64::INFINITY);
    for (mode_index, block) in decomp.blocks.iter().take(2).enumerate() {
        let mode = format!("{prefix}E{}", mode_index + 1);
        let per_trial: Vec<(Vec<f64>, (f64, f64))> = (0..config.trials_per_mode)
            .into_par_iter()
            .map(|trial| -> Result<(Vec<f64>, (f64, f64))> {
                let id = ((mode_index as u64) << 24) | trial as u64;
                let g = gaussian_vector(n, init_seed, stream_id(id, 0));
                let x0 = &block.projection * g;
                let traj = chain.run(
                    &x0,
                    n_max,
                    NoiseSource::Seeded {
                        seed: config.seed,
                        trial: id,
                    },
                    false,
                )?;
                let mut errors = Vec::with_capacity(config.n_grid.len());
                let mut extremes = (0.0, 0.0);
                for &big_n in &config.n_grid {
                    let p = OlsProblem::from_trajectory(&traj.prefix(big_n), None)?;
                    let cutoff = n.max(big_n) as f64 * f64::EPSILON;
                    let a_hat = ols_estimate_truncated(&p, cutoff)?;
                    errors.push(operator_norm(&(a - a_hat))?);
                    if big_n == n_max {
                        let sv = singular_values(&p.x_minus)?;
                        extremes = (sv.largest(), sv.singular_values[n - 1]);
                    }
                }
                Ok((errors, extremes))
            })
            .collect::<Result<_>>()?;
        for (j, &big_n) in config.n_grid.iter().enumerate() {
            for (trial, (errors, _)) in per_trial.iter().enumerate() {
                records.push(CaseStudyRecord {
                    mode: mode.clone(),
                    batch: if trial < half { 1 } else { 2 },
                    n: big_n,
                    trial,
                    error_opnorm: errors[j],
                });
            }
        }
        for (_, (s1, sn)) in &per_trial {
            top = top.max(*s1);
            bottom = bottom.min(*sn);
        }
    }
    Ok((records, (top, bottom)))
}

/// OLS on the 50-dimensional system with an explosive 47-block at 1.5 and
/// a stable 3-block at −0.5, started inside either invariant subspace.
///
/// `Â` uses a truncated pseudo-inverse (cutoff `max(n, N)·ε_mach·σ₁`): the
/// data matrix is far too ill-conditioned for the plain normal equations.
pub fn ols_case_study(config: &CaseStudyConfig) -> Result<CaseStudyReport> {
    let start = Instant::now();
    if config.trials_per_mode < 2 {
        return invalid("trials_per_mode must be at least 2");
    }
    if config.n_grid.is_empty() || config.n_grid.iter().any(|&m| m < 2) {
        return invalid("n_grid must be a non-empty list of lengths ≥ 2");
    }
    if let Some(&m) = config.n_grid.iter().find(|&&m| m > MAX_CASE_STUDY_STEPS) {
        return invalid(format!(
            "N = {m} exceeds {MAX_CASE_STUDY_STEPS}; explosive states leave double precision"
        ));
    }
    let mut config = config.clone();
    config.n_grid.sort_unstable();
    config.n_grid.dedup();

    let mut spec = SpectralSpec::case_study(config.seed);
    spec.similarity = config.similarity;
    let decomp = build_system(&spec)?;
    let (mut records, (s1, sn)) = run_system(&decomp, "", &config)?;
    // σ_n is reported as 0 once it falls below the SVD's resolution ε·σ₁
    let mut diagnostics = json!({
        "sigma1_xminus_max": s1,
        "sigman_xminus_min": sn,
        "spec": spec,
    });
    if config.include_control {
        let mut control = spec.clone();
        control.blocks[0].lambda = config.control_lambda;
        let (control_records, (c1, cn)) =
            run_system(&build_system(&control)?, "control-", &config)?;
        records.extend(control_records);
        diagnostics["control_spec"] = json!(control);
        diagnostics["control_sigma1_xminus_max"] = json!(c1);
        diagnostics["control_sigman_xminus_min"] = json!(cn);
    }

    let mut modes: Vec<String> = Vec::new();
    for r in &records {
        if !modes.contains(&r.mode) {
            modes.push(r.mode.clone());
        }
    }
    let mut summaries = Vec::new();
    for mode in &modes {
        for &big_n in &config.n_grid {
            let pick = |batch: Option<u8>| -> Vec<f64> {
                records
                    .iter()
                    .filter(|r| {
                        &r.mode == mode && r.n == big_n && batch.is_none_or(|b| r.batch == b)
                    })
                    .map(|r| r.error_opnorm)
                    .collect()
            };
            summaries.push(summarize(mode, None, big_n, &pick(None)));
            for b in [1, 2] {
                summaries.push(summarize(mode, Some(b), big_n, &pick(Some(b))));
            }
        }
    }

    Ok(CaseStudyReport {
        experiment: "case-study".into(),
        seeds: vec![config.seed],
        config,
        records,
        summaries,
        diagnostics,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// The case-study system's transition matrix.
pub fn case_study_matrix(seed: u64) -> Result<Matrix> {
    Ok(build_system(&SpectralSpec::case_study(seed))?.a)
}
