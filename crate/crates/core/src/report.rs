//! Serializable experiment reports and their JSON/CSV writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One ε of a tail experiment: empirical exceedance frequency against the
/// closed-form bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub epsilon: f64,
    pub empirical_tail: f64,
    /// `None` when no valid bound exists for the configuration.
    pub theoretical_bound: Option<f64>,
    pub trials: usize,
    /// Standard error `√(p(1−p)/trials)` of the empirical frequency.
    pub standard_error: f64,
    /// One-sided 95% Clopper–Pearson upper limit of the tail probability.
    pub upper_confidence: f64,
    /// Bound evaluated with the slack from the baseline's standard error.
    pub bound_with_slack: Option<f64>,
    /// `empirical_tail − 3·standard_error ≤ bound_with_slack`.
    pub within_bound: Option<bool>,
}

/// Result of a Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    /// Regime label, also used in output file names.
    pub regime: String,
    pub config: serde_json::Value,
    pub rows: Vec<TailRow>,
    pub seeds: Vec<u64>,
    /// Experiment-specific diagnostics.
    pub diagnostics: serde_json::Value,
    /// Runtime; never written to report files so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn all_within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.within_bound != Some(false))
    }

    pub fn file_stem(&self) -> String {
        let seed = self.seeds.first().copied().unwrap_or(0);
        format!("{}_{}_seed{}", self.experiment, self.regime, seed)
    }

    /// `epsilon,empirical_tail,bound,trials` per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "empirical_tail", "bound", "trials"])?;
        for r in &self.rows {
            w.write_record([
                r.epsilon.to_string(),
                r.empirical_tail.to_string(),
                r.theoretical_bound
                    .map_or_else(String::new, |b| b.to_string()),
                r.trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.json` and `<stem>.csv` under `dir`, returns both paths.
    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let stem = self.file_stem();
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        write_json(&json, self)?;
        self.write_csv(fs::File::create(&csv)?)?;
        Ok(vec![json, csv])
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Upper one-sided `1 − alpha` Clopper–Pearson limit for `hits` out of `trials`.
pub fn clopper_pearson_upper(hits: usize, trials: usize, alpha: f64) -> f64 {
    if hits >= trials {
        return 1.0;
    }
    if hits == 0 {
        return 1.0 - alpha.powf(1.0 / trials as f64);
    }
    // solve P[Bin(trials, p) ≤ hits] = alpha for p by bisection
    let cdf = |p: f64| -> f64 {
        let mut term = (1.0 - p).powi(trials as i32);
        let mut sum = term;
        for i in 0..hits {
            term *= (trials - i) as f64 / (i + 1) as f64 * p / (1.0 - p);
            sum += term;
        }
        sum
    };
    let (mut lo, mut hi) = (hits as f64 / trials as f64, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Builds a [`TailRow`] from exceedance counts.
pub fn tail_row(
    epsilon: f64,
    hits: usize,
    trials: usize,
    bound: Option<f64>,
    bound_with_slack: Option<f64>,
) -> TailRow {
    let p = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    TailRow {
        epsilon,
        empirical_tail: p,
        theoretical_bound: bound,
        trials,
        standard_error: se,
        upper_confidence: clopper_pearson_upper(hits, trials, 0.05),
        bound_with_slack,
        within_bound: bound_with_slack.map(|b| p - 3.0 * se <= b),
    }
}

/// `count` log-spaced points between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_zero_hits() {
        let u = clopper_pearson_upper(0, 10_000, 0.05);
        assert!((u - 2.9953e-4).abs() < 1e-7, "{u}");
    }

    #[test]
    fn clopper_pearson_is_above_estimate() {
        for hits in [1, 5, 50, 500] {
            let u = clopper_pearson_upper(hits, 1000, 0.05);
            assert!(u > hits as f64 / 1000.0 && u < 1.0);
        }
        // Beta(11, 10) 0.95-quantile, from scipy.stats.beta.ppf
        let u = clopper_pearson_upper(10, 20, 0.05);
        assert!((u - 0.698_046_088_7).abs() < 1e-8, "{u}");
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.01, 1.0, 3);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert!((g[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let report = ExperimentReport {
            experiment: "ergodic".into(),
            regime: "iid-stationary".into(),
            config: serde_json::Value::Null,
            rows: vec![tail_row(0.1, 3, 100, Some(0.5), Some(0.5))],
            seeds: vec![4],
            diagnostics: serde_json::Value::Null,
            wall_clock_secs: 1.0,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "epsilon,empirical_tail,bound,trials\n0.1,0.03,0.5,100\n"
        );
        assert_eq!(report.file_stem(), "ergodic_iid-stationary_seed4");
        assert!(!serde_json::to_string(&report)
            .unwrap()
            .contains("wall_clock"));
    }
}
