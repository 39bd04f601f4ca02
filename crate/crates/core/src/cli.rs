//! Command-line entry point: parse a JSON run configuration, dispatch to an
//! experiment and write its JSON, CSV and plot-data files.
//!
//! Exit status: 0 on success, 1 on I/O failure, 2 on invalid configuration
//! or input, 3 when a numerical contract fails (unstable system, hitting
//! time not found within budget, ill-posed least squares, …).

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::concentration::{
    correlation_decay_experiment, ergodic_average_experiment, mixing_bound_check,
    projection_ratio_experiment, ErgodicConfig, LipschitzReward, ProjectionConfig, Sampling,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{ensure_finite, ensure_square, Matrix, Vector};
use crate::report::ExperimentReport;
use crate::simulate::{LinearGaussianChain, NoiseSource};
use crate::spectral::{
    build_system, default_k_max, exact_hitting_time, hitting_time_block_bound,
    hitting_time_spectral_bound, InvariantDecomposition, Similarity, SpectralSpec,
};
use crate::sysid::{
    ols_case_study, ols_error_report, singular_value_concentration_experiment, CaseStudyConfig,
    OlsProblem, SvConfig, SvSelector,
};

#[derive(Debug, Parser)]
#[command(
    name = "linmix",
    version,
    about = "Mixing, concentration and OLS experiments for linear Gaussian systems"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configuration's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the configuration's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for trial-parallel experiments.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    HittingTime,
    Mixing,
    Concentration,
    Correlation,
    Projection,
    Ols,
    CaseStudy,
    SvConcentration,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::HittingTime => "hitting-time",
            Command::Mixing => "mixing",
            Command::Concentration => "concentration",
            Command::Correlation => "correlation",
            Command::Projection => "projection",
            Command::Ols => "ols",
            Command::CaseStudy => "case-study",
            Command::SvConcentration => "sv-concentration",
        }
    }

    /// Fields a configuration for this command may set besides the common ones.
    fn fields(self) -> &'static [&'static str] {
        match self {
            Command::HittingTime => &["spec", "matrix_path", "sweep", "k_max"],
            Command::Mixing => &["spec", "matrix_path", "k_hat", "x0", "m_max"],
            Command::Concentration => &[
                "spec",
                "matrix_path",
                "reward",
                "n_blocks",
                "sampling",
                "epsilons",
                "baseline_draws",
            ],
            Command::Correlation => &["spec", "matrix_path", "reward", "spacing", "gap_max"],
            Command::Projection => &["spec", "block_index", "deltas", "horizon"],
            Command::Ols => &["spec", "matrix_path", "x0", "n_steps"],
            Command::CaseStudy => &["n_grid", "include_control", "control_lambda", "similarity"],
            Command::SvConcentration => &[
                "spec",
                "matrix_path",
                "n_steps",
                "which",
                "epsilons",
                "n_grid",
            ],
        }
    }
}

const COMMON_FIELDS: &[&str] = &["command", "seed", "trials", "out_dir"];

/// Range of total dimensions for a hitting-time sweep; the first block's
/// size is set to `n` minus the sizes of the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub from: usize,
    pub to: usize,
}

/// One run of one command. Only the fields listed for the command are
/// accepted; `seed` must come from here or from `--seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trials: Option<usize>,
    /// Not echoed into reports, so output bytes do not depend on where they go.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub spec: Option<SpectralSpec>,
    /// JSON file holding the matrix as an array of rows.
    #[serde(default)]
    pub matrix_path: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub k_hat: Option<usize>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub m_max: Option<usize>,
    #[serde(default)]
    pub reward: Option<LipschitzReward>,
    #[serde(default)]
    pub n_blocks: Option<usize>,
    #[serde(default)]
    pub sampling: Option<Sampling>,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub baseline_draws: Option<usize>,
    #[serde(default)]
    pub spacing: Option<usize>,
    #[serde(default)]
    pub gap_max: Option<usize>,
    #[serde(default)]
    pub block_index: Option<usize>,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub include_control: Option<bool>,
    #[serde(default)]
    pub control_lambda: Option<f64>,
    #[serde(default)]
    pub similarity: Option<Similarity>,
    #[serde(default)]
    pub which: Option<SvSelector>,
}

impl RunConfig {
    /// Parses and checks that only fields of the chosen command are present.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        let raw: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let allowed: BTreeSet<&str> = COMMON_FIELDS
            .iter()
            .chain(config.command.fields())
            .copied()
            .collect();
        let extra: Vec<&String> = raw
            .keys()
            .filter(|k| !allowed.contains(k.as_str()))
            .collect();
        if !extra.is_empty() {
            return invalid(format!(
                "field(s) {extra:?} do not apply to command `{}`",
                config.command.name()
            ));
        }
        if config.spec.is_some() && config.matrix_path.is_some() {
            return invalid("give either `spec` or `matrix_path`, not both");
        }
        Ok(config)
    }

    fn seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => invalid("a seed is required (config field `seed` or --seed)"),
        }
    }

    fn trials_or(&self, default: usize) -> usize {
        self.trials.unwrap_or(default)
    }
}

/// A system given either by a spectral spec or an explicit matrix.
struct System {
    a: Matrix,
    decomposition: Option<InvariantDecomposition>,
}

fn load_matrix(path: &Path) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(&fs::read_to_string(path)?)?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return invalid(format!(
            "{} is not a rectangular array of rows",
            path.display()
        ));
    }
    let m = Matrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]);
    ensure_square(&m, "matrix file")?;
    ensure_finite(&m, "matrix file")?;
    Ok(m)
}

fn resolve_system(config: &RunConfig) -> Result<System> {
    match (&config.spec, &config.matrix_path) {
        (Some(spec), None) => {
            let d = build_system(spec)?;
            Ok(System {
                a: d.a.clone(),
                decomposition: Some(d),
            })
        }
        (None, Some(path)) => Ok(System {
            a: load_matrix(path)?,
            decomposition: None,
        }),
        _ => invalid(format!(
            "command `{}` needs `spec` or `matrix_path`",
            config.command.name()
        )),
    }
}

fn initial_state(x0: &Option<Vec<f64>>, n: usize, default: Vector) -> Result<Vector> {
    match x0 {
        None => Ok(default),
        Some(v) if v.len() == n => Ok(Vector::from_vec(v.clone())),
        Some(v) => invalid(format!("x0 has length {}, expected {n}", v.len())),
    }
}

fn exact_k_hat(a: &Matrix, k_max: Option<usize>) -> Result<usize> {
    let k_max = k_max.unwrap_or_else(|| default_k_max(a));
    Ok(exact_hitting_time(a, k_max, None)?.k_hat_exact)
}

/// Files produced by one run, kept in memory until the run succeeds.
#[derive(Default)]
struct Output {
    files: Vec<(String, Vec<u8>)>,
}

impl Output {
    fn json<T: Serialize>(&mut self, name: String, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name, bytes));
        Ok(())
    }

    fn csv(&mut self, name: String, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.files.push((name, bytes));
        Ok(())
    }

    fn report(&mut self, report: &ExperimentReport) -> Result<()> {
        let stem = report.file_stem();
        self.json(format!("{stem}.json"), report)?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        self.files.push((format!("{stem}.csv"), buf));
        let rows = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.epsilon.to_string(),
                    r.empirical_tail.to_string(),
                    r.upper_confidence.to_string(),
                    r.theoretical_bound
                        .map_or_else(String::new, |b| b.min(2.0).to_string()),
                ]
            })
            .collect();
        self.csv(
            format!("{stem}_plot.csv"),
            &["epsilon", "empirical_tail", "upper_confidence", "bound"],
            rows,
        )
    }

    fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn run_hitting_time(config: &RunConfig, seed: u64, out: &mut Output) -> Result<()> {
    let mut specs = Vec::new();
    match (&config.sweep, &config.spec) {
        (Some(sweep), Some(spec)) => {
            if spec.blocks.is_empty() || sweep.from > sweep.to {
                return invalid("sweep needs a non-empty spec and from ≤ to");
            }
            let others: usize = spec.blocks[1..].iter().map(|b| b.size).sum();
            if sweep.from <= others {
                return invalid(format!(
                    "sweep must start above {others}, the other blocks' total size"
                ));
            }
            for n in sweep.from..=sweep.to {
                let mut s = spec.clone();
                s.blocks[0].size = n - others;
                specs.push(s);
            }
        }
        (Some(_), None) => return invalid("sweep requires `spec`"),
        _ => {}
    }

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    if specs.is_empty() {
        let system = resolve_system(config)?;
        let k_max = config.k_max.unwrap_or_else(|| default_k_max(&system.a));
        let r = exact_hitting_time(&system.a, k_max, system.decomposition.as_ref())?;
        let block = r
            .bound_block
            .iter()
            .copied()
            .collect::<Option<Vec<_>>>()
            .and_then(|v| v.into_iter().max());
        rows.push(vec![
            system.a.nrows().to_string(),
            r.k_hat_exact.to_string(),
            fmt_opt(block),
            fmt_opt(r.bound_spectral),
        ]);
        reports.push(json!({ "n": system.a.nrows(), "report": r }));
    } else {
        for spec in &specs {
            let d = build_system(spec)?;
            let k_max = config.k_max.unwrap_or_else(|| default_k_max(&d.a));
            let r = exact_hitting_time(&d.a, k_max, Some(&d))?;
            let block = spec
                .blocks
                .iter()
                .map(|b| hitting_time_block_bound(b.lambda, b.size).ok())
                .collect::<Option<Vec<_>>>()
                .and_then(|v| v.into_iter().max());
            let spectral = hitting_time_spectral_bound(spec).ok();
            let n = spec.dimension();
            rows.push(vec![
                n.to_string(),
                r.k_hat_exact.to_string(),
                fmt_opt(block),
                fmt_opt(spectral),
            ]);
            reports.push(json!({
                "n": n,
                "k_hat": r.k_hat_exact,
                "contraction": r.contraction,
                "per_block_k": r.per_block_k,
                "bound_block": block,
                "bound_spectral": spectral,
            }));
        }
    }
    let stem = format!("hitting-time_seed{seed}");
    out.json(
        format!("{stem}.json"),
        &json!({ "experiment": "hitting-time", "config": config, "seeds": [seed], "rows": reports }),
    )?;
    let header = ["n", "k_hat", "bound_block", "bound_spectral"];
    out.csv(format!("{stem}.csv"), &header, rows.clone())?;
    let mut plot = Vec::new();
    for r in &rows {
        for (series, value) in header[1..].iter().zip(&r[1..]) {
            if !value.is_empty() {
                plot.push(vec![series.to_string(), r[0].clone(), value.clone()]);
            }
        }
    }
    out.csv(format!("{stem}_plot.csv"), &["series", "n", "value"], plot)
}

fn run_mixing(config: &RunConfig, seed: u64, out: &mut Output) -> Result<()> {
    let system = resolve_system(config)?;
    let n = system.a.nrows();
    let k_hat = match config.k_hat {
        Some(k) => k,
        None => exact_k_hat(&system.a, None)?,
    };
    let mut e1 = Vector::zeros(n);
    e1[0] = 1.0;
    let x0 = initial_state(&config.x0, n, e1)?;
    let report = mixing_bound_check(&system.a, k_hat, &x0, config.m_max.unwrap_or(10))?;
    let stem = format!("mixing_seed{seed}");
    out.json(
        format!("{stem}.json"),
        &json!({ "experiment": "mixing", "config": config, "seeds": [seed], "report": report }),
    )?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![r.m.to_string(), r.w2_exact.to_string(), r.bound.to_string()])
        .collect();
    out.csv(
        format!("{stem}.csv"),
        &["m", "w2_exact", "bound"],
        rows.clone(),
    )?;
    out.csv(
        format!("{stem}_plot.csv"),
        &["m", "w2_exact", "bound"],
        rows,
    )
}

fn run_concentration(config: &RunConfig, seed: u64, out: &mut Output) -> Result<()> {
    let system = resolve_system(config)?;
    let sampling = match config.sampling {
        Some(s) => s,
        None => Sampling::Spacing(exact_k_hat(&system.a, None)?),
    };
    let ergodic = ErgodicConfig {
        n_blocks: config.n_blocks.unwrap_or(200),
        sampling,
        trials: config.trials_or(10_000),
        epsilons: config.epsilons.clone(),
        seed,
        baseline_draws: config.baseline_draws,
    };
    let reward = config.reward.clone().unwrap_or_default();
    let report = ergodic_average_experiment(&system.a, &reward, &ergodic)?;
    out.report(&report)
}

fn run_correlation(config: &RunConfig, seed: u64, out: &mut Output) -> Result<()> {
    let system = resolve_system(config)?;
    let spacing = match config.spacing {
        Some(s) => s,
        None => exact_k_hat(&system.a, None)?,
    };
    let reward = config.reward.clone().unwrap_or_default();
    let report = correlation_decay_experiment(
        &system.a,
        &reward,
        spacing,
        config.gap_max.unwrap_or(10),
        config.trials_or(20_000),
        seed,
    )?;
    let stem = format!("correlation_seed{seed}");
    out.json(
        format!("{stem}.json"),
        &json!({ "experiment": "correlation", "config": config, "seeds": [seed], "report": report }),
    )?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.lag.to_string(),
                r.empirical_cov.to_string(),
                r.standard_error.to_string(),
                r.bound.to_string(),
            ]
        })
        .collect();
    let header = ["lag", "empirical_cov", "standard_error", "bound"];
    out.csv(format!("{stem}.csv"), &header, rows.clone())?;
    out.csv(format!("{stem}_plot.csv"), &header, rows)
}

fn run_projection(config: &RunConfig, seed: u64, out: &mut Output) -> Result<()> {
    let Some(spec) = &config.spec else {
        return invalid("projection needs `spec` (its invariant subspaces)");
    };
    let d = build_system(spec)?;
    let mut pc = ProjectionConfig {
        trials: config.trials_or(10_000),
        seed,
        deltas: vec![0.1, 0.2, 0.3, 0.5],
        horizon: config.horizon,
    };
    if let Some(deltas) = &config.deltas {
        pc.deltas = deltas.clone();
    }
    let report = projection_ratio_experiment(&d, config.block_index.unwrap_or(0), &pc)?;
    out.report(&report)
}

fn run_ols(config: &RunConfig, seed: u64, out: &mut Output) -> Result<()> {
    let system = resolve_system(config)?;
    let n = system.a.nrows();
    let x0 = initial_state(&config.x0, n, Vector::zeros(n))?;
    let steps = config.n_steps.unwrap_or(1000);
    let trials = config.trials_or(100);
    if trials == 0 {
        return invalid("trials must be positive");
    }
    let chain = LinearGaussianChain::raw(&system.a)?;
    let mut reports = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let traj = chain.run(&x0, steps, NoiseSource::Seeded { seed, trial }, true)?;
        let p = OlsProblem::from_trajectory(&traj, Some(&system.a))?;
        reports.push(ols_error_report(
            &p,
            if config.x0.is_some() { "given" } else { "zero" },
        )?);
    }
    let violations = reports.iter().filter(|r| !r.bound_holds()).count();
    let stem = format!("ols_seed{seed}");
    let rows: Vec<Vec<String>> = reports
        .iter()
        .enumerate()
        .map(|(t, r)| {
            vec![
                t.to_string(),
                r.n_steps.to_string(),
                r.error_opnorm.to_string(),
                r.error_upper_bound.to_string(),
                r.kappa_xminus.to_string(),
                r.sigma1_e.to_string(),
            ]
        })
        .collect();
    out.json(
        format!("{stem}.json"),
        &json!({
            "experiment": "ols",
            "config": config,
            "seeds": [seed],
            "bound_violations": violations,
            "reports": reports,
        }),
    )?;
    out.csv(
        format!("{stem}.csv"),
        &[
            "trial",
            "N",
            "error_opnorm",
            "error_upper_bound",
            "kappa_xminus",
            "sigma1_E",
        ],
        rows.clone(),
    )?;
    let plot = rows
        .into_iter()
        .map(|r| vec![r[0].clone(), r[2].clone(), r[3].clone()])
        .collect();
    out.csv(
        format!("{stem}_plot.csv"),
        &["trial", "error_opnorm", "error_upper_bound"],
        plot,
    )
}

fn run_case_study(config: &RunConfig, seed: u64, out: &mut Output) -> Result<()> {
    let mut fc = CaseStudyConfig::new(seed);
    if let Some(t) = config.trials {
        fc.trials_per_mode = t;
    }
    if let Some(g) = &config.n_grid {
        fc.n_grid = g.clone();
    }
    if let Some(c) = config.include_control {
        fc.include_control = c;
    }
    if let Some(l) = config.control_lambda {
        fc.control_lambda = l;
    }
    if let Some(s) = &config.similarity {
        fc.similarity = *s;
    }
    let report = ols_case_study(&fc)?;
    let stem = report.file_stem();
    out.json(format!("{stem}.json"), &report)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    out.files.push((format!("{stem}.csv"), buf));
    let mut plot = Vec::new();
    report.write_plot_csv(&mut plot)?;
    out.files.push((format!("{stem}_plot.csv"), plot));
    Ok(())
}

fn run_sv(config: &RunConfig, seed: u64, out: &mut Output) -> Result<()> {
    let system = resolve_system(config)?;
    let sv = SvConfig {
        n_steps: config.n_steps.unwrap_or(50),
        trials: config.trials_or(2000),
        which: config.which.unwrap_or(SvSelector::Largest),
        seed,
        epsilons: config.epsilons.clone(),
        n_grid: config.n_grid.clone(),
    };
    let report = singular_value_concentration_experiment(&system.a, &sv)?;
    out.report(&report)
}

/// Runs `config` and writes its files under the output directory.
pub fn dispatch(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let seed = config.seed()?;
    let mut out = Output::default();
    match config.command {
        Command::HittingTime => run_hitting_time(config, seed, &mut out)?,
        Command::Mixing => run_mixing(config, seed, &mut out)?,
        Command::Concentration => run_concentration(config, seed, &mut out)?,
        Command::Correlation => run_correlation(config, seed, &mut out)?,
        Command::Projection => run_projection(config, seed, &mut out)?,
        Command::Ols => run_ols(config, seed, &mut out)?,
        Command::CaseStudy => run_case_study(config, seed, &mut out)?,
        Command::SvConcentration => run_sv(config, seed, &mut out)?,
    }
    let dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    out.write(&dir)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        2
    } else if e.is_numerical() {
        3
    } else {
        1
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let text = fs::read_to_string(&cli.config).map_err(|e| {
        Error::InvalidInput(format!("cannot read config {}: {e}", cli.config.display()))
    })?;
    let mut config = RunConfig::from_json(&text)?;
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.trials.is_some() {
        config.trials = cli.trials;
    }
    if cli.out.is_some() {
        config.out_dir = cli.out.clone();
    }
    Ok(config)
}

/// Runs the CLI on `args` (program name first) and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("linmix: {e}");
            return exit_code(&e);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("linmix: invalid input: --workers must be at least 1");
            return 2;
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("linmix: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&config)) {
        Ok(paths) => {
            eprintln!(
                "linmix: {} finished in {:.2} s, wrote {} file(s) to {}",
                config.command.name(),
                start.elapsed().as_secs_f64(),
                paths.len(),
                config
                    .out_dir
                    .as_deref()
                    .unwrap_or(Path::new("."))
                    .display()
            );
            0
        }
        Err(e) => {
            eprintln!("linmix: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_command_is_rejected() {
        let text = r#"{"command":"mixing","command":"ols","seed":1}"#;
        assert!(matches!(RunConfig::from_json(text), Err(Error::Json(_))));
    }

    #[test]
    fn fields_are_checked_per_command() {
        let ok = r#"{"command":"mixing","seed":1,"spec":{"blocks":[{"lambda":0.9,"size":2}],"similarity":"identity","seed":7},"m_max":4}"#;
        assert!(RunConfig::from_json(ok).is_ok());
        let bad = r#"{"command":"mixing","seed":1,"n_grid":[50]}"#;
        assert!(matches!(
            RunConfig::from_json(bad),
            Err(Error::InvalidInput(_))
        ));
        let unknown = r#"{"command":"mixing","seed":1,"bogus":3}"#;
        assert!(RunConfig::from_json(unknown).is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        let c = RunConfig::from_json(r#"{"command":"case-study"}"#).unwrap();
        assert!(matches!(dispatch(&c), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hitting_time_sweep_rows() {
        let text = r#"{"command":"hitting-time","seed":1,"spec":{"blocks":[{"lambda":0.9,"size":1},{"lambda":0.9,"size":1}],"similarity":"identity","seed":7},"sweep":{"from":3,"to":4}}"#;
        let c = RunConfig::from_json(text).unwrap();
        let mut out = Output::default();
        run_hitting_time(&c, 1, &mut out).unwrap();
        let csv = String::from_utf8(out.files[1].1.clone()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,k_hat,bound_block,bound_spectral");
        // n = 3: blocks (0.9, 2) ⊕ (0.9, 1) has the 2-block's hitting time
        assert!(lines[1].starts_with("3,35,"));
        assert_eq!(lines.len(), 3);
    }
}
