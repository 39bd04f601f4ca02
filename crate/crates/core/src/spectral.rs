//! Systems with declared Jordan structure, their invariant-subspace
//! projections, and first contractive hitting times.
//!
//! A system is built as `A = S J S⁻¹` with `J` block diagonal, each block
//! carrying `λ` on the diagonal and ones on the superdiagonal. The columns of
//! `S` belonging to a block span its `A`-invariant subspace.

use std::convert::TryFrom;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{ensure_square, operator_norm, pseudo_inverse, singular_values, Matrix, TOL};
use crate::rng::{derive_seed, gaussian_vector, Domain};

pub const DEFAULT_CONDITION_CAP: f64 = 1e3;
const MAX_SIMILARITY_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JordanBlock {
    pub lambda: f64,
    pub size: usize,
}

/// How the Jordan form is conjugated into the final system matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SimilarityRepr", into = "SimilarityRepr")]
pub enum Similarity {
    Identity,
    RandomOrthogonal,
    /// Gaussian matrix rejection-sampled to `κ(S) ≤ condition_cap`.
    RandomInvertible {
        condition_cap: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SimilarityRepr {
    Name(String),
    Invertible {
        #[serde(rename = "random-invertible")]
        random_invertible: CapRepr,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapRepr {
    condition_cap: f64,
}

impl TryFrom<SimilarityRepr> for Similarity {
    type Error = String;

    fn try_from(r: SimilarityRepr) -> std::result::Result<Self, String> {
        match r {
            SimilarityRepr::Name(s) => match s.as_str() {
                "identity" => Ok(Similarity::Identity),
                "random-orthogonal" => Ok(Similarity::RandomOrthogonal),
                "random-invertible" => Ok(Similarity::RandomInvertible {
                    condition_cap: DEFAULT_CONDITION_CAP,
                }),
                other => Err(format!("unknown similarity {other:?}")),
            },
            SimilarityRepr::Invertible { random_invertible } => Ok(Similarity::RandomInvertible {
                condition_cap: random_invertible.condition_cap,
            }),
        }
    }
}

impl From<Similarity> for SimilarityRepr {
    fn from(s: Similarity) -> Self {
        match s {
            Similarity::Identity => SimilarityRepr::Name("identity".into()),
            Similarity::RandomOrthogonal => SimilarityRepr::Name("random-orthogonal".into()),
            Similarity::RandomInvertible { condition_cap } => SimilarityRepr::Invertible {
                random_invertible: CapRepr { condition_cap },
            },
        }
    }
}

/// Declared spectrum: Jordan blocks plus the similarity used to hide them.
///
/// JSON form: `{"blocks":[{"lambda":0.9,"size":2}],"similarity":"identity","seed":7}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    pub blocks: Vec<JordanBlock>,
    pub similarity: Similarity,
    pub seed: u64,
}

impl SpectralSpec {
    pub fn new(blocks: &[(f64, usize)], similarity: Similarity, seed: u64) -> Self {
        Self {
            blocks: blocks
                .iter()
                .map(|&(lambda, size)| JordanBlock { lambda, size })
                .collect(),
            similarity,
            seed,
        }
    }

    /// Single Jordan block in the standard basis.
    pub fn jordan(lambda: f64, size: usize) -> Self {
        Self::new(&[(lambda, size)], Similarity::Identity, 0)
    }

    /// The 50-dimensional explosive case study: λ=1.5 (block 47), λ=−0.5 (block 3).
    pub fn case_study(seed: u64) -> Self {
        Self::new(&[(1.5, 47), (-0.5, 3)], Similarity::RandomOrthogonal, seed)
    }

    pub fn dimension(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return invalid("spectral spec: no blocks");
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.size == 0 {
                return invalid(format!("spectral spec: block {i} has size 0"));
            }
            if !b.lambda.is_finite() || b.lambda == 0.0 {
                return invalid(format!(
                    "spectral spec: block {i} eigenvalue must be finite and non-zero"
                ));
            }
        }
        if let Similarity::RandomInvertible { condition_cap } = self.similarity {
            if !(condition_cap >= 1.0) {
                return invalid("spectral spec: condition_cap must be at least 1");
            }
        }
        Ok(())
    }

    pub fn jordan_matrix(&self) -> Matrix {
        let n = self.dimension();
        let mut j = Matrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            for i in 0..b.size {
                j[(off + i, off + i)] = b.lambda;
                if i + 1 < b.size {
                    j[(off + i, off + i + 1)] = 1.0;
                }
            }
            off += b.size;
        }
        j
    }
}

/// One invariant subspace of a constructed system.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantBlock {
    pub eigenvalue: f64,
    pub size: usize,
    /// Column offset of the block inside `S`.
    pub offset: usize,
    /// `n × size` basis of the invariant subspace.
    pub basis: Matrix,
    /// Spectral projection onto this subspace along the other blocks.
    pub projection: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDecomposition {
    pub spec: SpectralSpec,
    pub a: Matrix,
    pub similarity: Matrix,
    pub blocks: Vec<InvariantBlock>,
    /// `S` is orthogonal, so the spectral projections are orthogonal ones.
    pub orthogonal: bool,
}

impl InvariantDecomposition {
    pub fn dimension(&self) -> usize {
        self.a.nrows()
    }

    /// Orthogonal projector `M(MᵀM)†Mᵀ` onto the span of block `i`.
    ///
    /// Equal to the spectral projection when the similarity is orthogonal.
    pub fn orthogonal_projection(&self, i: usize) -> Result<Matrix> {
        let m = &self.blocks[i].basis;
        Ok(m * pseudo_inverse(&(m.transpose() * m))? * m.transpose())
    }

    /// `‖Σ_i E_i − I‖₂`.
    pub fn completeness_residual(&self) -> Result<f64> {
        let n = self.dimension();
        let sum = self
            .blocks
            .iter()
            .fold(Matrix::zeros(n, n), |acc, b| acc + &b.projection);
        operator_norm(&(sum - Matrix::identity(n, n)))
    }

    /// `‖(I − M M†) A M‖₂` for block `i`.
    pub fn invariance_residual(&self, i: usize) -> Result<f64> {
        let m = &self.blocks[i].basis;
        let n = self.dimension();
        let proj = m * pseudo_inverse(m)?;
        operator_norm(&((Matrix::identity(n, n) - proj) * &self.a * m))
    }

    /// Largest `‖E_i E_j‖₂` over `i ≠ j`.
    pub fn cross_projection_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, bi) in self.blocks.iter().enumerate() {
            for (j, bj) in self.blocks.iter().enumerate() {
                if i != j {
                    worst = worst.max(operator_norm(&(&bi.projection * &bj.projection))?);
                }
            }
        }
        Ok(worst)
    }
}

fn gaussian_matrix(n: usize, seed: u64, attempt: u64) -> Matrix {
    let g = gaussian_vector(n * n, seed, attempt);
    Matrix::from_column_slice(n, n, g.as_slice())
}

/// Haar-distributed orthogonal matrix from the QR of a Gaussian matrix.
fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    let qr = gaussian_matrix(n, seed, 0).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Build `A = S J S⁻¹` and its invariant decomposition.
pub fn build_system(spec: &SpectralSpec) -> Result<InvariantDecomposition> {
    spec.validate()?;
    let n = spec.dimension();
    let j = spec.jordan_matrix();
    let seed = derive_seed(spec.seed, Domain::Similarity);

    let (s, s_inv, orthogonal) = match spec.similarity {
        Similarity::Identity => (Matrix::identity(n, n), Matrix::identity(n, n), true),
        Similarity::RandomOrthogonal => {
            let q = random_orthogonal(n, seed);
            let qt = q.transpose();
            (q, qt, true)
        }
        Similarity::RandomInvertible { condition_cap } => {
            let mut found = None;
            for attempt in 0..MAX_SIMILARITY_RESAMPLES {
                let s = gaussian_matrix(n, seed, attempt as u64);
                if singular_values(&s)?.condition_number() <= condition_cap {
                    found = Some(s);
                    break;
                }
            }
            let s = found.ok_or_else(|| {
                Error::Construction(format!(
                    "no similarity with condition number ≤ {condition_cap} after {MAX_SIMILARITY_RESAMPLES} draws"
                ))
            })?;
            let s_inv = pseudo_inverse(&s)?;
            (s, s_inv, false)
        }
    };

    let a = &s * &j * &s_inv;
    let mut blocks = Vec::with_capacity(spec.blocks.len());
    let mut off = 0;
    for b in &spec.blocks {
        let basis: Matrix = s.columns(off, b.size).into_owned();
        let dual: Matrix = s_inv.rows(off, b.size).into_owned();
        blocks.push(InvariantBlock {
            eigenvalue: b.lambda,
            size: b.size,
            offset: off,
            projection: &basis * dual,
            basis,
        });
        off += b.size;
    }
    Ok(InvariantDecomposition {
        spec: spec.clone(),
        a,
        similarity: s,
        blocks,
        orthogonal,
    })
}

/// Lower and upper estimates of `‖A^k E_λ‖₂` for one Jordan block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerNormBounds {
    pub lower: f64,
    pub upper: f64,
    pub ln_lower: f64,
    pub ln_upper: f64,
}

/// `|λ|^k Σ_{m<B} |λ|^{-m}` and the same times `k^B`, evaluated in log space.
///
/// The upper value is a valid bound on the block's power norm; the lower
/// value is not always (it can exceed the true norm for small `k`), callers
/// audit it rather than rely on it.
pub fn block_power_norm_bounds(lambda: f64, block_size: usize, k: usize) -> PowerNormBounds {
    assert!(k >= 1 && block_size >= 1 && lambda != 0.0);
    let ln_abs = lambda.abs().ln();
    // log Σ_{m<B} exp(−m ln|λ|)
    let terms: Vec<f64> = (0..block_size).map(|m| -(m as f64) * ln_abs).collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_sum = peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln();
    let ln_lower = k as f64 * ln_abs + ln_sum;
    let ln_upper = ln_lower + block_size as f64 * (k as f64).ln();
    PowerNormBounds {
        lower: ln_lower.exp().min(f64::MAX),
        upper: ln_upper.exp().min(f64::MAX),
        ln_lower,
        ln_upper,
    }
}

const MAX_BOUND_SCAN: u64 = 1 << 40;

/// Smallest `k` with `k ≥ ln B/ln(1/|λ|) + B ln k/ln(1/|λ|) + (B − 1)`.
pub fn hitting_time_block_bound(lambda: f64, block_size: usize) -> Result<u64> {
    let mag = lambda.abs();
    if !(mag > 0.0 && mag < 1.0) {
        return invalid(format!(
            "sufficient hitting time needs 0 < |λ| < 1, got {lambda}"
        ));
    }
    if block_size == 0 {
        return invalid("block size must be at least 1");
    }
    let rate = (1.0 / mag).ln();
    let b = block_size as f64;
    let rhs = |k: f64| b.ln() / rate + b * k.ln() / rate + (b - 1.0);
    // rhs grows like ln k, so a doubling search finds a satisfying k; the
    // linear scan below then returns the smallest one
    let mut hi = 1u64;
    while (hi as f64) < rhs(hi as f64) {
        hi *= 2;
        if hi > MAX_BOUND_SCAN {
            return Err(Error::Convergence {
                what: "hitting time bound scan".into(),
                iterations: hi as usize,
            });
        }
    }
    Ok((1..=hi).find(|&k| k as f64 >= rhs(k as f64)).unwrap_or(hi))
}

/// `⌈max_i 4|B_i| ln|B_i| / ln(1/|λ_i|)⌉`, at least 1.
pub fn hitting_time_spectral_bound(spec: &SpectralSpec) -> Result<u64> {
    spec.validate()?;
    let mut worst: f64 = 0.0;
    for b in &spec.blocks {
        let mag = b.lambda.abs();
        if mag >= 1.0 {
            return invalid(format!(
                "worst-block hitting time needs |λ| < 1, got {}",
                b.lambda
            ));
        }
        let size = b.size as f64;
        worst = worst.max(4.0 * size * size.ln() / (1.0 / mag).ln());
    }
    Ok((worst.ceil() as u64).max(1))
}

/// Exact first contractive hitting time with its norm trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeReport {
    pub k_hat_exact: usize,
    /// `‖A^k̂‖₂`.
    pub contraction: f64,
    /// First `k` with `‖A^k E_i‖ < 1`, per block (when a decomposition is given).
    pub per_block_k: Vec<Option<usize>>,
    /// Sufficient `k` per block from [`hitting_time_block_bound`] (stable blocks only).
    pub bound_block: Vec<Option<u64>>,
    /// [`hitting_time_spectral_bound`] when every block is stable.
    pub bound_spectral: Option<u64>,
    /// `‖A^k‖` for `k = 1..=k̂`; entries beyond f64 range are infinite, see `ln_norms_trace`.
    pub norms_trace: Vec<f64>,
    /// `ln ‖A^k‖` for `k = 1..=k̂`.
    pub ln_norms_trace: Vec<f64>,
}

/// `k̂ = min{k : ‖A^k‖ < 1}` by sequential multiplication.
///
/// With a decomposition, the scan continues past `k̂` (up to `k_max`) until
/// every block's `‖A^k E_i‖` has dropped below one. The running power is
/// rescaled whenever its entries exceed [`crate::linalg::Tolerances::log_space_threshold`],
/// so explosive systems produce a log-space trace instead of overflowing.
pub fn exact_hitting_time(
    a: &Matrix,
    k_max: usize,
    decomposition: Option<&InvariantDecomposition>,
) -> Result<HittingTimeReport> {
    ensure_square(a, "exact_hitting_time")?;
    if k_max == 0 {
        return invalid("k_max must be at least 1");
    }
    if let Some(d) = decomposition {
        if d.dimension() != a.nrows() {
            return invalid("decomposition dimension does not match matrix");
        }
    }
    let nblocks = decomposition.map_or(0, |d| d.blocks.len());
    let mut per_block: Vec<Option<usize>> = vec![None; nblocks];
    let mut ln_trace = Vec::new();
    let mut k_hat = None;

    let mut power = a.clone();
    let mut ln_scale = 0.0;
    for k in 1..=k_max {
        if k > 1 {
            power = &power * a;
        }
        let amax = power.amax();
        if amax > TOL.log_space_threshold {
            power /= amax;
            ln_scale += amax.ln();
        }
        if k_hat.is_none() {
            let nrm = operator_norm(&power)?;
            let ln_norm = if nrm == 0.0 {
                f64::NEG_INFINITY
            } else {
                ln_scale + nrm.ln()
            };
            ln_trace.push(ln_norm);
            if ln_norm < 0.0 {
                k_hat = Some(k);
            }
        }
        if let Some(d) = decomposition {
            for (i, b) in d.blocks.iter().enumerate() {
                if per_block[i].is_none() {
                    let nrm = operator_norm(&(&power * &b.projection))?;
                    if nrm == 0.0 || ln_scale + nrm.ln() < 0.0 {
                        per_block[i] = Some(k);
                    }
                }
            }
        }
        if k_hat.is_some() && per_block.iter().all(Option::is_some) {
            break;
        }
    }

    let norms_trace: Vec<f64> = ln_trace.iter().map(|l| l.exp()).collect();
    let Some(k_hat) = k_hat else {
        return Err(Error::NotContractive {
            k_max,
            last_norm: *norms_trace.last().unwrap(),
            norms_trace,
        });
    };
    let (bound_block, bound_spectral) = match decomposition {
        Some(d) => (
            d.blocks
                .iter()
                .map(|b| hitting_time_block_bound(b.eigenvalue, b.size).ok())
                .collect(),
            hitting_time_spectral_bound(&d.spec).ok(),
        ),
        None => (Vec::new(), None),
    };
    Ok(HittingTimeReport {
        k_hat_exact: k_hat,
        contraction: norms_trace[k_hat - 1],
        per_block_k: per_block,
        bound_block,
        bound_spectral,
        norms_trace,
        ln_norms_trace: ln_trace,
    })
}

/// Default scan budget `100·n`.
pub fn default_k_max(a: &Matrix) -> usize {
    100 * a.nrows()
}

/// Single Jordan block `J_n(λ)` in the standard basis.
pub fn jordan_block(lambda: f64, size: usize) -> Matrix {
    DMatrix::from_fn(size, size, |i, j| {
        if i == j {
            lambda
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    })
}
