//! Seeded simulation of `x_{t+1} = A x_t + w_t`, its k̂-spaced sub-chain and
//! the stationary law.

use std::hash::{Hash, Hasher};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{ensure_square, matrix_power, operator_norm, psd_sqrt, Matrix, Vector, TOL};
use crate::rng::{derive_seed, gaussian_vector, stream_id, Domain};

/// A recorded state sequence `x_0, …, x_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    /// `noises[t] = x_{t+1} − M x_t` where `M` is the chain's transition,
    /// stored bit-for-bit as computed from the recorded states.
    pub noises: Option<Vec<Vector>>,
    pub seed: u64,
    pub trial: u64,
    /// Time between recorded states in steps of the original system.
    pub spacing: usize,
    /// Fingerprint of the generating matrix, see [`system_fingerprint`].
    pub system_id: u64,
}

impl Trajectory {
    pub fn dimension(&self) -> usize {
        self.states[0].len()
    }

    /// Number of transitions recorded.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> &Vector {
        self.states.last().expect("at least x0")
    }

    /// Truncate to the first `steps` transitions.
    pub fn prefix(&self, steps: usize) -> Trajectory {
        let steps = steps.min(self.len());
        Trajectory {
            states: self.states[..=steps].to_vec(),
            noises: self.noises.as_ref().map(|n| n[..steps].to_vec()),
            ..self.clone()
        }
    }
}

/// Gaussian noise law `N(0, covariance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub dimension: usize,
    pub covariance: Matrix,
}

/// Hash of the matrix shape and entry bits.
pub fn system_fingerprint(a: &Matrix) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    (a.nrows(), a.ncols()).hash(&mut h);
    for v in a.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Where the per-step noise comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSource {
    /// Draw `t` of trial `trial` is `gaussian_vector(n, noise_seed(seed), stream_id(trial, t))`.
    Seeded { seed: u64, trial: u64 },
    /// Deterministic propagation `x_{t+1} = A x_t`.
    Suppressed,
}

pub fn noise_seed(seed: u64) -> u64 {
    derive_seed(seed, Domain::Noise)
}

/// One linear Gaussian chain `x' = M x + L g` with `g ∼ N(0, I)`.
///
/// The raw system has `M = A`, `L = I`; the sub-chain sampled every k̂ steps
/// has `M = A^k̂`, `L = Σ_k̂^{1/2}`.
#[derive(Debug, Clone)]
pub struct LinearGaussianChain {
    transition: Matrix,
    noise_sqrt: Option<Matrix>,
    spacing: usize,
    system_id: u64,
}

impl LinearGaussianChain {
    pub fn raw(a: &Matrix) -> Result<Self> {
        ensure_square(a, "chain")?;
        Ok(Self {
            transition: a.clone(),
            noise_sqrt: None,
            spacing: 1,
            system_id: system_fingerprint(a),
        })
    }

    /// The chain `x_{k̂(i+1)} = A^k̂ x_{k̂(i)} + s_i`, `s_i ∼ N(0, Σ_k̂)`.
    ///
    /// Fails with a contract violation unless `‖A^k̂‖ < 1`.
    pub fn subsampled(a: &Matrix, k_hat: usize) -> Result<Self> {
        let chain = Self::spaced(a, k_hat)?;
        let norm = operator_norm(&chain.transition)?;
        if norm >= 1.0 {
            return Err(Error::ContractViolation(format!(
                "‖A^{k_hat}‖ = {norm:.6} is not below 1"
            )));
        }
        Ok(chain)
    }

    /// Like [`Self::subsampled`] without the contraction requirement.
    pub fn spaced(a: &Matrix, spacing: usize) -> Result<Self> {
        ensure_square(a, "chain")?;
        if spacing == 0 {
            return invalid("spacing must be at least 1");
        }
        if spacing == 1 {
            return Self::raw(a);
        }
        let cov = subtrajectory_covariance(a, spacing)?;
        Ok(Self {
            transition: matrix_power(a, spacing),
            noise_sqrt: Some(psd_sqrt(&cov.covariance)?),
            spacing,
            system_id: system_fingerprint(a),
        })
    }

    pub fn dimension(&self) -> usize {
        self.transition.nrows()
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    /// `Σ^{1/2}` of the step noise (identity for the raw chain).
    pub fn noise_sqrt(&self) -> Matrix {
        self.noise_sqrt
            .clone()
            .unwrap_or_else(|| Matrix::identity(self.dimension(), self.dimension()))
    }

    /// Noise increment from a standard-normal draw.
    pub fn shape_noise(&self, g: Vector) -> Vector {
        match &self.noise_sqrt {
            None => g,
            Some(l) => l * g,
        }
    }

    pub fn step(&self, x: &Vector, g: Vector) -> Vector {
        &self.transition * x + self.shape_noise(g)
    }

    /// Visit `x_1, …, x_steps` without storing them; same noise streams as [`Self::run`].
    pub fn walk<F: FnMut(usize, &Vector)>(
        &self,
        x0: &Vector,
        steps: usize,
        seed: u64,
        trial: u64,
        mut visit: F,
    ) -> Result<()> {
        let n = self.dimension();
        let nseed = noise_seed(seed);
        let mut x = x0.clone();
        for t in 0..steps {
            let g = gaussian_vector(n, nseed, stream_id(trial, t as u64));
            x = &self.transition * &x + self.shape_noise(g);
            let norm = x.norm();
            if !norm.is_finite() || norm > TOL.overflow {
                return Err(Error::Overflow {
                    step: t + 1,
                    limit: TOL.overflow,
                    truncated: Box::new(Trajectory {
                        states: vec![x0.clone()],
                        noises: None,
                        seed,
                        trial,
                        spacing: self.spacing,
                        system_id: self.system_id,
                    }),
                });
            }
            visit(t + 1, &x);
        }
        Ok(())
    }

    /// Run `steps` transitions from `x0`.
    pub fn run(
        &self,
        x0: &Vector,
        steps: usize,
        noise: NoiseSource,
        retain_noise: bool,
    ) -> Result<Trajectory> {
        let n = self.dimension();
        if x0.len() != n {
            return invalid(format!("x0 has length {}, expected {n}", x0.len()));
        }
        if steps == 0 {
            return invalid("steps must be at least 1");
        }
        let (seed, trial) = match noise {
            NoiseSource::Seeded { seed, trial } => (seed, trial),
            NoiseSource::Suppressed => (0, 0),
        };
        let mut traj = Trajectory {
            states: Vec::with_capacity(steps + 1),
            noises: retain_noise.then(|| Vec::with_capacity(steps)),
            seed,
            trial,
            spacing: self.spacing,
            system_id: self.system_id,
        };
        traj.states.push(x0.clone());
        let nseed = noise_seed(seed);
        for t in 0..steps {
            let x = traj.states.last().unwrap();
            let drift = &self.transition * x;
            let next = match noise {
                NoiseSource::Seeded { .. } => {
                    let g = gaussian_vector(n, nseed, stream_id(trial, t as u64));
                    &drift + self.shape_noise(g)
                }
                NoiseSource::Suppressed => drift.clone(),
            };
            let norm = next.norm();
            if !norm.is_finite() || norm > TOL.overflow {
                return Err(Error::Overflow {
                    step: t + 1,
                    limit: TOL.overflow,
                    truncated: Box::new(traj),
                });
            }
            if let Some(noises) = traj.noises.as_mut() {
                noises.push(&next - &drift);
            }
            traj.states.push(next);
        }
        Ok(traj)
    }
}

/// Trajectory of the raw system, trial 0 of `seed`, noise retained.
pub fn simulate_trajectory(a: &Matrix, x0: &Vector, steps: usize, seed: u64) -> Result<Trajectory> {
    LinearGaussianChain::raw(a)?.run(x0, steps, NoiseSource::Seeded { seed, trial: 0 }, true)
}

/// `Σ_k̂ = Σ_{l<k̂} A^l (A^l)ᵀ`.
pub fn subtrajectory_covariance(a: &Matrix, k_hat: usize) -> Result<NoiseModel> {
    ensure_square(a, "subtrajectory_covariance")?;
    if k_hat == 0 {
        return invalid("k_hat must be at least 1");
    }
    let n = a.nrows();
    let mut power = Matrix::identity(n, n);
    let mut cov = Matrix::zeros(n, n);
    for _ in 0..k_hat {
        cov += &power * power.transpose();
        power = &power * a;
    }
    Ok(NoiseModel {
        dimension: n,
        covariance: crate::linalg::symmetrize(&cov),
    })
}

/// Sub-chain trajectory with `blocks` transitions of k̂ steps each.
pub fn simulate_subtrajectory(
    a: &Matrix,
    k_hat: usize,
    x0: &Vector,
    blocks: usize,
    seed: u64,
) -> Result<Trajectory> {
    LinearGaussianChain::subsampled(a, k_hat)?.run(
        x0,
        blocks,
        NoiseSource::Seeded { seed, trial: 0 },
        true,
    )
}

/// Draw `index` of the stationary law with precomputed `P∞^{1/2}`.
pub fn stationary_draw(p_sqrt: &Matrix, seed: u64, index: u64) -> Vector {
    let g = gaussian_vector(p_sqrt.nrows(), derive_seed(seed, Domain::Initial), index);
    p_sqrt * g
}

/// `count` i.i.d. draws `P∞^{1/2} g_i` from `N(0, P∞)`.
pub fn stationary_sample(p_inf: &Matrix, count: usize, seed: u64) -> Result<Vec<Vector>> {
    let root = psd_sqrt(p_inf)?;
    Ok((0..count as u64)
        .map(|i| stationary_draw(&root, seed, i))
        .collect())
}

/// CSV with header `t,x_0,…,x_{n−1}`; `t` counts original-system steps.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = traj.dimension();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for (i, x) in traj.states.iter().enumerate() {
        let mut rec = vec![(i * traj.spacing).to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
