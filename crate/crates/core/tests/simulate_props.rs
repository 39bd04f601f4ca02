use linmix::linalg::{matrix_power, psd_sqrt, stationary_covariance};
use linmix::simulate::{
    simulate_trajectory, stationary_draw, subtrajectory_covariance, write_trajectory_csv,
    LinearGaussianChain, NoiseSource,
};
use linmix::{Matrix, Vector};

fn jordan2() -> Matrix {
    Matrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9])
}

fn empirical_cov(samples: &[Vector]) -> Matrix {
    let n = samples[0].len();
    let t = samples.len() as f64;
    let mean = samples.iter().fold(Vector::zeros(n), |acc, x| acc + x) / t;
    samples.iter().fold(Matrix::zeros(n, n), |acc, x| {
        acc + (x - &mean) * (x - &mean).transpose()
    }) / (t - 1.0)
}

#[test]
fn superposition_reproduces_final_state() {
    for (a, steps) in [(jordan2(), 60), (jordan2() * 1.3, 40)] {
        let x0 = Vector::from_vec(vec![0.7, -1.1]);
        let traj = simulate_trajectory(&a, &x0, steps, 3).unwrap();
        let noise = traj.noises.as_ref().unwrap();
        // x_N = A^N x_0 + Σ_{t=1}^{N} A^{N−t} η_{t−1}
        let mut expected = matrix_power(&a, steps) * &x0;
        for t in 1..=steps {
            expected += matrix_power(&a, steps - t) * &noise[t - 1];
        }
        let last = traj.last();
        assert!((last - &expected).norm() <= 1e-8 * expected.norm().max(1.0));
    }
}

#[test]
fn stored_noise_is_exact_residual() {
    let a = jordan2();
    let traj = simulate_trajectory(&a, &Vector::zeros(2), 50, 8).unwrap();
    for (t, e) in traj.noises.as_ref().unwrap().iter().enumerate() {
        assert_eq!(&traj.states[t + 1] - &a * &traj.states[t], *e);
    }
}

#[test]
fn subchain_step_law_matches_covariance() {
    let a = jordan2();
    let chain = LinearGaussianChain::subsampled(&a, 35).unwrap();
    let sigma = subtrajectory_covariance(&a, 35).unwrap().covariance;
    let x0 = Vector::zeros(2);
    let samples: Vec<Vector> = (0..10_000u64)
        .map(|trial| {
            let t = chain
                .run(&x0, 1, NoiseSource::Seeded { seed: 21, trial }, false)
                .unwrap();
            t.states[1].clone()
        })
        .collect();
    let rel = (empirical_cov(&samples) - &sigma).norm() / sigma.norm();
    assert!(rel < 0.1, "relative Frobenius error {rel}");
}

#[test]
fn stationary_start_stays_stationary() {
    let a = jordan2();
    let p = stationary_covariance(&a).unwrap();
    let root = psd_sqrt(&p).unwrap();
    let chain = LinearGaussianChain::raw(&a).unwrap();
    let trials = 10_000u64;
    let checkpoints = [0usize, 5, 20, 60];
    let mut at: Vec<Vec<Vector>> = vec![Vec::with_capacity(trials as usize); checkpoints.len()];
    for trial in 0..trials {
        let x0 = stationary_draw(&root, 5, trial);
        at[0].push(x0.clone());
        let traj = chain
            .run(&x0, 60, NoiseSource::Seeded { seed: 5, trial }, false)
            .unwrap();
        for (slot, &t) in checkpoints.iter().enumerate().skip(1) {
            at[slot].push(traj.states[t].clone());
        }
    }
    for (samples, t) in at.iter().zip(checkpoints) {
        let rel = (empirical_cov(samples) - &p).norm() / p.norm();
        assert!(rel < 0.1, "t={t}: relative Frobenius error {rel}");
    }
}

#[test]
fn walk_and_prefix_agree_with_run() {
    let a = jordan2();
    let chain = LinearGaussianChain::raw(&a).unwrap();
    let x0 = Vector::from_vec(vec![1.0, 2.0]);
    let full = chain
        .run(&x0, 30, NoiseSource::Seeded { seed: 4, trial: 9 }, true)
        .unwrap();
    let short = chain
        .run(&x0, 12, NoiseSource::Seeded { seed: 4, trial: 9 }, true)
        .unwrap();
    assert_eq!(full.prefix(12), short);
    let mut seen = Vec::new();
    chain
        .walk(&x0, 30, 4, 9, |_, x| seen.push(x.clone()))
        .unwrap();
    assert_eq!(seen, full.states[1..].to_vec());
}

#[test]
fn trajectory_csv_layout() {
    let traj = simulate_trajectory(&jordan2(), &Vector::zeros(2), 3, 1).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x_0,x_1");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,0,0"));
}
