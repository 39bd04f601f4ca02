use linmix::concentration::{
    default_epsilon_grid, iid_tail_bound, projection_tail_bound, subtraj_tail_bound,
    talagrand_constant, wasserstein_gaussians, wasserstein_to_stationary, LipschitzReward,
};
use linmix::linalg::stationary_covariance;
use linmix::rng::gaussian_vector;
use linmix::{Matrix, Vector};
use proptest::prelude::*;

fn random_gaussian(n: usize, seed: u64, index: u64) -> (Vector, Matrix) {
    let mean = gaussian_vector(n, seed, 2 * index);
    let g = Matrix::from_column_slice(n, n, gaussian_vector(n * n, seed, 2 * index + 1).as_slice());
    (mean, &g * g.transpose() + Matrix::identity(n, n) * 0.1)
}

#[test]
fn wasserstein_triangle_inequality() {
    for i in 0..100u64 {
        let (m1, c1) = random_gaussian(3, 17, 3 * i);
        let (m2, c2) = random_gaussian(3, 17, 3 * i + 1);
        let (m3, c3) = random_gaussian(3, 17, 3 * i + 2);
        let d12 = wasserstein_gaussians(&m1, &c1, &m2, &c2).unwrap();
        let d23 = wasserstein_gaussians(&m2, &c2, &m3, &c3).unwrap();
        let d13 = wasserstein_gaussians(&m1, &c1, &m3, &c3).unwrap();
        assert!(d13 <= d12 + d23 + 1e-6, "triple {i}: {d13} > {d12} + {d23}");
    }
}

#[test]
fn wasserstein_is_symmetric() {
    let (m1, c1) = random_gaussian(4, 3, 0);
    let (m2, c2) = random_gaussian(4, 3, 1);
    let a = wasserstein_gaussians(&m1, &c1, &m2, &c2).unwrap();
    let b = wasserstein_gaussians(&m2, &c2, &m1, &c1).unwrap();
    assert!((a - b).abs() < 1e-8 * a);
}

#[test]
fn stationary_form_agrees_on_jordan_system() {
    let a = Matrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
    let p = stationary_covariance(&a).unwrap();
    let shrink = Matrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
    let deficit = &shrink * &p * shrink.transpose() * 0.05;
    let mean = Vector::from_vec(vec![0.2, -0.1]);
    let fast = wasserstein_to_stationary(&mean, &deficit, &p).unwrap();
    let slow = wasserstein_gaussians(&mean, &(&p - &deficit), &Vector::zeros(2), &p).unwrap();
    assert!((fast - slow).abs() <= 1e-7 * slow);
}

#[test]
fn transport_constant_fixtures() {
    // frozen from an independent evaluation of the closed forms
    assert!((talagrand_constant(1.0, 10).unwrap().value - 64.0174377556259).abs() < 1e-9);
    assert!((talagrand_constant(1.5, 10).unwrap().value - 191.58312289230247).abs() < 1e-9);
    assert!((talagrand_constant(0.5, 10).unwrap().value - 4.0).abs() < 1e-12);
    assert!((projection_tail_bound(1000, 250, 0.2).unwrap() - 0.08213039855366129).abs() < 1e-12);
}

#[test]
fn epsilon_grid_spans_informative_range() {
    let scale = 3.7;
    let grid = default_epsilon_grid(scale);
    assert_eq!(grid.len(), 12);
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
    let first = 2.0 * (-grid[0] * grid[0] / scale).exp();
    let last = 2.0 * (-grid[11] * grid[11] / scale).exp();
    assert!((first - 1.9).abs() < 1e-9 && (last - 1e-4).abs() < 1e-12);
}

fn reward_strategy() -> impl Strategy<Value = LipschitzReward> {
    prop_oneof![
        (0usize..3).prop_map(|index| LipschitzReward::Coordinate { index }),
        (0.1f64..10.0).prop_map(|radius| LipschitzReward::ClippedNorm { radius }),
        (proptest::collection::vec(-1.0f64..1.0, 3), 0.1f64..5.0).prop_map(|(u, cap)| {
            let v = Vector::from_vec(u);
            let norm = v.norm().max(1e-6);
            LipschitzReward::Affine {
                direction: (v / norm).as_slice().to_vec(),
                cap,
            }
        }),
    ]
}

proptest! {
    #[test]
    fn subtrajectory_bound_reduces_to_iid_without_contraction(
        n in 1usize..500, eps in 0.01f64..20.0, lmax in 1.0f64..50.0,
    ) {
        let iid = iid_tail_bound(n, eps, lmax).unwrap().bound_value;
        let sub = subtraj_tail_bound(n, eps, 0.0, lmax).unwrap().bound_value;
        prop_assert_eq!(iid, sub);
    }

    #[test]
    fn rewards_are_one_lipschitz(
        r in reward_strategy(),
        x in proptest::collection::vec(-20.0f64..20.0, 3),
        y in proptest::collection::vec(-20.0f64..20.0, 3),
    ) {
        let (x, y) = (Vector::from_vec(x), Vector::from_vec(y));
        prop_assert!((r.eval(&x) - r.eval(&y)).abs() <= (&x - &y).norm() * (1.0 + 1e-12) + 1e-12);
    }
}
