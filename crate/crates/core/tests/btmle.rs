mod common;

use btrank::btmle::{
    fit_mle, gradient, information, log_likelihood, pairwise_covariance, SolverOptions,
};
use btrank::comparisons::{ComparisonDataset, PairCount};
use btrank::Error;
use common::{estimable_dataset, loglik};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn information_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let d = estimable_dataset(&mut rng, 6);
        let theta: Vec<f64> = (0..6).map(|k| 0.3 * k as f64 - 0.7).collect();
        let info = information(&theta, &d);
        let h = 1e-5;
        for j in 0..6 {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[j] += h;
            down[j] -= h;
            let (gu, gd) = (gradient(&up, &d), gradient(&down, &d));
            for i in 0..6 {
                let fd = -(gu[i] - gd[i]) / (2.0 * h);
                assert!(
                    (fd - info[(i, j)]).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "({i},{j}) {fd} vs {}",
                    info[(i, j)]
                );
            }
        }
    }
}

#[test]
fn gradient_matches_finite_differences_of_loglik() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = estimable_dataset(&mut rng, 5);
    let theta = [0.0, 0.4, -0.2, 1.1, -0.9];
    let g = gradient(&theta, &d);
    for k in 0..5 {
        let mut up = theta;
        let mut down = theta;
        up[k] += 1e-6;
        down[k] -= 1e-6;
        let fd = (loglik(&up, &d) - loglik(&down, &d)) / 2e-6;
        assert!((fd - g[k]).abs() < 1e-5, "{k}: {fd} vs {}", g[k]);
    }
    assert!((log_likelihood(&theta, &d).unwrap() - loglik(&theta, &d)).abs() < 1e-9);
}

#[test]
fn covariance_inverts_the_free_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = estimable_dataset(&mut rng, 7);
    let f = fit_mle(&d, &SolverOptions::default()).unwrap();
    let info = information(&f.theta, &d);
    for a in 0..6 {
        for b in 0..6 {
            let prod: f64 = (0..6).map(|k| f.cov[(a, k)] * info[(k + 1, b + 1)]).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((prod - want).abs() < 1e-9, "({a},{b}) {prod}");
        }
    }
    for i in 0..7 {
        assert!((f.std_error(i).powi(2) - f.variance(i)).abs() < 1e-12);
        assert!(pairwise_covariance(&f, i, i).is_err());
        for j in (0..7).filter(|&j| j != i) {
            let blk = pairwise_covariance(&f, i, j).unwrap();
            assert_eq!(blk[0][1], blk[1][0]);
            if i == 0 {
                assert_eq!(blk[0], [0.0, 0.0]);
            }
        }
    }
}

#[test]
fn divergent_fit_names_the_unbeaten_player() {
    // player 3 wins every meeting
    let d = ComparisonDataset::from_pairs(
        4,
        [
            PairCount {
                i: 0,
                j: 1,
                n: 5,
                w: 2,
            },
            PairCount {
                i: 1,
                j: 2,
                n: 5,
                w: 3,
            },
            PairCount {
                i: 0,
                j: 2,
                n: 5,
                w: 3,
            },
            PairCount {
                i: 0,
                j: 3,
                n: 4,
                w: 0,
            },
            PairCount {
                i: 2,
                j: 3,
                n: 4,
                w: 0,
            },
        ],
    )
    .unwrap();
    match fit_mle(&d, &SolverOptions::default()) {
        Err(Error::Divergent { players }) => assert_eq!(players, vec![3]),
        other => panic!("expected divergence, got {other:?}"),
    }
}

fn dataset_strategy() -> impl Strategy<Value = ComparisonDataset> {
    (3usize..7, any::<u64>())
        .prop_map(|(p, seed)| estimable_dataset(&mut ChaCha8Rng::seed_from_u64(seed), p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loglik_is_shift_invariant(d in dataset_strategy(), c in -5.0f64..5.0) {
        let theta: Vec<f64> = (0..d.num_players()).map(|k| (k as f64 * 0.37).sin()).collect();
        let shifted: Vec<f64> = theta.iter().map(|t| t + c).collect();
        let (a, b) = (log_likelihood(&theta, &d).unwrap(), log_likelihood(&shifted, &d).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn fit_is_a_stationary_maximum(d in dataset_strategy(), bumps in prop::collection::vec(-0.3f64..0.3, 7)) {
        let f = fit_mle(&d, &SolverOptions::default()).unwrap();
        prop_assert_eq!(f.theta[0], 0.0);
        let g = gradient(&f.theta, &d);
        prop_assert!(g.iter().all(|v| v.abs() < 1e-8));
        let moved: Vec<f64> = f.theta.iter().zip(&bumps).map(|(t, b)| t + b).collect();
        prop_assert!(loglik(&moved, &d) <= f.loglik + 1e-9);
    }

    #[test]
    fn relabelling_permutes_the_ratings(d in dataset_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let n = d.num_players();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let f = fit_mle(&d, &SolverOptions::default()).unwrap();
        let g = fit_mle(&d.permuted(&perm).unwrap(), &SolverOptions::default()).unwrap();
        for a in 0..n {
            for b in 0..n {
                let want = f.theta[perm[a]] - f.theta[perm[b]];
                prop_assert!((g.theta[a] - g.theta[b] - want).abs() < 1e-7);
            }
        }
        prop_assert!((f.loglik - g.loglik).abs() < 1e-8 * (1.0 + f.loglik.abs()));
    }
}
