mod common;

use btrank::btmle::{fit_mle, SolverOptions};
use btrank::npmle::{
    fit_npmle, marginal_density, posterior_mean, posterior_mean_ranks, posterior_summary,
    smoothed_posterior_mean, EbOptions, GaussianObservations, GridSpec, MixingDistribution,
    RankOptions, TieRule,
};
use common::estimable_dataset;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn five_atoms() -> MixingDistribution {
    MixingDistribution::new(
        vec![-2.0, -0.5, 0.0, 1.0, 2.5],
        vec![0.1, 0.2, 0.3, 0.25, 0.15],
    )
    .unwrap()
}

fn phi(x: f64, s: f64) -> f64 {
    (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn density_and_posterior_mean_by_direct_summation() {
    let g = five_atoms();
    for &(x, s) in &[(0.3, 0.5), (-1.7, 1.2), (2.2, 0.1)] {
        let f: f64 = g
            .atoms()
            .iter()
            .zip(g.weights())
            .map(|(a, w)| w * phi(x - a, s))
            .sum();
        assert!((marginal_density(&g, x, s) - f).abs() < 1e-14);
        let num: f64 = g
            .atoms()
            .iter()
            .zip(g.weights())
            .map(|(a, w)| a * w * phi(x - a, s))
            .sum();
        assert!((posterior_mean(&g, x, s) - num / f).abs() < 1e-12);
    }
}

#[test]
fn smoothed_mean_matches_riemann_sum() {
    // prior: mixture of N(t_k, h^2) bumps; integrate theta * prior * likelihood
    let g = five_atoms();
    let h = 0.3;
    let obs = GaussianObservations::new(vec![0.4, -1.0, 3.0], vec![0.5, 0.8, 0.2]).unwrap();
    let got = smoothed_posterior_mean(&g, &obs, h).unwrap();
    for (k, (&x, &s)) in obs.theta_hat().iter().zip(obs.sigma_hat()).enumerate() {
        let (lo, hi, nodes) = (-6.0, 7.0, 10_000);
        let dx = (hi - lo) / nodes as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for q in 0..nodes {
            let t = lo + (q as f64 + 0.5) * dx;
            let prior: f64 = g
                .atoms()
                .iter()
                .zip(g.weights())
                .map(|(a, w)| w * phi(t - a, h))
                .sum();
            let post = prior * phi(x - t, s);
            num += t * post;
            den += post;
        }
        assert!(
            (got[k] - num / den).abs() < 1e-6,
            "{} vs {}",
            got[k],
            num / den
        );
    }
}

#[test]
fn degenerate_prior_gives_full_ranks() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = estimable_dataset(&mut rng, 5);
    let f = fit_mle(&d, &SolverOptions::default()).unwrap();
    let g = MixingDistribution::point_mass(0.2);
    let r = posterior_mean_ranks(&g, &f, &RankOptions::default()).unwrap();
    assert!(r.iter().all(|&v| (v - 4.0).abs() < 1e-12), "{r:?}");
}

#[test]
fn half_ties_sum_to_pair_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = estimable_dataset(&mut rng, 8);
    let f = fit_mle(&d, &SolverOptions::default()).unwrap();
    let g = fit_npmle(
        &GaussianObservations::from_fit(&f).unwrap(),
        &GridSpec::default(),
    )
    .unwrap();
    let opts = RankOptions {
        ties: TieRule::Half,
        smoothing: None,
    };
    let r = posterior_mean_ranks(&g, &f, &opts).unwrap();
    assert!((r.iter().sum::<f64>() - 28.0).abs() < 1e-6);
    assert!(r.iter().all(|&v| (0.0..=7.0).contains(&v)));
    let weak = posterior_mean_ranks(&g, &f, &RankOptions::default()).unwrap();
    assert!(weak.iter().zip(&r).all(|(w, h)| w >= &(h - 1e-12)));
    let smooth = posterior_mean_ranks(
        &g,
        &f,
        &RankOptions {
            ties: TieRule::Weak,
            smoothing: Some(0.2),
        },
    )
    .unwrap();
    assert!((smooth.iter().sum::<f64>() - 28.0).abs() < 1e-6);
}

#[test]
fn summary_table_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = estimable_dataset(&mut rng, 6);
    let f = fit_mle(&d, &SolverOptions::default()).unwrap();
    let s = posterior_summary(&f, &EbOptions::default()).unwrap();
    let mut out = Vec::new();
    s.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("label,theta_hat,se,post_mean,post_mean_smoothed,post_rank\n"));
    assert_eq!(text.lines().count(), 7);
    assert!(s.bandwidth > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn posterior_means_stay_in_the_atom_hull(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s: Vec<f64> = (0..40).map(|_| rng.random_range(0.2..1.0)).collect();
        let obs = GaussianObservations::new(x.clone(), s.clone()).unwrap();
        let g = fit_npmle(&obs, &GridSpec::default()).unwrap();
        let (lo, hi) = (g.support().next().unwrap().0, g.support().last().unwrap().0);
        for (&xi, &si) in x.iter().zip(&s) {
            let m = posterior_mean(&g, xi, si);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        }
    }

    #[test]
    fn symmetric_unimodal_prior_shrinks_toward_its_mean(x in -4.0f64..4.0, s in 0.1f64..2.0) {
        let atoms: Vec<f64> = (0..41).map(|k| -2.0 + 0.1 * k as f64).collect();
        let weights: Vec<f64> = atoms.iter().map(|a| (-a * a).exp()).collect();
        let g = MixingDistribution::normalized(atoms, weights).unwrap();
        let m = posterior_mean(&g, x, s);
        prop_assert!((m - g.mean()).abs() <= (x - g.mean()).abs() + 1e-12);
    }

    #[test]
    fn equal_scales_preserve_order(seed in any::<u64>(), s in 0.2f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        x.sort_by(f64::total_cmp);
        let obs = GaussianObservations::new(x.clone(), vec![s; 30]).unwrap();
        let g = fit_npmle(&obs, &GridSpec::default()).unwrap();
        let pm: Vec<f64> = x.iter().map(|&v| posterior_mean(&g, v, s)).collect();
        prop_assert!(pm.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}
