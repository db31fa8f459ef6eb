mod common;

use btrank::btmle::{fit_mle, SolverOptions};
use btrank::comparisons::from_citation_matrix;
use btrank::fusedlasso::{
    default_lambda_grid, fit_penalized, lambda_max, penalty, select_lambda, solve_path,
    write_path_csv, write_path_summary_csv, LassoOptions,
};
use btrank::simlab::synthetic_citations;
use common::{estimable_dataset, loglik};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn double_loop_penalty(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            s += (x[i] - x[j]).abs();
        }
    }
    s
}

proptest! {
    #[test]
    fn penalty_matches_double_loop(x in prop::collection::vec(-5.0f64..5.0, 0..30)) {
        prop_assert!((penalty(&x) - double_loop_penalty(&x)).abs() < 1e-9 * (1.0 + double_loop_penalty(&x)));
    }
}

/// Subgradient descent on the penalized objective with the anchor held at 0,
/// keeping the best iterate.
fn subgradient_oracle(
    d: &btrank::comparisons::ComparisonDataset,
    lambda: f64,
    iters: usize,
) -> f64 {
    let n = d.num_players();
    let objective = |t: &[f64]| -loglik(t, d) + lambda * double_loop_penalty(t);
    let mut theta = vec![0.0; n];
    let mut best = objective(&theta);
    for k in 0..iters {
        let mut g = vec![0.0; n];
        for p in d.pairs() {
            let pij = 1.0 / (1.0 + (theta[p.j] - theta[p.i]).exp());
            let r = p.w as f64 - p.n as f64 * pij;
            g[p.i] -= r;
            g[p.j] += r;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g[i] += lambda
                        * (theta[i] - theta[j]).signum()
                        * (theta[i] != theta[j]) as i32 as f64;
                }
            }
        }
        let norm = g[1..].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let step = 0.5 / ((k + 1) as f64).sqrt();
        for i in 1..n {
            theta[i] -= step * g[i] / norm;
        }
        best = best.min(objective(&theta));
    }
    best
}

#[test]
fn penalized_fit_beats_subgradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..4 {
        let d = estimable_dataset(&mut rng, 4);
        let lambda = lambda_max(&d) * [0.05, 0.2, 0.5, 0.9][trial];
        let s = fit_penalized(&d, lambda, &LassoOptions::default()).unwrap();
        let oracle = subgradient_oracle(&d, lambda, 100_000);
        let ours = -loglik(&s.theta, &d) + lambda * double_loop_penalty(&s.theta);
        assert!(ours <= oracle + 1e-9, "trial {trial}: {ours} vs {oracle}");
        assert!(oracle - ours < 1e-3, "oracle far off: {oracle} vs {ours}");
    }
}

#[test]
fn path_on_citation_fixture() {
    let d = from_citation_matrix(&synthetic_citations(40, 3).unwrap()).unwrap();
    let grid = default_lambda_grid(&d);
    assert_eq!(grid.len(), 51);
    let opts = LassoOptions::default();
    let path = solve_path(&d, &grid, &opts).unwrap();
    let mle = fit_mle(&d, &SolverOptions::default()).unwrap();
    for (a, b) in path.solutions[0].theta.iter().zip(&mle.theta) {
        assert!((a - b).abs() < 1e-7);
    }
    assert_eq!(path.solutions.last().unwrap().k, 1);
    for w in path.solutions.windows(2) {
        assert!(w[1].k <= w[0].k || path.merge_violations.contains(&w[1].lambda));
    }
    // warm-started points agree with cold starts
    for s in path.solutions.iter().step_by(7) {
        let cold = fit_penalized(&d, s.lambda, &opts).unwrap();
        assert!(
            (cold.objective() - s.objective()).abs() <= 1e-7 * (1.0 + s.objective().abs()),
            "lambda {}",
            s.lambda
        );
    }
    // the dominant journal stays on top along the whole path
    for s in &path.solutions {
        assert_eq!(s.groups[0], 0, "lambda {}", s.lambda);
    }
    let chosen = select_lambda(&path).unwrap();
    assert!(path.solutions.iter().all(|s| s.bic >= chosen.bic));

    let labels = d.display_labels();
    let mut traj = Vec::new();
    write_path_csv(&mut traj, &labels, &path).unwrap();
    let text = String::from_utf8(traj).unwrap();
    assert!(text.starts_with("lambda,player_label,alpha,group_id\n"));
    assert_eq!(text.lines().count(), 1 + 51 * 40);
    let mut summary = Vec::new();
    write_path_summary_csv(&mut summary, &path).unwrap();
    let text = String::from_utf8(summary).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with(",1")).count(), 1);
}
