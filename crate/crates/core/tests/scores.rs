use btrank::comparisons::{ComparisonDataset, PairCount};
use btrank::scores::{borda, kendall_tau, ranks_from_scores, weighted_borda};
use proptest::prelude::*;

/// Tau-b by enumerating every pair.
fn brute_tau(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut ta, mut tb) = (0.0, 0.0, 0.0);
    let n = a.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += 1.0;
            let da = (a[i] - a[j]).signum() * (a[i] != a[j]) as i32 as f64;
            let db = (b[i] - b[j]).signum() * (b[i] != b[j]) as i32 as f64;
            s += da * db;
            ta += (a[i] == a[j]) as i32 as f64;
            tb += (b[i] == b[j]) as i32 as f64;
        }
    }
    s / ((total - ta) * (total - tb)).sqrt()
}

fn tied_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..6).prop_map(f64::from), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tau_matches_pair_enumeration((a, b) in (2usize..40).prop_flat_map(|n| (tied_values(n), tied_values(n)))) {
        let want = brute_tau(&a, &b);
        match kendall_tau(&a, &b) {
            Ok(t) => prop_assert!((t - want).abs() < 1e-12, "{} vs {}", t, want),
            Err(_) => prop_assert!(!want.is_finite()),
        }
    }

    #[test]
    fn tau_is_symmetric_and_rank_invariant(a in prop::collection::vec(-10.0f64..10.0, 3..30), seed in 0u64..1000) {
        let b: Vec<f64> = a.iter().enumerate().map(|(k, x)| (x * 3.0 + (k as u64 * seed % 7) as f64).floor()).collect();
        if let (Ok(t1), Ok(t2)) = (kendall_tau(&a, &b), kendall_tau(&b, &a)) {
            prop_assert!((t1 - t2).abs() < 1e-12);
            let cubed: Vec<f64> = a.iter().map(|x| x.powi(3) + 1.0).collect();
            prop_assert!((kendall_tau(&cubed, &b).unwrap() - t1).abs() < 1e-12);
        }
    }

    #[test]
    fn ranks_are_a_permutation_average(scores in prop::collection::vec((0i32..8).prop_map(f64::from), 1..40)) {
        let r = ranks_from_scores(&scores, true);
        let n = scores.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(r[i] < r[j]);
                }
            }
        }
    }
}

#[test]
fn borda_scores_on_a_small_schedule() {
    let d = ComparisonDataset::from_pairs(
        3,
        [
            PairCount {
                i: 0,
                j: 1,
                n: 10,
                w: 6,
            },
            PairCount {
                i: 1,
                j: 2,
                n: 2,
                w: 2,
            },
        ],
    )
    .unwrap();
    assert_eq!(borda(&d), vec![6.0, 6.0, 0.0]);
    let wb = weighted_borda(&d);
    assert!((wb[0] - 0.6).abs() < 1e-12 && (wb[1] - 1.4).abs() < 1e-12 && wb[2] == 0.0);
}
