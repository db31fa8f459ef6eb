//! Shared fixtures and reference implementations for the integration tests.
#![allow(dead_code)]

use btrank::comparisons::{win_graph_components, ComparisonDataset, PairCount};
use rand::Rng;

/// Log-likelihood written out term by term.
pub fn loglik(theta: &[f64], d: &ComparisonDataset) -> f64 {
    let mut total = 0.0;
    for p in d.pairs() {
        let pij = 1.0 / (1.0 + (theta[p.j] - theta[p.i]).exp());
        total += p.w as f64 * pij.ln() + (p.n - p.w) as f64 * (1.0 - pij).ln();
    }
    total
}

pub fn random_dataset<R: Rng>(rng: &mut R, players: usize, density: f64) -> ComparisonDataset {
    let theta: Vec<f64> = (0..players).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut pairs = Vec::new();
    for i in 0..players {
        for j in (i + 1)..players {
            if rng.random_bool(density) {
                let n = rng.random_range(1..30u64);
                let p = 1.0 / (1.0 + (theta[j] - theta[i]).exp());
                let w = (0..n).filter(|_| rng.random_bool(p)).count() as u64;
                pairs.push(PairCount { i, j, n, w });
            }
        }
    }
    ComparisonDataset::from_pairs(players, pairs).unwrap()
}

/// A random dataset whose maximum likelihood estimate exists.
pub fn estimable_dataset<R: Rng>(rng: &mut R, players: usize) -> ComparisonDataset {
    loop {
        let d = random_dataset(rng, players, 0.7);
        if win_graph_components(&d).len() == 1 {
            return d;
        }
    }
}

/// Components by breadth-first search over an adjacency matrix.
pub fn bfs_components(d: &ComparisonDataset) -> Vec<Vec<usize>> {
    let n = d.num_players();
    let mut adj = vec![vec![false; n]; n];
    for p in d.pairs() {
        adj[p.i][p.j] = true;
        adj[p.j][p.i] = true;
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut k = 0;
        while k < comp.len() {
            let u = comp[k];
            for v in 0..n {
                if adj[u][v] && !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
            k += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}
