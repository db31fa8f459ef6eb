//! Bradley-Terry maximum likelihood on the logistic scale.
//!
//! Ratings are log-abilities `theta` with the anchor convention
//! `theta[0] = 0`. The fit is a damped Newton iteration on the concave
//! binomial log-likelihood, which also yields the observed information and
//! hence the covariance of the free ratings.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::comparisons::{connected_components, win_graph_components, ComparisonDataset};
use crate::error::{Error, Result};

/// Probability that a player rated `theta_i` beats one rated `theta_j`.
pub fn win_probability(theta_i: f64, theta_j: f64) -> f64 {
    1.0 / (1.0 + (-(theta_i - theta_j)).exp())
}

/// `log(1 / (1 + exp(-x)))` without overflow.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Binomial log-likelihood of `theta` (binomial coefficients omitted).
///
/// The value is invariant to adding a constant to every rating, so any
/// normalization of `theta` may be used.
pub fn log_likelihood(theta: &[f64], d: &ComparisonDataset) -> Result<f64> {
    check_dim(theta, d)?;
    Ok(loglik_unchecked(theta, d))
}

pub(crate) fn loglik_unchecked(theta: &[f64], d: &ComparisonDataset) -> f64 {
    d.pairs()
        .iter()
        .map(|p| {
            let x = theta[p.i] - theta[p.j];
            let mut s = 0.0;
            if p.w > 0 {
                s += p.w as f64 * log_sigmoid(x);
            }
            if p.losses() > 0 {
                s += p.losses() as f64 * log_sigmoid(-x);
            }
            s
        })
        .sum()
}

fn check_dim(theta: &[f64], d: &ComparisonDataset) -> Result<()> {
    if theta.len() != d.num_players() {
        return Err(Error::DimensionMismatch {
            expected: d.num_players(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Gradient of the log-likelihood with respect to every rating.
pub fn gradient(theta: &[f64], d: &ComparisonDataset) -> Vec<f64> {
    let mut g = vec![0.0; d.num_players()];
    for p in d.pairs() {
        let r = p.w as f64 - p.n as f64 * win_probability(theta[p.i], theta[p.j]);
        g[p.i] += r;
        g[p.j] -= r;
    }
    g
}

/// Observed information (negative Hessian) over all ratings. It is a
/// weighted graph Laplacian, singular along the all-ones direction.
pub fn information(theta: &[f64], d: &ComparisonDataset) -> DMatrix<f64> {
    let size = d.num_players();
    let mut h = DMatrix::zeros(size, size);
    for p in d.pairs() {
        let pi = win_probability(theta[p.i], theta[p.j]);
        let v = p.n as f64 * pi * (1.0 - pi);
        h[(p.i, p.i)] += v;
        h[(p.j, p.j)] += v;
        h[(p.i, p.j)] -= v;
        h[(p.j, p.i)] -= v;
    }
    h
}

/// Gradient tolerance actually enforced: the requested tolerance, floored
/// at the rounding level of the largest per-player match count.
pub(crate) fn effective_tol(tol: f64, d: &ComparisonDataset) -> f64 {
    let max_games = d.games_played().into_iter().max().unwrap_or(0) as f64;
    tol.max(64.0 * f64::EPSILON * max_games)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the gradient max-norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Ratings beyond this magnitude are treated as divergent.
    pub theta_cap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            theta_cap: 30.0,
        }
    }
}

/// Result of a maximum likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub labels: Vec<String>,
    /// Log-ratings of all players, `theta[0] == 0`.
    pub theta: Vec<f64>,
    /// Standard errors of the free ratings `theta[1..]`.
    pub se: Vec<f64>,
    /// Covariance of the free ratings, the inverse observed information.
    pub cov: DMatrix<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient max-norm at `theta`.
    pub grad_norm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitJson {
    labels: Vec<String>,
    theta: Vec<f64>,
    se: Vec<f64>,
    loglik: f64,
    converged: bool,
}

impl FitResult {
    pub fn num_players(&self) -> usize {
        self.theta.len()
    }

    /// Variance of any player's rating; zero for the anchor.
    pub fn variance(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.cov[(i - 1, i - 1)]
        }
    }

    /// Standard error of any player's rating; zero for the anchor.
    pub fn std_error(&self, i: usize) -> f64 {
        self.variance(i).sqrt()
    }

    /// Covariance of two ratings; zero when either is the anchor.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j == 0 {
            0.0
        } else {
            self.cov[(i - 1, j - 1)]
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FitJson {
            labels: self.labels.clone(),
            theta: self.theta.clone(),
            se: self.se.clone(),
            loglik: self.loglik,
            converged: self.converged,
        })?)
    }
}

/// Maximum likelihood ratings with the anchor at zero.
pub fn fit_mle(d: &ComparisonDataset, opts: &SolverOptions) -> Result<FitResult> {
    let size = d.num_players();
    if size < 2 {
        return Err(Error::InvalidInput("need at least two players".into()));
    }
    let comps = connected_components(d);
    if comps.len() > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    let strong = win_graph_components(d);
    if strong.len() > 1 {
        let largest = strong.iter().max_by_key(|c| c.len()).unwrap();
        let players = (0..size)
            .filter(|v| largest.binary_search(v).is_err())
            .collect();
        return Err(Error::Divergent { players });
    }

    let tol = effective_tol(opts.tol, d);
    let free = size - 1;
    let mut theta = vec![0.0; size];
    let mut ll = loglik_unchecked(&theta, d);
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let g = gradient(&theta, d);
        let gmax = g[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let info = information(&theta, d)
            .view((1, 1), (free, free))
            .into_owned();
        let chol = info.cholesky().ok_or(Error::NotConverged {
            iterations,
            residual: gmax,
        })?;
        let gf = DVector::from_column_slice(&g[1..]);
        let step = chol.solve(&gf);
        let decrement = gf.dot(&step);

        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = std::iter::once(0.0)
                .chain(theta[1..].iter().zip(step.iter()).map(|(a, s)| a + t * s))
                .collect();
            let ll_new = loglik_unchecked(&cand, d);
            if ll_new >= ll + 1e-4 * t * decrement || (t == 1.0 && decrement < 1e-8) {
                theta = cand;
                ll = ll_new;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NotConverged {
                    iterations,
                    residual: gmax,
                });
            }
        }

        if theta.iter().any(|v| v.abs() > opts.theta_cap) {
            let players = theta
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > opts.theta_cap)
                .map(|(k, _)| k)
                .collect();
            return Err(Error::Divergent { players });
        }
    }

    if !converged {
        let g = gradient(&theta, d);
        return Err(Error::NotConverged {
            iterations,
            residual: g[1..].iter().fold(0.0f64, |m, v| m.max(v.abs())),
        });
    }

    let info = information(&theta, d)
        .view((1, 1), (free, free))
        .into_owned();
    let cov = info
        .cholesky()
        .ok_or(Error::NotConverged {
            iterations,
            residual: f64::NAN,
        })?
        .inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    let se = (0..free).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    let g = gradient(&theta, d);
    Ok(FitResult {
        labels: d.display_labels(),
        loglik: ll,
        se,
        cov,
        iterations,
        converged,
        grad_norm: g[1..].iter().fold(0.0f64, |m, v| m.max(v.abs())),
        theta,
    })
}

/// 2x2 covariance block of the ratings of `i` and `j`.
pub fn pairwise_covariance(f: &FitResult, i: usize, j: usize) -> Result<[[f64; 2]; 2]> {
    for index in [i, j] {
        if index >= f.num_players() {
            return Err(Error::IndexOutOfRange {
                index,
                players: f.num_players(),
            });
        }
    }
    if i == j {
        return Err(Error::InvalidInput(
            "pairwise covariance needs two distinct players".into(),
        ));
    }
    let c = f.covariance(i, j);
    Ok([[f.variance(i), c], [c, f.variance(j)]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparisons::PairCount;
    use approx::assert_abs_diff_eq;

    fn pair(i: usize, j: usize, n: u64, w: u64) -> PairCount {
        PairCount { i, j, n, w }
    }

    #[test]
    fn win_probability_basics() {
        assert_eq!(win_probability(0.0, 0.0), 0.5);
        assert_abs_diff_eq!(win_probability(2f64.ln(), 0.0), 2.0 / 3.0, epsilon = 1e-15);
        let (a, b) = (0.7, -1.3);
        assert_abs_diff_eq!(
            win_probability(a, b),
            1.0 - win_probability(b, a),
            epsilon = 1e-15
        );
        assert_eq!(win_probability(800.0, 0.0), 1.0);
        assert_eq!(win_probability(-800.0, 0.0), 0.0);
    }

    #[test]
    fn loglik_fair_coin() {
        let d = ComparisonDataset::from_pairs(2, [pair(0, 1, 2, 1)]).unwrap();
        assert_abs_diff_eq!(
            log_likelihood(&[0.0, 0.0], &d).unwrap(),
            2.0 * 0.5f64.ln(),
            epsilon = 1e-15
        );
        let empty = ComparisonDataset::from_pairs(3, []).unwrap();
        assert_eq!(log_likelihood(&[0.0, 1.0, -2.0], &empty).unwrap(), 0.0);
        assert!(log_likelihood(&[0.0], &d).is_err());
    }

    #[test]
    fn two_player_closed_forms() {
        let even = ComparisonDataset::from_pairs(2, [pair(0, 1, 2, 1)]).unwrap();
        let f = fit_mle(&even, &SolverOptions::default()).unwrap();
        assert_eq!(f.theta, vec![0.0, 0.0]);

        let d = ComparisonDataset::from_pairs(2, [pair(0, 1, 4, 3)]).unwrap();
        let f = fit_mle(&d, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(f.theta[1], -(3f64.ln()), epsilon = 1e-10);
        // Var = 1 / (n pi (1 - pi))
        assert_abs_diff_eq!(f.variance(1), 1.0 / (4.0 * 0.75 * 0.25), epsilon = 1e-9);
    }

    #[test]
    fn disconnected_and_separated_data() {
        let d = ComparisonDataset::from_pairs(3, [pair(0, 1, 2, 1)]).unwrap();
        assert!(matches!(
            fit_mle(&d, &SolverOptions::default()),
            Err(Error::Disconnected { .. })
        ));
        let d = ComparisonDataset::from_pairs(3, [pair(0, 1, 2, 1), pair(1, 2, 3, 3)]).unwrap();
        match fit_mle(&d, &SolverOptions::default()) {
            Err(Error::Divergent { players }) => assert_eq!(players, vec![2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn anchor_block_is_zero() {
        let d = ComparisonDataset::from_pairs(
            3,
            [pair(0, 1, 10, 6), pair(0, 2, 10, 3), pair(1, 2, 10, 4)],
        )
        .unwrap();
        let f = fit_mle(&d, &SolverOptions::default()).unwrap();
        let c = pairwise_covariance(&f, 0, 2).unwrap();
        assert_eq!(c[0], [0.0, 0.0]);
        assert_eq!(c[1][0], 0.0);
        assert!(c[1][1] > 0.0);
        let a = pairwise_covariance(&f, 1, 2).unwrap();
        let b = pairwise_covariance(&f, 2, 1).unwrap();
        assert_eq!(a[0][0], b[1][1]);
        assert_eq!(a[0][1], b[1][0]);
        assert!(pairwise_covariance(&f, 1, 1).is_err());
        assert!(pairwise_covariance(&f, 1, 3).is_err());
    }

    #[test]
    fn json_summary_fields() {
        let d = ComparisonDataset::from_pairs(2, [pair(0, 1, 4, 3)]).unwrap();
        let f = fit_mle(&d, &SolverOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&f.to_json().unwrap()).unwrap();
        for key in ["labels", "theta", "se", "loglik", "converged"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["se"].as_array().unwrap().len(), 1);
    }
}
