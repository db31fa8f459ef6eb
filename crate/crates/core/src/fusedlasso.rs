//! Bradley-Terry likelihood with an all-pairs fused lasso penalty,
//!
//! ```text
//! min  -loglik(theta) + lambda * sum_{i<j} |theta_i - theta_j|,
//! ```
//!
//! its solution path over `lambda`, and BIC selection of the penalty.
//!
//! Differences are penalized on the log-ability scale. The likelihood is
//! invariant to a common shift of all ratings, and so is the penalty on
//! that scale, so the anchor convention `theta[0] = 0` identifies the
//! solution without interacting with the penalty. Reported abilities are
//! `alpha = exp(theta)`, so `alpha[0] = 1`.
//!
//! The solver is an active-set method. For a fixed ordered partition of the
//! players into tied blocks, the penalty is linear in the block values and
//! the objective is smooth, so blocks are moved by damped Newton steps that
//! stop at the first collision between neighbouring blocks, which then
//! merge. At a stationary point the subgradient condition is checked block
//! by block; a violated block is split and the iteration resumes.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::btmle::{
    effective_tol, fit_mle, gradient, loglik_unchecked, win_probability, SolverOptions,
};
use crate::comparisons::{connected_components, ComparisonDataset};
use crate::error::{Error, Result};

/// `sum_{i<j} |x_i - x_j|` over all unordered pairs.
pub fn penalty(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(k, x)| (2.0 * k as f64 - n + 1.0) * x)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Gradient tolerance of the inner Newton iterations.
    pub tol: f64,
    /// Required subgradient optimality certificate.
    pub cert_tol: f64,
    /// Relative gap below which reported abilities are grouped.
    pub group_tol: f64,
    /// Newton steps plus block splits allowed per fit.
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            cert_tol: 1e-6,
            group_tol: 1e-6,
            max_iter: 5000,
        }
    }
}

/// Penalized fit at one value of `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoSolution {
    pub lambda: f64,
    /// Log-abilities, `theta[0] = 0`.
    pub theta: Vec<f64>,
    /// Abilities `exp(theta)`.
    pub alpha: Vec<f64>,
    /// Group of each player; group 0 holds the highest rated players.
    pub groups: Vec<usize>,
    /// Number of groups.
    pub k: usize,
    pub loglik: f64,
    pub bic: f64,
    /// Subgradient optimality residual at `theta`.
    pub certificate: f64,
}

impl LassoSolution {
    /// Penalized objective `-loglik + lambda * penalty(theta)`.
    pub fn objective(&self) -> f64 {
        -self.loglik + self.lambda * penalty(&self.theta)
    }

    /// Players of each group, best group first.
    pub fn group_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &g) in self.groups.iter().enumerate() {
            out[g].push(i);
        }
        out
    }
}

/// Schwarz criterion with the number of groups as the dimension.
pub fn bic(loglik: f64, k: usize, n: u64) -> f64 {
    -2.0 * loglik + k as f64 * (n as f64).ln()
}

/// Solutions along an increasing sequence of penalties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoPath {
    pub solutions: Vec<LassoSolution>,
    /// Penalties at which the group count increased over the previous one.
    pub merge_violations: Vec<f64>,
}

/// Ordered partition of the players into tied blocks.
#[derive(Debug, Clone)]
struct Blocks {
    members: Vec<Vec<usize>>,
    values: Vec<f64>,
    players: usize,
}

impl Blocks {
    fn from_theta(theta: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..theta.len()).collect();
        idx.sort_by(|&a, &b| theta[a].total_cmp(&theta[b]).then(a.cmp(&b)));
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut values = Vec::new();
        for i in idx {
            match values.last() {
                Some(&v) if v == theta[i] => members.last_mut().unwrap().push(i),
                _ => {
                    members.push(vec![i]);
                    values.push(theta[i]);
                }
            }
        }
        let mut b = Self {
            members,
            values,
            players: theta.len(),
        };
        b.normalize();
        b
    }

    fn anchor(&self) -> usize {
        self.members.iter().position(|m| m.contains(&0)).unwrap()
    }

    /// Shifts values so the anchor block sits at zero.
    fn normalize(&mut self) {
        let shift = self.values[self.anchor()];
        for v in &mut self.values {
            *v -= shift;
        }
    }

    fn theta(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.players];
        for (m, &v) in self.members.iter().zip(&self.values) {
            for &i in m {
                t[i] = v;
            }
        }
        t
    }

    fn block_of(&self) -> Vec<usize> {
        let mut b = vec![0; self.players];
        for (k, m) in self.members.iter().enumerate() {
            for &i in m {
                b[i] = k;
            }
        }
        b
    }

    /// Players below minus players above each block.
    fn outside_balance(&self) -> Vec<f64> {
        let mut below = 0usize;
        self.members
            .iter()
            .map(|m| {
                let above = self.players - below - m.len();
                let out = below as f64 - above as f64;
                below += m.len();
                out
            })
            .collect()
    }

    /// Penalty slope of each block value.
    fn penalty_slopes(&self) -> Vec<f64> {
        self.outside_balance()
            .into_iter()
            .zip(&self.members)
            .map(|(o, m)| o * m.len() as f64)
            .collect()
    }

    fn merge_with_next(&mut self, b: usize) {
        let anchor = self.anchor();
        let upper = self.members.remove(b + 1);
        let upper_value = self.values.remove(b + 1);
        let value = if anchor == b {
            self.values[b]
        } else if anchor == b + 1 {
            upper_value
        } else {
            0.5 * (self.values[b] + upper_value)
        };
        self.members[b].extend(upper);
        self.values[b] = value;
    }
}

/// Subgradient residual of each block and, for the worst block, the
/// players whose rating should move up.
fn certificate(
    d: &ComparisonDataset,
    lambda: f64,
    blocks: &Blocks,
) -> (f64, Option<(usize, Vec<usize>)>) {
    let theta = blocks.theta();
    let g = gradient(&theta, d);
    let outside = blocks.outside_balance();
    let mut worst = 0.0;
    let mut split = None;
    for (b, m) in blocks.members.iter().enumerate() {
        // u_i: required sum of within-block subgradient signs, times lambda
        let mut u: Vec<(f64, usize)> = m.iter().map(|&i| (g[i] - lambda * outside[b], i)).collect();
        u.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let size = m.len();
        let total: f64 = u.iter().map(|x| x.0).sum();
        let mut viol = total.abs();
        let mut best_k = None;
        let mut prefix = 0.0;
        let mut best_excess = 0.0;
        for k in 1..size {
            prefix += u[k - 1].0;
            let excess = prefix - lambda * (k * (size - k)) as f64;
            if excess > best_excess {
                best_excess = excess;
                best_k = Some(k);
            }
        }
        viol = viol.max(best_excess);
        if size == 1 {
            viol = u[0].0.abs();
        }
        if viol > worst {
            worst = viol;
            split = best_k.map(|k| (b, u[..k].iter().map(|x| x.1).collect()));
        }
    }
    (worst, split)
}

/// Damped Newton on the block values with collision handling. Returns the
/// number of iterations used.
fn polish(
    d: &ComparisonDataset,
    lambda: f64,
    blocks: &mut Blocks,
    tol: f64,
    budget: usize,
) -> Result<usize> {
    let mut iterations = 0;
    loop {
        let nb = blocks.members.len();
        if nb == 1 {
            return Ok(iterations);
        }
        let anchor = blocks.anchor();
        let free: Vec<usize> = (0..nb).filter(|&b| b != anchor).collect();
        let mut pos = vec![usize::MAX; nb];
        for (k, &b) in free.iter().enumerate() {
            pos[b] = k;
        }
        let theta = blocks.theta();
        let gl = gradient(&theta, d);
        let slopes = blocks.penalty_slopes();
        let grad = DVector::from_fn(free.len(), |k, _| {
            let b = free[k];
            -blocks.members[b].iter().map(|&i| gl[i]).sum::<f64>() + lambda * slopes[b]
        });
        let gmax = grad.amax();
        if gmax <= tol {
            return Ok(iterations);
        }
        if iterations >= budget {
            return Err(Error::NotConverged {
                iterations,
                residual: gmax,
            });
        }
        iterations += 1;

        let block_of = blocks.block_of();
        let mut h = DMatrix::zeros(free.len(), free.len());
        for p in d.pairs() {
            let (bi, bj) = (block_of[p.i], block_of[p.j]);
            if bi == bj {
                continue;
            }
            let pi = win_probability(theta[p.i], theta[p.j]);
            let v = p.n as f64 * pi * (1.0 - pi);
            let (ki, kj) = (pos[bi], pos[bj]);
            if ki != usize::MAX {
                h[(ki, ki)] += v;
            }
            if kj != usize::MAX {
                h[(kj, kj)] += v;
            }
            if ki != usize::MAX && kj != usize::MAX {
                h[(ki, kj)] -= v;
                h[(kj, ki)] -= v;
            }
        }
        let chol = h.cholesky().ok_or(Error::NotConverged {
            iterations,
            residual: gmax,
        })?;
        let step = -chol.solve(&grad);
        let dir: Vec<f64> = (0..nb)
            .map(|b| if b == anchor { 0.0 } else { step[pos[b]] })
            .collect();
        let slope = grad.dot(&step);

        let mut t_cross = f64::INFINITY;
        let mut crossing = None;
        for b in 0..nb - 1 {
            let closing = dir[b] - dir[b + 1];
            if closing > 0.0 {
                let t = (blocks.values[b + 1] - blocks.values[b]) / closing;
                if t < t_cross {
                    t_cross = t;
                    crossing = Some(b);
                }
            }
        }

        let region = |t: f64| {
            let vals: Vec<f64> = blocks
                .values
                .iter()
                .zip(&dir)
                .map(|(v, s)| v + t * s)
                .collect();
            let mut th = vec![0.0; blocks.players];
            for (m, &v) in blocks.members.iter().zip(&vals) {
                for &i in m {
                    th[i] = v;
                }
            }
            -loglik_unchecked(&th, d)
                + lambda * vals.iter().zip(&slopes).map(|(v, s)| v * s).sum::<f64>()
        };
        let r0 = region(0.0);
        let mut t = t_cross.min(1.0);
        loop {
            if t == 0.0 || region(t) <= r0 + 1e-4 * t * slope || (t == 1.0 && -slope < 1e-8) {
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                return Err(Error::NotConverged {
                    iterations,
                    residual: gmax,
                });
            }
        }
        for (v, s) in blocks.values.iter_mut().zip(&dir) {
            *v += t * s;
        }
        if t == t_cross {
            blocks.merge_with_next(crossing.unwrap());
        }
        if blocks.values.iter().any(|v| v.abs() > 50.0) {
            return Err(Error::NotConverged {
                iterations,
                residual: gmax,
            });
        }
    }
}

/// Moves `up` (a subset of block `b`) above the rest of the block by an
/// exact line search on the objective, capped at the neighbouring block.
fn split_block(d: &ComparisonDataset, lambda: f64, blocks: &mut Blocks, b: usize, up: Vec<usize>) {
    let size = blocks.members[b].len();
    let k = up.len();
    let rest: Vec<usize> = blocks.members[b]
        .iter()
        .copied()
        .filter(|i| !up.contains(i))
        .collect();
    let outside = blocks.outside_balance()[b];
    let anchor_up = up.contains(&0);
    // direction e: +1 on `up`, or -1 on `rest` when the anchor must stay put
    let (moved, sign, pen_slope, room) = if anchor_up {
        let s = (size - k) as f64;
        let room = if b > 0 {
            blocks.values[b] - blocks.values[b - 1]
        } else {
            f64::INFINITY
        };
        (rest.clone(), -1.0, -(s * outside - s * k as f64), room)
    } else {
        let room = if b + 1 < blocks.members.len() {
            blocks.values[b + 1] - blocks.values[b]
        } else {
            f64::INFINITY
        };
        (
            up.clone(),
            1.0,
            k as f64 * outside + (k * (size - k)) as f64,
            room,
        )
    };
    let base = blocks.theta();
    let at = |delta: f64| {
        let mut th = base.clone();
        for &i in &moved {
            th[i] += sign * delta;
        }
        th
    };
    let deriv = |delta: f64| {
        let g = gradient(&at(delta), d);
        -sign * moved.iter().map(|&i| g[i]).sum::<f64>() + lambda * pen_slope
    };
    let curvature = |delta: f64| {
        let th = at(delta);
        let inside: Vec<bool> = (0..th.len()).map(|i| moved.contains(&i)).collect();
        d.pairs()
            .iter()
            .filter(|p| inside[p.i] != inside[p.j])
            .map(|p| {
                let pi = win_probability(th[p.i], th[p.j]);
                p.n as f64 * pi * (1.0 - pi)
            })
            .sum::<f64>()
    };

    // bracket the root of the derivative
    let mut hi = if room.is_finite() { room } else { 1.0 };
    while !room.is_finite() && deriv(hi) < 0.0 && hi < 64.0 {
        hi *= 2.0;
    }
    let delta = if deriv(hi) < 0.0 {
        if room.is_finite() {
            0.5 * room
        } else {
            hi
        }
    } else {
        let (mut lo, mut up_b) = (0.0, hi);
        let mut x = 0.0;
        for _ in 0..100 {
            let f = deriv(x);
            if f.abs() < 1e-13 {
                break;
            }
            if f < 0.0 {
                lo = x;
            } else {
                up_b = x;
            }
            let c = curvature(x);
            let newton = if c > 0.0 { x - f / c } else { f64::NAN };
            x = if newton > lo && newton < up_b {
                newton
            } else {
                0.5 * (lo + up_b)
            };
            if up_b - lo < 1e-15 * (1.0 + up_b.abs()) {
                break;
            }
        }
        if room.is_finite() {
            x.min(0.5 * room)
        } else {
            x
        }
    };

    let value = blocks.values[b];
    if anchor_up {
        blocks.members[b] = up;
        blocks.members.insert(b, rest);
        blocks.values.insert(b, value - delta);
    } else {
        blocks.members[b] = rest;
        blocks.members.insert(b + 1, up);
        blocks.values.insert(b + 1, value + delta);
    }
}

/// Smallest penalty at which all players collapse into one group.
pub fn lambda_max(d: &ComparisonDataset) -> f64 {
    let n = d.num_players();
    let g = gradient(&vec![0.0; n], d);
    let mut u = g;
    u.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut best: f64 = 0.0;
    for k in 1..n {
        prefix += u[k - 1];
        best = best.max(prefix / (k * (n - k)) as f64);
    }
    best
}

/// Default grid: zero followed by 50 log-spaced penalties from
/// `lambda_max / 1000` to `lambda_max`.
pub fn default_lambda_grid(d: &ComparisonDataset) -> Vec<f64> {
    let top = lambda_max(d) * (1.0 + 1e-9);
    if !(top > 0.0) {
        return vec![0.0];
    }
    let lo = top / 1000.0;
    std::iter::once(0.0)
        .chain((0..50).map(|k| lo * (top / lo).powf(k as f64 / 49.0)))
        .collect()
}

/// Penalized fit at a single `lambda`, started from the maximum likelihood
/// estimate when it exists.
pub fn fit_penalized(
    d: &ComparisonDataset,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    fit_from(d, lambda, None, opts)
}

fn fit_from(
    d: &ComparisonDataset,
    lambda: f64,
    warm: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "penalty must be non-negative, got {lambda}"
        )));
    }
    let n = d.num_players();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two players".into()));
    }
    let comps = connected_components(d);
    if comps.len() > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    let start = match warm {
        Some(t) => t.to_vec(),
        None => {
            let mle_opts = SolverOptions {
                tol: opts.tol,
                ..SolverOptions::default()
            };
            match fit_mle(d, &mle_opts) {
                Ok(f) => f.theta,
                Err(e @ Error::Divergent { .. }) if lambda == 0.0 => return Err(e),
                Err(Error::Divergent { .. }) => vec![0.0; n],
                Err(e) => return Err(e),
            }
        }
    };
    let tol = effective_tol(opts.tol, d);
    let mut blocks = Blocks::from_theta(&start);
    let mut used = 0;
    loop {
        used += polish(
            d,
            lambda,
            &mut blocks,
            tol,
            opts.max_iter.saturating_sub(used),
        )?;
        let (cert, split) = certificate(d, lambda, &blocks);
        if cert <= opts.cert_tol.max(tol) {
            return Ok(finish(d, lambda, &blocks, cert, opts));
        }
        used += 1;
        match split {
            Some((b, up)) if used < opts.max_iter => split_block(d, lambda, &mut blocks, b, up),
            _ => {
                return Err(Error::NotConverged {
                    iterations: used,
                    residual: cert,
                })
            }
        }
    }
}

fn finish(
    d: &ComparisonDataset,
    lambda: f64,
    blocks: &Blocks,
    cert: f64,
    opts: &LassoOptions,
) -> LassoSolution {
    let theta = blocks.theta();
    let alpha: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    // group blocks whose abilities are within the relative tolerance, top first
    let mut groups = vec![0; theta.len()];
    let mut k = 0;
    let mut prev: Option<f64> = None;
    for m in blocks.members.iter().rev() {
        let a = alpha[m[0]];
        if let Some(p) = prev {
            if (p - a).abs() > opts.group_tol * p.abs().max(a.abs()) {
                k += 1;
            }
        }
        for &i in m {
            groups[i] = k;
        }
        prev = Some(a);
    }
    let k = k + 1;
    let loglik = loglik_unchecked(&theta, d);
    LassoSolution {
        lambda,
        bic: bic(loglik, k, d.total_matches()),
        theta,
        alpha,
        groups,
        k,
        loglik,
        certificate: cert,
    }
}

/// Fits every penalty in `lambdas` (strictly increasing), warm-starting
/// each fit from the previous solution.
pub fn solve_path(
    d: &ComparisonDataset,
    lambdas: &[f64],
    opts: &LassoOptions,
) -> Result<LassoPath> {
    if lambdas.is_empty() {
        return Err(Error::EmptyPath);
    }
    if lambdas.iter().any(|l| !(*l >= 0.0)) || lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(
            "penalties must be non-negative and strictly increasing".into(),
        ));
    }
    let mut solutions: Vec<LassoSolution> = Vec::with_capacity(lambdas.len());
    let mut merge_violations = Vec::new();
    for &lambda in lambdas {
        let warm = solutions.last().map(|s| s.theta.as_slice());
        let sol = fit_from(d, lambda, warm, opts).map_err(|e| Error::AtLambda {
            lambda,
            source: Box::new(e),
        })?;
        if let Some(prev) = solutions.last() {
            if sol.k > prev.k {
                log::debug!(
                    "group count rose from {} to {} at lambda = {lambda}",
                    prev.k,
                    sol.k
                );
                merge_violations.push(lambda);
            }
        }
        solutions.push(sol);
    }
    Ok(LassoPath {
        solutions,
        merge_violations,
    })
}

/// The path solution with the smallest BIC; ties go to the larger penalty.
pub fn select_lambda(path: &LassoPath) -> Result<&LassoSolution> {
    let mut best: Option<&LassoSolution> = None;
    for s in &path.solutions {
        if best.is_none_or(|b| s.bic <= b.bic) {
            best = Some(s);
        }
    }
    best.ok_or(Error::EmptyPath)
}

/// Writes per-player trajectories: `lambda,player_label,alpha,group_id`.
pub fn write_path_csv<W: Write>(out: W, labels: &[String], path: &LassoPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "player_label", "alpha", "group_id"])?;
    for s in &path.solutions {
        for (i, label) in labels.iter().enumerate() {
            w.write_record([
                s.lambda.to_string(),
                label.clone(),
                s.alpha[i].to_string(),
                s.groups[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-penalty summary: `lambda,k,loglik,bic,selected`.
pub fn write_path_summary_csv<W: Write>(out: W, path: &LassoPath) -> Result<()> {
    let chosen = select_lambda(path)?.lambda;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "k", "loglik", "bic", "selected"])?;
    for s in &path.solutions {
        w.write_record([
            s.lambda.to_string(),
            s.k.to_string(),
            s.loglik.to_string(),
            s.bic.to_string(),
            u8::from(s.lambda == chosen).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparisons::PairCount;
    use approx::assert_abs_diff_eq;

    fn four_players() -> ComparisonDataset {
        ComparisonDataset::from_pairs(
            4,
            [
                PairCount {
                    i: 0,
                    j: 1,
                    n: 12,
                    w: 7,
                },
                PairCount {
                    i: 0,
                    j: 2,
                    n: 9,
                    w: 3,
                },
                PairCount {
                    i: 0,
                    j: 3,
                    n: 10,
                    w: 8,
                },
                PairCount {
                    i: 1,
                    j: 2,
                    n: 11,
                    w: 4,
                },
                PairCount {
                    i: 1,
                    j: 3,
                    n: 8,
                    w: 5,
                },
                PairCount {
                    i: 2,
                    j: 3,
                    n: 7,
                    w: 6,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn penalty_values() {
        assert_eq!(penalty(&[2.5; 4]), 0.0);
        assert_eq!(penalty(&[0.0, 1.0, 2.0]), 4.0);
        assert_eq!(penalty(&[2.0, 0.0, 1.0]), 4.0);
        assert_eq!(penalty(&[]), 0.0);
    }

    #[test]
    fn bic_formula() {
        let diff = bic(-50.0, 5, 100) - bic(-50.0, 3, 100);
        assert_abs_diff_eq!(diff, 2.0 * 100f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn zero_penalty_is_the_mle() {
        let d = four_players();
        let s = fit_penalized(&d, 0.0, &LassoOptions::default()).unwrap();
        let m = fit_mle(&d, &SolverOptions::default()).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(s.alpha[i], m.theta[i].exp(), epsilon = 1e-9);
        }
        assert_eq!(s.k, 4);
    }

    #[test]
    fn huge_penalty_collapses() {
        let d = four_players();
        let s =
            fit_penalized(&d, 1e6 * d.total_matches() as f64, &LassoOptions::default()).unwrap();
        assert_eq!(s.k, 1);
        assert!(penalty(&s.theta) <= 1e-8);
        assert_eq!(s.alpha, vec![1.0; 4]);
    }

    #[test]
    fn lambda_max_is_the_collapse_point() {
        let d = four_players();
        let top = lambda_max(&d);
        assert!(top > 0.0);
        let at = fit_penalized(&d, top * (1.0 + 1e-9), &LassoOptions::default()).unwrap();
        assert_eq!(at.k, 1);
        let below = fit_penalized(&d, top * 0.95, &LassoOptions::default()).unwrap();
        assert!(below.k > 1);
    }

    #[test]
    fn certificate_holds_across_penalties() {
        let d = four_players();
        for lambda in [0.0, 0.05, 0.2, 0.5, 1.0, 2.0, 5.0] {
            let s = fit_penalized(&d, lambda, &LassoOptions::default()).unwrap();
            assert!(s.certificate <= 1e-6, "lambda {lambda}: {}", s.certificate);
        }
    }

    #[test]
    fn separated_data_is_fine_with_a_penalty() {
        // player 2 never wins
        let d = ComparisonDataset::from_pairs(
            3,
            [
                PairCount {
                    i: 0,
                    j: 1,
                    n: 4,
                    w: 2,
                },
                PairCount {
                    i: 0,
                    j: 2,
                    n: 3,
                    w: 3,
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
        assert!(fit_penalized(&d, 0.0, &LassoOptions::default()).is_err());
        let s = fit_penalized(&d, 0.3, &LassoOptions::default()).unwrap();
        assert!(s.certificate <= 1e-6);
        assert!(s.alpha[2] < s.alpha[0]);
    }

    #[test]
    fn path_validation_and_selection() {
        let d = four_players();
        assert!(matches!(
            solve_path(&d, &[], &LassoOptions::default()),
            Err(Error::EmptyPath)
        ));
        assert!(solve_path(&d, &[1.0, 0.5], &LassoOptions::default()).is_err());
        let one = solve_path(&d, &[0.0], &LassoOptions::default()).unwrap();
        assert_eq!(select_lambda(&one).unwrap().lambda, 0.0);
    }
}
