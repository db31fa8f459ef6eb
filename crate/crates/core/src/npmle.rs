//! Kiefer-Wolfowitz nonparametric maximum likelihood for a Gaussian location
//! mixture with known heterogeneous scales, and the empirical Bayes rules
//! built on the fitted mixing distribution: posterior means, smoothed
//! posterior means and posterior mean ranks.
//!
//! Everything here works on the log-ability scale `theta`. Ranks are
//! invariant under the exponential map, so posterior mean ranks are the
//! same whichever scale is reported.
//!
//! The mixing distribution is restricted to a fixed grid. The fit runs a
//! primal-dual interior point method on
//!
//! ```text
//! min_f  -sum_i log (A f)_i + p * sum_k f_k,   f >= 0,
//! ```
//!
//! whose solution automatically sums to one, then polishes the result by
//! Newton steps on the identified support so that off-support weights are
//! exactly zero. Optimality is certified by the Kuhn-Tucker condition
//! `D(t) <= p` at every grid point, with equality on the support, where
//! `D(t) = sum_i phi_i(t) / f_G(theta_hat_i)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::btmle::FitResult;
use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Variance added to the diagonal of a singular pairwise covariance block.
pub const COVARIANCE_RIDGE: f64 = 1e-10;

pub(crate) fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Discrete mixing distribution on strictly increasing atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl MixingDistribution {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        if atoms.windows(2).any(|w| !(w[0] < w[1])) || atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput(
                "atoms must be finite and strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms, weights })
    }

    /// Builds a distribution from unnormalized non-negative weights.
    pub fn normalized(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput(
                "weights must have positive total".into(),
            ));
        }
        Self::new(atoms, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn point_mass(at: f64) -> Self {
        Self {
            atoms: vec![at],
            weights: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Atoms carrying positive mass, with their weights.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + Clone + '_ {
        self.atoms
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(a, w)| (*a, *w))
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(a, w)| a * w).sum()
    }

    /// Writes `atom,weight` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["atom", "weight"])?;
        for (a, g) in self.atoms.iter().zip(&self.weights) {
            w.write_record([a.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rating estimates with their standard errors, treated as independent
/// Gaussian observations of the true ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianObservations {
    theta_hat: Vec<f64>,
    sigma_hat: Vec<f64>,
}

impl GaussianObservations {
    pub fn new(theta_hat: Vec<f64>, sigma_hat: Vec<f64>) -> Result<Self> {
        if theta_hat.len() != sigma_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: theta_hat.len(),
                got: sigma_hat.len(),
            });
        }
        if theta_hat.is_empty() {
            return Err(Error::InvalidInput("no observations".into()));
        }
        if sigma_hat.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(
                "scales must be positive and finite".into(),
            ));
        }
        if theta_hat.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("estimates must be finite".into()));
        }
        Ok(Self {
            theta_hat,
            sigma_hat,
        })
    }

    /// The free (non-anchor) ratings of a fit and their standard errors.
    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        Self::new(fit.theta[1..].to_vec(), fit.se.clone())
    }

    pub fn len(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_hat.is_empty()
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn sigma_hat(&self) -> &[f64] {
        &self.sigma_hat
    }
}

/// Support grid for the mixing distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    /// `points` equally spaced atoms over
    /// `[min theta_hat - pad * max sigma, max theta_hat + pad * max sigma]`.
    Auto {
        points: usize,
        pad: f64,
    },
    Explicit(Vec<f64>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto {
            points: 301,
            pad: 3.0,
        }
    }
}

impl GridSpec {
    pub fn points(&self, obs: &GaussianObservations) -> Result<Vec<f64>> {
        match self {
            GridSpec::Explicit(v) => {
                if v.is_empty() || v.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidInput(
                        "grid must be strictly increasing".into(),
                    ));
                }
                Ok(v.clone())
            }
            GridSpec::Auto { points, pad } => {
                if *points < 2 {
                    return Err(Error::InvalidInput("grid needs at least two points".into()));
                }
                let smax = obs.sigma_hat.iter().cloned().fold(0.0, f64::max);
                let lo = obs.theta_hat.iter().cloned().fold(f64::INFINITY, f64::min) - pad * smax;
                let hi = obs
                    .theta_hat
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max)
                    + pad * smax;
                let step = (hi - lo) / (*points - 1) as f64;
                Ok((0..*points).map(|k| lo + step * k as f64).collect())
            }
        }
    }
}

/// Mixture density `f_G(theta_hat) = sum_k g_k phi_sigma(theta_hat - t_k)`.
pub fn marginal_density(g: &MixingDistribution, theta_hat: f64, sigma_hat: f64) -> f64 {
    log_marginal_density(g, theta_hat, sigma_hat).exp()
}

fn log_marginal_density(g: &MixingDistribution, theta_hat: f64, sigma_hat: f64) -> f64 {
    log_sum_exp(
        g.support()
            .map(move |(t, w)| w.ln() + normal_log_pdf(theta_hat, t, sigma_hat)),
    )
}

/// Mixture log-likelihood `sum_i log f_G(theta_hat_i)`.
pub fn mixture_loglik(g: &MixingDistribution, obs: &GaussianObservations) -> f64 {
    obs.theta_hat
        .iter()
        .zip(&obs.sigma_hat)
        .map(|(&t, &s)| log_marginal_density(g, t, s))
        .sum()
}

/// Gradient functional `D(t)` at every atom of `g` (including zero-mass ones).
pub fn kkt_gradient(g: &MixingDistribution, obs: &GaussianObservations) -> Vec<f64> {
    let log_f: Vec<f64> = obs
        .theta_hat
        .iter()
        .zip(&obs.sigma_hat)
        .map(|(&t, &s)| log_marginal_density(g, t, s))
        .collect();
    g.atoms
        .iter()
        .map(|&a| {
            obs.theta_hat
                .iter()
                .zip(&obs.sigma_hat)
                .zip(&log_f)
                .map(|((&t, &s), lf)| (normal_log_pdf(t, a, s) - lf).exp())
                .sum()
        })
        .collect()
}

/// Relative violation `max_t D(t) / p - 1` of the optimality condition.
pub fn kkt_violation(g: &MixingDistribution, obs: &GaussianObservations) -> f64 {
    let p = obs.len() as f64;
    kkt_gradient(g, obs)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
        / p
        - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpmleOptions {
    /// Required bound on `max_t D(t) / p - 1`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NpmleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

/// Fits the mixing distribution on the grid by maximum likelihood.
pub fn fit_npmle(obs: &GaussianObservations, grid: &GridSpec) -> Result<MixingDistribution> {
    fit_npmle_with(obs, grid, &NpmleOptions::default())
}

pub fn fit_npmle_with(
    obs: &GaussianObservations,
    grid: &GridSpec,
    opts: &NpmleOptions,
) -> Result<MixingDistribution> {
    let atoms = grid.points(obs)?;
    let a = scaled_kernel(obs, &atoms);
    let (f_ipm, iterations) = interior_point(&a, opts.max_iter);

    let mut f = f_ipm.clone();
    let polished = polish(&a, &mut f);
    let candidates = if polished {
        vec![f, f_ipm]
    } else {
        vec![f_ipm]
    };

    let mut best = None;
    for f in candidates {
        let g = MixingDistribution::normalized(atoms.clone(), f)?;
        let viol = kkt_violation(&g, obs);
        if viol <= opts.tol {
            return Ok(g);
        }
        best = Some(best.map_or(viol, |b: f64| b.min(viol)));
    }
    Err(Error::NotConverged {
        iterations,
        residual: best.unwrap_or(f64::NAN),
    })
}

/// Kernel matrix `phi_sigma_i(theta_hat_i - t_k)`, each row divided by its
/// maximum. Row scaling leaves the maximizer and `D(t)` unchanged.
fn scaled_kernel(obs: &GaussianObservations, atoms: &[f64]) -> DMatrix<f64> {
    let (p, m) = (obs.len(), atoms.len());
    let mut a = DMatrix::zeros(p, m);
    for i in 0..p {
        let (t, s) = (obs.theta_hat[i], obs.sigma_hat[i]);
        let logs: Vec<f64> = atoms.iter().map(|&x| normal_log_pdf(t, x, s)).collect();
        let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (k, l) in logs.into_iter().enumerate() {
            a[(i, k)] = (l - mx).exp();
        }
    }
    a
}

fn objective(a: &DMatrix<f64>, f: &DVector<f64>) -> f64 {
    let p = a.nrows() as f64;
    -(a * f).iter().map(|v| v.ln()).sum::<f64>() + p * f.sum()
}

/// Primal-dual interior point iterations for the grid problem.
fn interior_point(a: &DMatrix<f64>, max_iter: usize) -> (Vec<f64>, usize) {
    let (p, m) = (a.nrows() as f64, a.ncols());
    let mut f = DVector::from_element(m, 1.0 / m as f64);
    let mut z = DVector::from_element(m, p);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let g = a * &f;
        let ginv = g.map(|v| 1.0 / v);
        let grad = DVector::from_element(m, p) - a.tr_mul(&ginv);
        let gap = f.dot(&z);
        let dual_res = (&grad - &z).amax();
        if gap <= 1e-12 * p && dual_res <= 1e-10 * p {
            break;
        }
        let mu = 0.1 * gap / m as f64;

        let b = DMatrix::from_fn(a.nrows(), m, |i, k| a[(i, k)] * ginv[i]);
        let mut h = b.tr_mul(&b);
        for k in 0..m {
            h[(k, k)] += z[k] / f[k];
        }
        let rhs = DVector::from_fn(m, |k, _| -grad[k] + mu / f[k]);
        let df = match solve_spd(h, &rhs) {
            Some(v) => v,
            None => break,
        };
        let dz = DVector::from_fn(m, |k, _| (mu - f[k] * z[k] - z[k] * df[k]) / f[k]);

        let step = |x: &DVector<f64>, dx: &DVector<f64>| {
            x.iter()
                .zip(dx.iter())
                .filter(|(_, d)| **d < 0.0)
                .map(|(v, d)| -v / d)
                .fold(1.0f64, f64::min)
        };
        let mut t = (0.995 * step(&f, &df).min(step(&z, &dz))).min(1.0);
        // keep the primal objective from blowing up on a poor linearization
        let obj0 = objective(a, &f);
        while t > 1e-8 {
            let cand = &f + &df * t;
            if objective(a, &cand) <= obj0 + 1e-3 * p.max(obj0.abs()) {
                break;
            }
            t *= 0.5;
        }
        f += &df * t;
        z += &dz * t;
    }
    (f.iter().cloned().collect(), iterations)
}

fn solve_spd(mut h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1e-300);
    for attempt in 0..6 {
        if let Some(c) = h.clone().cholesky() {
            return Some(c.solve(rhs));
        }
        let ridge = scale * 1e-14 * 100f64.powi(attempt);
        for k in 0..h.nrows() {
            h[(k, k)] += ridge;
        }
    }
    None
}

/// Newton polishing on the support. Returns false if no certified
/// solution was reached, leaving `f` in an unspecified state.
fn polish(a: &DMatrix<f64>, f: &mut [f64]) -> bool {
    let (p, m) = (a.nrows() as f64, a.ncols());
    let fmax = f.iter().cloned().fold(0.0, f64::max);
    let mut support: Vec<usize> = (0..m).filter(|&k| f[k] > 1e-7 * fmax).collect();
    for (k, v) in f.iter_mut().enumerate() {
        if support.binary_search(&k).is_err() {
            *v = 0.0;
        }
    }
    for _round in 0..100 {
        if !restricted_newton(a, f, &mut support) {
            return false;
        }
        let g = a * DVector::from_column_slice(f);
        let ginv = g.map(|v| 1.0 / v);
        let d = a.tr_mul(&ginv);
        let mut worst = None;
        for k in 0..m {
            if support.binary_search(&k).is_err()
                && d[k] > p * (1.0 + 1e-12)
                && worst.is_none_or(|w: usize| d[k] > d[w])
            {
                worst = Some(k);
            }
        }
        match worst {
            None => return true,
            Some(k) => {
                let pos = support.binary_search(&k).unwrap_err();
                support.insert(pos, k);
                let eps = 1e-6;
                for v in f.iter_mut() {
                    *v *= 1.0 - eps;
                }
                f[k] = eps;
            }
        }
    }
    false
}

fn restricted_newton(a: &DMatrix<f64>, f: &mut [f64], support: &mut Vec<usize>) -> bool {
    let p = a.nrows() as f64;
    for _ in 0..200 {
        if support.is_empty() {
            return false;
        }
        let s = support.len();
        let sub = DMatrix::from_fn(a.nrows(), s, |i, c| a[(i, support[c])]);
        let fs = DVector::from_fn(s, |c, _| f[support[c]]);
        let g = &sub * &fs;
        let ginv = g.map(|v| 1.0 / v);
        let grad = DVector::from_element(s, p) - sub.tr_mul(&ginv);
        if grad.amax() <= 1e-11 * p {
            return true;
        }
        let b = DMatrix::from_fn(a.nrows(), s, |i, c| sub[(i, c)] * ginv[i]);
        let h = b.tr_mul(&b);
        let dir = match solve_spd(h, &(-&grad)) {
            Some(v) => v,
            None => return false,
        };
        let slope = grad.dot(&dir);
        let (mut t_bound, mut hit) = (f64::INFINITY, None);
        for c in 0..s {
            if dir[c] < 0.0 {
                let t = -fs[c] / dir[c];
                if t < t_bound {
                    t_bound = t;
                    hit = Some(c);
                }
            }
        }
        let obj0 = objective(&sub, &fs);
        let mut t = t_bound.min(1.0);
        let clipped = t_bound <= 1.0;
        loop {
            let cand = &fs + &dir * t;
            let obj = objective(&sub, &cand);
            if obj <= obj0 + 1e-4 * t * slope || (t == 1.0 && -slope < 1e-12 * p) {
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                return -slope < 1e-9 * p;
            }
        }
        let at_bound = clipped && t == t_bound;
        for c in 0..s {
            f[support[c]] = (fs[c] + t * dir[c]).max(0.0);
        }
        if at_bound {
            let drop = support[hit.unwrap()];
            f[drop] = 0.0;
            support.retain(|&k| k != drop);
        }
    }
    false
}

/// Posterior mean of a rating under prior `g` given an estimate with
/// standard error `sigma_hat`.
pub fn posterior_mean(g: &MixingDistribution, theta_hat: f64, sigma_hat: f64) -> f64 {
    shrunk_mean(g, theta_hat, sigma_hat, 0.0)
}

/// Posterior mean when each atom is replaced by a Gaussian bump of scale
/// `bandwidth`.
fn shrunk_mean(g: &MixingDistribution, theta_hat: f64, sigma_hat: f64, bandwidth: f64) -> f64 {
    let var = sigma_hat * sigma_hat + bandwidth * bandwidth;
    let sd = var.sqrt();
    let shrink = bandwidth * bandwidth / var;
    let logw: Vec<(f64, f64)> = g
        .support()
        .map(|(t, w)| (t, w.ln() + normal_log_pdf(theta_hat, t, sd)))
        .collect();
    let mx = logw.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (t, lw) in logw {
        let w = (lw - mx).exp();
        num += w * (t + (theta_hat - t) * shrink);
        den += w;
    }
    num / den
}

/// Posterior means under the smoothed mixing distribution.
pub fn smoothed_posterior_mean(
    g: &MixingDistribution,
    obs: &GaussianObservations,
    bandwidth: f64,
) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidInput("bandwidth must be positive".into()));
    }
    Ok(obs
        .theta_hat
        .iter()
        .zip(&obs.sigma_hat)
        .map(|(&t, &s)| shrunk_mean(g, t, s, bandwidth))
        .collect())
}

/// Rule-of-thumb bandwidth `1.06 sd(theta_hat) p^(-1/5)`.
pub fn silverman_bandwidth(theta_hat: &[f64]) -> f64 {
    let n = theta_hat.len() as f64;
    let mean = theta_hat.iter().sum::<f64>() / n;
    let var = if n > 1.0 {
        theta_hat.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// How the event `alpha_i >= alpha_j` treats two players sharing an atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieRule {
    /// Shared atoms count fully towards both `P(i >= j)` and `P(j >= i)`.
    #[default]
    Weak,
    /// Shared atoms count one half towards each; expected ranks then sum
    /// to `N (N - 1) / 2`.
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RankOptions {
    pub ties: TieRule,
    /// Use the mixing distribution smoothed by Gaussian bumps of this scale.
    pub smoothing: Option<f64>,
}

/// Pairwise covariance block, with a small ridge when it is singular.
fn regularized_block(fit: &FitResult, i: usize, j: usize) -> [f64; 3] {
    let (mut a, b, mut c) = (fit.variance(i), fit.covariance(i, j), fit.variance(j));
    let det = a * c - b * b;
    if !(det > 1e-12 * (a * c).max(f64::MIN_POSITIVE)) {
        a += COVARIANCE_RIDGE;
        c += COVARIANCE_RIDGE;
    }
    [a, b, c]
}

/// `(P(alpha_i >= alpha_j), P(alpha_j >= alpha_i))` under the bivariate
/// Gaussian working likelihood and the product prior `g x g`.
fn pair_probabilities(
    support: &[(f64, f64)],
    x: (f64, f64),
    block: [f64; 3],
    opts: &RankOptions,
) -> (f64, f64) {
    match opts.smoothing {
        None | Some(0.0) => discrete_pair(support, x, block, opts.ties),
        Some(h) => smoothed_pair(support, x, block, h),
    }
}

fn discrete_pair(
    support: &[(f64, f64)],
    x: (f64, f64),
    block: [f64; 3],
    ties: TieRule,
) -> (f64, f64) {
    let [s11, s12, s22] = block;
    let det = s11 * s22 - s12 * s12;
    let (q11, q12, q22) = (s22 / det, -s12 / det, s11 / det);
    let u: Vec<f64> = support.iter().map(|(t, _)| x.0 - t).collect();
    let v: Vec<f64> = support.iter().map(|(t, _)| x.1 - t).collect();
    let lg: Vec<f64> = support.iter().map(|(_, w)| w.ln()).collect();
    let m = support.len();
    // With a ridge-sized variance the quadratic form reaches ~1e10, so it is
    // evaluated relative to the dominant atom pair (k0, l0) through
    // Q(w) - Q(w0) = (w - w0)' P (w + w0), which keeps full precision.
    let naive = |k: usize, l: usize| {
        lg[k] + lg[l] - 0.5 * (q11 * u[k] * u[k] + 2.0 * q12 * u[k] * v[l] + q22 * v[l] * v[l])
    };
    let (mut k0, mut l0) = (0, 0);
    for k in 0..m {
        for l in 0..m {
            if naive(k, l) > naive(k0, l0) {
                (k0, l0) = (k, l);
            }
        }
    }
    let t: Vec<f64> = support.iter().map(|(t, _)| *t).collect();
    let logw = |k: usize, l: usize| {
        let (du, dv) = (t[k0] - t[k], t[l0] - t[l]);
        let (su, sv) = (u[k] + u[k0], v[l] + v[l0]);
        let dq = q11 * du * su + q12 * (du * sv + dv * su) + q22 * dv * sv;
        lg[k] + lg[l] - 0.5 * dq
    };
    let mut mx = f64::NEG_INFINITY;
    for k in 0..m {
        for l in 0..m {
            mx = mx.max(logw(k, l));
        }
    }
    let (mut above, mut below, mut tie) = (0.0, 0.0, 0.0);
    for k in 0..m {
        for l in 0..m {
            let w = (logw(k, l) - mx).exp();
            match k.cmp(&l) {
                std::cmp::Ordering::Greater => above += w,
                std::cmp::Ordering::Less => below += w,
                std::cmp::Ordering::Equal => tie += w,
            }
        }
    }
    let total = above + below + tie;
    let share = match ties {
        TieRule::Weak => tie,
        TieRule::Half => 0.5 * tie,
    };
    ((above + share) / total, (below + share) / total)
}

fn smoothed_pair(support: &[(f64, f64)], x: (f64, f64), block: [f64; 3], h: f64) -> (f64, f64) {
    let [s11, s12, s22] = block;
    let h2 = h * h;
    // marginal covariance of the estimates under one component
    let (m11, m12, m22) = (s11 + h2, s12, s22 + h2);
    let mdet = m11 * m22 - m12 * m12;
    // posterior covariance (Sigma^-1 + I/h^2)^-1 and the gain Sigma_post / h^2
    let det = s11 * s22 - s12 * s12;
    let (i11, i12, i22) = (s22 / det + 1.0 / h2, -s12 / det, s11 / det + 1.0 / h2);
    let idet = i11 * i22 - i12 * i12;
    let (p11, p12, p22) = (i22 / idet, -i12 / idet, i11 / idet);
    let diff_sd = (p11 + p22 - 2.0 * p12).max(0.0).sqrt();
    // Sigma^-1 x
    let (sx0, sx1) = ((s22 * x.0 - s12 * x.1) / det, (s11 * x.1 - s12 * x.0) / det);
    let mut terms = Vec::with_capacity(support.len() * support.len());
    for &(tk, gk) in support {
        for &(tl, gl) in support {
            let (u, v) = (x.0 - tk, x.1 - tl);
            let q = (m22 * u * u - 2.0 * m12 * u * v + m11 * v * v) / mdet;
            let lw = gk.ln() + gl.ln() - 0.5 * q;
            let (r0, r1) = (sx0 + tk / h2, sx1 + tl / h2);
            let mean_diff = (p11 * r0 + p12 * r1) - (p12 * r0 + p22 * r1);
            let prob = if diff_sd > 0.0 {
                0.5 * erfc(-mean_diff / (diff_sd * std::f64::consts::SQRT_2))
            } else if mean_diff >= 0.0 {
                1.0
            } else {
                0.0
            };
            terms.push((lw, prob));
        }
    }
    let mx = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (lw, prob) in terms {
        let w = (lw - mx).exp();
        num += w * prob;
        den += w;
    }
    let p = num / den;
    (p, 1.0 - p)
}

/// Posterior mean ranks `R_i = sum_{j != i} P(alpha_i >= alpha_j | data)`
/// for every player of the fit, using the pairwise covariance blocks of the
/// maximum likelihood estimate.
pub fn posterior_mean_ranks(
    g: &MixingDistribution,
    fit: &FitResult,
    opts: &RankOptions,
) -> Result<Vec<f64>> {
    if let Some(h) = opts.smoothing {
        if !(h >= 0.0) {
            return Err(Error::InvalidInput(
                "smoothing bandwidth must be non-negative".into(),
            ));
        }
    }
    let n = fit.num_players();
    let support: Vec<(f64, f64)> = g.support().collect();
    let rows: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let block = regularized_block(fit, i, j);
                    pair_probabilities(&support, (fit.theta[i], fit.theta[j]), block, opts)
                })
                .collect()
        })
        .collect();
    let mut ranks = vec![0.0; n];
    for (i, row) in rows.iter().enumerate() {
        for (k, &(pij, pji)) in row.iter().enumerate() {
            let j = i + 1 + k;
            ranks[i] += pij;
            ranks[j] += pji;
        }
    }
    Ok(ranks)
}

/// Settings for the full empirical Bayes pipeline.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EbOptions {
    pub grid: GridSpec,
    /// Smoothing bandwidth for the smoothed posterior means; `None` uses
    /// [`silverman_bandwidth`].
    pub bandwidth: Option<f64>,
    pub ranks: RankOptions,
}

/// Empirical Bayes summaries for every player.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub labels: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub post_mean: Vec<f64>,
    pub post_mean_smoothed: Vec<f64>,
    pub post_rank: Vec<f64>,
    pub bandwidth: f64,
    pub mixing: MixingDistribution,
}

/// Fits the mixing distribution to the free ratings of `fit` and computes
/// posterior means, smoothed posterior means and posterior mean ranks.
///
/// The anchor rating is known exactly by construction; its posterior mean
/// uses the standard deviation `sqrt(COVARIANCE_RIDGE)` so that it stays
/// defined.
pub fn posterior_summary(fit: &FitResult, opts: &EbOptions) -> Result<PosteriorSummary> {
    let obs = GaussianObservations::from_fit(fit)?;
    let mixing = fit_npmle(&obs, &opts.grid)?;
    let bandwidth = opts.bandwidth.unwrap_or_else(|| default_bandwidth(&obs));
    let all = player_observations(fit)?;
    let post_mean = posterior_means(&mixing, &all);
    let post_mean_smoothed = smoothed_posterior_mean(&mixing, &all, bandwidth)?;
    let post_rank = posterior_mean_ranks(&mixing, fit, &opts.ranks)?;
    Ok(PosteriorSummary {
        labels: fit.labels.clone(),
        theta_hat: fit.theta.clone(),
        se: (0..fit.num_players()).map(|i| fit.std_error(i)).collect(),
        post_mean,
        post_mean_smoothed,
        post_rank,
        bandwidth,
        mixing,
    })
}

/// Ratings of every player including the anchor, whose standard error is
/// replaced by `sqrt(COVARIANCE_RIDGE)`.
pub fn player_observations(fit: &FitResult) -> Result<GaussianObservations> {
    let sd = (0..fit.num_players())
        .map(|i| {
            let s = fit.std_error(i);
            if s > 0.0 {
                s
            } else {
                COVARIANCE_RIDGE.sqrt()
            }
        })
        .collect();
    GaussianObservations::new(fit.theta.clone(), sd)
}

/// Posterior mean of every observation.
pub fn posterior_means(g: &MixingDistribution, obs: &GaussianObservations) -> Vec<f64> {
    obs.theta_hat
        .iter()
        .zip(&obs.sigma_hat)
        .map(|(&t, &s)| posterior_mean(g, t, s))
        .collect()
}

/// [`silverman_bandwidth`] of the estimates, or their mean standard error
/// when the estimates do not vary.
pub fn default_bandwidth(obs: &GaussianObservations) -> f64 {
    let h = silverman_bandwidth(obs.theta_hat());
    if h > 0.0 {
        h
    } else {
        obs.sigma_hat().iter().sum::<f64>() / obs.len() as f64
    }
}

impl PosteriorSummary {
    /// Writes `label,theta_hat,se,post_mean,post_mean_smoothed,post_rank`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "label",
            "theta_hat",
            "se",
            "post_mean",
            "post_mean_smoothed",
            "post_rank",
        ])?;
        for k in 0..self.labels.len() {
            w.write_record([
                self.labels[k].clone(),
                self.theta_hat[k].to_string(),
                self.se[k].to_string(),
                self.post_mean[k].to_string(),
                self.post_mean_smoothed[k].to_string(),
                self.post_rank[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
