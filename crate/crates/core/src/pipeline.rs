//! Runs any subset of the seven rating procedures on one dataset, sharing
//! the maximum likelihood fit and the mixing distribution between them.

use crate::btmle::{fit_mle, FitResult, SolverOptions};
use crate::comparisons::ComparisonDataset;
use crate::error::{Error, Result};
use crate::fusedlasso::{default_lambda_grid, select_lambda, solve_path, LassoOptions, LassoPath};
use crate::npmle::{
    default_bandwidth, fit_npmle, player_observations, posterior_mean_ranks, posterior_means,
    smoothed_posterior_mean, EbOptions, GaussianObservations, MixingDistribution,
};
use crate::scores::{borda, weighted_borda, Method, RankingTable};

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub mle: SolverOptions,
    pub eb: EbOptions,
    pub lasso: LassoOptions,
    /// Penalty grid for the grouped lasso; `None` uses the default grid.
    pub lambdas: Option<Vec<f64>>,
}

/// Scores of each requested method plus the intermediate fits.
#[derive(Debug)]
pub struct Ratings {
    pub tables: Vec<(Method, Result<RankingTable>)>,
    pub fit: Option<FitResult>,
    pub mixing: Option<MixingDistribution>,
    pub bandwidth: Option<f64>,
    pub path: Option<LassoPath>,
}

impl Ratings {
    pub fn table(&self, m: Method) -> Option<&RankingTable> {
        self.tables
            .iter()
            .find(|(k, _)| *k == m)
            .and_then(|(_, t)| t.as_ref().ok())
    }
}

fn shared_error(e: &Error) -> Error {
    match e {
        Error::Divergent { players } => Error::Divergent {
            players: players.clone(),
        },
        Error::Disconnected { components } => Error::Disconnected {
            components: components.clone(),
        },
        Error::NotConverged {
            iterations,
            residual,
        } => Error::NotConverged {
            iterations: *iterations,
            residual: *residual,
        },
        other => Error::InvalidInput(other.to_string()),
    }
}

/// Computes scores for every method in `methods`. Failures are reported per
/// method; the others still run.
pub fn rate(d: &ComparisonDataset, methods: &[Method], opts: &PipelineOptions) -> Ratings {
    let needs_fit = methods.iter().any(|m| m.needs_mle());
    let fit = needs_fit.then(|| fit_mle(d, &opts.mle));

    let needs_mixing = methods
        .iter()
        .any(|m| matches!(m, Method::Kwpm | Method::Kwpms | Method::Kwpr));
    let mixing: Option<Result<(MixingDistribution, f64)>> = match (&fit, needs_mixing) {
        (Some(Ok(f)), true) => Some((|| {
            let obs = GaussianObservations::from_fit(f)?;
            let g = fit_npmle(&obs, &opts.eb.grid)?;
            let h = opts.eb.bandwidth.unwrap_or_else(|| default_bandwidth(&obs));
            Ok((g, h))
        })()),
        _ => None,
    };

    let mut path = None;
    let mut tables = Vec::with_capacity(methods.len());
    for &m in methods {
        let table = (|| -> Result<RankingTable> {
            let fit = || match &fit {
                Some(Ok(f)) => Ok(f),
                Some(Err(e)) => Err(shared_error(e)),
                None => unreachable!(),
            };
            let mix = || match &mixing {
                Some(Ok(g)) => Ok(g),
                Some(Err(e)) => Err(shared_error(e)),
                None => fit().map(|_| unreachable!()),
            };
            let scores = match m {
                Method::Mle => fit()?.theta.clone(),
                Method::Kwpm => posterior_means(&mix()?.0, &player_observations(fit()?)?),
                Method::Kwpms => {
                    let (g, h) = mix()?;
                    smoothed_posterior_mean(g, &player_observations(fit()?)?, *h)?
                }
                Method::Kwpr => posterior_mean_ranks(&mix()?.0, fit()?, &opts.eb.ranks)?,
                Method::Rmle => {
                    let lambdas = opts
                        .lambdas
                        .clone()
                        .unwrap_or_else(|| default_lambda_grid(d));
                    let p = solve_path(d, &lambdas, &opts.lasso)?;
                    let theta = select_lambda(&p)?.theta.clone();
                    path = Some(p);
                    theta
                }
                Method::Borda => borda(d),
                Method::WeightedBorda => weighted_borda(d),
            };
            Ok(RankingTable::new(m, scores))
        })();
        tables.push((m, table));
    }

    let (mixing, bandwidth) = match mixing {
        Some(Ok((g, h))) => (Some(g), Some(h)),
        _ => (None, None),
    };
    Ratings {
        tables,
        fit: fit.and_then(Result::ok),
        mixing,
        bandwidth,
        path,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparisons::PairCount;

    #[test]
    fn failures_are_per_method() {
        // player 2 never wins: no MLE, but counts still work
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
        let r = rate(
            &d,
            &[Method::Mle, Method::Kwpm, Method::Borda],
            &PipelineOptions::default(),
        );
        assert!(matches!(r.tables[0].1, Err(Error::Divergent { .. })));
        assert!(matches!(r.tables[1].1, Err(Error::Divergent { .. })));
        assert_eq!(r.table(Method::Borda).unwrap().scores, vec![5.0, 4.0, 0.0]);
    }
}
