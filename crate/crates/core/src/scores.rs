//! Count-based scores, rank construction and Kendall rank correlation.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::comparisons::{win_totals, ComparisonDataset};
use crate::error::{Error, Result};

/// The seven rating procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Logistic maximum likelihood.
    #[serde(rename = "MLE")]
    Mle,
    /// Kiefer-Wolfowitz posterior mean ratings.
    #[serde(rename = "KWPM")]
    Kwpm,
    /// Posterior means under a smoothed mixing distribution.
    #[serde(rename = "KWPMs")]
    Kwpms,
    /// Posterior mean ranks.
    #[serde(rename = "KWPR")]
    Kwpr,
    /// Grouped-lasso penalized likelihood at the BIC-selected penalty.
    #[serde(rename = "RMLE")]
    Rmle,
    /// Borda scores (win totals).
    #[serde(rename = "B")]
    Borda,
    /// Weighted Borda scores.
    #[serde(rename = "WB")]
    WeightedBorda,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mle,
        Method::Kwpm,
        Method::Kwpms,
        Method::Kwpr,
        Method::Rmle,
        Method::Borda,
        Method::WeightedBorda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mle => "MLE",
            Method::Kwpm => "KWPM",
            Method::Kwpms => "KWPMs",
            Method::Kwpr => "KWPR",
            Method::Rmle => "RMLE",
            Method::Borda => "B",
            Method::WeightedBorda => "WB",
        }
    }

    /// Whether the method needs a maximum likelihood fit first.
    pub fn needs_mle(self) -> bool {
        matches!(
            self,
            Method::Mle | Method::Kwpm | Method::Kwpms | Method::Kwpr
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown method {s:?}")))
    }
}

/// Scores and ranks of every player under one method. Rank 1 is best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub method: Method,
    pub scores: Vec<f64>,
    pub ranks: Vec<f64>,
}

impl RankingTable {
    /// Ranks `scores`, larger being better.
    pub fn new(method: Method, scores: Vec<f64>) -> Self {
        let ranks = ranks_from_scores(&scores, true);
        Self {
            method,
            scores,
            ranks,
        }
    }
}

/// Writes tables in long format: `method,label,score,rank`.
pub fn write_rankings_csv<W: Write>(
    out: W,
    labels: &[String],
    tables: &[RankingTable],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "label", "score", "rank"])?;
    for t in tables {
        for (k, label) in labels.iter().enumerate() {
            w.write_record([
                t.method.as_str(),
                label,
                &t.scores[k].to_string(),
                &t.ranks[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Borda scores: total wins.
pub fn borda(d: &ComparisonDataset) -> Vec<f64> {
    win_totals(d).into_iter().map(|w| w as f64).collect()
}

/// Weighted Borda scores: the sum over opponents of the fraction of
/// meetings won.
pub fn weighted_borda(d: &ComparisonDataset) -> Vec<f64> {
    let mut s = vec![0.0; d.num_players()];
    for p in d.pairs() {
        let frac = p.w as f64 / p.n as f64;
        s[p.i] += frac;
        s[p.j] += 1.0 - frac;
    }
    s
}

/// 1-based ranks; tied scores share the average of the ranks they span.
pub fn ranks_from_scores(scores: &[f64], higher_is_better: bool) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let cmp = |a: &usize, b: &usize| {
        let o = scores[*a].total_cmp(&scores[*b]);
        if higher_is_better {
            o.reverse()
        } else {
            o
        }
    };
    idx.sort_by(cmp);
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Kendall's tau-b, computed in O(n log n).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in rank correlation input".into()));
    }
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| a[x].total_cmp(&a[y]).then(b[x].total_cmp(&b[y])));

    let pairs = |t: u64| t * t.saturating_sub(1) / 2;
    let total = pairs(n as u64);
    let (mut ties_a, mut ties_joint) = (0u64, 0u64);
    let (mut run_a, mut run_joint) = (1u64, 1u64);
    for k in 1..n {
        let (p, q) = (idx[k - 1], idx[k]);
        if a[p] == a[q] {
            run_a += 1;
            if b[p] == b[q] {
                run_joint += 1;
            } else {
                ties_joint += pairs(run_joint);
                run_joint = 1;
            }
        } else {
            ties_a += pairs(run_a);
            ties_joint += pairs(run_joint);
            run_a = 1;
            run_joint = 1;
        }
    }
    ties_a += pairs(run_a);
    ties_joint += pairs(run_joint);

    let mut seq: Vec<f64> = idx.iter().map(|&k| b[k]).collect();
    let swaps = merge_count(&mut seq);

    let mut ties_b = 0u64;
    let mut run_b = 1u64;
    for k in 1..n {
        if seq[k] == seq[k - 1] {
            run_b += 1;
        } else {
            ties_b += pairs(run_b);
            run_b = 1;
        }
    }
    ties_b += pairs(run_b);

    let denom_a = (total - ties_a) as f64;
    let denom_b = (total - ties_b) as f64;
    if denom_a == 0.0 || denom_b == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    let s = total as f64 - ties_a as f64 - ties_b as f64 + ties_joint as f64 - 2.0 * swaps as f64;
    Ok((s / (denom_a.sqrt() * denom_b.sqrt())).clamp(-1.0, 1.0))
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            swaps += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparisons::PairCount;

    #[test]
    fn borda_counts_wins() {
        let d = ComparisonDataset::from_pairs(
            2,
            [PairCount {
                i: 0,
                j: 1,
                n: 4,
                w: 3,
            }],
        )
        .unwrap();
        assert_eq!(borda(&d), vec![3.0, 1.0]);
        assert_eq!(
            borda(&ComparisonDataset::from_pairs(3, []).unwrap()),
            vec![0.0; 3]
        );
    }

    #[test]
    fn weighted_borda_fractions() {
        let d = ComparisonDataset::from_pairs(
            4,
            (1..4).map(|j| PairCount {
                i: 0,
                j,
                n: 1,
                w: 1,
            }),
        )
        .unwrap();
        assert_eq!(weighted_borda(&d)[0], 3.0);

        let even = ComparisonDataset::from_pairs(
            3,
            [
                PairCount {
                    i: 0,
                    j: 1,
                    n: 2,
                    w: 1,
                },
                PairCount {
                    i: 0,
                    j: 2,
                    n: 6,
                    w: 3,
                },
                PairCount {
                    i: 1,
                    j: 2,
                    n: 4,
                    w: 2,
                },
            ],
        )
        .unwrap();
        assert_eq!(weighted_borda(&even), vec![1.0; 3]);
    }

    #[test]
    fn rank_conventions() {
        assert_eq!(
            ranks_from_scores(&[10.0, 20.0, 30.0], true),
            vec![3.0, 2.0, 1.0]
        );
        assert_eq!(
            ranks_from_scores(&[10.0, 20.0, 30.0], false),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(ranks_from_scores(&[5.0, 5.0], true), vec![1.5, 1.5]);
        assert_eq!(
            ranks_from_scores(&[1.0, 3.0, 3.0, 3.0, 0.0], true),
            vec![4.0, 2.0, 2.0, 2.0, 5.0]
        );
        // fractional expected ranks: larger is better
        assert_eq!(
            ranks_from_scores(&[0.4, 1.6, 1.0], true),
            vec![3.0, 1.0, 2.0]
        );
    }

    #[test]
    fn tau_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(
            kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0
        );
    }

    #[test]
    fn tau_errors() {
        assert!(matches!(
            kendall_tau(&[1.0, 2.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn tau_with_ties_matches_scipy() {
        // scipy.stats.kendalltau([1,2,2,3,4],[1,3,2,2,5]) -> 0.6666666666666666
        let t = kendall_tau(&[1.0, 2.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 2.0, 5.0]).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-12, "{t}");
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("XYZ".parse::<Method>().is_err());
    }
}
