//! Paired-comparison data: match records, aggregated binomial counts and
//! citation matrices.
//!
//! A [`ComparisonDataset`] stores each observed unordered pair once, with
//! `i < j`, the number of meetings `n` and the number of wins `w` of the
//! lower-indexed player. Player 0 is the identification anchor for every
//! downstream estimator, so loaders preserve input order.
//!
//! Citation matrices follow the convention that `C[i][j]` counts citations
//! appearing in journal `j` to papers of journal `i`. Each such citation is
//! a "win" for the cited journal `i`. Reading the matrix transposed would
//! reverse every rating.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single binary outcome between two players.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchRecord {
    pub i: usize,
    pub j: usize,
    /// `true` when `i` beat `j`.
    pub i_won: bool,
}

impl MatchRecord {
    pub fn new(i: usize, j: usize, i_won: bool) -> Self {
        Self { i, j, i_won }
    }

    pub fn from_winner(winner: usize, loser: usize) -> Self {
        Self::new(winner, loser, true)
    }

    pub fn winner(&self) -> usize {
        if self.i_won {
            self.i
        } else {
            self.j
        }
    }
}

/// Aggregated outcomes for one unordered pair `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub i: usize,
    pub j: usize,
    /// Number of meetings.
    pub n: u64,
    /// Wins of `i` over `j`.
    pub w: u64,
}

impl PairCount {
    /// Wins of `j` over `i`.
    pub fn losses(&self) -> u64 {
        self.n - self.w
    }
}

/// Players plus aggregated pairwise counts.
///
/// Deserialization goes through [`ComparisonDataset::from_pairs`], so
/// stored datasets are validated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoredDataset")]
pub struct ComparisonDataset {
    players: usize,
    labels: Option<Vec<String>>,
    pairs: Vec<PairCount>,
    total: u64,
}

#[derive(Deserialize)]
struct StoredDataset {
    players: usize,
    #[serde(default)]
    labels: Option<Vec<String>>,
    pairs: Vec<PairCount>,
}

impl TryFrom<StoredDataset> for ComparisonDataset {
    type Error = Error;

    fn try_from(s: StoredDataset) -> Result<Self> {
        let d = Self::from_pairs(s.players, s.pairs)?;
        match s.labels {
            Some(l) => d.with_labels(l),
            None => Ok(d),
        }
    }
}

impl ComparisonDataset {
    /// Builds a dataset from pair counts, canonicalizing orientation and
    /// merging repeated pairs. Pairs with zero meetings are dropped.
    pub fn from_pairs(players: usize, pairs: impl IntoIterator<Item = PairCount>) -> Result<Self> {
        let mut merged: BTreeMap<(usize, usize), (u64, u64)> = BTreeMap::new();
        for p in pairs {
            check_pair(p.i, p.j, players)?;
            if p.w > p.n {
                return Err(Error::InvalidInput(format!(
                    "pair ({}, {}) has {} wins in {} meetings",
                    p.i, p.j, p.w, p.n
                )));
            }
            let (key, w) = if p.i < p.j {
                ((p.i, p.j), p.w)
            } else {
                ((p.j, p.i), p.n - p.w)
            };
            let e = merged.entry(key).or_insert((0, 0));
            e.0 += p.n;
            e.1 += w;
        }
        let pairs: Vec<PairCount> = merged
            .into_iter()
            .filter(|(_, (n, _))| *n > 0)
            .map(|((i, j), (n, w))| PairCount { i, j, n, w })
            .collect();
        let total = pairs.iter().map(|p| p.n).sum();
        Ok(Self {
            players,
            labels: None,
            pairs,
            total,
        })
    }

    /// Attaches display labels, one per player. Labels must be unique.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.players {
            return Err(Error::DimensionMismatch {
                expected: self.players,
                got: labels.len(),
            });
        }
        let mut seen = HashMap::new();
        for (k, l) in labels.iter().enumerate() {
            if let Some(prev) = seen.insert(l.as_str(), k) {
                return Err(Error::InvalidInput(format!(
                    "duplicate label {l:?} for players {prev} and {k}"
                )));
            }
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_players(&self) -> usize {
        self.players
    }

    pub fn pairs(&self) -> &[PairCount] {
        &self.pairs
    }

    /// Total number of matches `n`.
    pub fn total_matches(&self) -> u64 {
        self.total
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Display label of a player, falling back to its index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    pub fn display_labels(&self) -> Vec<String> {
        (0..self.players).map(|i| self.label(i)).collect()
    }

    /// Number of matches played by each player.
    pub fn games_played(&self) -> Vec<u64> {
        let mut g = vec![0; self.players];
        for p in &self.pairs {
            g[p.i] += p.n;
            g[p.j] += p.n;
        }
        g
    }

    pub fn is_connected(&self) -> bool {
        connected_components(self).len() <= 1
    }

    /// Returns a dataset whose player `k` is player `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.players {
            return Err(Error::DimensionMismatch {
                expected: self.players,
                got: perm.len(),
            });
        }
        let mut inverse = vec![usize::MAX; self.players];
        for (new, &old) in perm.iter().enumerate() {
            if old >= self.players || inverse[old] != usize::MAX {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let pairs = self.pairs.iter().map(|p| PairCount {
            i: inverse[p.i],
            j: inverse[p.j],
            n: p.n,
            w: p.w,
        });
        let mut out = Self::from_pairs(self.players, pairs)?;
        if let Some(l) = &self.labels {
            out.labels = Some(perm.iter().map(|&k| l[k].clone()).collect());
        }
        Ok(out)
    }
}

fn check_pair(i: usize, j: usize, players: usize) -> Result<()> {
    for index in [i, j] {
        if index >= players {
            return Err(Error::IndexOutOfRange { index, players });
        }
    }
    if i == j {
        return Err(Error::SelfMatch { i });
    }
    Ok(())
}

/// Aggregates binary outcomes into binomial pair counts.
pub fn aggregate(records: &[MatchRecord], players: usize) -> Result<ComparisonDataset> {
    let mut counts: BTreeMap<(usize, usize), (u64, u64)> = BTreeMap::new();
    for r in records {
        check_pair(r.i, r.j, players)?;
        let key = (r.i.min(r.j), r.i.max(r.j));
        let e = counts.entry(key).or_insert((0, 0));
        e.0 += 1;
        if r.winner() == key.0 {
            e.1 += 1;
        }
    }
    ComparisonDataset::from_pairs(
        players,
        counts
            .into_iter()
            .map(|((i, j), (n, w))| PairCount { i, j, n, w }),
    )
}

/// Total wins of each player.
pub fn win_totals(d: &ComparisonDataset) -> Vec<u64> {
    let mut w = vec![0; d.num_players()];
    for p in d.pairs() {
        w[p.i] += p.w;
        w[p.j] += p.losses();
    }
    w
}

/// Partition of players by the undirected comparison graph, each component
/// sorted, components ordered by their smallest member.
pub fn connected_components(d: &ComparisonDataset) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::<usize>::new(d.num_players());
    for p in d.pairs() {
        uf.union(p.i, p.j);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut first: HashMap<usize, usize> = HashMap::new();
    for v in 0..d.num_players() {
        let root = uf.find(v);
        let key = *first.entry(root).or_insert(v);
        groups.entry(key).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Strongly connected components of the directed "beat" graph, which has an
/// edge `i -> j` whenever `i` won at least once against `j`. The maximum
/// likelihood estimate exists exactly when there is a single component.
pub fn win_graph_components(d: &ComparisonDataset) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(d.num_players(), 2 * d.pairs().len());
    let nodes: Vec<NodeIndex> = (0..d.num_players()).map(|_| g.add_node(())).collect();
    for p in d.pairs() {
        if p.w > 0 {
            g.add_edge(nodes[p.i], nodes[p.j], ());
        }
        if p.losses() > 0 {
            g.add_edge(nodes[p.j], nodes[p.i], ());
        }
    }
    let mut comps: Vec<Vec<usize>> = petgraph::algo::tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

/// Square matrix of citation counts with journal labels.
///
/// `counts[i][j]` is the number of citations appearing in journal `j` to
/// papers published in journal `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CitationMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<i64>>,
}

/// Converts citation counts into a comparison dataset: citations of `i` by
/// `j` are wins of `i` over `j`. Self citations are ignored.
pub fn from_citation_matrix(m: &CitationMatrix) -> Result<ComparisonDataset> {
    let size = m.counts.len();
    if m.labels.len() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            got: m.labels.len(),
        });
    }
    for (r, row) in m.counts.iter().enumerate() {
        if row.len() != size {
            return Err(Error::InvalidInput(format!(
                "citation matrix is not square: row {r} has {} entries, expected {size}",
                row.len()
            )));
        }
        if let Some(c) = row.iter().position(|&v| v < 0) {
            return Err(Error::InvalidInput(format!(
                "negative citation count {} at ({r}, {c})",
                row[c]
            )));
        }
    }
    let mut pairs = Vec::new();
    for i in 0..size {
        for j in (i + 1)..size {
            let w = m.counts[i][j] as u64;
            let n = w + m.counts[j][i] as u64;
            if n > 0 {
                pairs.push(PairCount { i, j, n, w });
            }
        }
    }
    let d = ComparisonDataset::from_pairs(size, pairs)?.with_labels(m.labels.clone())?;
    let comps = connected_components(&d).len();
    if comps > 1 {
        log::warn!("comparison graph is disconnected: {comps} components");
    }
    Ok(d)
}

/// Reads a citation matrix CSV: a header row of journal labels (the first
/// cell is ignored), then one row per journal with its label first.
pub fn read_citation_csv<R: Read>(reader: R) -> Result<CitationMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let size = labels.len();
    let position: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(k, l)| (l.as_str(), k))
        .collect();
    if position.len() != size {
        return Err(Error::Parse {
            line: 1,
            message: "duplicate journal labels in header".into(),
        });
    }
    let mut rows: Vec<Option<Vec<i64>>> = vec![None; size];
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let key = rec.get(0).unwrap_or_default();
        let &r = position.get(key).ok_or_else(|| Error::Parse {
            line,
            message: format!("row label {key:?} does not appear in the header"),
        })?;
        if rows[r].is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate row for {key:?}"),
            });
        }
        if rec.len() != size + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} count columns, found {}", size, rec.len() - 1),
            });
        }
        let mut row = Vec::with_capacity(size);
        for (c, cell) in rec.iter().skip(1).enumerate() {
            let v: i64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {:?}: {cell:?} is not an integer count", labels[c]),
            })?;
            if v < 0 {
                return Err(Error::Parse {
                    line,
                    message: format!("negative count {v}"),
                });
            }
            row.push(v);
        }
        rows[r] = Some(row);
    }
    let mut counts = Vec::with_capacity(size);
    for (k, row) in rows.into_iter().enumerate() {
        counts.push(row.ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing row for journal {:?}", labels[k]),
        })?);
    }
    Ok(CitationMatrix { labels, counts })
}

/// Writes a citation matrix in the layout read by [`read_citation_csv`].
pub fn write_citation_csv<W: Write>(out: W, m: &CitationMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("journal").chain(m.labels.iter().map(String::as_str)))?;
    for (label, row) in m.labels.iter().zip(&m.counts) {
        w.write_record(std::iter::once(label.clone()).chain(row.iter().map(i64::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `winner,loser` match log.
///
/// With a known player list, every entry must be one of its labels. Without
/// one, entries that are all non-negative integers are taken as indices;
/// otherwise players are labelled in order of first appearance.
pub fn read_match_csv<R: Read>(reader: R, players: Option<&[String]>) -> Result<ComparisonDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let (wc, lc) = (col("winner")?, col("loser")?);
    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |c: usize| {
            rec.get(c)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: "empty winner or loser".into(),
                })
        };
        raw.push((line, get(wc)?, get(lc)?));
    }

    let (labels, index): (Vec<String>, HashMap<String, usize>) = match players {
        Some(list) => {
            let index: HashMap<String, usize> = list
                .iter()
                .enumerate()
                .map(|(k, l)| (l.clone(), k))
                .collect();
            if index.len() != list.len() {
                return Err(Error::InvalidInput(
                    "duplicate labels in player list".into(),
                ));
            }
            (list.to_vec(), index)
        }
        None => {
            let numeric: Option<Vec<(usize, usize)>> = raw
                .iter()
                .map(|(_, a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .collect();
            if let Some(pairs) = numeric {
                let players = pairs.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
                let records: Vec<MatchRecord> = pairs
                    .iter()
                    .map(|&(a, b)| MatchRecord::from_winner(a, b))
                    .collect();
                return aggregate_with_lines(&records, players, &raw);
            }
            let mut labels = Vec::new();
            let mut index = HashMap::new();
            for (_, a, b) in &raw {
                for l in [a, b] {
                    if !index.contains_key(l) {
                        index.insert(l.clone(), labels.len());
                        labels.push(l.clone());
                    }
                }
            }
            (labels, index)
        }
    };
    let mut records = Vec::with_capacity(raw.len());
    for (line, a, b) in &raw {
        let lookup = |l: &String| {
            index.get(l).copied().ok_or_else(|| Error::Parse {
                line: *line,
                message: format!("unknown player label {l:?}"),
            })
        };
        records.push(MatchRecord::from_winner(lookup(a)?, lookup(b)?));
    }
    aggregate_with_lines(&records, labels.len(), &raw)?.with_labels(labels)
}

fn aggregate_with_lines(
    records: &[MatchRecord],
    players: usize,
    raw: &[(usize, String, String)],
) -> Result<ComparisonDataset> {
    if let Some(k) = records.iter().position(|r| r.i == r.j) {
        return Err(Error::Parse {
            line: raw[k].0,
            message: format!("player {:?} matched against itself", raw[k].1),
        });
    }
    aggregate(records, players)
}
