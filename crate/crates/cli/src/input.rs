//! Loading datasets from the supported file formats.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::Context;

use btrank::comparisons::{
    from_citation_matrix, read_citation_csv, read_match_csv, ComparisonDataset,
};

use crate::{DataArgs, InputKind};

fn sniff(path: &Path) -> anyhow::Result<InputKind> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        return Ok(InputKind::Dataset);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = rdr.records().next().transpose()?.unwrap_or_default();
    let has = |name: &str| header.iter().any(|h| h.eq_ignore_ascii_case(name));
    Ok(if has("winner") && has("loser") {
        InputKind::Matches
    } else {
        InputKind::Citations
    })
}

fn read_players(path: &Path) -> anyhow::Result<Vec<String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Loads the dataset named by `args`, returning it with the resolved kind.
pub fn load(args: &DataArgs) -> anyhow::Result<(ComparisonDataset, InputKind)> {
    let path = &args.input;
    let kind = match args.kind {
        InputKind::Auto => sniff(path)?,
        k => k,
    };
    if args.players.is_some() && kind != InputKind::Matches {
        anyhow::bail!(btrank::Error::InvalidInput(
            "--players applies only to match logs".into()
        ));
    }
    let open = || -> anyhow::Result<BufReader<File>> {
        Ok(BufReader::new(
            File::open(path).with_context(|| format!("opening {}", path.display()))?,
        ))
    };
    let ctx = || format!("reading {}", path.display());
    let d = match kind {
        InputKind::Dataset => serde_json::from_reader(open()?)
            .map_err(|e| btrank::Error::InvalidInput(e.to_string()))
            .with_context(ctx)?,
        InputKind::Citations => {
            from_citation_matrix(&read_citation_csv(open()?).with_context(ctx)?)?
        }
        InputKind::Matches => {
            let players = args.players.as_deref().map(read_players).transpose()?;
            read_match_csv(open()?, players.as_deref()).with_context(ctx)?
        }
        InputKind::Auto => unreachable!("resolved above"),
    };
    Ok((d, kind))
}
