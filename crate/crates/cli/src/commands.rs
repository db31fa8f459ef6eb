use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use serde_json::json;

use btrank::comparisons::{connected_components, win_graph_components, write_citation_csv};
use btrank::fusedlasso::{
    default_lambda_grid, select_lambda, solve_path, write_path_csv, write_path_summary_csv,
    LassoPath,
};
use btrank::npmle::{posterior_summary, EbOptions, GridSpec, RankOptions, TieRule};
use btrank::pipeline::{rate, PipelineOptions};
use btrank::scores::{write_rankings_csv, Method, RankingTable};
use btrank::simlab::{run_grid, synthetic_citations, SimConfig, SimResult};

use crate::input;
use crate::manifest::{digest_file, RunManifest};
use crate::{DataArgs, Format, Ties, EXIT_INPUT, EXIT_NUMERICAL};

pub struct Context {
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed: Option<u64>,
}

impl Context {
    /// Writes one output file and returns its name for the manifest.
    fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
    ) -> anyhow::Result<String> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        Ok(name.to_string())
    }

    fn write_json(&self, name: &str, value: &impl serde::Serialize) -> anyhow::Result<String> {
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }
}

fn data_config(data: &DataArgs, kind: crate::InputKind) -> serde_json::Value {
    json!({ "kind": kind, "players_file": data.players.is_some() })
}

fn input_digests(data: &DataArgs) -> anyhow::Result<Vec<crate::manifest::InputDigest>> {
    let mut out = vec![digest_file(&data.input)?];
    if let Some(p) = &data.players {
        out.push(digest_file(p)?);
    }
    Ok(out)
}

pub fn ingest(ctx: &Context, data: &DataArgs) -> anyhow::Result<ExitCode> {
    let (d, kind) = input::load(data)?;
    let components = connected_components(&d);
    let strong = win_graph_components(&d);
    let labels = d.display_labels();
    let largest = strong
        .iter()
        .max_by_key(|c| c.len())
        .cloned()
        .unwrap_or_default();
    let outside: Vec<&str> = (0..d.num_players())
        .filter(|i| !largest.contains(i))
        .map(|i| labels[i].as_str())
        .collect();
    if components.len() > 1 {
        log::warn!(
            "comparison graph has {} components; ratings are not comparable across them",
            components.len()
        );
    } else if !outside.is_empty() {
        log::warn!("no finite maximum likelihood estimate: {} players outside the largest strongly connected group", outside.len());
    }

    let mut outputs = vec![ctx.write_json("dataset.json", &d)?];
    let summary = json!({
        "players": d.num_players(),
        "pairs": d.pairs().len(),
        "total_matches": d.total_matches(),
        "components": components.len(),
        "component_sizes": components.iter().map(Vec::len).collect::<Vec<_>>(),
        "connected": components.len() == 1,
        "mle_exists": strong.len() == 1,
        "players_outside_largest_strong_component": outside,
    });
    outputs.push(match ctx.format {
        Format::Json => ctx.write_json("summary.json", &summary)?,
        Format::Csv => ctx.write("summary.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["field", "value"])?;
            for (k, v) in summary.as_object().into_iter().flatten() {
                let v = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                w.write_record([k.as_str(), &v])?;
            }
            w.flush()?;
            Ok(())
        })?,
    });
    println!(
        "{} players, {} pairs, {} matches, {} component(s)",
        d.num_players(),
        d.pairs().len(),
        d.total_matches(),
        components.len()
    );

    let mut m = RunManifest::new("ingest", data_config(data, kind), ctx.seed);
    m.inputs = input_digests(data)?;
    m.outputs = outputs;
    m.write(&ctx.out_dir)?;
    Ok(ExitCode::SUCCESS)
}

pub struct RankSettings {
    pub methods: Vec<Method>,
    pub bandwidth: Option<f64>,
    pub ties: Ties,
    pub rank_smoothing: Option<f64>,
    pub grid_points: usize,
    pub lambdas: Option<Vec<f64>>,
}

impl RankSettings {
    fn eb(&self) -> EbOptions {
        EbOptions {
            grid: GridSpec::Auto {
                points: self.grid_points,
                pad: 3.0,
            },
            bandwidth: self.bandwidth,
            ranks: RankOptions {
                ties: match self.ties {
                    Ties::Weak => TieRule::Weak,
                    Ties::Half => TieRule::Half,
                },
                smoothing: self.rank_smoothing,
            },
        }
    }
}

pub fn rank(ctx: &Context, data: &DataArgs, s: &RankSettings) -> anyhow::Result<ExitCode> {
    let (d, kind) = input::load(data)?;
    let labels = d.display_labels();
    let opts = PipelineOptions {
        eb: s.eb(),
        lambdas: s.lambdas.clone(),
        ..Default::default()
    };
    let ratings = rate(&d, &s.methods, &opts);

    let mut tables: Vec<RankingTable> = Vec::new();
    let mut failures = Vec::new();
    let mut worst = None;
    for (method, result) in &ratings.tables {
        match result {
            Ok(t) => tables.push(t.clone()),
            Err(e) => {
                eprintln!("btrank: {method} failed: {e}");
                let code = if e.is_numerical() {
                    EXIT_NUMERICAL
                } else {
                    EXIT_INPUT
                };
                worst = Some(worst.map_or(code, |w: u8| w.max(code)));
                failures.push(json!({ "method": method, "error": e.to_string() }));
            }
        }
    }

    let mut outputs = Vec::new();
    outputs.push(match ctx.format {
        Format::Csv => ctx.write("rankings.csv", |buf| {
            Ok(write_rankings_csv(buf, &labels, &tables)?)
        })?,
        Format::Json => ctx.write_json(
            "rankings.json",
            &json!({ "labels": labels, "tables": tables, "failures": failures }),
        )?,
    });
    if let Some(fit) = &ratings.fit {
        outputs.push(ctx.write("mle.json", |buf| {
            buf.extend_from_slice(fit.to_json()?.as_bytes());
            buf.push(b'\n');
            Ok(())
        })?);
        let wants_eb = s
            .methods
            .iter()
            .any(|m| matches!(m, Method::Kwpm | Method::Kwpms | Method::Kwpr));
        if wants_eb {
            match posterior_summary(fit, &opts.eb) {
                Ok(summary) => {
                    outputs.push(match ctx.format {
                        Format::Csv => {
                            ctx.write("posterior.csv", |buf| Ok(summary.write_csv(buf)?))?
                        }
                        Format::Json => ctx.write_json("posterior.json", &summary)?,
                    });
                    outputs
                        .push(ctx.write("mixing.csv", |buf| Ok(summary.mixing.write_csv(buf)?))?);
                }
                Err(e) => log::warn!("posterior summary unavailable: {e}"),
            }
        }
    }
    if let Some(path) = &ratings.path {
        outputs.extend(write_path(ctx, &labels, path, "rmle_")?);
    }

    for t in &tables {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| t.ranks[a].total_cmp(&t.ranks[b]));
        let top: Vec<&str> = order.iter().take(5).map(|&k| labels[k].as_str()).collect();
        println!("{:>5}: {}", t.method.as_str(), top.join(", "));
    }

    let config = json!({
        "data": data_config(data, kind),
        "methods": s.methods,
        "bandwidth": s.bandwidth,
        "ties": s.ties,
        "rank_smoothing": s.rank_smoothing,
        "grid_points": s.grid_points,
        "lambdas": s.lambdas,
        "format": ctx.format,
        "rating_scale": "log-ability, player 0 anchored at 0",
    });
    let mut m = RunManifest::new("rank", config, ctx.seed);
    m.inputs = input_digests(data)?;
    m.outputs = outputs;
    m.write(&ctx.out_dir)?;
    Ok(worst.map_or(ExitCode::SUCCESS, ExitCode::from))
}

fn write_path(
    ctx: &Context,
    labels: &[String],
    path: &LassoPath,
    prefix: &str,
) -> anyhow::Result<Vec<String>> {
    Ok(match ctx.format {
        Format::Csv => vec![
            ctx.write(&format!("{prefix}path.csv"), |buf| {
                Ok(write_path_csv(buf, labels, path)?)
            })?,
            ctx.write(&format!("{prefix}path_summary.csv"), |buf| {
                Ok(write_path_summary_csv(buf, path)?)
            })?,
        ],
        Format::Json => {
            let chosen = select_lambda(path)?.lambda;
            vec![ctx.write_json(
                &format!("{prefix}path.json"),
                &json!({ "labels": labels, "selected_lambda": chosen, "path": path }),
            )?]
        }
    })
}

pub fn path(ctx: &Context, data: &DataArgs, lambdas: Option<Vec<f64>>) -> anyhow::Result<ExitCode> {
    let (d, kind) = input::load(data)?;
    let labels = d.display_labels();
    let grid = lambdas.clone().unwrap_or_else(|| default_lambda_grid(&d));
    let path = solve_path(&d, &grid, &Default::default())?;
    let chosen = select_lambda(&path)?;
    println!(
        "{} penalties; BIC selects lambda = {} with {} group(s)",
        path.solutions.len(),
        chosen.lambda,
        chosen.k
    );
    if !path.merge_violations.is_empty() {
        log::warn!(
            "group count increased along the path at {} penalties",
            path.merge_violations.len()
        );
    }
    let outputs = write_path(ctx, &labels, &path, "")?;
    let config = json!({
        "data": data_config(data, kind),
        "lambdas": lambdas,
        "format": ctx.format,
        "penalty_scale": "log-ability differences over all pairs",
    });
    let mut m = RunManifest::new("path", config, ctx.seed);
    m.inputs = input_digests(data)?;
    m.outputs = outputs;
    m.write(&ctx.out_dir)?;
    Ok(ExitCode::SUCCESS)
}

fn load_config(file: Option<&Path>, preset: Option<&str>) -> anyhow::Result<SimConfig> {
    match (file, preset) {
        (Some(f), _) => {
            let text =
                std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| btrank::Error::InvalidInput(e.to_string()))
                .with_context(|| format!("parsing {}", f.display()))?;
            let unknown: Vec<&str> = table
                .keys()
                .map(String::as_str)
                .filter(|k| !SimConfig::KEYS.contains(k))
                .collect();
            if !unknown.is_empty() {
                anyhow::bail!(btrank::Error::InvalidInput(format!(
                    "{}: unknown config keys: {}; expected any of {}",
                    f.display(),
                    unknown.join(", "),
                    SimConfig::KEYS.join(", ")
                )));
            }
            table
                .try_into()
                .map_err(|e: toml::de::Error| btrank::Error::InvalidInput(e.to_string()))
                .with_context(|| format!("parsing {}", f.display()))
        }
        (None, Some(p)) => Ok(SimConfig::preset(p)?),
        (None, None) => anyhow::bail!("either --config or --preset is required"),
    }
}

fn write_sim(ctx: &Context, r: &SimResult) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    let has_failures = r.records.iter().any(|x| !x.status.usable());
    match ctx.format {
        Format::Csv => {
            out.push(ctx.write("results.csv", |b| Ok(r.write_results_csv(b)?))?);
            out.push(ctx.write("summary.csv", |b| Ok(r.write_summary_csv(b)?))?);
            if has_failures {
                out.push(ctx.write("failures.csv", |b| Ok(r.write_failures_csv(b)?))?);
            }
        }
        Format::Json => {
            let records: Vec<_> = r
                .records
                .iter()
                .map(|x| {
                    json!({
                        "law": x.law, "design": x.design.as_str(), "n": x.n, "method": x.method,
                        "replication": x.replication, "tau": x.status.usable().then_some(x.tau),
                        "status": x.status, "error": x.error, "stream_seed": x.stream_seed,
                    })
                })
                .collect();
            let summary: Vec<_> = r
                .summary()
                .iter()
                .map(|s| {
                    json!({
                        "law": s.law, "design": s.design.as_str(), "n": s.n, "method": s.method,
                        "mean_tau": s.mean_tau.is_finite().then_some(s.mean_tau),
                        "se_tau": s.se_tau.is_finite().then_some(s.se_tau), "n_ok": s.n_ok,
                    })
                })
                .collect();
            out.push(ctx.write_json("results.json", &records)?);
            out.push(ctx.write_json("summary.json", &summary)?);
        }
    }
    Ok(out)
}

pub fn simulate(
    ctx: &Context,
    file: Option<&Path>,
    preset: Option<&str>,
    replications: Option<usize>,
) -> anyhow::Result<ExitCode> {
    let mut config = load_config(file, preset)?;
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    if let Some(r) = replications {
        config.replications = r;
    }
    config.validate()?;
    let result = run_grid(&config, &PipelineOptions::default())?;
    let outputs = write_sim(ctx, &result)?;

    for s in result.summary() {
        println!(
            "{:>9} {} n={:<6} {:>5}  mean tau {:>7.4}  ({} ok)",
            s.law.as_str(),
            s.design,
            s.n,
            s.method.as_str(),
            s.mean_tau,
            s.n_ok
        );
    }

    let mut m = RunManifest::new(
        "simulate",
        serde_json::to_value(&config)?,
        Some(config.seed),
    );
    if let Some(f) = file {
        m.inputs.push(digest_file(f)?);
    }
    m.outputs = outputs;
    m.write(&ctx.out_dir)?;

    let dead = result.failed_cells();
    if dead.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for c in &dead {
            eprintln!(
                "btrank: every replication failed in cell {} {} n={}",
                c.law, c.design, c.n
            );
        }
        Ok(ExitCode::from(EXIT_NUMERICAL))
    }
}

pub fn fixture(ctx: &Context, journals: usize) -> anyhow::Result<ExitCode> {
    let seed = ctx.seed.unwrap_or(86);
    let m = synthetic_citations(journals, seed)?;
    let outputs = vec![ctx.write("citations.csv", |buf| Ok(write_citation_csv(buf, &m)?))?];
    println!(
        "{journals} journals written to {}",
        ctx.out_dir.join("citations.csv").display()
    );
    let mut manifest = RunManifest::new("fixture", json!({ "journals": journals }), Some(seed));
    manifest.outputs = outputs;
    manifest.write(&ctx.out_dir)?;
    Ok(ExitCode::SUCCESS)
}
