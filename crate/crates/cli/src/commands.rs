use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use netlab::graph::{build_graph, ownership_table};
use netlab::influence::detect_communities;
use netlab::ingest::{parse_price_series, parse_transfers, ParsedTransfers, PriceSeries};
use netlab::lppl::{window_fits, DailySeries, LpplError, LpplFit};
use netlab::metrics::{rank_frequency, semantics_bundle, zipf_fit, MetricsError};
use netlab::report::{self, OutputFormat, ReportError, RunConfig};
use netlab::TradeGraph;
use serde::Serialize;

use crate::config;
use crate::{Cli, CliResult, Command, Failure};

pub fn run(cli: Cli) -> CliResult {
    let mut cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Validate { input, prices } => {
            config::apply_transfers(&mut cfg, &input);
            if prices.is_some() {
                cfg.prices = prices;
            }
            validate(&cfg)
        }
        Command::GraphStats { input, output, kcore_k, snapshot } => {
            config::apply_transfers(&mut cfg, &input);
            config::apply_output(&mut cfg, &output);
            if let Some(k) = kcore_k {
                cfg.kcore_k = k;
            }
            config::validate(&cfg)?;
            graph_stats(&cfg, snapshot.as_deref())
        }
        Command::Ownership { input, output, zipf_cutoff } => {
            config::apply_transfers(&mut cfg, &input);
            config::apply_output(&mut cfg, &output);
            if let Some(c) = zipf_cutoff {
                cfg.zipf_cutoff = c;
            }
            ownership(&cfg)
        }
        Command::Influencers { input, output, damping, top } => {
            config::apply_transfers(&mut cfg, &input);
            config::apply_output(&mut cfg, &output);
            if let Some(d) = damping {
                cfg.article_rank.damping = d;
            }
            config::validate(&cfg)?;
            influencers(&cfg, top)
        }
        Command::Communities { input, output, seed } => {
            config::apply_transfers(&mut cfg, &input);
            config::apply_output(&mut cfg, &output);
            if let Some(s) = seed {
                cfg.seed = s;
            }
            communities(&cfg)
        }
        Command::LpplFit { prices, output } => {
            config::apply_prices(&mut cfg, &prices);
            config::apply_output(&mut cfg, &output);
            config::validate(&cfg)?;
            lppl_fit(&cfg)
        }
        Command::BubbleScan { prices, output } => {
            config::apply_prices(&mut cfg, &prices);
            config::apply_output(&mut cfg, &output);
            config::validate(&cfg)?;
            bubble_scan(&cfg)
        }
        Command::Report { input, prices, output, zipf_cutoff, kcore_k, damping, seed, top } => {
            config::apply_transfers(&mut cfg, &input);
            config::apply_prices(&mut cfg, &prices);
            config::apply_output(&mut cfg, &output);
            if let Some(c) = zipf_cutoff {
                cfg.zipf_cutoff = c;
            }
            if let Some(k) = kcore_k {
                cfg.kcore_k = k;
            }
            if let Some(d) = damping {
                cfg.article_rank.damping = d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = top {
                cfg.top_k = t;
            }
            config::validate(&cfg)?;
            full_report(&cfg)
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| Failure::Usage(format!("{flag} is required (flag or config file)")))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn read_transfers(cfg: &RunConfig) -> CliResult<ParsedTransfers> {
    let path = required(&cfg.transfers, "--transfers")?;
    let parsed = parse_transfers(open(path)?, cfg.strict).with_context(|| format!("{}", path.display()))?;
    if !parsed.rejected.is_empty() {
        eprintln!("warning: {}: {} rows rejected", path.display(), parsed.rejected.len());
    }
    Ok(parsed)
}

fn read_prices(cfg: &RunConfig) -> CliResult<PriceSeries> {
    let path = required(&cfg.prices, "--prices")?;
    Ok(parse_price_series(open(path)?).with_context(|| format!("{}", path.display()))?)
}

fn graph_of(cfg: &RunConfig, parsed: &ParsedTransfers) -> CliResult<TradeGraph> {
    Ok(build_graph(&parsed.records, cfg.include_mint_burn).context("cannot build trade graph")?)
}

fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}

/// Writes one artifact: `<out>/<stem>.<ext>` when an output directory is set,
/// stdout otherwise.
fn emit(
    cfg: &RunConfig,
    stem: &str,
    body: impl FnOnce(&mut dyn Write, OutputFormat) -> Result<(), ReportError>,
) -> CliResult {
    let ext = match cfg.format {
        OutputFormat::Json => "json",
        OutputFormat::Csv => "csv",
    };
    match &cfg.out {
        Some(dir) => {
            let path = dir.join(format!("{stem}.{ext}"));
            write_file(&path, |w| body(w, cfg.format))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock, cfg.format).map_err(data)?;
            lock.flush().map_err(data)
        }
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), ReportError>) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn validate(cfg: &RunConfig) -> CliResult {
    if cfg.transfers.is_none() && cfg.prices.is_none() {
        return Err(Failure::Usage("validate needs --transfers and/or --prices".into()));
    }
    if let Some(path) = &cfg.transfers {
        let parsed = parse_transfers(open(path)?, cfg.strict).with_context(|| format!("{}", path.display()))?;
        println!(
            "{}: {} rows, {} accepted, {} rejected",
            path.display(),
            parsed.rows(),
            parsed.records.len(),
            parsed.rejected.len()
        );
        for r in &parsed.rejected {
            println!("  {r}");
        }
    }
    if let Some(path) = &cfg.prices {
        let prices = read_prices(cfg)?;
        println!(
            "{}: {} price points, {} to {}",
            path.display(),
            prices.len(),
            prices.first_date(),
            prices.last_date()
        );
    }
    Ok(())
}

fn graph_stats(cfg: &RunConfig, snapshot: Option<&Path>) -> CliResult {
    let parsed = read_transfers(cfg)?;
    let graph = graph_of(cfg, &parsed)?;
    if let Some(path) = snapshot {
        write_file(path, |w| graph.write_snapshot(w).map_err(ReportError::from))?;
    }
    let semantics = semantics_bundle(&graph, cfg.kcore_k).map_err(data)?;
    emit(cfg, "graph_stats", |w, format| match format {
        OutputFormat::Json => report::write_json(&semantics, w),
        OutputFormat::Csv => {
            let value = serde_json::to_value(&semantics)?;
            let mut out = csv::Writer::from_writer(w);
            out.write_record(["metric", "value"])?;
            if let serde_json::Value::Object(map) = value {
                for (k, v) in map {
                    out.write_record([k, v.to_string()])?;
                }
            }
            out.flush()?;
            Ok(())
        }
    })
}

fn ownership(cfg: &RunConfig) -> CliResult {
    #[derive(Serialize)]
    struct Holding<'a> {
        address: &'a str,
        tokens: u64,
    }
    #[derive(Serialize)]
    struct OwnershipOut<'a> {
        holders: usize,
        tokens_held: u64,
        minted: u64,
        burned: u64,
        conflicts: usize,
        zipf_cutoff: u64,
        zipf: Option<netlab::metrics::ZipfFit>,
        holdings: Vec<Holding<'a>>,
    }

    let parsed = read_transfers(cfg)?;
    let table = ownership_table(&parsed.records);
    for c in &table.conflicts {
        eprintln!("warning: inconsistent provenance in {} (token {} from {})", c.tx_hash, c.token_id, c.from_address);
    }
    let counts: Vec<f64> = table.holdings.values().map(|&c| c as f64).collect();
    let zipf = match zipf_fit(&counts, cfg.zipf_cutoff) {
        Ok(fit) => Some(fit),
        Err(MetricsError::TooFewPoints(_)) => None,
        Err(e) => return Err(data(e)),
    };
    let mut holdings: Vec<Holding> =
        table.holdings.iter().map(|(address, &tokens)| Holding { address, tokens }).collect();
    holdings.sort_by(|a, b| b.tokens.cmp(&a.tokens).then_with(|| a.address.cmp(b.address)));
    if let Some(dir) = &cfg.out {
        let ranks = rank_frequency(&counts, u64::MAX);
        write_file(&dir.join("ownership_rank.csv"), |w| report::write_ownership_ranks(&ranks, w))?;
    }
    let out = OwnershipOut {
        holders: table.holdings.len(),
        tokens_held: table.total_held(),
        minted: table.minted,
        burned: table.burned,
        conflicts: table.conflicts.len(),
        zipf_cutoff: cfg.zipf_cutoff,
        zipf,
        holdings,
    };
    emit(cfg, "ownership", |w, format| match format {
        OutputFormat::Json => report::write_json(&out, w),
        OutputFormat::Csv => report::write_rows(&out.holdings, w),
    })
}

fn influencers(cfg: &RunConfig, top: Option<usize>) -> CliResult {
    let parsed = read_transfers(cfg)?;
    let graph = graph_of(cfg, &parsed)?;
    let (_, mut rows) = report::influencer_rows(&graph, &cfg.article_rank).map_err(data)?;
    rows.truncate(top.unwrap_or(cfg.top_k));
    emit(cfg, "influencers", |w, format| match format {
        OutputFormat::Json => report::write_json(&rows, w),
        OutputFormat::Csv => report::write_rows(&rows, w),
    })
}

fn communities(cfg: &RunConfig) -> CliResult {
    #[derive(Serialize)]
    struct Member<'a> {
        node: &'a str,
        community_id: usize,
    }
    #[derive(Serialize)]
    struct CommunitiesOut<'a> {
        seed: u64,
        count: usize,
        modularity: f64,
        sweeps: usize,
        members: Vec<Member<'a>>,
    }

    let parsed = read_transfers(cfg)?;
    let graph = graph_of(cfg, &parsed)?;
    let assignment = detect_communities(&graph, cfg.seed);
    emit(cfg, "communities", |w, format| match format {
        OutputFormat::Csv => report::write_communities(&graph, &assignment, w),
        OutputFormat::Json => {
            let out = CommunitiesOut {
                seed: cfg.seed,
                count: assignment.community_count,
                modularity: assignment.modularity,
                sweeps: assignment.sweeps,
                members: graph
                    .addresses()
                    .iter()
                    .zip(&assignment.labels)
                    .map(|(node, &community_id)| Member { node, community_id })
                    .collect(),
            };
            report::write_json(&out, w)
        }
    })
}

#[derive(Debug, Serialize)]
struct FitRow {
    t1_date: NaiveDate,
    t2_date: NaiveDate,
    days: usize,
    qualifies: bool,
    converged: bool,
    a: Option<f64>,
    b: Option<f64>,
    c: Option<f64>,
    m: Option<f64>,
    omega: Option<f64>,
    phi: Option<f64>,
    /// Critical time in days after t2.
    tc_offset_days: Option<f64>,
    sse: Option<f64>,
    p_value: Option<f64>,
    error: Option<String>,
}

fn fit_row(series: &DailySeries, t2: usize, fit: &Result<LpplFit, LpplError>) -> Option<FitRow> {
    match fit {
        Ok(f) => Some(FitRow {
            t1_date: series.date_of(f.window.t1),
            t2_date: series.date_of(f.window.t2),
            days: f.window.len(),
            qualifies: f.qualifies,
            converged: f.converged,
            a: Some(f.params.a),
            b: Some(f.params.b),
            c: Some(f.params.c),
            m: Some(f.params.m),
            omega: Some(f.params.omega),
            phi: Some(f.params.phi),
            tc_offset_days: Some(f.params.tc - t2 as f64),
            sse: Some(f.sse),
            p_value: Some(f.p_value),
            error: None,
        }),
        Err(LpplError::NoFeasibleStart { t1, t2 }) => Some(FitRow {
            t1_date: series.date_of(*t1),
            t2_date: series.date_of(*t2),
            days: t2 + 1 - t1,
            qualifies: false,
            converged: false,
            a: None,
            b: None,
            c: None,
            m: None,
            omega: None,
            phi: None,
            tc_offset_days: None,
            sse: None,
            p_value: None,
            error: Some(fit.as_ref().err()?.to_string()),
        }),
        Err(_) => None,
    }
}

fn lppl_fit(cfg: &RunConfig) -> CliResult {
    let prices = read_prices(cfg)?;
    let date = cfg.to.unwrap_or(prices.last_date());
    let series = DailySeries::resample_until(&prices, cfg.lppl.resampling, date);
    let t2 = series.index_of(date).ok_or_else(|| {
        data(anyhow!("{date} is outside the price series ({} to {})", prices.first_date(), prices.last_date()))
    })?;
    let fits = window_fits(&series, t2, &cfg.lppl).map_err(data)?;
    let mut rows = Vec::with_capacity(fits.len());
    for fit in &fits {
        match fit_row(&series, t2, fit) {
            Some(row) => rows.push(row),
            None => {
                return Err(data(
                    fit.as_ref().err().cloned().map_or_else(|| anyhow!("fit failed"), anyhow::Error::from),
                ))
            }
        }
    }
    emit(cfg, "lppl_fit", |w, format| match format {
        OutputFormat::Json => report::write_json(&rows, w),
        OutputFormat::Csv => report::write_rows(&rows, w),
    })
}

fn bubble_scan(cfg: &RunConfig) -> CliResult {
    let prices = read_prices(cfg)?;
    let (section, scan) = report::bubble_section(&prices, cfg).map_err(data)?;
    if let Some(dir) = &cfg.out {
        write_file(&dir.join("bubble_overlay.csv"), |w| report::write_bubble_overlay(&scan, w))?;
    }
    emit(cfg, "bubble_scan", |w, format| match format {
        OutputFormat::Json => report::write_json(&section, w),
        OutputFormat::Csv => report::write_bubble_scan(&scan, w),
    })
}

fn full_report(cfg: &RunConfig) -> CliResult {
    let out = cfg.out.clone().ok_or_else(|| Failure::Usage("report needs --out DIR".into()))?;
    let parsed = read_transfers(cfg)?;
    let prices = match cfg.prices {
        Some(_) => Some(read_prices(cfg)?),
        None => None,
    };
    let analysis = report::analyze(&parsed, prices.as_ref(), cfg).map_err(data)?;
    write_file(&out.join("report.json"), |w| report::write_json(&analysis.report, w))?;
    for (name, bytes) in report::plot_files(&analysis).map_err(data)? {
        write_file(&out.join(name), |w| Ok(w.write_all(&bytes)?))?;
    }
    eprintln!("wrote report to {}", out.display());
    Ok(())
}
