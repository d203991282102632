//! Run configuration, the aggregate analysis report and plain-text plot data.
//!
//! Everything here is deterministic: the same input, configuration and seed
//! give byte-identical JSON and CSV output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    build_graph, daily_sales, ownership_table, trader_volume, yearly_summary, DailySales, GraphError, TradeGraph,
    YearSummary,
};
use crate::influence::{
    article_rank, detect_communities, top_influencers, ArticleRankConfig, CommunityAssignment, InfluenceError,
};
use crate::ingest::{ParsedTransfers, PriceSeries};
use crate::lppl::{scan_prices, DatedIndicator, LpplConfig, LpplError};
use crate::metrics::{
    degree_distribution, rank_frequency, semantics_bundle, zipf_fit, MetricsError, NetworkSemantics, ZipfFit,
};
use crate::Direction;

pub const TOOL_NAME: &str = "token-netlab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error(transparent)]
    Lppl(#[from] LpplError),
    #[error("price series from {first} to {last} is too short for a {span}-day window")]
    PricesTooShort { first: NaiveDate, last: NaiveDate, span: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown format {other:?} (expected json or csv)")),
        }
    }
}

/// Every knob of a run. Reports echo it in full, defaults included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub transfers: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    /// Where artifacts go; not echoed, so reports do not depend on it.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub strict: bool,
    pub include_mint_burn: bool,
    /// Holdings above this many tokens are left out of the Zipf fit.
    pub zipf_cutoff: u64,
    pub kcore_k: usize,
    /// Rows in the top-degree and top-influencer tables.
    pub top_k: usize,
    pub seed: u64,
    /// First and last bubble-scan day; default to the whole usable price range.
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub article_rank: ArticleRankConfig,
    pub lppl: LpplConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            transfers: None,
            prices: None,
            out: None,
            format: OutputFormat::Json,
            strict: false,
            include_mint_burn: false,
            zipf_cutoff: 1500,
            kcore_k: 10,
            top_k: 20,
            seed: 0,
            from: None,
            to: None,
            article_rank: ArticleRankConfig::default(),
            lppl: LpplConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub rows: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub price_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OwnershipSummary {
    pub holders: usize,
    pub tokens_held: u64,
    pub minted: u64,
    pub burned: u64,
    pub conflicts: usize,
    pub max_holding: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub address: String,
    pub degree: usize,
}

/// ArticleRank score joined with the address's trading activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluencerRow {
    pub address: String,
    pub score: f64,
    pub bought_count: u64,
    pub sold_count: u64,
    pub bought_volume_usd: Option<f64>,
    pub sold_volume_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    pub iterations: usize,
    pub converged: bool,
    pub mean_out_degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunitySummary {
    pub count: usize,
    pub modularity: f64,
    pub sweeps: usize,
    /// Sizes of the largest communities, descending.
    pub largest: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleRow {
    pub t2_date: NaiveDate,
    pub positive: f64,
    pub negative: f64,
    pub fits_qualified: usize,
}

impl From<&DatedIndicator> for BubbleRow {
    fn from(d: &DatedIndicator) -> Self {
        BubbleRow {
            t2_date: d.date,
            positive: d.indicator.positive,
            negative: d.indicator.negative,
            fits_qualified: d.indicator.fits_qualified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleScanSection {
    pub collection: String,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub fits_per_day: usize,
    pub rows: Vec<BubbleRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub input: InputSummary,
    pub yearly_summary: Vec<YearSummary>,
    pub ownership: OwnershipSummary,
    pub semantics: NetworkSemantics,
    /// Absent when fewer than three holdings fall under the cutoff.
    pub zipf: Option<ZipfFit>,
    pub top_degree: Vec<DegreeRow>,
    pub article_rank: RankSummary,
    pub top_influencers: Vec<InfluencerRow>,
    pub communities: CommunitySummary,
    pub bubble_scan: Option<BubbleScanSection>,
}

/// A finished run: the report plus the full series behind its tables.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub graph: TradeGraph,
    pub degree_histogram: BTreeMap<usize, usize>,
    pub daily_sales: Vec<DailySales>,
    pub ownership_ranks: Vec<(usize, f64)>,
    pub influencers: Vec<InfluencerRow>,
    pub communities: CommunityAssignment,
    pub bubble: Option<Vec<DatedIndicator>>,
}

/// Influencer rows for every node, highest score first.
pub fn influencer_rows(
    graph: &TradeGraph,
    config: &ArticleRankConfig,
) -> Result<(RankSummary, Vec<InfluencerRow>), ReportError> {
    let scores = article_rank(graph, config)?;
    let volume = trader_volume(graph);
    let rows = top_influencers(graph, &scores, graph.node_count())
        .into_iter()
        .map(|(address, score)| {
            let v = graph.node_id(&address).map(|id| volume[id.index()].clone()).unwrap_or_default();
            InfluencerRow {
                address,
                score,
                bought_count: v.bought_count,
                sold_count: v.sold_count,
                bought_volume_usd: v.bought_volume_usd,
                sold_volume_usd: v.sold_volume_usd,
            }
        })
        .collect();
    let summary = RankSummary {
        iterations: scores.iterations,
        converged: scores.converged,
        mean_out_degree: scores.mean_out_degree,
    };
    Ok((summary, rows))
}

/// The scan range used when the configuration leaves it open: from the first
/// day with a full window to the last price date.
pub fn default_scan_range(prices: &PriceSeries, config: &LpplConfig) -> Result<(NaiveDate, NaiveDate), ReportError> {
    let first = prices.first_date();
    let last = prices.last_date();
    let too_short = || ReportError::PricesTooShort { first, last, span: config.initial_span };
    let offset = u64::try_from(config.initial_span.saturating_sub(1)).map_err(|_| too_short())?;
    let from = first.checked_add_days(Days::new(offset)).ok_or_else(too_short)?;
    if from > last {
        return Err(too_short());
    }
    Ok((from, last))
}

pub fn bubble_section(
    prices: &PriceSeries,
    config: &RunConfig,
) -> Result<(BubbleScanSection, Vec<DatedIndicator>), ReportError> {
    let (default_from, default_to) = match (config.from, config.to) {
        (Some(f), Some(t)) => (f, t),
        _ => default_scan_range(prices, &config.lppl)?,
    };
    let from = config.from.unwrap_or(default_from);
    let to = config.to.unwrap_or(default_to);
    let scan = scan_prices(prices, from, to, &config.lppl)?;
    let section = BubbleScanSection {
        collection: prices.collection().to_string(),
        from,
        to,
        fits_per_day: scan.first().map_or(0, |d| d.indicator.fits_attempted),
        rows: scan.iter().map(BubbleRow::from).collect(),
    };
    Ok((section, scan))
}

/// Runs the whole pipeline on parsed transfers and an optional price series.
pub fn analyze(
    parsed: &ParsedTransfers,
    prices: Option<&PriceSeries>,
    config: &RunConfig,
) -> Result<Analysis, ReportError> {
    config.article_rank.validate()?;
    config.lppl.validate()?;
    let records = &parsed.records;
    let graph = build_graph(records, config.include_mint_burn)?;

    let ownership = ownership_table(records);
    let holdings: Vec<f64> = ownership.holdings.values().map(|&c| c as f64).collect();
    let zipf = match zipf_fit(&holdings, config.zipf_cutoff) {
        Ok(fit) => Some(fit),
        Err(MetricsError::TooFewPoints(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let ownership_summary = OwnershipSummary {
        holders: ownership.holdings.len(),
        tokens_held: ownership.total_held(),
        minted: ownership.minted,
        burned: ownership.burned,
        conflicts: ownership.conflicts.len(),
        max_holding: ownership.holdings.values().copied().max().unwrap_or(0),
    };

    let semantics = semantics_bundle(&graph, config.kcore_k)?;
    let (rank_summary, influencers) = influencer_rows(&graph, &config.article_rank)?;
    let communities = detect_communities(&graph, config.seed);
    let mut largest = communities.sizes();
    largest.sort_unstable_by(|a, b| b.cmp(a));
    largest.truncate(config.top_k);

    let (bubble_scan, bubble) = match prices {
        Some(p) => {
            let (section, scan) = bubble_section(p, config)?;
            (Some(section), Some(scan))
        }
        None => (None, None),
    };

    let report = AnalysisReport {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        config: config.clone(),
        input: InputSummary {
            rows: parsed.rows(),
            accepted: parsed.records.len(),
            rejected: parsed.rejected.len(),
            price_points: prices.map(PriceSeries::len),
        },
        yearly_summary: yearly_summary(records),
        ownership: ownership_summary,
        semantics,
        zipf,
        top_degree: graph
            .top_degree_nodes(config.top_k)
            .into_iter()
            .map(|(address, degree)| DegreeRow { address, degree })
            .collect(),
        article_rank: rank_summary,
        top_influencers: influencers.iter().take(config.top_k).cloned().collect(),
        communities: CommunitySummary {
            count: communities.community_count,
            modularity: communities.modularity,
            sweeps: communities.sweeps,
            largest,
        },
        bubble_scan,
    };

    Ok(Analysis {
        report,
        degree_histogram: degree_distribution(&graph, Direction::Total),
        daily_sales: daily_sales(records),
        ownership_ranks: rank_frequency(&holdings, u64::MAX),
        influencers,
        communities,
        bubble,
        graph,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// One CSV row per item, header taken from the item's field names.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

fn write_pairs<K: Serialize, V: Serialize, W: Write>(
    header: [&str; 2],
    rows: impl IntoIterator<Item = (K, V)>,
    w: W,
) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// `degree,count` rows; the counts sum to the number of nodes.
pub fn write_degree_histogram<W: Write>(hist: &BTreeMap<usize, usize>, w: W) -> Result<(), ReportError> {
    write_pairs(["degree", "count"], hist.iter(), w)
}

/// `rank,tokens` rows of the ownership rank-frequency curve.
pub fn write_ownership_ranks<W: Write>(ranks: &[(usize, f64)], w: W) -> Result<(), ReportError> {
    write_pairs(["rank", "tokens"], ranks.iter().copied(), w)
}

/// `date,sales,volume_usd`, one row per calendar day.
pub fn write_daily_sales<W: Write>(days: &[DailySales], w: W) -> Result<(), ReportError> {
    write_rows(days, w)
}

/// `node,community_id` with nodes in id order.
pub fn write_communities<W: Write>(
    graph: &TradeGraph,
    communities: &CommunityAssignment,
    w: W,
) -> Result<(), ReportError> {
    write_pairs(["node", "community_id"], graph.addresses().iter().zip(&communities.labels), w)
}

/// `t2_date,positive,negative,fits_qualified`.
pub fn write_bubble_scan<W: Write>(scan: &[DatedIndicator], w: W) -> Result<(), ReportError> {
    let rows: Vec<BubbleRow> = scan.iter().map(BubbleRow::from).collect();
    write_rows(&rows, w)
}

/// `date,log_price,positive,negative` on a shared date axis.
pub fn write_bubble_overlay<W: Write>(scan: &[DatedIndicator], w: W) -> Result<(), ReportError> {
    #[derive(Serialize)]
    struct Overlay {
        date: NaiveDate,
        log_price: f64,
        positive: f64,
        negative: f64,
    }
    let rows: Vec<Overlay> = scan
        .iter()
        .map(|d| Overlay {
            date: d.date,
            log_price: d.log_price,
            positive: d.indicator.positive,
            negative: d.indicator.negative,
        })
        .collect();
    write_rows(&rows, w)
}

/// The plain-text series written next to `report.json`, by file name.
pub fn plot_files(analysis: &Analysis) -> Result<Vec<(&'static str, Vec<u8>)>, ReportError> {
    let mut files = Vec::new();
    let mut buf = Vec::new();
    write_degree_histogram(&analysis.degree_histogram, &mut buf)?;
    files.push(("degree_histogram.csv", std::mem::take(&mut buf)));
    write_daily_sales(&analysis.daily_sales, &mut buf)?;
    files.push(("daily_sales.csv", std::mem::take(&mut buf)));
    write_ownership_ranks(&analysis.ownership_ranks, &mut buf)?;
    files.push(("ownership_rank.csv", std::mem::take(&mut buf)));
    write_rows(&analysis.influencers, &mut buf)?;
    files.push(("influencers.csv", std::mem::take(&mut buf)));
    write_communities(&analysis.graph, &analysis.communities, &mut buf)?;
    files.push(("communities.csv", std::mem::take(&mut buf)));
    if let Some(scan) = &analysis.bubble {
        write_bubble_scan(scan, &mut buf)?;
        files.push(("bubble_scan.csv", std::mem::take(&mut buf)));
        write_bubble_overlay(scan, &mut buf)?;
        files.push(("bubble_overlay.csv", std::mem::take(&mut buf)));
    }
    Ok(files)
}
