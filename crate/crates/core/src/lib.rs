//! Token-transfer network analytics and log-periodic power law bubble detection.
//!
//! The crate is organised as a batch pipeline:
//!
//! - [`ingest`] parses transfer and price CSV files into validated records.
//! - [`graph`] builds the immutable multi-edge trade graph and ownership/volume tables.
//! - [`metrics`] computes reciprocity, assortativity, components, k-cores and
//!   degree/ownership distributions with a log-log Zipf fit.
//! - [`influence`] ranks wallets with ArticleRank and detects communities.
//! - [`lppl`] calibrates the LPPL model on shrinking windows and derives bubble indicators.
//! - [`report`] assembles the self-describing analysis report and plot-ready series.

pub mod graph;
pub mod influence;
pub mod ingest;
pub mod lppl;
pub mod metrics;
pub mod report;

pub use graph::{Direction, NodeId, TradeGraph};
pub use ingest::{PricePoint, PriceSeries, TransferRecord};
