//! CSV ingestion for token transfers and collection price series.
//!
//! Transfer files are validated row by row: a malformed row becomes a
//! [`RejectedRow`] instead of aborting the whole file (unless strict mode is
//! requested). Price files are small and are validated as a whole.

use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Timelike, Utc};
use serde::Serialize;
use thiserror::Error;

/// The all-zero address used as the source of mints and the sink of burns.
pub const ZERO_ADDRESS: &str = "0x0000000000000000000000000000000000000000";

/// Required transfer CSV columns, in canonical output order.
pub const TRANSFER_COLUMNS: [&str; 11] = [
    "tx_hash",
    "timestamp",
    "contract_address",
    "from_address",
    "to_address",
    "token_id",
    "price_crypto",
    "crypto_symbol",
    "price_usd",
    "collection",
    "category",
];

/// Required price CSV columns.
pub const PRICE_COLUMNS: [&str; 2] = ["date", "avg_price_usd"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("{0}")]
    Rejected(RejectedRow),
    #[error("row {row}: non-positive price {price}")]
    NonPositivePrice { row: usize, price: f64 },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("price series needs at least two points, found {0}")]
    EmptySeries(usize),
    #[error("row {row}: {reason}")]
    BadPriceRow { row: usize, reason: String },
}

impl From<csv::Error> for IngestError {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(io) => IngestError::Io(io),
                other => IngestError::Csv(format!("{other:?}")),
            }
        } else {
            IngestError::Csv(err.to_string())
        }
    }
}

/// Classification of an address with respect to the mint/burn convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AddressClass {
    MintBurn,
    Ordinary,
}

/// Classifies an address. Case and surrounding whitespace are ignored, and any
/// all-zero hex body (`0x0`, `0x000`, full width) counts as the zero address.
pub fn classify_address(address: &str) -> AddressClass {
    let lower = address.trim().to_ascii_lowercase();
    let body = lower.strip_prefix("0x").unwrap_or(&lower);
    if !body.is_empty() && body.bytes().all(|b| b == b'0') {
        AddressClass::MintBurn
    } else {
        AddressClass::Ordinary
    }
}

/// Lowercases an address and checks it is `0x` followed by 40 hex digits.
pub fn normalize_address(raw: &str) -> Option<String> {
    let trimmed = raw.trim();
    let body = trimmed.strip_prefix("0x").or_else(|| trimmed.strip_prefix("0X"))?;
    if body.len() != 40 || !body.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    Some(format!("0x{}", body.to_ascii_lowercase()))
}

/// One validated token transfer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferRecord {
    pub tx_hash: String,
    pub timestamp: DateTime<Utc>,
    pub contract_address: String,
    pub from_address: String,
    pub to_address: String,
    pub token_id: String,
    pub price_crypto: Option<f64>,
    pub crypto_symbol: Option<String>,
    pub price_usd: Option<f64>,
    pub collection: String,
    pub category: Option<String>,
}

impl TransferRecord {
    pub fn is_mint(&self) -> bool {
        classify_address(&self.from_address) == AddressClass::MintBurn
    }

    pub fn is_burn(&self) -> bool {
        classify_address(&self.to_address) == AddressClass::MintBurn
    }

    pub fn touches_mint_burn(&self) -> bool {
        self.is_mint() || self.is_burn()
    }
}

/// Why a transfer row was not accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    BadTimestamp,
    BadAddress(&'static str),
    SelfTransfer,
    BadPrice(&'static str),
    MissingField(&'static str),
    InvalidUtf8,
    Malformed(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::BadTimestamp => f.write_str("bad timestamp"),
            RejectReason::BadAddress(col) => write!(f, "bad address in {col}"),
            RejectReason::SelfTransfer => f.write_str("self-transfer"),
            RejectReason::BadPrice(col) => write!(f, "bad price in {col}"),
            RejectReason::MissingField(col) => write!(f, "missing {col}"),
            RejectReason::InvalidUtf8 => f.write_str("invalid utf-8"),
            RejectReason::Malformed(msg) => write!(f, "malformed row: {msg}"),
        }
    }
}

/// A data row that failed validation. `row` is 1-based and excludes the header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: RejectReason,
}

impl fmt::Display for RejectedRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ row {}", self.reason, self.row)
    }
}

/// Parses an ISO-8601 timestamp, truncated to whole seconds.
///
/// Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS` or `YYYY-MM-DDTHH:MM:SS` (optionally
/// suffixed with ` UTC`, interpreted as UTC) and a bare `YYYY-MM-DD` (midnight).
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    let parsed = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.with_timezone(&Utc)
    } else {
        let s = s.strip_suffix(" UTC").unwrap_or(s);
        let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f")
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f"))
            .ok()
            .or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))?;
        naive.and_utc()
    };
    parsed.with_nanosecond(0)
}

fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_price(raw: &str, column: &'static str) -> Result<Option<f64>, RejectReason> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
        _ => Err(RejectReason::BadPrice(column)),
    }
}

fn optional(raw: &str) -> Option<String> {
    let s = raw.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn column_indices<const N: usize>(headers: &csv::ByteRecord, required: [&str; N]) -> Result<[usize; N], IngestError> {
    let names: Vec<String> =
        headers.iter().map(|h| String::from_utf8_lossy(h).trim().trim_start_matches('\u{feff}').to_string()).collect();
    let mut out = [0usize; N];
    for (slot, want) in out.iter_mut().zip(required) {
        *slot = names.iter().position(|n| n == want).ok_or_else(|| IngestError::MissingColumn(want.to_string()))?;
    }
    Ok(out)
}

fn transfer_from_fields(fields: &[&str; 11]) -> Result<TransferRecord, RejectReason> {
    let [tx_hash, timestamp, contract, from, to, token_id, price_crypto, symbol, price_usd, collection, category] =
        *fields;

    let tx_hash = tx_hash.trim();
    if tx_hash.is_empty() {
        return Err(RejectReason::MissingField("tx_hash"));
    }
    let token_id = token_id.trim();
    if token_id.is_empty() {
        return Err(RejectReason::MissingField("token_id"));
    }
    let timestamp = parse_timestamp(timestamp).ok_or(RejectReason::BadTimestamp)?;
    let contract_address = normalize_address(contract).ok_or(RejectReason::BadAddress("contract_address"))?;
    let from_address = normalize_address(from).ok_or(RejectReason::BadAddress("from_address"))?;
    let to_address = normalize_address(to).ok_or(RejectReason::BadAddress("to_address"))?;
    if from_address == to_address {
        return Err(RejectReason::SelfTransfer);
    }
    let price_crypto = parse_price(price_crypto, "price_crypto")?;
    let price_usd = parse_price(price_usd, "price_usd")?;

    Ok(TransferRecord {
        tx_hash: tx_hash.to_string(),
        timestamp,
        contract_address,
        from_address,
        to_address,
        token_id: token_id.to_string(),
        price_crypto,
        crypto_symbol: optional(symbol),
        price_usd,
        collection: collection.trim().to_string(),
        category: optional(category),
    })
}

/// Result of parsing a transfer file.
#[derive(Debug, Default, Clone)]
pub struct ParsedTransfers {
    pub records: Vec<TransferRecord>,
    pub rejected: Vec<RejectedRow>,
}

impl ParsedTransfers {
    /// Number of data rows seen.
    pub fn rows(&self) -> usize {
        self.records.len() + self.rejected.len()
    }
}

/// Parses a transfer CSV. In strict mode the first rejected row is returned as
/// [`IngestError::Rejected`].
pub fn parse_transfers<R: Read>(reader: R, strict: bool) -> Result<ParsedTransfers, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(reader);
    let headers = rdr.byte_headers()?.clone();
    let cols = column_indices(&headers, TRANSFER_COLUMNS)?;

    let mut out = ParsedTransfers::default();
    let mut record = csv::ByteRecord::new();
    let mut row = 0usize;
    loop {
        let more = match rdr.read_byte_record(&mut record) {
            Ok(more) => more,
            Err(err) if err.is_io_error() => return Err(err.into()),
            Err(err) => {
                row += 1;
                reject(&mut out, strict, row, RejectReason::Malformed(err.to_string()))?;
                continue;
            }
        };
        if !more {
            break;
        }
        row += 1;
        match fields_of(&record, &cols).and_then(|f| transfer_from_fields(&f)) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => reject(&mut out, strict, row, reason)?,
        }
    }
    Ok(out)
}

fn reject(out: &mut ParsedTransfers, strict: bool, row: usize, reason: RejectReason) -> Result<(), IngestError> {
    let rejected = RejectedRow { row, reason };
    if strict {
        return Err(IngestError::Rejected(rejected));
    }
    out.rejected.push(rejected);
    Ok(())
}

fn fields_of<'r>(record: &'r csv::ByteRecord, cols: &[usize; 11]) -> Result<[&'r str; 11], RejectReason> {
    let mut fields = [""; 11];
    for (i, (&col, slot)) in cols.iter().zip(fields.iter_mut()).enumerate() {
        let raw = record.get(col).ok_or(RejectReason::MissingField(TRANSFER_COLUMNS[i]))?;
        *slot = std::str::from_utf8(raw).map_err(|_| RejectReason::InvalidUtf8)?;
    }
    Ok(fields)
}

/// Writes records as a transfer CSV that [`parse_transfers`] reads back unchanged.
pub fn write_transfers<W: Write>(records: &[TransferRecord], writer: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TRANSFER_COLUMNS)?;
    let price = |p: Option<f64>| p.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        wtr.write_record([
            r.tx_hash.as_str(),
            &format_timestamp(&r.timestamp),
            &r.contract_address,
            &r.from_address,
            &r.to_address,
            &r.token_id,
            &price(r.price_crypto),
            r.crypto_symbol.as_deref().unwrap_or(""),
            &price(r.price_usd),
            &r.collection,
            r.category.as_deref().unwrap_or(""),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One observation of a collection's average price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub avg_price_usd: f64,
}

/// Date-ordered price observations for one collection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSeries {
    collection: String,
    points: Vec<PricePoint>,
}

impl PriceSeries {
    /// Sorts `points` by date and validates them.
    pub fn new(collection: impl Into<String>, mut points: Vec<PricePoint>) -> Result<Self, IngestError> {
        for (i, p) in points.iter().enumerate() {
            if !(p.avg_price_usd > 0.0 && p.avg_price_usd.is_finite()) {
                return Err(IngestError::NonPositivePrice { row: i + 1, price: p.avg_price_usd });
            }
        }
        points.sort_by_key(|p| p.date);
        if let Some(w) = points.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(IngestError::DuplicateDate(w[0].date));
        }
        if points.len() < 2 {
            return Err(IngestError::EmptySeries(points.len()));
        }
        Ok(PriceSeries { collection: collection.into(), points })
    }

    pub fn with_collection(mut self, collection: impl Into<String>) -> Self {
        self.collection = collection.into();
        self
    }

    pub fn collection(&self) -> &str {
        &self.collection
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.points[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.points[self.points.len() - 1].date
    }
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().or_else(|| parse_timestamp(s).map(|ts| ts.date_naive()))
}

/// Parses a `date,avg_price_usd` CSV into a sorted [`PriceSeries`].
///
/// An optional `collection` column names the series (first non-empty value wins).
pub fn parse_price_series<R: Read>(reader: R) -> Result<PriceSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.byte_headers()?.clone();
    let [date_col, price_col] = column_indices(&headers, PRICE_COLUMNS)?;
    let collection_col = column_indices(&headers, ["collection"]).ok().map(|[c]| c);

    let mut collection = String::new();
    let mut points = Vec::new();
    for (i, rec) in rdr.byte_records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |col: usize, name: &str| -> Result<&str, IngestError> {
            let raw =
                rec.get(col).ok_or_else(|| IngestError::BadPriceRow { row, reason: format!("missing {name}") })?;
            std::str::from_utf8(raw).map_err(|_| IngestError::BadPriceRow { row, reason: "invalid utf-8".into() })
        };
        let date_raw = field(date_col, "date")?;
        let date = parse_date(date_raw)
            .ok_or_else(|| IngestError::BadPriceRow { row, reason: format!("bad date `{}`", date_raw.trim()) })?;
        let price_raw = field(price_col, "avg_price_usd")?;
        let price: f64 = price_raw
            .trim()
            .parse()
            .map_err(|_| IngestError::BadPriceRow { row, reason: format!("bad price `{}`", price_raw.trim()) })?;
        if !(price > 0.0 && price.is_finite()) {
            return Err(IngestError::NonPositivePrice { row, price });
        }
        if collection.is_empty() {
            if let Some(c) = collection_col {
                collection = field(c, "collection")?.trim().to_string();
            }
        }
        points.push(PricePoint { date, avg_price_usd: price });
    }
    PriceSeries::new(collection, points)
}

/// Writes a price series in the format [`parse_price_series`] reads.
pub fn write_price_series<W: Write>(series: &PriceSeries, writer: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(PRICE_COLUMNS)?;
    for p in series.points() {
        wtr.write_record([p.date.to_string(), p.avg_price_usd.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
