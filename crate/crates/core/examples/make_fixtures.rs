//! Regenerates the files under `fixtures/`.
//!
//! ```text
//! cargo run -p token-netlab-core --example make_fixtures -- fixtures
//! ```
//!
//! Every file is a pure function of the seeds below, so rerunning this
//! reproduces the committed fixtures byte for byte.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use netlab::ingest::{write_price_series, write_transfers, PricePoint, PriceSeries, TransferRecord, ZERO_ADDRESS};
use netlab::lppl::{lppl_value, LpplParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONTRACT: &str = "0xb47e3cd837ddf8e4c57f05d70ab865de6e193bbb";

fn address(i: usize) -> String {
    format!("0x{:040x}", 0xa11ce000_0000u64 + i as u64)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn record(i: usize, ts: DateTime<Utc>, from: &str, to: &str, token: usize, usd: Option<f64>) -> TransferRecord {
    TransferRecord {
        tx_hash: format!("0x{:064x}", 0x7000_0000u64 + i as u64),
        timestamp: ts,
        contract_address: CONTRACT.to_string(),
        from_address: from.to_string(),
        to_address: to.to_string(),
        token_id: token.to_string(),
        price_crypto: usd.map(|u| (u / 2000.0 * 1e6).round() / 1e6),
        crypto_symbol: usd.map(|_| "ETH".to_string()),
        price_usd: usd,
        collection: "synthpunks".to_string(),
        category: Some("art".to_string()),
    }
}

fn save_transfers(path: &Path, records: &[TransferRecord]) {
    write_transfers(records, BufWriter::new(File::create(path).unwrap())).unwrap();
}

fn save_prices(path: &Path, series: &PriceSeries) {
    write_price_series(series, BufWriter::new(File::create(path).unwrap())).unwrap();
}

/// A handful of mints and resales among five wallets.
fn mini() -> Vec<TransferRecord> {
    let t0 = Utc.with_ymd_and_hms(2021, 5, 1, 12, 0, 0).unwrap();
    let a = |i| address(i);
    let steps: [(String, String, usize, Option<f64>); 10] = [
        (ZERO_ADDRESS.into(), a(1), 1, None),
        (ZERO_ADDRESS.into(), a(2), 2, None),
        (ZERO_ADDRESS.into(), a(3), 3, None),
        (a(1), a(2), 1, Some(1200.0)),
        (a(2), a(3), 2, Some(950.5)),
        (a(3), a(1), 3, Some(780.0)),
        (a(2), a(4), 1, Some(1500.0)),
        (a(4), a(5), 1, Some(2100.0)),
        (a(1), a(5), 3, None),
        (a(5), a(1), 1, Some(2600.25)),
    ];
    steps
        .iter()
        .enumerate()
        .map(|(i, (f, t, tok, usd))| record(i, t0 + Duration::hours(7 * i as i64), f, t, *tok, *usd))
        .collect()
}

fn two_cycle() -> Vec<TransferRecord> {
    let t0 = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
    vec![
        record(0, t0, &address(1), &address(2), 7, Some(100.0)),
        record(1, t0 + Duration::days(1), &address(2), &address(1), 7, Some(110.0)),
    ]
}

/// About 5,000 ownership-consistent transfers over three years: mints, a busy
/// core of frequent traders, a long tail of occasional buyers and a few burns.
fn market(rows: usize, seed: u64) -> Vec<TransferRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wallets = 900;
    let core = 40;
    let start = Utc.with_ymd_and_hms(2019, 3, 1, 0, 0, 0).unwrap();
    let span = (Utc.with_ymd_and_hms(2022, 2, 28, 0, 0, 0).unwrap() - start).num_seconds();
    let mut offsets: Vec<i64> = (0..rows).map(|_| rng.random_range(0..span)).collect();
    offsets.sort_unstable();

    // Tail buyers are drawn with weight 1/(i+1), so a few appear often.
    let weights: Vec<f64> = (0..wallets).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let tail = |rng: &mut ChaCha8Rng| {
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
        wallets - 1
    };

    let mut owner: Vec<Option<usize>> = Vec::new();
    let mut out = Vec::with_capacity(rows);
    for (i, &offset) in offsets.iter().enumerate() {
        let ts = start + Duration::seconds(offset);
        let progress = i as f64 / rows as f64;
        let price = cents(40.0 * (4.0 * progress).exp() * (0.35 * gauss(&mut rng)).exp());
        let usd = (rng.random::<f64>() > 0.06).then_some(price);
        let live: Vec<usize> = (0..owner.len()).filter(|&t| owner[t].is_some()).collect();

        let roll: f64 = rng.random();
        if live.len() < 20 || roll < 0.12 {
            let buyer = if rng.random::<f64>() < 0.5 { rng.random_range(0..core) } else { tail(&mut rng) };
            owner.push(Some(buyer));
            out.push(record(i, ts, ZERO_ADDRESS, &address(buyer), owner.len() - 1, None));
        } else if roll < 0.135 {
            let token = live[rng.random_range(0..live.len())];
            let seller = owner[token].take().unwrap();
            out.push(record(i, ts, &address(seller), ZERO_ADDRESS, token, None));
        } else {
            let token = live[rng.random_range(0..live.len())];
            let seller = owner[token].unwrap();
            let mut buyer = seller;
            while buyer == seller {
                buyer = if rng.random::<f64>() < 0.6 { rng.random_range(0..core) } else { tail(&mut rng) };
            }
            owner[token] = Some(buyer);
            out.push(record(i, ts, &address(seller), &address(buyer), token, usd));
        }
    }
    out
}

/// Daily prices following an LPPL bubble whose critical time lies just after
/// the last day, with 1% multiplicative noise.
fn bubble_prices(seed: u64) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2019, 8, 1).unwrap();
    let days = 310;
    let params = LpplParams { a: 9.0, b: 0.35, c: 0.05, m: 0.5, omega: 8.0, phi: 1.0, tc: days as f64 + 15.0 };
    let points = (1..=days)
        .map(|t| PricePoint {
            date: start + Duration::days(t as i64 - 1),
            avg_price_usd: cents((lppl_value(&params, t as f64).unwrap() + 0.01 * gauss(&mut rng)).exp()),
        })
        .collect();
    PriceSeries::new("synthetic-bubble", points).unwrap()
}

/// Weekly average prices: a slow drift, then a faster run-up.
fn weekly_prices(seed: u64) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2021, 1, 3).unwrap();
    let mut log_price = 6.5;
    let points = (0..27)
        .map(|w| {
            log_price += if w < 15 { 0.02 } else { 0.09 } + 0.04 * gauss(&mut rng);
            PricePoint { date: start + Duration::weeks(w), avg_price_usd: cents(log_price.exp()) }
        })
        .collect();
    PriceSeries::new("synthpunks", points).unwrap()
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).unwrap();
    save_transfers(&dir.join("mini.csv"), &mini());
    save_transfers(&dir.join("two_cycle.csv"), &two_cycle());
    save_transfers(&dir.join("transfers_5k.csv"), &market(5000, 42));
    save_prices(&dir.join("synthetic_bubble.csv"), &bubble_prices(7));
    save_prices(&dir.join("weekly_prices.csv"), &weekly_prices(3));
}
