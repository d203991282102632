//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every reference value is computed here by
//! a deliberately naive method, independent of the library's algorithms.

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use netlab::influence::{article_rank, ArticleRankConfig};
use netlab::ingest::{PricePoint, PriceSeries};
use netlab::lppl::{
    bubble_indicator, fit_window, lppl_value, ols_linear_fit, scan_prices, shrinking_windows, DailySeries, LpplConfig,
    LpplParams, Resampling, Window,
};
use netlab::metrics::{connected_components, k_core, reciprocity, zipf_fit, ComponentMode};
use netlab::TradeGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Outcome {
    check(elapsed.as_secs_f64() < limit_secs as f64, format!("{:.1}s (limit {limit_secs}s)", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// Brute-force graph oracles

fn random_multigraph(rng: &mut ChaCha8Rng) -> (usize, Vec<(u32, u32)>) {
    let n = rng.random_range(1..=60usize);
    let m = if n == 1 { 0 } else { rng.random_range(0..=300usize) };
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let (u, v) = (rng.random_range(0..n as u32), rng.random_range(0..n as u32));
        if u != v {
            edges.push((u, v));
            // Repeat some edges so the multigraph really has parallel edges.
            if rng.random_bool(0.2) && edges.len() < m {
                edges.push((u, v));
            }
        }
    }
    (n, edges)
}

/// Transitive closure by repeated relaxation (Floyd–Warshall on booleans).
fn reachability(n: usize, edges: &[(u32, u32)], undirected: bool) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(u, v) in edges {
        r[u as usize][v as usize] = true;
        if undirected {
            r[v as usize][u as usize] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

fn partition_from(n: usize, same: impl Fn(usize, usize) -> bool) -> BTreeSet<BTreeSet<usize>> {
    (0..n).map(|i| (0..n).filter(|&j| same(i, j)).collect()).collect()
}

fn partition_of(graph: &TradeGraph, mode: ComponentMode) -> BTreeSet<BTreeSet<usize>> {
    connected_components(graph, mode).components.iter().map(|c| c.iter().map(|v| v.index()).collect()).collect()
}

/// Deletes any node of degree < k until none is left (simple undirected graph).
fn kcore_oracle(n: usize, edges: &[(u32, u32)], k: usize) -> BTreeSet<usize> {
    let simple: HashSet<(usize, usize)> = edges.iter().map(|&(u, v)| (u.min(v) as usize, u.max(v) as usize)).collect();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    loop {
        let victim = alive.iter().copied().find(|&x| {
            simple.iter().filter(|&&(a, b)| (a == x && alive.contains(&b)) || (b == x && alive.contains(&a))).count()
                < k
        });
        match victim {
            Some(x) => {
                alive.remove(&x);
            }
            None => return alive,
        }
    }
}

fn criterion_graph_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let (n, edges) = random_multigraph(&mut rng);
        let graph = TradeGraph::from_edge_list(n, &edges);

        let distinct: HashSet<(u32, u32)> = edges.iter().copied().collect();
        if !distinct.is_empty() {
            let mutual = distinct.iter().filter(|&&(u, v)| distinct.contains(&(v, u))).count();
            let expected = mutual as f64 / distinct.len() as f64;
            let got = reciprocity(&graph).map_err(|e| format!("case {case}: {e}"))?;
            if got != expected {
                return Err(format!("case {case}: reciprocity {got} != {expected}"));
            }
        }

        let reach = reachability(n, &edges, false);
        if partition_of(&graph, ComponentMode::Strong) != partition_from(n, |i, j| reach[i][j] && reach[j][i]) {
            return Err(format!("case {case}: SCC partition differs"));
        }
        let sym = reachability(n, &edges, true);
        if partition_of(&graph, ComponentMode::Weak) != partition_from(n, |i, j| sym[i][j]) {
            return Err(format!("case {case}: WCC partition differs"));
        }

        for k in 0..=8 {
            let core = k_core(&graph, k);
            let got: BTreeSet<usize> = core.nodes.iter().map(|v| v.index()).collect();
            let expected = kcore_oracle(n, &edges, k);
            if got != expected {
                return Err(format!("case {case}: {k}-core differs"));
            }
            let induced = edges
                .iter()
                .filter(|&&(u, v)| expected.contains(&(u as usize)) && expected.contains(&(v as usize)))
                .count();
            if core.edges != induced {
                return Err(format!("case {case}: {k}-core edge count {} != {induced}", core.edges));
            }
        }
    }
    within(start.elapsed(), 30).map(|t| format!("200 random multigraphs match reachability/deletion oracles, {t}"))
}

// ---------------------------------------------------------------------------
// ArticleRank

fn dense_article_rank(n: usize, edges: &[(u32, u32)], d: f64) -> Vec<f64> {
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in edges {
        adj[u as usize][v as usize] = true;
    }
    let out: Vec<f64> = adj.iter().map(|row| row.iter().filter(|&&x| x).count() as f64).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let mut s = vec![1.0; n];
    for _ in 0..500 {
        s = (0..n)
            .map(|v| (1.0 - d) + d * (0..n).filter(|&w| adj[w][v]).map(|w| s[w] / (out[w] + mean)).sum::<f64>())
            .collect();
    }
    s
}

fn criterion_article_rank() -> Outcome {
    let start = Instant::now();
    let cfg = ArticleRankConfig::default();
    let d = cfg.damping;

    let isolated = article_rank(&TradeGraph::from_edge_list(1, &[]), &cfg).map_err(|e| e.to_string())?;
    if isolated.scores[0] != 1.0 - d {
        return Err(format!("isolated node {} != {}", isolated.scores[0], 1.0 - d));
    }
    let pair = article_rank(&TradeGraph::from_edge_list(2, &[(0, 1), (1, 0)]), &cfg).map_err(|e| e.to_string())?;
    let expected = (1.0 - d) / (1.0 - d / 2.0);
    if pair.scores.iter().any(|s| (s - expected).abs() > 1e-6) {
        return Err(format!("2-cycle {:?} != {expected}", pair.scores));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = rng.random_range(2..=20usize);
        let m = rng.random_range(0..=3 * n);
        let edges: Vec<(u32, u32)> = (0..m)
            .map(|_| (rng.random_range(0..n as u32), rng.random_range(0..n as u32)))
            .filter(|(u, v)| u != v)
            .collect();
        let got = article_rank(&TradeGraph::from_edge_list(n, &edges), &cfg).map_err(|e| e.to_string())?;
        let reference = dense_article_rank(n, &edges, d);
        let diff = got.scores.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if diff > 1e-5 {
            return Err(format!("case {case}: max deviation {diff:e} from dense reference"));
        }
        worst = worst.max(diff);
    }
    within(start.elapsed(), 10)
        .map(|t| format!("analytic fixed points exact, 50 graphs within {worst:.1e} of reference, {t}"))
}

// ---------------------------------------------------------------------------
// Zipf

fn criterion_zipf() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in [0.8, 1.0, 1.5, 2.2] {
        let counts: Vec<f64> = (1..=1000).map(|r| 1e6 / (r as f64).powf(s)).collect();
        let fit = zipf_fit(&counts, u64::MAX).map_err(|e| e.to_string())?;
        if (fit.exponent + s).abs() > 1e-9 || fit.r_squared <= 0.999999 {
            return Err(format!("exact s={s}: slope {} r2 {}", fit.exponent, fit.r_squared));
        }
        worst = worst.max((fit.exponent + s).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let zipf = Zipf::new(100.0, 1.5).map_err(|e| e.to_string())?;
    let mut counts = vec![0.0; 100];
    for _ in 0..10_000 {
        let k: f64 = zipf.sample(&mut rng);
        counts[k as usize - 1] += 1.0;
    }
    let fit = zipf_fit(&counts, u64::MAX).map_err(|e| e.to_string())?;
    check(
        (fit.exponent + 1.5).abs() <= 0.15,
        format!("exact slopes within {worst:.1e}; sampled Zipf(1.5) n=1e4 slope {:.3}", fit.exponent),
    )
}

// ---------------------------------------------------------------------------
// LPPL

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

/// Log prices for days 1..=days with multiplicative noise of relative size `noise`.
fn synthetic(p: &LpplParams, days: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (1..=days).map(|t| lppl_value(p, t as f64).unwrap() + (1.0 + noise * gauss(rng)).ln()).collect()
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn criterion_lppl_round_trip() -> Outcome {
    let start = Instant::now();
    let truths = [
        LpplParams { a: 5.0, b: 0.15, c: 0.1, m: 0.5, omega: 8.0, phi: 1.0, tc: 130.0 },
        LpplParams { a: 2.0, b: 0.4, c: 0.3, m: 0.3, omega: 5.5, phi: 4.0, tc: 150.0 },
        LpplParams { a: 7.5, b: -0.05, c: 0.2, m: 0.8, omega: 11.0, phi: 2.5, tc: 125.0 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for p in &truths {
        let y = synthetic(p, 120, 0.0, &mut rng);
        let times: Vec<f64> = (1..=120).map(|t| t as f64).collect();
        let f = ols_linear_fit(&times, &y, p.tc, p.m, p.omega).map_err(|e| e.to_string())?;
        let ok = (f.a - p.a).abs() < 1e-6
            && (f.b - p.b).abs() < 1e-6
            && (f.c - p.c).abs() < 1e-6
            && angle_gap(f.phi, p.phi) < 1e-6
            && f.sse < 1e-12;
        if !ok {
            return Err(format!("noiseless round trip failed for {p:?}: {f:?}"));
        }
    }

    let truth = truths[0];
    let cfg = LpplConfig::default();
    let mut hits = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series = DailySeries::from_log_prices(day0(), synthetic(&truth, 120, 0.01, &mut rng));
        let fit = fit_window(&series, Window { t1: 1, t2: 120 }, &cfg).map_err(|e| e.to_string())?;
        if (fit.params.m - truth.m).abs() <= 0.1 && (fit.params.omega - truth.omega).abs() <= 1.0 {
            hits += 1;
        }
    }
    let t = within(start.elapsed(), 300)?;
    check(
        hits >= 45,
        format!("OLS round trip within 1e-6; noisy fits recovered m and omega on {hits}/50 seeds (need 45), {t}"),
    )
}

fn criterion_windows() -> Outcome {
    let windows = shrinking_windows(120, 120, 5).map_err(|e| e.to_string())?;
    let starts: Vec<usize> = windows.iter().map(|w| w.t1).collect();
    let mut expected = vec![1];
    expected.extend((1..=23).map(|j| 5 * j));
    if starts != expected || windows.iter().any(|w| w.t2 != 120) {
        return Err(format!("window starts {starts:?}"));
    }
    for t2 in [121, 200, 365] {
        let n = shrinking_windows(t2, 120, 5).map_err(|e| e.to_string())?.len();
        if n != 24 {
            return Err(format!("t2={t2}: {n} windows"));
        }
    }
    Ok("[1,120], [5,120], ..., [115,120]: 24 windows at every t2".into())
}

fn criterion_indicators() -> Outcome {
    let start = Instant::now();
    let cfg = LpplConfig::default();
    let bubble = LpplParams { a: 5.0, b: 0.5, c: 0.05, m: 0.5, omega: 8.0, phi: 1.0, tc: 130.0 };
    let flat = LpplParams { b: 0.0, ..bubble };

    let mut bubble_mean = 0.0;
    let mut noise_mean = 0.0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let series = DailySeries::from_log_prices(day0(), synthetic(&bubble, 120, 0.01, &mut rng));
        bubble_mean += bubble_indicator(&series, 120, &cfg).map_err(|e| e.to_string())?.positive / 50.0;

        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let series = DailySeries::from_log_prices(day0(), synthetic(&flat, 120, 0.01, &mut rng));
        noise_mean += bubble_indicator(&series, 120, &cfg).map_err(|e| e.to_string())?.positive / 50.0;
    }

    // No lookahead: rewrite every observation after t2 and compare bit for bit.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let late = LpplParams { tc: 170.0, ..bubble };
    let mut values = synthetic(&late, 160, 0.01, &mut rng);
    let base = bubble_indicator(&DailySeries::from_log_prices(day0(), values.clone()), 125, &cfg)
        .map_err(|e| e.to_string())?;
    for v in &mut values[125..] {
        *v = -*v * 3.0;
    }
    let mutated =
        bubble_indicator(&DailySeries::from_log_prices(day0(), values), 125, &cfg).map_err(|e| e.to_string())?;
    let same_daily = base.positive.to_bits() == mutated.positive.to_bits()
        && base.negative.to_bits() == mutated.negative.to_bits()
        && base.fits_qualified == mutated.fits_qualified;

    // The same through weekly prices with linear interpolation, which would
    // leak the next observation if the daily series were not rebuilt per day.
    let weekly: Vec<PricePoint> = (0..30)
        .map(|w| PricePoint {
            date: day0() + chrono::Duration::weeks(w),
            avg_price_usd: (3.0 + 0.05 * w as f64 + 0.02 * (w as f64).sin()).exp(),
        })
        .collect();
    let lin = LpplConfig { resampling: Resampling::Linear, ..LpplConfig::default() };
    let t2_date = day0() + chrono::Duration::days(130);
    let original = PriceSeries::new("x", weekly.clone()).map_err(|e| e.to_string())?;
    let mut changed = weekly;
    for p in changed.iter_mut().filter(|p| p.date > t2_date) {
        p.avg_price_usd *= 50.0;
    }
    let changed = PriceSeries::new("x", changed).map_err(|e| e.to_string())?;
    let a = scan_prices(&original, t2_date, t2_date, &lin).map_err(|e| e.to_string())?;
    let b = scan_prices(&changed, t2_date, t2_date, &lin).map_err(|e| e.to_string())?;
    let same_weekly = a == b;

    let detail = format!(
        "mean positive {bubble_mean:.3} on bubbles (need >= 0.5), {noise_mean:.3} on white noise (need <= 0.1); \
         post-t2 mutation identical: daily {same_daily}, weekly-linear {same_weekly}; {:.1}s",
        start.elapsed().as_secs_f64()
    );
    check(bubble_mean >= 0.5 && noise_mean <= 0.1 && same_daily && same_weekly, detail)
}

// ---------------------------------------------------------------------------
// End to end

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run_report(out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_token-netlab"))
        .arg("report")
        .arg("--transfers")
        .arg(fixtures().join("transfers_5k.csv"))
        .arg("--prices")
        .arg(fixtures().join("weekly_prices.csv"))
        .arg("--out")
        .arg(out)
        .arg("--seed")
        .arg("11")
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("report exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
    }
    Ok(start.elapsed())
}

fn criterion_report(out: &Path) -> Outcome {
    let elapsed = run_report(out)?;
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let schema: serde_json::Value = serde_json::from_slice(
        &std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/report.schema.json"))
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    if let Some(err) = validator.iter_errors(&report).next() {
        return Err(format!("schema violation: {err} at {}", err.instance_path()));
    }
    let table2 = [
        "reciprocity",
        "assortativity",
        "strong_nodes",
        "max_scc_nodes",
        "max_scc_edges",
        "weak_nodes",
        "max_wcc_nodes",
        "max_wcc_edges",
        "wcc_nodes",
        "wcc_edges",
        "sc_nodes",
        "sc_edges",
    ];
    let missing: Vec<&str> = table2.iter().copied().filter(|k| !report["semantics"][k].is_number()).collect();
    if !missing.is_empty() {
        return Err(format!("unpopulated semantics fields {missing:?}"));
    }
    let t = within(elapsed, 60)?;
    Ok(format!("report on 5k-row fixture is schema-valid with every network statistic populated, {t}"))
}

fn criterion_determinism(first: &Path, second: &Path) -> Outcome {
    run_report(second)?;
    let mut names: Vec<String> = std::fs::read_dir(first)
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    names.sort();
    for name in &names {
        let a = std::fs::read(first.join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(second.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
    }
    check(names.len() >= 7, format!("{} artifacts byte-identical across two runs", names.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let (first, second) = (dir.path().join("run1"), dir.path().join("run2"));
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("graph-metric oracle equivalence", Box::new(criterion_graph_oracles)),
        ("ArticleRank correctness", Box::new(criterion_article_rank)),
        ("Zipf recovery", Box::new(criterion_zipf)),
        ("LPPL round trip", Box::new(criterion_lppl_round_trip)),
        ("shrinking-window contract", Box::new(criterion_windows)),
        ("indicator discrimination", Box::new(criterion_indicators)),
        ("end-to-end report", Box::new(|| criterion_report(&first))),
        ("determinism", Box::new(|| criterion_determinism(&first, &second))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
