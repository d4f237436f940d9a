use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use chrono::DateTime;

use super::{BenchResult, HarnessError};

pub const CSV_HEADER: [&str; 10] = [
    "query",
    "backend",
    "fuse",
    "multi_emit",
    "strategy",
    "workers",
    "sf_or_param",
    "mean_ms",
    "moe_ms",
    "speedup_vs_baseline",
];

/// `# key: value` lines describing the run environment, written ahead of
/// the CSV rows.
pub fn environment_comments(workers: usize) -> Vec<String> {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    let stamp = DateTime::from_timestamp(secs, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_default();
    vec![
        format!("workers: {workers}"),
        format!("available_parallelism: {}", crate::pipeline::default_workers()),
        format!("timestamp: {stamp}"),
        format!("os: {} {}", std::env::consts::OS, std::env::consts::ARCH),
    ]
}

fn baseline_for<'a>(results: &'a [BenchResult], r: &BenchResult) -> Option<&'a BenchResult> {
    results
        .iter()
        .find(|b| b.variant.is_baseline() && b.query == r.query && b.param == r.param)
}

/// Writes comment lines, then one CSV row per result. The speedup column
/// is empty when no baseline result for the same query and parameter is
/// present.
pub fn write_csv<W: Write>(mut out: W, comments: &[String], results: &[BenchResult]) -> Result<(), HarnessError> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in results {
        let speedup = match baseline_for(results, r) {
            Some(b) => format!("{:.4}", r.speedup_over(b)?),
            None => String::new(),
        };
        let o = &r.variant.options;
        w.write_record([
            r.query.clone(),
            r.variant.backend.to_string(),
            o.fuse_filters.to_string(),
            o.multi_emit_join.to_string(),
            o.strategy.to_string(),
            o.workers.to_string(),
            r.param.clone(),
            format!("{:.6}", r.mean_ms),
            format!("{:.6}", r.moe_ms),
            speedup,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per query and parameter, one column per variant. The baseline
/// column shows `mean ± moe` in ms, the others the speedup over it.
pub fn markdown_table(results: &[BenchResult]) -> String {
    let mut labels: Vec<String> = Vec::new();
    let mut rows: Vec<(String, String)> = Vec::new();
    for r in results {
        if !r.variant.is_baseline() && !labels.contains(&r.variant.label()) {
            labels.push(r.variant.label());
        }
        let key = (r.query.clone(), r.param.clone());
        if !rows.contains(&key) {
            rows.push(key);
        }
    }
    let mut s = String::from("| query | param | baseline (ms) |");
    for l in &labels {
        s.push_str(&format!(" {l} |"));
    }
    s.push_str("\n|---|---|---|");
    s.push_str(&"---|".repeat(labels.len()));
    s.push('\n');
    for (q, p) in rows {
        let mine: Vec<&BenchResult> = results.iter().filter(|r| r.query == q && r.param == p).collect();
        let base = mine.iter().find(|r| r.variant.is_baseline());
        s.push_str(&format!("| {q} | {p} | "));
        match base {
            Some(b) => s.push_str(&format!("{:.3} ± {:.3} |", b.mean_ms, b.moe_ms)),
            None => s.push_str("- |"),
        }
        for l in &labels {
            let cell = mine
                .iter()
                .find(|r| &r.variant.label() == l)
                .and_then(|r| base.and_then(|b| r.speedup_over(b).ok()))
                .map(|x| format!("{x:.2}x"))
                .unwrap_or_else(|| "-".into());
            s.push_str(&format!(" {cell} |"));
        }
        s.push('\n');
    }
    s
}
