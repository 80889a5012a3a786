//! Result files.
//!
//! * `beacons_r<rep>.csv`: one row per beacon of every cell for repetition `rep`.
//! * `summary.csv`: one row per run.
//! * `dht.txt`: tab-separated DHT dump, one line per stored key.
//!
//! Decimals are written with 6 fractional digits; missing values are empty.

use std::io::Write;

use oecsim_core::sim::RunOutput;
use oecsim_core::RunMetrics;

pub const BEACON_HEADER: [&str; 5] = ["scenario_id", "seq", "tx_time_s", "outcome", "latency_s"];

pub const SUMMARY_HEADER: [&str; 15] = [
    "scenario_id",
    "sent",
    "received",
    "radio_lost",
    "filtered",
    "loss_rate",
    "mean_latency_s",
    "min_latency_s",
    "max_latency_s",
    "synced",
    "dht_drops",
    "repetition",
    "seed",
    "p50_latency_s",
    "p95_latency_s",
];

pub fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(fixed6).unwrap_or_default()
}

pub fn write_beacons<W: Write>(w: W, runs: &[&RunOutput]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BEACON_HEADER)?;
    for run in runs {
        let id = &run.metrics.scenario_id;
        for b in &run.beacons {
            out.write_record([
                id.as_str(),
                &b.seq.to_string(),
                &fixed6(b.tx_time.secs()),
                b.outcome.as_str(),
                &opt6(b.latency),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn summary_record(m: &RunMetrics) -> [String; 15] {
    [
        m.scenario_id.clone(),
        m.sent.to_string(),
        m.received.to_string(),
        m.radio_lost.to_string(),
        m.filtered.to_string(),
        opt6(m.loss_rate),
        opt6(m.stats.map(|s| s.mean)),
        opt6(m.stats.map(|s| s.min)),
        opt6(m.stats.map(|s| s.max)),
        m.synced.to_string(),
        m.dht_drops.to_string(),
        m.repetition.to_string(),
        m.seed.to_string(),
        opt6(m.stats.map(|s| s.p50)),
        opt6(m.stats.map(|s| s.p95)),
    ]
}

pub fn write_summary<'a, W: Write>(w: W, runs: impl IntoIterator<Item = &'a RunMetrics>) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for m in runs {
        out.write_record(summary_record(m))?;
    }
    out.flush()?;
    Ok(())
}

/// `scenario_id  repetition  key  version  holders  value_bytes`, tab separated,
/// holders comma separated.
pub fn write_dht<W: Write>(mut w: W, runs: &[&RunOutput]) -> std::io::Result<()> {
    writeln!(w, "# scenario_id\trepetition\tkey\tversion\tholders\tvalue_bytes")?;
    for run in runs {
        for e in &run.dht {
            let holders: Vec<String> = e.stored_at.iter().map(|h| h.to_string()).collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                run.metrics.scenario_id,
                run.metrics.repetition,
                e.key,
                e.version,
                holders.join(","),
                e.value.len()
            )?;
        }
    }
    Ok(())
}
