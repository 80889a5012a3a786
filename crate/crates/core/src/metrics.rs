//! Per-run and cross-run aggregation: packet loss and latency statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::radio::Technology;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no beacons were sent; loss rate is undefined")]
    NoData,
    #[error("received ({received}) exceeds sent ({sent})")]
    ReceivedExceedsSent { sent: u64, received: u64 },
    #[error("need at least two runs to compare, got {0}")]
    TooFewRuns(usize),
    #[error("scenario id {0:?} appears more than once")]
    DuplicateScenario(String),
    #[error("two scenarios map to the same cell ({0:?} and {1:?})")]
    DuplicateCell(String, String),
}

/// Percentage of sent beacons that were not usefully received.
pub fn packet_loss_rate(sent: u64, received: u64) -> Result<f64, MetricsError> {
    if sent == 0 {
        return Err(MetricsError::NoData);
    }
    if received > sent {
        return Err(MetricsError::ReceivedExceedsSent { sent, received });
    }
    Ok(100.0 * (sent - received) as f64 / sent as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = libm::ceil(p / 100.0 * sorted.len() as f64) as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// `None` for an empty sample. Values are sorted before summing so the
/// result does not depend on input order.
pub fn latency_stats(latencies: &[f64]) -> Option<LatencyStats> {
    if latencies.is_empty() {
        return None;
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sum: f64 = sorted.iter().sum();
    Some(LatencyStats {
        count: sorted.len(),
        mean: sum / sorted.len() as f64,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        p50: percentile(&sorted, 50.0),
        p95: percentile(&sorted, 95.0),
    })
}

/// One cell of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub technology: Technology,
    pub data_rate_bps: u32,
    pub speed_kmh: f64,
}

impl Eq for CellKey {}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.technology
            .cmp(&other.technology)
            .then(self.data_rate_bps.cmp(&other.data_rate_bps))
            .then(self.speed_kmh.total_cmp(&other.speed_kmh))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub scenario_id: String,
    pub cell: CellKey,
    pub repetition: u32,
    pub seed: u64,
    pub sent: u64,
    pub received: u64,
    pub radio_lost: u64,
    pub filtered: u64,
    /// Percent; `None` when nothing was sent.
    pub loss_rate: Option<f64>,
    /// Per received frame, in arrival order.
    pub latencies: Vec<f64>,
    pub stats: Option<LatencyStats>,
    pub synced: u64,
    pub dht_drops: u64,
}

impl RunMetrics {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario_id: String,
        cell: CellKey,
        repetition: u32,
        seed: u64,
        sent: u64,
        radio_lost: u64,
        filtered: u64,
        latencies: Vec<f64>,
        synced: u64,
        dht_drops: u64,
    ) -> Self {
        let received = latencies.len() as u64;
        RunMetrics {
            scenario_id,
            cell,
            repetition,
            seed,
            sent,
            received,
            radio_lost,
            filtered,
            loss_rate: packet_loss_rate(sent, received).ok(),
            stats: latency_stats(&latencies),
            latencies,
            synced,
            dht_drops,
        }
    }

    /// `sent == received + radio_lost + filtered`.
    pub fn conserves_frames(&self) -> bool {
        self.sent == self.received + self.radio_lost + self.filtered
    }

    /// Merges repetitions of one cell into a single row. Counts add up and
    /// latency samples are concatenated.
    pub fn pool(runs: &[RunMetrics]) -> Option<RunMetrics> {
        let first = runs.first()?;
        let mut latencies = Vec::new();
        let (mut sent, mut lost, mut filtered, mut synced, mut drops) = (0, 0, 0, 0, 0);
        for r in runs {
            sent += r.sent;
            lost += r.radio_lost;
            filtered += r.filtered;
            synced += r.synced;
            drops += r.dht_drops;
            latencies.extend_from_slice(&r.latencies);
        }
        Some(RunMetrics::new(
            first.scenario_id.clone(),
            first.cell,
            0,
            first.seed,
            sent,
            lost,
            filtered,
            latencies,
            synced,
            drops,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub cell: CellKey,
    pub scenario_id: String,
    pub sent: u64,
    pub received: u64,
    pub loss_rate: Option<f64>,
    pub mean_latency: Option<f64>,
}

/// Technology-level summaries derived from the rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DerivedRatios {
    /// Pooled BLE mean latency over pooled Wize mean latency (both rates).
    pub ble_over_wize: Option<f64>,
    pub ble_over_wize_2400: Option<f64>,
    pub ble_over_wize_6400: Option<f64>,
    /// Same-speed BLE / Wize 6.4 kbps ratios, by speed.
    pub ble_over_wize_6400_by_speed: Vec<(f64, f64)>,
    /// Unweighted mean of per-cell loss rates.
    pub ble_mean_loss: Option<f64>,
    pub wize_2400_mean_loss: Option<f64>,
    pub wize_6400_mean_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub ratios: DerivedRatios,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn pooled_mean<'a>(runs: impl Iterator<Item = &'a RunMetrics>) -> Option<f64> {
    let mut all: Vec<f64> = runs.flat_map(|r| r.latencies.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64)
}

/// Side-by-side table of one pooled [`RunMetrics`] per cell.
pub fn compare_runs(runs: &[RunMetrics]) -> Result<Comparison, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::TooFewRuns(runs.len()));
    }
    let mut by_id: BTreeMap<&str, ()> = BTreeMap::new();
    let mut by_cell: BTreeMap<CellKey, &RunMetrics> = BTreeMap::new();
    for r in runs {
        if by_id.insert(&r.scenario_id, ()).is_some() {
            return Err(MetricsError::DuplicateScenario(r.scenario_id.clone()));
        }
        if let Some(prev) = by_cell.insert(r.cell, r) {
            return Err(MetricsError::DuplicateCell(prev.scenario_id.clone(), r.scenario_id.clone()));
        }
    }
    let rows = by_cell
        .values()
        .map(|r| ComparisonRow {
            cell: r.cell,
            scenario_id: r.scenario_id.clone(),
            sent: r.sent,
            received: r.received,
            loss_rate: r.loss_rate,
            mean_latency: r.stats.map(|s| s.mean),
        })
        .collect();

    let group = |tech: Technology, rate: Option<u32>| {
        by_cell
            .values()
            .copied()
            .filter(move |r| r.cell.technology == tech && rate.is_none_or(|x| r.cell.data_rate_bps == x))
    };
    let ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let ble = pooled_mean(group(Technology::Ble5, None));
    let ratios = DerivedRatios {
        ble_over_wize: ratio(ble, pooled_mean(group(Technology::Wize, None))),
        ble_over_wize_2400: ratio(ble, pooled_mean(group(Technology::Wize, Some(2400)))),
        ble_over_wize_6400: ratio(ble, pooled_mean(group(Technology::Wize, Some(6400)))),
        ble_over_wize_6400_by_speed: group(Technology::Ble5, None)
            .filter_map(|b| {
                let w = group(Technology::Wize, Some(6400)).find(|w| w.cell.speed_kmh == b.cell.speed_kmh)?;
                Some((b.cell.speed_kmh, ratio(b.stats.map(|s| s.mean), w.stats.map(|s| s.mean))?))
            })
            .collect(),
        ble_mean_loss: mean(group(Technology::Ble5, None).filter_map(|r| r.loss_rate)),
        wize_2400_mean_loss: mean(group(Technology::Wize, Some(2400)).filter_map(|r| r.loss_rate)),
        wize_6400_mean_loss: mean(group(Technology::Wize, Some(6400)).filter_map(|r| r.loss_rate)),
    };
    Ok(Comparison { rows, ratios })
}
