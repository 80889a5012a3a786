//! Simulated versus published figures for the field-test matrix.

use std::fmt::Write as _;
use std::path::Path;

use oecsim_core::metrics::{compare_runs, CellKey};
use oecsim_core::radio::Technology;
use oecsim_core::{RunMetrics, Scenario};

use crate::matrix::paper_matrix;
use crate::runner::{run_matrix, MatrixReport, RunError};

/// Published packet loss, percent, by (technology, rate, speed).
pub const PAPER_LOSS: [(Technology, u32, f64, f64); 9] = [
    (Technology::Ble5, 125_000, 30.0, 11.0),
    (Technology::Ble5, 125_000, 50.0, 27.0),
    (Technology::Ble5, 125_000, 70.0, 7.0),
    (Technology::Wize, 2400, 30.0, 20.0),
    (Technology::Wize, 2400, 50.0, 20.0),
    (Technology::Wize, 2400, 70.0, 43.0),
    (Technology::Wize, 6400, 30.0, 42.0),
    (Technology::Wize, 6400, 50.0, 50.0),
    (Technology::Wize, 6400, 70.0, 52.0),
];

pub const LOSS_TOLERANCE_PP: f64 = 10.0;
pub const BLE_MIN_LATENCY_MS: f64 = 716.0;
pub const BLE_MAX_LATENCY_MS: f64 = 955.0;
pub const BLE_BAND_MS: (f64, f64) = (700.0, BLE_MAX_LATENCY_MS);
pub const BLE_30_TOLERANCE: f64 = 0.10;
pub const WIZE_2400_LATENCY_MS: f64 = 370.0;
pub const WIZE_6400_LATENCY_MS: f64 = 150.0;
pub const WIZE_LATENCY_TOLERANCE: f64 = 0.15;
pub const MIN_LATENCY_RATIO: f64 = 2.0;
pub const CLAIMED_LATENCY_RATIO: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub simulated: Option<f64>,
    pub paper: String,
    pub tolerance: String,
    pub pass: bool,
    /// Shown for inspection; does not count towards the verdict.
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaperReport {
    pub checks: Vec<Check>,
    pub pooled: Vec<RunMetrics>,
}

impl PaperReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().filter(|c| !c.informational).all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<34} {:>12} {:>12} {:>16}  verdict", "check", "simulated", "paper", "tolerance");
        for c in &self.checks {
            let sim = c.simulated.map_or("n/a".to_string(), |v| format!("{v:.2}"));
            let verdict = match (c.informational, c.pass) {
                (true, true) => "info (holds)",
                (true, false) => "info (not reproduced)",
                (false, true) => "PASS",
                (false, false) => "FAIL",
            };
            let _ = writeln!(
                out,
                "{:<34} {:>12} {:>12} {:>16}  {}",
                c.name, sim, c.paper, c.tolerance, verdict
            );
        }
        out
    }
}

fn find(pooled: &[RunMetrics], tech: Technology, rate: u32, speed: f64) -> Option<&RunMetrics> {
    pooled.iter().find(|m| {
        m.cell
            == CellKey {
                technology: tech,
                data_rate_bps: rate,
                speed_kmh: speed,
            }
    })
}

fn pooled_mean_ms<'a>(runs: impl Iterator<Item = &'a RunMetrics>) -> Option<f64> {
    let mut all: Vec<f64> = runs.flat_map(|r| r.latencies.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    (!all.is_empty()).then(|| 1e3 * all.iter().sum::<f64>() / all.len() as f64)
}

fn within(sim: Option<f64>, target: f64, rel: f64) -> bool {
    sim.is_some_and(|v| (v - target).abs() <= rel * target)
}

/// Checks pooled per-cell metrics against the published figures.
pub fn evaluate(pooled: Vec<RunMetrics>) -> PaperReport {
    let mut checks = Vec::new();
    for (tech, rate, speed, paper) in PAPER_LOSS {
        let sim = find(&pooled, tech, rate, speed).and_then(|m| m.loss_rate);
        let label = match tech {
            Technology::Ble5 => format!("loss % BLE5 {speed} km/h"),
            Technology::Wize => format!("loss % WIZE {rate} {speed} km/h"),
        };
        checks.push(Check {
            name: label,
            simulated: sim,
            paper: format!("{paper}"),
            tolerance: format!("±{LOSS_TOLERANCE_PP} pp"),
            pass: sim.is_some_and(|v| (v - paper).abs() <= LOSS_TOLERANCE_PP),
            informational: false,
        });
    }

    let by = |tech: Technology, rate: Option<u32>| {
        pooled
            .iter()
            .filter(move |m| m.cell.technology == tech && rate.is_none_or(|r| m.cell.data_rate_bps == r))
    };
    for (rate, target) in [(2400, WIZE_2400_LATENCY_MS), (6400, WIZE_6400_LATENCY_MS)] {
        let sim = pooled_mean_ms(by(Technology::Wize, Some(rate)));
        checks.push(Check {
            name: format!("mean latency ms WIZE {rate}"),
            simulated: sim,
            paper: format!("{target}"),
            tolerance: format!("±{}%", WIZE_LATENCY_TOLERANCE * 100.0),
            pass: within(sim, target, WIZE_LATENCY_TOLERANCE),
            informational: false,
        });
    }
    for m in by(Technology::Ble5, None) {
        let sim = m.stats.map(|s| s.mean * 1e3);
        let speed = m.cell.speed_kmh;
        checks.push(Check {
            name: format!("mean latency ms BLE5 {speed} km/h"),
            simulated: sim,
            paper: format!("{}-{}", BLE_BAND_MS.0, BLE_BAND_MS.1),
            tolerance: "inside band".into(),
            pass: sim.is_some_and(|v| (BLE_BAND_MS.0..=BLE_BAND_MS.1).contains(&v)),
            informational: false,
        });
        if speed == 30.0 {
            checks.push(Check {
                name: "mean latency ms BLE5 30 km/h".into(),
                simulated: sim,
                paper: format!("{BLE_MIN_LATENCY_MS}"),
                tolerance: format!("±{}%", BLE_30_TOLERANCE * 100.0),
                pass: within(sim, BLE_MIN_LATENCY_MS, BLE_30_TOLERANCE),
                informational: false,
            });
        }
    }

    let ratios = compare_runs(&pooled).ok().map(|c| c.ratios);
    let pooled_ratio = ratios.as_ref().and_then(|r| r.ble_over_wize);
    checks.push(Check {
        name: "BLE5 / WIZE mean latency".into(),
        simulated: pooled_ratio,
        paper: format!("> {MIN_LATENCY_RATIO}"),
        tolerance: "lower bound".into(),
        pass: pooled_ratio.is_some_and(|r| r > MIN_LATENCY_RATIO),
        informational: false,
    });
    checks.push(Check {
        name: "BLE5 / WIZE claim (> 5x)".into(),
        simulated: pooled_ratio,
        paper: format!("> {CLAIMED_LATENCY_RATIO}"),
        tolerance: "claim".into(),
        pass: pooled_ratio.is_some_and(|r| r > CLAIMED_LATENCY_RATIO),
        informational: true,
    });
    let r6400 = ratios.as_ref().and_then(|r| r.ble_over_wize_6400);
    checks.push(Check {
        name: "BLE5 / WIZE 6400 mean latency".into(),
        simulated: r6400,
        paper: format!("{:.2}", BLE_MIN_LATENCY_MS / WIZE_6400_LATENCY_MS),
        tolerance: "for inspection".into(),
        pass: r6400.is_some_and(|r| r > CLAIMED_LATENCY_RATIO),
        informational: true,
    });
    PaperReport { checks, pooled }
}

/// Runs the shipped matrix and writes its files plus `report.txt`.
pub fn reproduce_paper(
    seed: Option<u64>,
    parallelism: usize,
    out_dir: &Path,
) -> Result<(PaperReport, MatrixReport), RunError> {
    let mut scenarios: Vec<Scenario> = paper_matrix();
    if let Some(seed) = seed {
        crate::runner::override_seed(&mut scenarios, seed);
    }
    let run = run_matrix(&scenarios, parallelism, out_dir)?;
    let report = evaluate(run.pooled());
    let path = out_dir.join("report.txt");
    std::fs::write(&path, report.render()).map_err(|source| RunError::Io { path, source })?;
    Ok((report, run))
}
