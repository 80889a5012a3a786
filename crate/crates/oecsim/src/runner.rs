//! Runs every repetition of every cell and writes the result files.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use oecsim_core::sim::{run_scenario, RunOutput, SimError};
use oecsim_core::{RunMetrics, Scenario};

use crate::output;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("could not start worker threads: {0}")]
    Threads(String),
}

/// One repetition of one cell.
#[derive(Debug)]
pub struct JobResult {
    pub cell: usize,
    pub scenario_id: String,
    pub repetition: u32,
    pub outcome: Result<RunOutput, SimError>,
}

/// Runs `runs` repetitions of every scenario on up to `parallelism` threads.
/// Results come back in (cell, repetition) order whatever the thread count.
pub fn execute(scenarios: &[Scenario], parallelism: usize) -> Result<Vec<JobResult>, RunError> {
    let jobs: Vec<(usize, u32)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.runs).map(move |r| (i, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| RunError::Threads(e.to_string()))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, repetition)| JobResult {
                cell,
                scenario_id: scenarios[cell].scenario_id(),
                repetition,
                outcome: run_scenario(&scenarios[cell], repetition),
            })
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrittenFiles {
    pub summary: PathBuf,
    pub beacons: Vec<PathBuf>,
    pub dht: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes summary, per-repetition beacon files and the DHT dump for the
/// successful runs in `results`.
pub fn write_outputs(out_dir: &Path, results: &[JobResult]) -> Result<WrittenFiles, RunError> {
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let ok: Vec<&RunOutput> = results.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();

    let summary = out_dir.join("summary.csv");
    output::write_summary(create(&summary)?, ok.iter().map(|r| &r.metrics)).map_err(|source| RunError::Csv {
        path: summary.clone(),
        source,
    })?;

    let reps: BTreeSet<u32> = ok.iter().map(|r| r.metrics.repetition).collect();
    let mut beacons = Vec::new();
    for rep in reps {
        let path = out_dir.join(format!("beacons_r{rep}.csv"));
        let runs: Vec<&RunOutput> = ok.iter().copied().filter(|r| r.metrics.repetition == rep).collect();
        output::write_beacons(create(&path)?, &runs).map_err(|source| RunError::Csv {
            path: path.clone(),
            source,
        })?;
        beacons.push(path);
    }

    let dht = out_dir.join("dht.txt");
    output::write_dht(create(&dht)?, &ok).map_err(|source| RunError::Io {
        path: dht.clone(),
        source,
    })?;
    Ok(WrittenFiles { summary, beacons, dht })
}

#[derive(Debug)]
pub struct MatrixReport {
    pub files: WrittenFiles,
    pub results: Vec<JobResult>,
}

impl MatrixReport {
    pub fn failures(&self) -> impl Iterator<Item = (&str, u32, &SimError)> {
        self.results
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.scenario_id.as_str(), r.repetition, e)))
    }

    pub fn metrics(&self) -> impl Iterator<Item = &RunMetrics> {
        self.results.iter().filter_map(|r| r.outcome.as_ref().ok().map(|o| &o.metrics))
    }

    /// Repetitions of each cell merged into one row, in cell order.
    pub fn pooled(&self) -> Vec<RunMetrics> {
        let mut by_cell: Vec<(usize, Vec<RunMetrics>)> = Vec::new();
        for r in &self.results {
            if let Ok(o) = &r.outcome {
                match by_cell.last_mut() {
                    Some((c, v)) if *c == r.cell => v.push(o.metrics.clone()),
                    _ => by_cell.push((r.cell, vec![o.metrics.clone()])),
                }
            }
        }
        by_cell.iter().filter_map(|(_, v)| RunMetrics::pool(v)).collect()
    }
}

/// Runs the matrix and writes its files under `out_dir`. Failed runs are
/// reported in the result, never dropped silently.
pub fn run_matrix(scenarios: &[Scenario], parallelism: usize, out_dir: &Path) -> Result<MatrixReport, RunError> {
    let results = execute(scenarios, parallelism)?;
    let files = write_outputs(out_dir, &results)?;
    Ok(MatrixReport { files, results })
}

/// Replaces every scenario's base seed.
pub fn override_seed(scenarios: &mut [Scenario], seed: u64) {
    for s in scenarios {
        s.seed = seed;
    }
}
