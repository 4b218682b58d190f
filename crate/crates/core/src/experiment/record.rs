use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evo::GenerationRecord;
use crate::metrics::EvalReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub config_hash: String,
    pub seed: u64,
    /// Grid overrides applied to the ESN config.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub report: EvalReport,
    pub history: Option<Vec<GenerationRecord>>,
    /// Failure message when the run diverged or errored.
    pub error: Option<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub version: String,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

impl RunRecord {
    /// Equality up to `tol` on every numeric result, ignoring timings.
    pub fn same_results(&self, other: &RunRecord, tol: f64) -> bool {
        let r = (&self.report, &other.report);
        let metrics_eq = r.0.metrics.len() == r.1.metrics.len()
            && r.0.metrics.iter().zip(&r.1.metrics).all(|((ka, va), (kb, vb))| ka == kb && close(*va, *vb, tol));
        let resid_eq = r.0.residuals.len() == r.1.residuals.len()
            && r.0.residuals.iter().zip(&r.1.residuals).all(|(a, b)| close(*a, *b, tol));
        let hist_eq = match (&self.history, &other.history) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| {
                        x.generation == y.generation
                            && x.diverged == y.diverged
                            && x.evaluations == y.evaluations
                            && close(x.best, y.best, tol)
                            && close(x.mean, y.mean, tol)
                            && close(x.std, y.std, tol)
                            && close(x.hall_of_fame, y.hall_of_fame, tol)
                    })
            }
            _ => false,
        };
        self.label == other.label
            && self.config_hash == other.config_hash
            && self.seed == other.seed
            && self.params == other.params
            && self.error == other.error
            && r.0.horizon == r.1.horizon
            && r.0.diverged == r.1.diverged
            && close(r.0.variance, r.1.variance, tol)
            && metrics_eq
            && resid_eq
            && hist_eq
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.report.get(key)
    }
}

/// Mean and sample standard deviation of one metric over non-diverged runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
    pub diverged: usize,
}

impl Summary {
    pub fn of(records: &[RunRecord], metric: &str) -> Self {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| !r.report.diverged)
            .filter_map(|r| r.metric(metric))
            .collect();
        let n = vals.len();
        let (mean, std) = if n == 0 {
            (None, None)
        } else {
            let m = crate::metrics::mean(&vals);
            let v = crate::metrics::variance(&vals, crate::metrics::VarianceConvention::Sample);
            (Some(m), Some(v.sqrt()))
        };
        Summary {
            metric: metric.to_string(),
            mean,
            std,
            count: n,
            diverged: records.len() - n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Baseline,
    Evolve,
    Grid,
    Evaluate,
}

/// Top-level results document written as `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub kind: RunKind,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub records: Vec<RunRecord>,
    /// One summary per grid cell (a single entry otherwise).
    pub summaries: Vec<(BTreeMap<String, f64>, Summary)>,
}

pub const CONFIG_FILE: &str = "config.toml";
pub const SEEDS_FILE: &str = "seeds.txt";
pub const RESULTS_FILE: &str = "results.json";
pub const GRID_FILE: &str = "grid.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const MODEL_FILE: &str = "model.json";

pub fn run_dir(out: &Path, label: &str) -> PathBuf {
    out.join("runs").join(label)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn history_csv(history: &[GenerationRecord]) -> String {
    let mut s = String::from("generation,best,mean,std,hall_of_fame,diverged,evaluations,wall_time\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.generation, r.best, r.mean, r.std, r.hall_of_fame, r.diverged, r.evaluations, r.wall_time
        );
    }
    s
}

pub fn trace_csv(report: &EvalReport) -> String {
    let mut s = String::from("step,residual,abs_error\n");
    for (i, r) in report.residuals.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, r, r.abs());
    }
    s
}

pub fn grid_csv(results: &Results) -> String {
    let keys: Vec<&String> = results
        .records
        .first()
        .map(|r| r.params.keys().collect())
        .unwrap_or_default();
    let mut s = String::from("cell");
    for k in &keys {
        let _ = write!(s, ",{k}");
    }
    s.push_str(",seed,metric,value,diverged\n");
    for (cell, (params, summary)) in results.summaries.iter().enumerate() {
        for r in results.records.iter().filter(|r| &r.params == params) {
            let _ = write!(s, "{cell}");
            for k in &keys {
                let _ = write!(s, ",{}", params[*k]);
            }
            let value = r.metric(&summary.metric).map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, ",{},{},{},{}", r.seed, summary.metric, value, r.report.diverged);
        }
    }
    s
}

/// Writes config copy, seed list, results document and per-run files.
pub fn write_results(out: &Path, config: &ExperimentConfig, results: &Results) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join(CONFIG_FILE), config.to_toml()?.as_bytes())?;
    let seeds: String = results.seeds.iter().map(|s| format!("{s}\n")).collect();
    write_atomic(&out.join(SEEDS_FILE), seeds.as_bytes())?;
    for r in &results.records {
        let dir = run_dir(out, &r.label);
        std::fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("trace.csv"), trace_csv(&r.report).as_bytes())?;
        if let Some(h) = &r.history {
            write_atomic(&dir.join("history.csv"), history_csv(h).as_bytes())?;
        }
    }
    if results.kind == RunKind::Grid {
        write_atomic(&out.join(GRID_FILE), grid_csv(results).as_bytes())?;
    }
    write_atomic(&out.join(RESULTS_FILE), &serde_json::to_vec_pretty(results)?)?;
    Ok(())
}

pub fn read_results(out: &Path) -> Result<Results> {
    let bytes = std::fs::read(out.join(RESULTS_FILE))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Load(format!("{}: {e}", RESULTS_FILE)))
}

/// Checks that an output directory is complete and self-consistent:
/// config copy whose hash matches the results, seed list, results document,
/// and trace (plus history for evolved runs) for every record.
pub fn validate_output_dir(out: &Path) -> Result<Results> {
    let missing = |p: &Path| Error::Load(format!("missing {}", p.display()));
    for f in [CONFIG_FILE, SEEDS_FILE, RESULTS_FILE] {
        let p = out.join(f);
        if !p.is_file() {
            return Err(missing(&p));
        }
    }
    let config = ExperimentConfig::load(&out.join(CONFIG_FILE))?;
    let results = read_results(out)?;
    if config.hash() != results.config_hash {
        return Err(Error::Load("config copy does not match the results hash".into()));
    }
    let seeds: Vec<u64> = std::fs::read_to_string(out.join(SEEDS_FILE))?
        .lines()
        .map(|l| l.trim().parse().map_err(|_| Error::Load(format!("bad seed line {l:?}"))))
        .collect::<Result<_>>()?;
    if seeds != results.seeds {
        return Err(Error::Load("seed list does not match the results document".into()));
    }
    for r in &results.records {
        if !results.seeds.contains(&r.seed) {
            return Err(Error::Load(format!("run {} uses unlisted seed {}", r.label, r.seed)));
        }
        let dir = run_dir(out, &r.label);
        let trace = dir.join("trace.csv");
        if !trace.is_file() {
            return Err(missing(&trace));
        }
        if r.history.is_some() && !dir.join("history.csv").is_file() {
            return Err(missing(&dir.join("history.csv")));
        }
    }
    if results.kind == RunKind::Grid && !out.join(GRID_FILE).is_file() {
        return Err(missing(&out.join(GRID_FILE)));
    }
    Ok(results)
}
