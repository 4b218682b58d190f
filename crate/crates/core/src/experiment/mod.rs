//! Configuration, presets and run drivers for baseline, grid and evolution
//! experiments, plus the on-disk results layout.
//!
//! Every run is a pure function of (config, seed). A run seed is expanded
//! into independent layout, model, noise, fitness and GA seeds, so parallel
//! and serial execution yield identical records.

mod config;
mod record;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{ExperimentConfig, Protocol, RunConfig, TaskConfig, TaskKind, TestMetric, GRID_KEYS, SUNSPOT_FILE};
pub use record::{
    grid_csv, history_csv, read_results, run_dir, trace_csv, validate_output_dir, write_results, Results,
    RunKind, RunRecord, Summary, CHECKPOINT_FILE, CONFIG_FILE, GRID_FILE, MODEL_FILE, RESULTS_FILE, SEEDS_FILE,
};

use crate::codec::Chromosome;
use crate::error::{Error, Result};
use crate::esn::{EsnModel, Noise};
use crate::evo::{init_population, load_checkpoint, run_ga, save_checkpoint, Checkpoint, FitnessContext, GaState};
use crate::layout::ReservoirLayout;
use crate::metrics::{self, EvalReport};
use crate::timeseries::TimeSeries;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable selecting the worker count.
pub const WORKERS_ENV: &str = "EVOESN_WORKERS";

/// Sizes the global worker pool from `EVOESN_WORKERS` if set.
pub fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::config(format!("{WORKERS_ENV} must be positive")));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Independent seeds derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub layout: u64,
    pub model: u64,
    pub noise: u64,
    pub fitness: u64,
    pub ga: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layout: rng.random(),
            model: rng.random(),
            noise: rng.random(),
            fitness: rng.random(),
            ga: rng.random(),
        }
    }
}

pub fn repeat_seeds(run: &RunConfig) -> Vec<u64> {
    (0..run.repeats as u64).map(|i| run.seed.wrapping_add(i)).collect()
}

/// Samples the layout and all non-readout weights for `seed`.
pub fn init_model(config: &ExperimentConfig, series: &TimeSeries, seed: u64) -> Result<EsnModel> {
    let seeds = RunSeeds::derive(seed);
    let esn = &config.esn;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.layout);
    let layout = ReservoirLayout::random(esn.units, esn.density, &mut rng)?;
    EsnModel::init(Arc::new(layout), esn, series.dim(), seeds.model)
}

/// Scores a trained model on the test split. Metrics are computed in raw
/// units (transform inverted) and normalized by the variance of the whole
/// raw test signal.
pub fn evaluate_model(
    model: &EsnModel,
    series: &TimeSeries,
    task: &TaskConfig,
    noise: Option<&mut Noise>,
) -> Result<EvalReport> {
    let test = series.splits().test_range();
    if test.is_empty() {
        return Err(Error::config("series has no test split"));
    }
    let raw = series.raw_component(0);
    let variance = metrics::variance(&raw[test.clone()], task.variance);
    let inverse = |y: &[f64]| series.transform.inverse(y[0]);
    let mut report = EvalReport {
        variance,
        ..Default::default()
    };
    match task.protocol {
        Protocol::FreeRun { warmup, horizon, step } => {
            if warmup == 0 || warmup + horizon > test.len() {
                return Err(Error::config(format!(
                    "free run needs 1 <= warmup and warmup + horizon <= {} test points",
                    test.len()
                )));
            }
            let start = test.start + warmup;
            let state = model.teacher_forced(series, start, None, |_, _, _| Ok(()))?;
            let free_noise = if model.config.noise_in_free_run { noise } else { None };
            let preds = model.free_run(state, series.row(start - 1), horizon, free_noise)?;
            let p: Vec<f64> = preds.iter().map(|y| inverse(y)).collect();
            let t = &raw[start..start + horizon];
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(start, "prediction left the transform domain"));
            }
            report.horizon = horizon;
            report.residuals = t.iter().zip(&p).map(|(a, b)| a - b).collect();
            report.insert("nrmse", metrics::nrmse_over_horizon(t, &p, horizon, variance)?);
            report.insert("nrmse_h", metrics::nrmse_at_step(&[(t, &p)], step, variance)?);
            report.insert("nmse", metrics::nmse_with_variance(t, &p, variance)?);
            report.insert("mse", metrics::mse(t, &p)?);
            let trace = metrics::summarize_trace(&report.abs_trace());
            report.insert("abs_error_max", trace.max);
            report.insert("abs_error_mean", trace.mean);
        }
        Protocol::OneStep => {
            let preds = model.one_step(series, test.clone(), None)?;
            let p: Vec<f64> = preds.iter().map(|y| inverse(y)).collect();
            let t = &raw[test.clone()];
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(test.start, "prediction left the transform domain"));
            }
            report.horizon = 1;
            report.residuals = t.iter().zip(&p).map(|(a, b)| a - b).collect();
            let nmse = metrics::nmse_with_variance(t, &p, variance)?;
            report.insert("nmse", nmse);
            report.insert("nrmse", nmse.sqrt());
            report.insert("mse", metrics::mse(t, &p)?);
            let trace = metrics::summarize_trace(&report.abs_trace());
            report.insert("abs_error_max", trace.max);
            report.insert("abs_error_mean", trace.mean);
        }
    }
    Ok(report)
}

fn failed_record(label: String, config: &ExperimentConfig, seed: u64, err: &Error) -> RunRecord {
    RunRecord {
        label,
        config_hash: config.hash(),
        seed,
        params: BTreeMap::new(),
        report: EvalReport {
            diverged: true,
            ..Default::default()
        },
        history: None,
        error: Some(err.to_string()),
        timings: BTreeMap::new(),
        version: VERSION.into(),
    }
}

/// Trains and evaluates one canonical ESN. Failures are recorded, not raised.
pub fn baseline_run(config: &ExperimentConfig, series: &TimeSeries, seed: u64, label: String) -> RunRecord {
    let t0 = Instant::now();
    let attempt = || -> Result<(EvalReport, f64)> {
        let mut model = init_model(config, series, seed)?;
        let mut noise = Noise::new(RunSeeds::derive(seed).noise, config.esn.noise_scale);
        model.fit(series, Some(&mut noise))?;
        let fit = t0.elapsed().as_secs_f64();
        Ok((evaluate_model(&model, series, &config.task, Some(&mut noise))?, fit))
    };
    match attempt() {
        Ok((report, fit)) => {
            let mut timings = BTreeMap::new();
            timings.insert("train".into(), fit);
            timings.insert("total".into(), t0.elapsed().as_secs_f64());
            RunRecord {
                label,
                config_hash: config.hash(),
                seed,
                params: BTreeMap::new(),
                report,
                history: None,
                error: None,
                timings,
                version: VERSION.into(),
            }
        }
        Err(e) => failed_record(label, config, seed, &e),
    }
}

/// Runs the configuration over all repeat seeds.
pub fn baseline(config: &ExperimentConfig) -> Result<Results> {
    config.validate()?;
    let series = config.load_series()?;
    let seeds = repeat_seeds(&config.run);
    let records: Vec<RunRecord> = seeds
        .par_iter()
        .map(|&s| baseline_run(config, &series, s, format!("seed{s}")))
        .collect();
    let summary = Summary::of(&records, config.task.metric.key());
    Ok(Results {
        kind: RunKind::Baseline,
        config_hash: config.hash(),
        seeds,
        records,
        summaries: vec![(BTreeMap::new(), summary)],
    })
}

/// Cartesian-product grid; each cell is a baseline over the repeat seeds.
pub fn grid(config: &ExperimentConfig) -> Result<Results> {
    config.validate()?;
    if config.grid.is_none() {
        return Err(Error::config("grid needs a [grid] section with at least one parameter"));
    }
    let series = config.load_series()?;
    let seeds = repeat_seeds(&config.run);
    let cells = config.grid_cells();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let label = format!("cell{c}_seed{s}");
            let params = cells[c].clone();
            let cell_cfg = params
                .iter()
                .try_fold(config.clone(), |cfg, (k, &v)| cfg.with_esn_param(k, v));
            let mut rec = match cell_cfg {
                Ok(cell_cfg) => {
                    let mut r = baseline_run(&cell_cfg, &series, s, label);
                    r.config_hash = config.hash();
                    r
                }
                Err(e) => failed_record(label, config, s, &e),
            };
            rec.params = params;
            rec
        })
        .collect();
    let key = config.task.metric.key();
    let summaries = cells
        .iter()
        .map(|p| {
            let rs: Vec<RunRecord> = records.iter().filter(|r| &r.params == p).cloned().collect();
            (p.clone(), Summary::of(&rs, key))
        })
        .collect();
    Ok(Results {
        kind: RunKind::Grid,
        config_hash: config.hash(),
        seeds,
        records,
        summaries,
    })
}

/// A GA run bound to its configuration and seed.
pub struct Evolution {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub series: Arc<TimeSeries>,
    pub ctx: FitnessContext,
    pub state: GaState,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointMeta {
    config: ExperimentConfig,
    seed: u64,
}

impl Evolution {
    fn context(config: &ExperimentConfig, seed: u64) -> Result<(Arc<TimeSeries>, FitnessContext)> {
        config.validate()?;
        let ga = config
            .ga
            .as_ref()
            .ok_or_else(|| Error::config("evolve needs a [ga] section"))?;
        let series = config.load_series()?;
        let base = init_model(config, &series, seed)?;
        let ctx = FitnessContext::new(
            base,
            series.clone(),
            ga.fitness,
            ga.rescale_spectral_radius,
            ga.penalty,
            RunSeeds::derive(seed).fitness,
        )?;
        Ok((series, ctx))
    }

    /// Builds and evaluates generation 0.
    pub fn start(config: ExperimentConfig, seed: u64) -> Result<Self> {
        let (series, ctx) = Self::context(&config, seed)?;
        let ga = config.ga.as_ref().expect("validated");
        let state = init_population(ga, &ctx, RunSeeds::derive(seed).ga)?;
        Ok(Self {
            config,
            seed,
            series,
            ctx,
            state,
        })
    }

    pub fn restore(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let meta: CheckpointMeta =
            serde_json::from_value(ck.config).map_err(|e| Error::Load(format!("checkpoint config: {e}")))?;
        let (series, ctx) = Self::context(&meta.config, meta.seed)?;
        Ok(Self {
            config: meta.config,
            seed: meta.seed,
            series,
            ctx,
            state: ck.state,
        })
    }

    pub fn checkpoint(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            config: self.config.clone(),
            seed: self.seed,
        };
        save_checkpoint(
            path,
            &Checkpoint {
                config: serde_json::to_value(&meta)?,
                state: self.state.clone(),
            },
        )
    }

    /// Advances to `until` generations (capped by the config), writing a
    /// checkpoint to `checkpoint` every `run.checkpoint_every` generations.
    pub fn advance(&mut self, until: usize, checkpoint: Option<&Path>) -> Result<()> {
        let ga = self.config.ga.clone().expect("validated");
        let every = self.config.run.checkpoint_every;
        let meta = serde_json::to_value(CheckpointMeta {
            config: self.config.clone(),
            seed: self.seed,
        })?;
        run_ga(&mut self.state, &ga, &self.ctx, until, |st| {
            if let Some(path) = checkpoint {
                if every > 0 && st.generation % every == 0 {
                    save_checkpoint(
                        path,
                        &Checkpoint {
                            config: meta.clone(),
                            state: st.clone(),
                        },
                    )?;
                }
            }
            Ok(())
        })
    }

    pub fn finished(&self) -> bool {
        let ga = self.config.ga.as_ref().expect("validated");
        self.state.generation >= ga.generations || self.state.converged(ga)
    }

    pub fn best(&self) -> &Chromosome {
        &self.state.hall_of_fame.chromosome
    }

    /// Trains the hall-of-fame network and scores it on the test protocol.
    pub fn final_model(&self) -> Result<(EsnModel, EvalReport)> {
        let model = self.ctx.build_model(self.best())?;
        let mut noise = Noise::new(RunSeeds::derive(self.seed).noise, self.config.esn.noise_scale);
        let report = evaluate_model(&model, &self.series, &self.config.task, Some(&mut noise))?;
        Ok((model, report))
    }

    pub fn record(&self, report: EvalReport, error: Option<String>, elapsed: f64) -> RunRecord {
        let mut timings = BTreeMap::new();
        timings.insert(
            "evolution".into(),
            self.state.history.iter().map(|h| h.wall_time).sum::<f64>(),
        );
        timings.insert("total".into(), elapsed);
        let mut report = report;
        report.insert("fitness", self.state.best_fitness());
        RunRecord {
            label: format!("seed{}", self.seed),
            config_hash: self.config.hash(),
            seed: self.seed,
            params: BTreeMap::new(),
            report,
            history: Some(self.state.history.clone()),
            error,
            timings,
            version: VERSION.into(),
        }
    }
}

/// Runs or continues an evolution in `out`, stopping after `stop_after`
/// generations if given (the checkpoint then allows `resume`). Returns the
/// results once the GA has finished, `None` if stopped early.
fn drive(mut evo: Evolution, out: &Path, stop_after: Option<usize>) -> Result<Option<Results>> {
    let t0 = Instant::now();
    std::fs::create_dir_all(out)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let ga_gens = evo.config.ga.as_ref().expect("validated").generations;
    let until = stop_after.map_or(ga_gens, |s| s.min(ga_gens));
    evo.advance(until, Some(&ckpt))?;
    evo.checkpoint(&ckpt)?;
    if !evo.finished() {
        return Ok(None);
    }
    let record = match evo.final_model() {
        Ok((model, report)) => {
            model.save(&out.join(MODEL_FILE))?;
            evo.record(report, None, t0.elapsed().as_secs_f64())
        }
        Err(e) => {
            let report = EvalReport {
                diverged: true,
                ..Default::default()
            };
            evo.record(report, Some(e.to_string()), t0.elapsed().as_secs_f64())
        }
    };
    let summary = Summary::of(std::slice::from_ref(&record), evo.config.task.metric.key());
    let results = Results {
        kind: RunKind::Evolve,
        config_hash: evo.config.hash(),
        seeds: vec![evo.seed],
        records: vec![record],
        summaries: vec![(BTreeMap::new(), summary)],
    };
    write_results(out, &evo.config, &results)?;
    Ok(Some(results))
}

/// Evolves a reservoir from `config.run.seed` into `out`.
pub fn evolve(config: &ExperimentConfig, out: &Path, stop_after: Option<usize>) -> Result<Option<Results>> {
    let evo = Evolution::start(config.clone(), config.run.seed)?;
    drive(evo, out, stop_after)
}

/// Continues the evolution checkpointed in `out`.
pub fn resume(out: &Path, stop_after: Option<usize>) -> Result<Option<Results>> {
    let evo = Evolution::restore(&out.join(CHECKPOINT_FILE))?;
    drive(evo, out, stop_after)
}

/// Scores a saved model on the configured test protocol.
pub fn evaluate(config: &ExperimentConfig, model_path: &Path) -> Result<Results> {
    config.validate()?;
    let series = config.load_series()?;
    let model = EsnModel::load(model_path)?;
    let t0 = Instant::now();
    let mut noise = Noise::new(RunSeeds::derive(model.seed).noise, model.config.noise_scale);
    let seed = config.run.seed;
    let record = match evaluate_model(&model, &series, &config.task, Some(&mut noise)) {
        Ok(report) => {
            let mut timings = BTreeMap::new();
            timings.insert("total".into(), t0.elapsed().as_secs_f64());
            RunRecord {
                label: "evaluate".into(),
                config_hash: config.hash(),
                seed,
                params: BTreeMap::new(),
                report,
                history: None,
                error: None,
                timings,
                version: VERSION.into(),
            }
        }
        Err(e) => failed_record("evaluate".into(), config, seed, &e),
    };
    let summary = Summary::of(std::slice::from_ref(&record), config.task.metric.key());
    Ok(Results {
        kind: RunKind::Evaluate,
        config_hash: config.hash(),
        seeds: vec![seed],
        records: vec![record],
        summaries: vec![(BTreeMap::new(), summary)],
    })
}
