use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::esn::{Activation, EsnConfig};
use crate::evo::{FitnessMetric, FitnessSpec, GaConfig};
use crate::metrics::VarianceConvention;
use crate::timeseries::{
    generate_lorenz, generate_mackey_glass, load_sunspots, LorenzParams, MgsParams, Splits, TimeSeries,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Mgs,
    Lorenz,
    Sunspot,
    /// Two-column `index,value` file.
    File,
}

/// How a trained model is scored on the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    /// Teacher-forced for `warmup` test steps, then `horizon` free-run steps.
    /// `step` selects the lookahead for the single-step NRMSE.
    FreeRun { warmup: usize, horizon: usize, step: usize },
    /// One-step-ahead prediction over the whole test split.
    OneStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMetric {
    /// NRMSE over the whole free-run horizon.
    Nrmse,
    /// NRMSE at the configured lookahead step.
    NrmseH,
    Nmse,
}

impl TestMetric {
    pub fn key(self) -> &'static str {
        match self {
            TestMetric::Nrmse => "nrmse",
            TestMetric::NrmseH => "nrmse_h",
            TestMetric::Nmse => "nmse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    /// Generated length (mgs, lorenz).
    pub len: Option<usize>,
    /// Input file (sunspot, file). Relative paths resolve against the
    /// working directory.
    pub path: Option<PathBuf>,
    /// Seed of the generated series (mgs history).
    #[serde(default)]
    pub data_seed: u64,
    /// Required except for sunspot, whose splits are fixed by the loader.
    pub splits: Option<Splits>,
    pub protocol: Protocol,
    pub metric: TestMetric,
    #[serde(default)]
    pub variance: VarianceConvention,
    pub mgs: Option<MgsParams>,
    pub lorenz: Option<LorenzParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Independent seeds `seed, seed + 1, ...` per configuration point.
    pub repeats: usize,
    /// Evolve: checkpoint every K generations.
    #[serde(default = "default_every")]
    pub checkpoint_every: usize,
}

fn default_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskConfig,
    pub esn: EsnConfig,
    pub ga: Option<GaConfig>,
    /// ESN field name -> values. Cells are the Cartesian product.
    pub grid: Option<BTreeMap<String, Vec<f64>>>,
    pub run: RunConfig,
}

/// ESN fields that may be gridded.
pub const GRID_KEYS: &[&str] = &[
    "units",
    "density",
    "spectral_radius",
    "reservoir_range",
    "input_scaling",
    "feedback_scaling",
    "input_bias",
    "leak_rate",
    "noise_scale",
    "ridge",
];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.esn.validate()?;
        if let Some(ga) = &self.ga {
            ga.validate()?;
        }
        if self.run.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                return Err(Error::config("grid section has no parameters"));
            }
            for (k, v) in grid {
                if !GRID_KEYS.contains(&k.as_str()) {
                    return Err(Error::config(format!(
                        "unknown grid parameter {k:?}; expected one of {GRID_KEYS:?}"
                    )));
                }
                if v.is_empty() {
                    return Err(Error::config(format!("grid for {k} is empty")));
                }
            }
        }
        match self.task.kind {
            TaskKind::Mgs | TaskKind::Lorenz if self.task.len.is_none() => {
                return Err(Error::config("generated tasks need task.len"))
            }
            TaskKind::Sunspot | TaskKind::File if self.task.path.is_none() => {
                return Err(Error::config("file tasks need task.path"))
            }
            _ => {}
        }
        if self.task.kind != TaskKind::Sunspot && self.task.splits.is_none() {
            return Err(Error::config("task.splits is required"));
        }
        match (self.task.protocol, self.task.metric) {
            (Protocol::OneStep, TestMetric::NrmseH) => {
                return Err(Error::config("nrmse_h needs the free_run protocol"))
            }
            (Protocol::FreeRun { horizon, step, .. }, _) if horizon == 0 || step == 0 || step > horizon => {
                return Err(Error::config("free run needs 1 <= step <= horizon"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Copy with one ESN field replaced, for grid cells.
    pub fn with_esn_param(&self, key: &str, value: f64) -> Result<Self> {
        if !GRID_KEYS.contains(&key) {
            return Err(Error::config(format!("unknown ESN parameter {key:?}")));
        }
        let mut json = serde_json::to_value(&self.esn)?;
        let v = if key == "units" {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::config(format!("units must be a positive integer, got {value}")));
            }
            serde_json::json!(value as u64)
        } else {
            serde_json::json!(value)
        };
        json[key] = v;
        let mut out = self.clone();
        out.esn = serde_json::from_value(json)?;
        out.esn.validate()?;
        Ok(out)
    }

    /// Grid cells in deterministic (key-sorted, last key fastest) order.
    pub fn grid_cells(&self) -> Vec<BTreeMap<String, f64>> {
        let mut cells = vec![BTreeMap::new()];
        if let Some(grid) = &self.grid {
            for (k, values) in grid {
                cells = cells
                    .into_iter()
                    .flat_map(|c| {
                        values.iter().map(move |&v| {
                            let mut c = c.clone();
                            c.insert(k.clone(), v);
                            c
                        })
                    })
                    .collect();
            }
        }
        cells
    }

    pub fn load_series(&self) -> Result<Arc<TimeSeries>> {
        let t = &self.task;
        let mut series = match t.kind {
            TaskKind::Mgs => generate_mackey_glass(&t.mgs.unwrap_or_default(), t.len.unwrap_or(0), t.data_seed)?,
            TaskKind::Lorenz => generate_lorenz(&t.lorenz.unwrap_or_default(), t.len.unwrap_or(0))?,
            TaskKind::Sunspot => load_sunspots(t.path.as_deref().unwrap_or(Path::new("")))?,
            TaskKind::File => TimeSeries::import_two_column(t.path.as_deref().unwrap_or(Path::new("")), 1.0)?,
        };
        if let Some(splits) = t.splits {
            series.set_splits(splits)?;
        }
        Ok(Arc::new(series))
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mgs" => Ok(mgs_preset()),
            "lorenz" => Ok(lorenz_preset()),
            "sunspot" => Ok(sunspot_preset()),
            _ => Err(Error::config(format!(
                "unknown preset {name:?}; expected mgs, lorenz or sunspot"
            ))),
        }
    }
}

fn mgs_preset() -> ExperimentConfig {
    ExperimentConfig {
        name: "mgs".into(),
        task: TaskConfig {
            kind: TaskKind::Mgs,
            len: Some(7084),
            path: None,
            data_seed: 0,
            splits: Some(Splits::new(1000, 3000, 1000, 2084)),
            protocol: Protocol::FreeRun {
                warmup: 2000,
                horizon: 84,
                step: 84,
            },
            metric: TestMetric::Nrmse,
            variance: VarianceConvention::Population,
            mgs: Some(MgsParams::default()),
            lorenz: None,
        },
        esn: EsnConfig {
            units: 1000,
            density: 0.2,
            spectral_radius: Some(0.8),
            reservoir_range: 1.0,
            input_scaling: 1.0,
            feedback_scaling: None,
            autoregressive: true,
            input_bias: Some(0.2),
            leak_rate: 1.0,
            noise_scale: 1e-10,
            noise_in_free_run: false,
            activation: Activation::Tanh,
            readout: Activation::Identity,
            ridge: 1e-9,
        },
        ga: Some(GaConfig {
            population_size: 20,
            generations: 70,
            tournament_size: 3,
            crossover_prob: 0.5,
            mutation_prob: 0.15,
            mutation_sigma: None,
            mutation_gene_prob: 1.0,
            coefficients: 500,
            rescale_spectral_radius: Some(0.8),
            fitness: FitnessSpec {
                n_tasks: 12,
                horizon: 300,
                metric: FitnessMetric::NrmseOverHorizon,
            },
            penalty: 1e6,
            stall_generations: 25,
            stall_tolerance: 1e-6,
            elitism: false,
        }),
        grid: None,
        run: RunConfig {
            seed: 1,
            repeats: 20,
            checkpoint_every: 10,
        },
    }
}

fn lorenz_preset() -> ExperimentConfig {
    ExperimentConfig {
        name: "lorenz".into(),
        task: TaskConfig {
            kind: TaskKind::Lorenz,
            len: Some(9600),
            path: None,
            data_seed: 0,
            splits: Some(Splits::new(1000, 6000, 1000, 1600)),
            protocol: Protocol::FreeRun {
                warmup: 1000,
                horizon: 600,
                step: 84,
            },
            metric: TestMetric::NrmseH,
            variance: VarianceConvention::Population,
            mgs: None,
            lorenz: Some(LorenzParams::default()),
        },
        esn: EsnConfig {
            units: 600,
            density: 0.2,
            spectral_radius: Some(0.97),
            reservoir_range: 1.0,
            input_scaling: 1.0,
            feedback_scaling: Some(4.0),
            autoregressive: false,
            input_bias: Some(0.2),
            leak_rate: 1.0,
            noise_scale: 1e-7,
            noise_in_free_run: false,
            activation: Activation::Tanh,
            readout: Activation::Identity,
            ridge: 1e-6,
        },
        ga: Some(GaConfig {
            population_size: 20,
            generations: 70,
            tournament_size: 3,
            crossover_prob: 0.5,
            mutation_prob: 0.15,
            mutation_sigma: None,
            mutation_gene_prob: 1.0,
            coefficients: 150,
            rescale_spectral_radius: Some(0.97),
            fitness: FitnessSpec {
                n_tasks: 12,
                horizon: 84,
                metric: FitnessMetric::NrmseAtStep,
            },
            penalty: 1e6,
            stall_generations: 25,
            stall_tolerance: 1e-6,
            elitism: false,
        }),
        grid: None,
        run: RunConfig {
            seed: 1,
            repeats: 10,
            checkpoint_every: 10,
        },
    }
}

/// Default location of the bundled monthly sunspot file, relative to the
/// repository root.
pub const SUNSPOT_FILE: &str = "data/sunspot_month_1749_2013.csv";

fn sunspot_preset() -> ExperimentConfig {
    ExperimentConfig {
        name: "sunspot".into(),
        task: TaskConfig {
            kind: TaskKind::Sunspot,
            len: None,
            path: Some(SUNSPOT_FILE.into()),
            data_seed: 0,
            splits: None,
            protocol: Protocol::OneStep,
            metric: TestMetric::Nmse,
            variance: VarianceConvention::Population,
            mgs: None,
            lorenz: None,
        },
        esn: EsnConfig {
            units: 200,
            density: 0.2,
            spectral_radius: Some(0.5),
            reservoir_range: 1.0,
            input_scaling: 0.1,
            feedback_scaling: None,
            autoregressive: true,
            input_bias: Some(0.2),
            leak_rate: 0.7,
            noise_scale: 0.0,
            noise_in_free_run: false,
            activation: Activation::Tanh,
            readout: Activation::Identity,
            ridge: 1e-5,
        },
        ga: Some(GaConfig {
            population_size: 20,
            generations: 150,
            tournament_size: 3,
            crossover_prob: 0.5,
            mutation_prob: 0.15,
            mutation_sigma: None,
            mutation_gene_prob: 1.0,
            coefficients: 50,
            rescale_spectral_radius: Some(0.5),
            fitness: FitnessSpec {
                n_tasks: 1,
                horizon: 1,
                metric: FitnessMetric::OneStepNmse,
            },
            penalty: 1e6,
            stall_generations: 25,
            stall_tolerance: 1e-6,
            elitism: false,
        }),
        grid: None,
        run: RunConfig {
            seed: 1,
            repeats: 50,
            checkpoint_every: 10,
        },
    }
}
