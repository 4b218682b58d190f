use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{decode, Chromosome};
use crate::error::{Error, Result};
use crate::esn::{rescale, train_readout, EsnModel, Noise};
use crate::metrics::{self, VarianceConvention};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMetric {
    /// Mean over windows of NRMSE over the whole free-run horizon.
    NrmseOverHorizon,
    /// NRMSE of the residual at the last free-run step, across windows.
    NrmseAtStep,
    /// NMSE of one-step-ahead predictions over the validation split.
    OneStepNmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessSpec {
    pub n_tasks: usize,
    pub horizon: usize,
    pub metric: FitnessMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessOutcome {
    pub value: f64,
    pub diverged: bool,
}

/// Everything a fitness evaluation reads. Immutable and shared across workers;
/// the validation windows and noise stream are fixed at construction so that
/// all individuals are compared on identical tasks.
#[derive(Debug, Clone)]
pub struct FitnessContext {
    /// Supplies W_in, W_fb, layout and hyperparameters; its W_h is replaced.
    pub base: EsnModel,
    pub series: Arc<TimeSeries>,
    pub spec: FitnessSpec,
    pub rescale: Option<f64>,
    pub penalty: f64,
    pub noise_seed: u64,
    windows: Vec<usize>,
    variance: f64,
}

impl FitnessContext {
    pub fn new(
        base: EsnModel,
        series: Arc<TimeSeries>,
        spec: FitnessSpec,
        rescale: Option<f64>,
        penalty: f64,
        seed: u64,
    ) -> Result<Self> {
        let splits = series.splits();
        let val = splits.validate_range();
        if val.is_empty() {
            return Err(Error::config("fitness needs a nonempty validation split"));
        }
        if splits.train == 0 {
            return Err(Error::config("fitness needs a nonempty training split"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let windows = match spec.metric {
            FitnessMetric::OneStepNmse => Vec::new(),
            _ => {
                if spec.horizon == 0 || spec.n_tasks == 0 {
                    return Err(Error::config("free-run fitness needs n_tasks >= 1 and horizon >= 1"));
                }
                if spec.horizon > val.len() {
                    return Err(Error::config(format!(
                        "horizon {} exceeds validation length {}",
                        spec.horizon,
                        val.len()
                    )));
                }
                let last = val.end - spec.horizon;
                (0..spec.n_tasks).map(|_| rng.random_range(val.start..=last)).collect()
            }
        };
        let raw = series.raw_component(0);
        let variance = metrics::variance(&raw[val.clone()], VarianceConvention::Population);
        if !(variance > 0.0) {
            return Err(Error::domain("validation targets have zero variance"));
        }
        let noise_seed = rng.random();
        Ok(Self {
            base,
            series,
            spec,
            rescale,
            penalty,
            noise_seed,
            windows,
            variance,
        })
    }

    /// Start steps of the free-run validation windows.
    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    fn noise(&self) -> Noise {
        Noise::new(self.noise_seed, self.base.config.noise_scale)
    }

    /// Decodes `alpha`, rescales, trains the readout; the returned model is
    /// ready for prediction.
    pub fn build_model(&self, alpha: &Chromosome) -> Result<EsnModel> {
        let mut reservoir = decode(alpha, self.base.layout())?;
        if let Some(target) = self.rescale {
            rescale(&mut reservoir, target)?;
        }
        let mut model = self.base.clone();
        model.set_reservoir(reservoir)?;
        let mut noise = self.noise();
        let traj = model.collect_states(&self.series, Some(&mut noise))?;
        model.w_out = Some(train_readout(&traj, model.config.ridge, model.config.readout)?);
        Ok(model)
    }

    fn try_evaluate(&self, alpha: &Chromosome) -> Result<f64> {
        let mut reservoir = decode(alpha, self.base.layout())?;
        if let Some(target) = self.rescale {
            rescale(&mut reservoir, target)?;
        }
        let mut model = self.base.clone();
        model.set_reservoir(reservoir)?;

        let series = &*self.series;
        let val = series.splits().validate_range();
        let tf = &self.base.config;
        let mut noise = self.noise();

        match self.spec.metric {
            FitnessMetric::OneStepNmse => {
                let traj = model.collect_states(series, Some(&mut noise))?;
                model.w_out = Some(train_readout(&traj, tf.ridge, tf.readout)?);
                let mut noise = self.noise();
                let preds = model.one_step(series, val.clone(), Some(&mut noise))?;
                let p: Vec<f64> = preds.iter().map(|y| series.transform.inverse(y[0])).collect();
                let t = &series.raw_component(0)[val];
                metrics::nmse_with_variance(t, &p, self.variance)
            }
            metric => {
                let snapshot_steps: Vec<usize> = self.windows.iter().map(|&s| s - 1).collect();
                let (traj, snaps) =
                    model.collect_with_snapshots(series, val.end, &snapshot_steps, Some(&mut noise))?;
                model.w_out = Some(train_readout(&traj, tf.ridge, tf.readout)?);
                let raw = series.raw_component(0);
                let h = self.spec.horizon;
                let mut per_window = Vec::with_capacity(self.windows.len());
                let mut runs = Vec::with_capacity(self.windows.len());
                for (&start, state) in self.windows.iter().zip(snaps) {
                    let preds = model.free_run(state, series.row(start - 1), h, None)?;
                    let p: Vec<f64> = preds.iter().map(|y| series.transform.inverse(y[0])).collect();
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numeric(start, "prediction left the transform domain"));
                    }
                    let t = raw[start..start + h].to_vec();
                    if metric == FitnessMetric::NrmseOverHorizon {
                        per_window.push(metrics::nrmse_over_horizon(&t, &p, h, self.variance)?);
                    }
                    runs.push((t, p));
                }
                match metric {
                    FitnessMetric::NrmseOverHorizon => Ok(metrics::mean(&per_window)),
                    _ => {
                        let refs: Vec<(&[f64], &[f64])> =
                            runs.iter().map(|(t, p)| (t.as_slice(), p.as_slice())).collect();
                        metrics::nrmse_at_step(&refs, h, self.variance)
                    }
                }
            }
        }
    }
}

/// Fitness of a chromosome (lower is better). Any numeric failure,
/// unscalable reservoir or error at or above the penalty yields the penalty
/// value instead of an error.
pub fn evaluate_fitness(alpha: &Chromosome, ctx: &FitnessContext) -> FitnessOutcome {
    match ctx.try_evaluate(alpha) {
        Ok(v) if v.is_finite() && v < ctx.penalty => FitnessOutcome {
            value: v,
            diverged: false,
        },
        _ => FitnessOutcome {
            value: ctx.penalty,
            diverged: true,
        },
    }
}
