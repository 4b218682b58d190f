//! Echo state network: reservoir recurrence, teacher forcing, free run and
//! ridge-regression readout.
//!
//! Inputs are assembled per step as `u(t) = [y(t-1) if autoregressive; bias]`.
//! With feedback enabled the previous output also enters through `W_fb`.
//! During teacher forcing `y(t-1)` is the true series value; in free run it is
//! the model's own previous prediction. The initial state is the zero vector.

mod readout;
mod spectral;

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use readout::{design_matrix, readout_targets, train_readout};
pub use spectral::spectral_radius;

use crate::error::{Error, Result};
use crate::layout::{ReservoirLayout, SparseReservoir};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }
}

/// Reservoir hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsnConfig {
    pub units: usize,
    pub density: f64,
    /// Rescale W_h to this spectral radius after sampling.
    pub spectral_radius: Option<f64>,
    /// W_h entries are drawn from U(-range, range) before rescaling.
    #[serde(default = "one")]
    pub reservoir_range: f64,
    /// W_in entries are drawn from U(-s, s).
    pub input_scaling: f64,
    /// W_fb entries are drawn from U(-s, s); `None` disables feedback.
    pub feedback_scaling: Option<f64>,
    /// Feed the previous series value as input.
    pub autoregressive: bool,
    /// Constant extra input channel.
    pub input_bias: Option<f64>,
    pub leak_rate: f64,
    /// Uniform noise in (-s, s) inside the activation.
    pub noise_scale: f64,
    #[serde(default)]
    pub noise_in_free_run: bool,
    pub activation: Activation,
    pub readout: Activation,
    pub ridge: f64,
}

fn one() -> f64 {
    1.0
}

impl EsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.units == 0 {
            return Err(Error::config("reservoir needs at least one unit"));
        }
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return Err(Error::config(format!("leak rate {} outside (0, 1]", self.leak_rate)));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::config("noise scale must be nonnegative"));
        }
        if let Some(r) = self.spectral_radius {
            if !(r > 0.0) {
                return Err(Error::config("target spectral radius must be positive"));
            }
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::config("ridge parameter must be nonnegative"));
        }
        Ok(())
    }
}

/// Per-step noise source, uniform in `(-scale, scale)`.
#[derive(Debug, Clone)]
pub struct Noise {
    rng: ChaCha8Rng,
    scale: f64,
}

impl Noise {
    pub fn new(seed: u64, scale: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale,
        }
    }

    pub fn fill(&mut self, buf: &mut [f64]) {
        if self.scale == 0.0 {
            buf.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        for v in buf.iter_mut() {
            *v = self.scale * self.rng.random_range(-1.0..1.0);
        }
    }
}

/// Teacher-forced states over the training split (washout discarded).
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    /// T x N
    pub states: DMatrix<f64>,
    /// T x n
    pub inputs: DMatrix<f64>,
    /// T x L
    pub targets: DMatrix<f64>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnModel {
    pub config: EsnConfig,
    pub output_dim: usize,
    /// N x n
    pub w_in: DMatrix<f64>,
    pub reservoir: SparseReservoir,
    /// N x L
    pub w_fb: Option<DMatrix<f64>>,
    /// L x (n + N)
    pub w_out: Option<DMatrix<f64>>,
    pub seed: u64,
}

/// Samples W_h on `layout` from U(-range, range) and optionally rescales it.
pub fn sample_reservoir<R: Rng + ?Sized>(
    layout: &Arc<ReservoirLayout>,
    range: f64,
    target_radius: Option<f64>,
    rng: &mut R,
) -> Result<SparseReservoir> {
    if layout.is_empty() {
        return Err(Error::Init(
            "layout has no unfrozen weights; the zero reservoir cannot be scaled".into(),
        ));
    }
    let values = (0..layout.len()).map(|_| rng.random_range(-range..range)).collect();
    let mut w = SparseReservoir::new(layout.clone(), values)?;
    if let Some(target) = target_radius {
        rescale(&mut w, target)?;
    }
    Ok(w)
}

/// Multiplies W_h by `target / rho(W_h)`. Returns the radius before scaling.
pub fn rescale(w: &mut SparseReservoir, target: f64) -> Result<f64> {
    let rho = spectral_radius(&w.to_dense())?;
    if rho == 0.0 {
        return Err(Error::Init("spectral radius is zero; cannot rescale".into()));
    }
    w.scale(target / rho);
    Ok(rho)
}

impl EsnModel {
    /// Samples W_in, W_h (on `layout`) and W_fb in that order from `seed`.
    pub fn init(
        layout: Arc<ReservoirLayout>,
        config: &EsnConfig,
        output_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if layout.units() != config.units {
            return Err(Error::dim(format!(
                "layout has {} units, config asks for {}",
                layout.units(),
                config.units
            )));
        }
        if output_dim == 0 {
            return Err(Error::config("output dimension must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.units;
        let n_in = input_dim(config, output_dim);
        let s = config.input_scaling;
        let w_in = DMatrix::from_fn(n, n_in, |_, _| if s > 0.0 { rng.random_range(-s..s) } else { 0.0 });
        let reservoir = sample_reservoir(&layout, config.reservoir_range, config.spectral_radius, &mut rng)?;
        let w_fb = config
            .feedback_scaling
            .map(|f| DMatrix::from_fn(n, output_dim, |_, _| if f > 0.0 { rng.random_range(-f..f) } else { 0.0 }));
        Ok(Self {
            config: config.clone(),
            output_dim,
            w_in,
            reservoir,
            w_fb,
            w_out: None,
            seed,
        })
    }

    pub fn units(&self) -> usize {
        self.config.units
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn layout(&self) -> &Arc<ReservoirLayout> {
        self.reservoir.layout()
    }

    /// Replaces W_h; the new matrix must live on the same layout.
    pub fn set_reservoir(&mut self, reservoir: SparseReservoir) -> Result<()> {
        if reservoir.layout() != self.reservoir.layout() {
            return Err(Error::dim("replacement reservoir uses a different layout"));
        }
        self.reservoir = reservoir;
        self.w_out = None;
        Ok(())
    }

    /// `u(t)` given the previous series value.
    pub fn input_vector(&self, prev: &[f64], out: &mut Vec<f64>) {
        out.clear();
        if self.config.autoregressive {
            out.extend_from_slice(prev);
        }
        if let Some(b) = self.config.input_bias {
            out.push(b);
        }
    }

    /// One application of the state recurrence.
    pub fn step(
        &self,
        x_prev: &[f64],
        u: &[f64],
        y_prev: Option<&[f64]>,
        noise: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let n = self.units();
        if x_prev.len() != n || u.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "state {} (want {n}), input {} (want {})",
                x_prev.len(),
                u.len(),
                self.input_dim()
            )));
        }
        if let (Some(y), Some(_)) = (y_prev, &self.w_fb) {
            if y.len() != self.output_dim {
                return Err(Error::dim("feedback vector has wrong length"));
            }
        }
        if noise.is_some_and(|e| e.len() != n) {
            return Err(Error::dim("noise vector has wrong length"));
        }
        let mut out = vec![0.0; n];
        self.step_into(x_prev, u, y_prev, noise, &mut out);
        Ok(out)
    }

    fn step_into(
        &self,
        x_prev: &[f64],
        u: &[f64],
        y_prev: Option<&[f64]>,
        noise: Option<&[f64]>,
        out: &mut [f64],
    ) {
        let n = self.units();
        match noise {
            Some(e) => out.copy_from_slice(e),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
        for (k, &uk) in u.iter().enumerate() {
            let col = self.w_in.column(k);
            for i in 0..n {
                out[i] += col[i] * uk;
            }
        }
        if let (Some(w_fb), Some(y)) = (&self.w_fb, y_prev) {
            for (k, &yk) in y.iter().enumerate() {
                let col = w_fb.column(k);
                for i in 0..n {
                    out[i] += col[i] * yk;
                }
            }
        }
        self.reservoir.mul_add(x_prev, out);
        let a = self.config.leak_rate;
        let f = self.config.activation;
        if a == 1.0 {
            out.iter_mut().for_each(|v| *v = f.apply(*v));
        } else {
            for (o, &x) in out.iter_mut().zip(x_prev) {
                *o = (1.0 - a) * x + a * f.apply(*o);
            }
        }
    }

    /// `y = g(W_out [u; x])`.
    pub fn output(&self, u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let w = self
            .w_out
            .as_ref()
            .ok_or_else(|| Error::config("readout has not been trained"))?;
        let n_in = u.len();
        Ok((0..self.output_dim)
            .map(|l| {
                let row = w.row(l);
                let mut acc = 0.0;
                for (k, &v) in u.iter().enumerate() {
                    acc += row[k] * v;
                }
                for (k, &v) in x.iter().enumerate() {
                    acc += row[n_in + k] * v;
                }
                self.config.readout.apply(acc)
            })
            .collect())
    }

    /// Drives the reservoir with true values for steps `0..end`, starting
    /// from the zero state. `visit(t, u, x)` sees every post-update state.
    /// Returns the final state `x(end - 1)`.
    pub fn teacher_forced<F>(
        &self,
        series: &TimeSeries,
        end: usize,
        mut noise: Option<&mut Noise>,
        mut visit: F,
    ) -> Result<Vec<f64>>
    where
        F: FnMut(usize, &[f64], &[f64]) -> Result<()>,
    {
        if series.dim() != self.output_dim {
            return Err(Error::dim(format!(
                "series has dimension {}, model outputs {}",
                series.dim(),
                self.output_dim
            )));
        }
        if end > series.len() {
            return Err(Error::dim("teacher forcing past the end of the series"));
        }
        let n = self.units();
        let zeros = vec![0.0; self.output_dim];
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut eps = vec![0.0; n];
        let mut u = Vec::with_capacity(self.input_dim());
        for t in 0..end {
            let prev = if t == 0 { &zeros[..] } else { series.row(t - 1) };
            self.input_vector(prev, &mut u);
            let e = match noise.as_deref_mut() {
                Some(src) => {
                    src.fill(&mut eps);
                    Some(&eps[..])
                }
                None => None,
            };
            self.step_into(&x, &u, Some(prev), e, &mut next);
            std::mem::swap(&mut x, &mut next);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(t, "reservoir state became non-finite"));
            }
            visit(t, &u, &x)?;
        }
        Ok(x)
    }

    /// States over washout + train with teacher forcing; washout rows dropped.
    pub fn collect_states(&self, series: &TimeSeries, noise: Option<&mut Noise>) -> Result<StateTrajectory> {
        let end = series.splits().train_range().end;
        Ok(self.collect_with_snapshots(series, end, &[], noise)?.0)
    }

    /// Like [`EsnModel::collect_states`] but keeps driving until `end` and also
    /// returns the states `x(t)` for every `t` in `snapshots`.
    pub fn collect_with_snapshots(
        &self,
        series: &TimeSeries,
        end: usize,
        snapshots: &[usize],
        noise: Option<&mut Noise>,
    ) -> Result<(StateTrajectory, Vec<Vec<f64>>)> {
        let range = series.splits().train_range();
        if end < range.end {
            return Err(Error::config("collection must cover the training split"));
        }
        if let Some(&s) = snapshots.iter().find(|&&s| s >= end) {
            return Err(Error::config(format!("snapshot step {s} beyond collection end {end}")));
        }
        let (t_len, n, n_in, l) = (range.len(), self.units(), self.input_dim(), self.output_dim);
        let mut states = DMatrix::zeros(t_len, n);
        let mut inputs = DMatrix::zeros(t_len, n_in);
        let mut targets = DMatrix::zeros(t_len, l);
        let mut snaps = vec![Vec::new(); snapshots.len()];
        self.teacher_forced(series, end, noise, |t, u, x| {
            if range.contains(&t) {
                let r = t - range.start;
                for (k, &v) in x.iter().enumerate() {
                    states[(r, k)] = v;
                }
                for (k, &v) in u.iter().enumerate() {
                    inputs[(r, k)] = v;
                }
                for (k, &v) in series.row(t).iter().enumerate() {
                    targets[(r, k)] = v;
                }
            }
            for (i, &s) in snapshots.iter().enumerate() {
                if s == t {
                    snaps[i] = x.to_vec();
                }
            }
            Ok(())
        })?;
        let traj = StateTrajectory {
            states,
            inputs,
            targets,
        };
        Ok((traj, snaps))
    }

    /// Collects training states and fits W_out.
    pub fn fit(&mut self, series: &TimeSeries, noise: Option<&mut Noise>) -> Result<()> {
        let traj = self.collect_states(series, noise)?;
        self.w_out = Some(train_readout(&traj, self.config.ridge, self.config.readout)?);
        Ok(())
    }

    /// Autonomous run: starting from `state = x(start - 1)` and the last true
    /// value `last = y(start - 1)`, predicts `y(start .. start + horizon)`.
    pub fn free_run(
        &self,
        mut state: Vec<f64>,
        last: &[f64],
        horizon: usize,
        mut noise: Option<&mut Noise>,
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.units();
        let mut next = vec![0.0; n];
        let mut eps = vec![0.0; n];
        let mut u = Vec::with_capacity(self.input_dim());
        let mut prev = last.to_vec();
        let mut preds = Vec::with_capacity(horizon);
        for h in 0..horizon {
            self.input_vector(&prev, &mut u);
            let e = match noise.as_deref_mut() {
                Some(src) => {
                    src.fill(&mut eps);
                    Some(&eps[..])
                }
                None => None,
            };
            self.step_into(&state, &u, Some(&prev), e, &mut next);
            std::mem::swap(&mut state, &mut next);
            let y = self.output(&u, &state)?;
            if y.iter().chain(state.iter()).any(|v| !v.is_finite()) {
                return Err(Error::numeric(h, "free-run prediction became non-finite"));
            }
            prev.clone_from(&y);
            preds.push(y);
        }
        Ok(preds)
    }

    /// Teacher-forced warm-up over `0..warmup_end`, then `horizon` free-run
    /// steps. Returns the free-run predictions.
    pub fn predict(
        &self,
        series: &TimeSeries,
        warmup_end: usize,
        horizon: usize,
        mut noise: Option<&mut Noise>,
    ) -> Result<Vec<Vec<f64>>> {
        if warmup_end == 0 {
            return Err(Error::config("free run needs at least one teacher-forced step"));
        }
        let state = self.teacher_forced(series, warmup_end, noise.as_deref_mut(), |_, _, _| Ok(()))?;
        let free_noise = if self.config.noise_in_free_run { noise } else { None };
        self.free_run(state, series.row(warmup_end - 1), horizon, free_noise)
    }

    /// One-step-ahead predictions for every `t` in `range` under teacher forcing.
    pub fn one_step(
        &self,
        series: &TimeSeries,
        range: std::ops::Range<usize>,
        noise: Option<&mut Noise>,
    ) -> Result<Vec<Vec<f64>>> {
        let mut preds = Vec::with_capacity(range.len());
        self.teacher_forced(series, range.end, noise, |t, u, x| {
            if t >= range.start {
                let y = self.output(u, x)?;
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::numeric(t, "prediction became non-finite"));
                }
                preds.push(y);
            }
            Ok(())
        })?;
        Ok(preds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        std::fs::write(path, serde_json::to_vec(&doc)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let doc: ModelFile =
            serde_json::from_slice(&bytes).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Load(format!(
                "unsupported model file {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                doc.format, doc.version
            )));
        }
        Ok(doc.model)
    }
}

const MODEL_FORMAT: &str = "evoesn-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: EsnModel,
}

pub(crate) fn input_dim(config: &EsnConfig, output_dim: usize) -> usize {
    (if config.autoregressive { output_dim } else { 0 }) + usize::from(config.input_bias.is_some())
}
