//! Error measures: NRMSE over a horizon, NRMSE at a single lookahead step,
//! NMSE, MSE and absolute error traces.
//!
//! All normalized errors divide by the variance of a reference target signal,
//! which callers pass explicitly (usually the whole test-region target).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64], convention: VarianceConvention) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    match convention {
        VarianceConvention::Population => ss / n as f64,
        VarianceConvention::Sample if n > 1 => ss / (n - 1) as f64,
        VarianceConvention::Sample => 0.0,
    }
}

fn check_variance(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::domain(format!("normalization variance must be positive, got {v}")));
    }
    Ok(())
}

pub fn mse(targets: &[f64], predictions: &[f64]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::dim("targets and predictions differ in length"));
    }
    if targets.is_empty() {
        return Err(Error::domain("mean squared error of an empty sequence"));
    }
    Ok(targets
        .iter()
        .zip(predictions)
        .map(|(t, p)| (t - p) * (t - p))
        .sum::<f64>()
        / targets.len() as f64)
}

/// `sqrt(mean_{t < H}(target - pred)^2 / variance)`.
pub fn nrmse_over_horizon(targets: &[f64], predictions: &[f64], horizon: usize, variance: f64) -> Result<f64> {
    check_variance(variance)?;
    if horizon == 0 || targets.len() < horizon || predictions.len() < horizon {
        return Err(Error::domain(format!(
            "horizon {horizon} needs at least that many targets and predictions"
        )));
    }
    Ok((mse(&targets[..horizon], &predictions[..horizon])? / variance).sqrt())
}

/// NRMSE using only the residual at the `H`-th free-run step (1-based),
/// averaged over runs: `sqrt(mean_runs (target_H - pred_H)^2 / variance)`.
pub fn nrmse_at_step(runs: &[(&[f64], &[f64])], horizon: usize, variance: f64) -> Result<f64> {
    check_variance(variance)?;
    if runs.is_empty() || horizon == 0 {
        return Err(Error::domain("need at least one run and H >= 1"));
    }
    let mut acc = 0.0;
    for (t, p) in runs {
        if t.len() < horizon || p.len() < horizon {
            return Err(Error::domain(format!("run shorter than H = {horizon}")));
        }
        let r = t[horizon - 1] - p[horizon - 1];
        acc += r * r;
    }
    Ok((acc / runs.len() as f64 / variance).sqrt())
}

/// Mean squared residual over the variance of `targets`.
pub fn nmse(targets: &[f64], predictions: &[f64]) -> Result<f64> {
    let v = variance(targets, VarianceConvention::Population);
    nmse_with_variance(targets, predictions, v)
}

pub fn nmse_with_variance(targets: &[f64], predictions: &[f64], variance: f64) -> Result<f64> {
    check_variance(variance)?;
    Ok(mse(targets, predictions)? / variance)
}

pub fn absolute_error_trace(targets: &[f64], predictions: &[f64]) -> Result<Vec<f64>> {
    if targets.len() != predictions.len() {
        return Err(Error::dim("targets and predictions differ in length"));
    }
    Ok(targets.iter().zip(predictions).map(|(t, p)| (t - p).abs()).collect())
}

pub fn log10_trace(trace: &[f64]) -> Vec<f64> {
    trace.iter().map(|v| v.log10()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub max: f64,
    pub mean: f64,
}

pub fn summarize_trace(trace: &[f64]) -> TraceSummary {
    TraceSummary {
        max: trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean: mean(trace),
    }
}

/// Metrics for one evaluation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    /// target - prediction per step (original units).
    pub residuals: Vec<f64>,
    pub horizon: usize,
    pub variance: f64,
    #[serde(default)]
    pub diverged: bool,
}

impl EvalReport {
    pub fn insert(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
        if value > 0.0 {
            self.metrics.insert(format!("log10_{name}"), value.log10());
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn abs_trace(&self) -> Vec<f64> {
        self.residuals.iter().map(|r| r.abs()).collect()
    }
}
