//! Benchmark series: Mackey-Glass, Lorenz (x coordinate) and monthly sunspots.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split lengths, consecutive from the start of the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub washout: usize,
    pub train: usize,
    pub validate: usize,
    pub test: usize,
}

impl Splits {
    pub fn new(washout: usize, train: usize, validate: usize, test: usize) -> Self {
        Self {
            washout,
            train,
            validate,
            test,
        }
    }

    pub fn total(&self) -> usize {
        self.washout + self.train + self.validate + self.test
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        self.washout..self.washout + self.train
    }

    pub fn validate_range(&self) -> std::ops::Range<usize> {
        let s = self.washout + self.train;
        s..s + self.validate
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        let s = self.washout + self.train + self.validate;
        s..s + self.test
    }
}

/// Normalization applied to raw values; stored = forward(raw).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    /// stored = raw * scale + shift
    Affine { scale: f64, shift: f64 },
    /// stored = tanh(raw - shift)
    Squash { shift: f64 },
}

impl Transform {
    pub fn forward(&self, raw: f64) -> f64 {
        match *self {
            Transform::Identity => raw,
            Transform::Affine { scale, shift } => raw * scale + shift,
            Transform::Squash { shift } => (raw - shift).tanh(),
        }
    }

    pub fn inverse(&self, stored: f64) -> f64 {
        match *self {
            Transform::Identity => stored,
            Transform::Affine { scale, shift } => (stored - shift) / scale,
            Transform::Squash { shift } => stored.atanh() + shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    dim: usize,
    /// Row-major, `len * dim` entries, in transformed (model) space.
    values: Vec<f64>,
    pub dt: f64,
    splits: Splits,
    pub transform: Transform,
}

impl TimeSeries {
    pub fn new(dim: usize, values: Vec<f64>, dt: f64, transform: Transform) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("series dimension must be at least 1"));
        }
        if values.len() % dim != 0 {
            return Err(Error::dim(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(i / dim, "non-finite series value"));
        }
        Ok(Self {
            dim,
            values,
            dt,
            splits: Splits::default(),
            transform,
        })
    }

    pub fn scalar(values: Vec<f64>, dt: f64) -> Result<Self> {
        Self::new(1, values, dt, Transform::Identity)
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        self.set_splits(splits)?;
        Ok(self)
    }

    pub fn set_splits(&mut self, splits: Splits) -> Result<()> {
        if splits.total() > self.len() {
            return Err(Error::config(format!(
                "splits need {} points, series has {}",
                splits.total(),
                self.len()
            )));
        }
        self.splits = splits;
        Ok(())
    }

    pub fn splits(&self) -> Splits {
        self.splits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    /// Component `c` in original units.
    pub fn raw_component(&self, c: usize) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.transform.inverse(self.values[t * self.dim + c]))
            .collect()
    }

    pub fn raw_values(&self) -> Vec<f64> {
        self.values.iter().map(|&v| self.transform.inverse(v)).collect()
    }

    /// Replaces the transform, re-expressing stored values under the new one.
    pub fn retransform(&mut self, transform: Transform) -> Result<()> {
        let values: Vec<f64> = self
            .values
            .iter()
            .map(|&v| transform.forward(self.transform.inverse(v)))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(i / self.dim, "transform produced a non-finite value"));
        }
        self.values = values;
        self.transform = transform;
        Ok(())
    }

    /// Writes `index,value` rows (original units, first component).
    pub fn export_two_column(&self, path: &Path) -> Result<()> {
        let mut out = String::from("index,value\n");
        for (i, v) in self.raw_component(0).iter().enumerate() {
            writeln!(out, "{i},{v:?}").unwrap();
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Reads a file written by [`TimeSeries::export_two_column`].
    pub fn import_two_column(path: &Path, dt: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("index")) {
                continue;
            }
            let mut cols = line.split([',', ';', '\t']);
            let (_, v) = (cols.next(), cols.next());
            let v: f64 = v
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: n + 1,
                    msg: format!("expected `index,value`, got {line:?}"),
                })?;
            values.push(v);
        }
        Self::scalar(values, dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum History {
    /// i.i.d. uniform values in (0, 1.3) drawn from the generator seed.
    Uniform,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgsParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub integration_step: f64,
    pub subsample: usize,
    pub integrator: Integrator,
    pub history: History,
    /// Discarded transient, in multiples of tau.
    pub transient_taus: f64,
    /// Apply tanh(y - 1) squashing.
    pub squash: bool,
}

impl Default for MgsParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 10.0,
            gamma: 0.1,
            tau: 17.0,
            integration_step: 0.1,
            subsample: 10,
            integrator: Integrator::Euler,
            history: History::Uniform,
            transient_taus: 10.0,
            squash: false,
        }
    }
}

impl MgsParams {
    fn delay_steps(&self) -> Result<usize> {
        if !(self.tau > 0.0) || !(self.integration_step > 0.0) {
            return Err(Error::config("tau and integration_step must be positive"));
        }
        if self.subsample == 0 {
            return Err(Error::config("subsample must be positive"));
        }
        let ratio = self.tau / self.integration_step;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(format!(
                "tau = {} is not a multiple of integration_step = {}",
                self.tau, self.integration_step
            )));
        }
        let sample_dt = self.subsample as f64 * self.integration_step;
        if (sample_dt - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "subsample * integration_step must be 1.0, got {sample_dt}"
            )));
        }
        Ok(steps as usize)
    }

    fn rhs(&self, y: f64, delayed: f64) -> f64 {
        self.alpha * delayed / (1.0 + delayed.powf(self.beta)) - self.gamma * y
    }
}

/// Integrates the Mackey-Glass delay equation and samples it at unit time.
pub fn generate_mackey_glass(params: &MgsParams, total_len: usize, seed: u64) -> Result<TimeSeries> {
    if total_len == 0 {
        return Err(Error::config("total_len must be positive"));
    }
    let delay = params.delay_steps()?;
    let h = params.integration_step;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // ring[k % (delay + 1)] holds y at step k; the slot about to be overwritten
    // is y(t - tau).
    let cap = delay + 1;
    let mut ring: Vec<f64> = (0..cap)
        .map(|_| match params.history {
            History::Uniform => rng.random_range(0.0..1.3),
            History::Constant(c) => c,
        })
        .collect();
    let mut k = delay; // index of the current value
    let transient = (params.transient_taus * params.tau / h).ceil() as usize;
    let total_steps = transient + (total_len - 1) * params.subsample;

    let mut out = Vec::with_capacity(total_len);
    for step in 0..=total_steps {
        if step >= transient && (step - transient) % params.subsample == 0 {
            out.push(ring[k % cap]);
            if out.len() == total_len {
                break;
            }
        }
        let y = ring[k % cap];
        let lag = ring[(k + 1) % cap];
        let next = match params.integrator {
            Integrator::Euler => y + h * params.rhs(y, lag),
            Integrator::Rk4 => {
                // delayed value at the half step: linear interpolation
                let lag_next = ring[(k + 2) % cap];
                let lag_mid = if delay >= 1 { 0.5 * (lag + lag_next) } else { lag };
                let lag_end = if delay >= 1 { lag_next } else { lag };
                let k1 = params.rhs(y, lag);
                let k2 = params.rhs(y + 0.5 * h * k1, lag_mid);
                let k3 = params.rhs(y + 0.5 * h * k2, lag_mid);
                let k4 = params.rhs(y + h * k3, lag_end);
                y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            }
        };
        if !next.is_finite() {
            return Err(Error::numeric(step, "Mackey-Glass integration diverged"));
        }
        k += 1;
        ring[k % cap] = next;
    }

    let (values, transform) = if params.squash {
        let t = Transform::Squash { shift: 1.0 };
        (out.iter().map(|&v| t.forward(v)).collect(), t)
    } else {
        (out, Transform::Identity)
    };
    TimeSeries::new(1, values, 1.0, transform)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub r: f64,
    pub b: f64,
    pub step: f64,
    pub initial_state: [f64; 3],
    pub transient_steps: usize,
    /// Stored values are `x * scale`.
    pub scale: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            r: 28.0,
            b: 8.0 / 3.0,
            step: 0.01,
            initial_state: [1.0, 1.0, 1.0],
            transient_steps: 1000,
            scale: 0.01,
        }
    }
}

impl LorenzParams {
    fn deriv(&self, s: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (s[1] - s[0]),
            self.r * s[0] - s[1] - s[0] * s[2],
            s[0] * s[1] - self.b * s[2],
        ]
    }

    /// One classical RK4 step.
    pub fn rk4_step(&self, s: [f64; 3]) -> [f64; 3] {
        let h = self.step;
        let add = |a: [f64; 3], d: [f64; 3], f: f64| [a[0] + f * d[0], a[1] + f * d[1], a[2] + f * d[2]];
        let k1 = self.deriv(s);
        let k2 = self.deriv(add(s, k1, 0.5 * h));
        let k3 = self.deriv(add(s, k2, 0.5 * h));
        let k4 = self.deriv(add(s, k3, h));
        std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }
}

/// x coordinate of the Lorenz system, one sample per `step`, scaled.
pub fn generate_lorenz(params: &LorenzParams, total_len: usize) -> Result<TimeSeries> {
    if total_len == 0 {
        return Err(Error::config("total_len must be positive"));
    }
    if !(params.step > 0.0) {
        return Err(Error::config("Lorenz step must be positive"));
    }
    let mut state = params.initial_state;
    for i in 0..params.transient_steps {
        state = params.rk4_step(state);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(i, "Lorenz integration diverged"));
        }
    }
    let mut xs = Vec::with_capacity(total_len);
    for i in 0..total_len {
        xs.push(state[0]);
        if i + 1 < total_len {
            state = params.rk4_step(state);
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(params.transient_steps + i, "Lorenz integration diverged"));
            }
        }
    }
    let transform = Transform::Affine {
        scale: params.scale,
        shift: 0.0,
    };
    let values = xs.iter().map(|&x| transform.forward(x)).collect();
    TimeSeries::new(1, values, params.step, transform)
}

/// One row of the SIDC monthly mean total sunspot number file.
#[derive(Debug, Clone, PartialEq)]
pub struct SidcRecord {
    pub year: i32,
    pub month: u32,
    pub decimal_year: f64,
    pub value: f64,
}

/// Parses `year;month;decimal year;value;std;#obs;provisional` rows.
pub fn parse_sidc(text: &str) -> Result<Vec<SidcRecord>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: n + 1, msg };
        let fields: Vec<&str> = line.split(';').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(bad(format!("expected at least 4 `;`-separated fields, got {}", fields.len())));
        }
        let year: i32 = fields[0].parse().map_err(|_| bad(format!("bad year {:?}", fields[0])))?;
        let month: u32 = fields[1].parse().map_err(|_| bad(format!("bad month {:?}", fields[1])))?;
        if !(1..=12).contains(&month) {
            return Err(bad(format!("month {month} out of range")));
        }
        let decimal_year: f64 = fields[2]
            .parse()
            .map_err(|_| bad(format!("bad decimal year {:?}", fields[2])))?;
        let value: f64 = fields[3]
            .parse()
            .map_err(|_| bad(format!("bad value {:?}", fields[3])))?;
        if !value.is_finite() {
            return Err(bad("non-finite value".into()));
        }
        rows.push(SidcRecord {
            year,
            month,
            decimal_year,
            value,
        });
    }
    Ok(rows)
}

pub const SUNSPOT_SPLITS: Splits = Splits {
    washout: 100,
    train: 1600,
    validate: 500,
    test: 0,
};

/// Loads Jan 1749 - Dec 2021 from an SIDC monthly file, min-max normalized on
/// the training segment. The test split takes the remainder.
pub fn load_sunspots(path: &Path) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path)?;
    sunspots_from_text(&text)
}

pub fn sunspots_from_text(text: &str) -> Result<TimeSeries> {
    let rows: Vec<SidcRecord> = parse_sidc(text)?
        .into_iter()
        .filter(|r| (r.year, r.month) >= (1749, 1) && (r.year, r.month) <= (2021, 12))
        .collect();
    let missing: Vec<String> = rows
        .iter()
        .filter(|r| r.value == -1.0)
        .map(|r| format!("{:04}-{:02}", r.year, r.month))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingValues(missing));
    }
    let raw: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let len = raw.len();
    let base = SUNSPOT_SPLITS.washout + SUNSPOT_SPLITS.train + SUNSPOT_SPLITS.validate;
    if len < base {
        return Err(Error::config(format!(
            "sunspot splits need at least {base} points, file has {len}"
        )));
    }
    let splits = Splits {
        test: len - base,
        ..SUNSPOT_SPLITS
    };
    let train = &raw[splits.train_range()];
    let lo = train.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = train.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::domain("training segment is constant; cannot normalize"));
    }
    let transform = Transform::Affine {
        scale: 1.0 / (hi - lo),
        shift: -lo / (hi - lo),
    };
    let values = raw.iter().map(|&v| transform.forward(v)).collect();
    TimeSeries::new(1, values, 1.0 / 12.0, transform)?.with_splits(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_history_stays_constant() {
        let p = MgsParams {
            alpha: 0.0,
            gamma: 0.0,
            history: History::Constant(0.7),
            ..Default::default()
        };
        let s = generate_mackey_glass(&p, 50, 1).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn misaligned_delay_rejected() {
        let p = MgsParams {
            tau: 17.05,
            ..Default::default()
        };
        assert!(matches!(generate_mackey_glass(&p, 10, 1), Err(Error::Config(_))));
        let p = MgsParams {
            subsample: 3,
            ..Default::default()
        };
        assert!(matches!(generate_mackey_glass(&p, 10, 1), Err(Error::Config(_))));
    }

    #[test]
    fn mgs_in_expected_range() {
        let s = generate_mackey_glass(&MgsParams::default(), 2000, 7).unwrap();
        assert_eq!(s.len(), 2000);
        let (lo, hi) = s
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo > 0.1 && hi < 1.5, "{lo} {hi}");
    }

    #[test]
    fn squash_round_trip() {
        let p = MgsParams {
            squash: true,
            ..Default::default()
        };
        let s = generate_mackey_glass(&p, 300, 3).unwrap();
        let plain = generate_mackey_glass(&MgsParams::default(), 300, 3).unwrap();
        for (a, b) in s.raw_values().iter().zip(plain.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn lorenz_origin_fixed_point() {
        let p = LorenzParams {
            initial_state: [0.0; 3],
            ..Default::default()
        };
        let s = generate_lorenz(&p, 100).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lorenz_scaled_and_deterministic() {
        let p = LorenzParams::default();
        let a = generate_lorenz(&p, 500).unwrap();
        let b = generate_lorenz(&p, 500).unwrap();
        assert_eq!(a.values(), b.values());
        let raw = a.raw_values();
        assert!(raw.iter().any(|v| v.abs() > 10.0));
        assert!(a.values().iter().all(|v| v.abs() < 0.3));
    }

    #[test]
    fn sidc_first_row() {
        let rows = parse_sidc("1749;01;1749.042;96.7;-1.0;-1;1\n").unwrap();
        assert_eq!(rows[0].value, 96.7);
        assert_eq!((rows[0].year, rows[0].month), (1749, 1));
    }

    #[test]
    fn sidc_single_row_rejected_by_splits() {
        let err = sunspots_from_text("1749;01;1749.042;96.7;-1.0;-1;1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn sidc_malformed_line_number() {
        let text = "1749;01;1749.042;96.7;-1.0;-1;1\n1749;02;1749.125;abc;-1.0;-1;1\n";
        assert!(matches!(parse_sidc(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn sidc_missing_sentinel_lists_dates() {
        let text = "1749;01;1749.042;96.7;-1.0;-1;1\n1749;02;1749.125;-1;-1.0;-1;1\n";
        match sunspots_from_text(text) {
            Err(Error::MissingValues(d)) => assert_eq!(d, vec!["1749-02".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn splits_bound_enforced() {
        let s = TimeSeries::scalar(vec![0.0; 10], 1.0).unwrap();
        assert!(s.clone().with_splits(Splits::new(5, 5, 0, 0)).is_ok());
        assert!(s.with_splits(Splits::new(5, 5, 1, 0)).is_err());
    }

    #[test]
    fn rejects_nan() {
        assert!(TimeSeries::scalar(vec![1.0, f64::NAN], 1.0).is_err());
    }
}
