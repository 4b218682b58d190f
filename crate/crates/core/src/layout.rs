//! Fixed sparsity pattern of the reservoir and the sparse matrix living on it.
//!
//! Positions are kept in row-major order. That order is the flattening order of
//! the weight vector handed to the DCT codec, and it coincides with CSR storage,
//! so the k-th stored value of a [`SparseReservoir`] is the k-th coordinate of
//! the weight vector.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "LayoutRepr", try_from = "LayoutRepr")]
pub struct ReservoirLayout {
    units: usize,
    positions: Vec<(u32, u32)>,
    row_ptr: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    units: usize,
    positions: Vec<(u32, u32)>,
}

impl From<ReservoirLayout> for LayoutRepr {
    fn from(l: ReservoirLayout) -> Self {
        LayoutRepr {
            units: l.units,
            positions: l.positions,
        }
    }
}

impl TryFrom<LayoutRepr> for ReservoirLayout {
    type Error = Error;

    fn try_from(r: LayoutRepr) -> Result<Self> {
        ReservoirLayout::from_positions(r.units, r.positions)
    }
}

impl PartialEq for ReservoirLayout {
    fn eq(&self, other: &Self) -> bool {
        self.units == other.units && self.positions == other.positions
    }
}

impl ReservoirLayout {
    /// Samples `round(density * N^2)` distinct positions uniformly.
    pub fn random<R: Rng + ?Sized>(units: usize, density: f64, rng: &mut R) -> Result<Self> {
        if units == 0 {
            return Err(Error::config("reservoir must have at least one unit"));
        }
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::config(format!("density {density} outside [0, 1]")));
        }
        let total = units * units;
        let count = (density * total as f64).round() as usize;
        if count >= total {
            return Err(Error::config(format!(
                "layout must leave at least one frozen entry (M = {count}, N^2 = {total})"
            )));
        }
        let mut flat = index::sample(rng, total, count).into_vec();
        flat.sort_unstable();
        let positions = flat
            .into_iter()
            .map(|f| ((f / units) as u32, (f % units) as u32))
            .collect();
        Ok(Self::build(units, positions))
    }

    /// Builds a layout from arbitrary positions; they are sorted row-major.
    pub fn from_positions(units: usize, mut positions: Vec<(u32, u32)>) -> Result<Self> {
        if units == 0 {
            return Err(Error::config("reservoir must have at least one unit"));
        }
        if positions.len() >= units * units {
            return Err(Error::config("layout must satisfy M < N^2"));
        }
        positions.sort_unstable();
        for w in positions.windows(2) {
            if w[0] == w[1] {
                return Err(Error::config(format!("duplicate layout position {:?}", w[0])));
            }
        }
        if let Some(&(r, c)) = positions
            .iter()
            .find(|&&(r, c)| r as usize >= units || c as usize >= units)
        {
            return Err(Error::config(format!(
                "layout position ({r}, {c}) out of bounds for {units} units"
            )));
        }
        Ok(Self::build(units, positions))
    }

    fn build(units: usize, positions: Vec<(u32, u32)>) -> Self {
        let mut row_ptr = vec![0usize; units + 1];
        for &(r, _) in &positions {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..units {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            units,
            positions,
            row_ptr,
        }
    }

    pub fn units(&self) -> usize {
        self.units
    }

    /// Number of unfrozen entries, M.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[(u32, u32)] {
        &self.positions
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / (self.units * self.units) as f64
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        if row >= self.units {
            return false;
        }
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.positions[lo..hi]
            .binary_search_by_key(&(col as u32), |&(_, c)| c)
            .is_ok()
    }

    /// Reads the weight vector off a dense matrix, failing if any entry
    /// outside the layout is nonzero.
    pub fn gather(&self, w: &DMatrix<f64>) -> Result<Vec<f64>> {
        if w.nrows() != self.units || w.ncols() != self.units {
            return Err(Error::dim(format!(
                "matrix is {}x{}, layout has {} units",
                w.nrows(),
                w.ncols(),
                self.units
            )));
        }
        for row in 0..self.units {
            let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
            let mut k = lo;
            for col in 0..self.units {
                if k < hi && self.positions[k].1 as usize == col {
                    k += 1;
                } else if w[(row, col)] != 0.0 {
                    return Err(Error::LayoutViolation { row, col });
                }
            }
        }
        Ok(self
            .positions
            .iter()
            .map(|&(r, c)| w[(r as usize, c as usize)])
            .collect())
    }
}

/// Reservoir matrix W_h stored on a fixed layout (CSR with shared structure).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SparseReservoir {
    layout: Arc<ReservoirLayout>,
    values: Vec<f64>,
}

impl SparseReservoir {
    pub fn new(layout: Arc<ReservoirLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::dim(format!(
                "weight vector has {} entries, layout has {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: Arc<ReservoirLayout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn layout(&self) -> &Arc<ReservoirLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn units(&self) -> usize {
        self.layout.units
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `out[i] += sum_j W[i, j] * x[j]`
    pub fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        let l = &*self.layout;
        for (row, o) in out.iter_mut().enumerate().take(l.units) {
            let (lo, hi) = (l.row_ptr[row], l.row_ptr[row + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[l.positions[k].1 as usize];
            }
            *o += acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.layout.units;
        let mut m = DMatrix::zeros(n, n);
        for (&(r, c), &v) in self.layout.positions.iter().zip(&self.values) {
            m[(r as usize, c as usize)] = v;
        }
        m
    }
}
