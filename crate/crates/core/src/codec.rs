//! Orthonormal DCT-II / DCT-III and the chromosome <-> reservoir mapping.
//!
//! A chromosome holds the first `C` DCT coefficients of the reservoir weight
//! vector (weights read in layout order). Decoding pads it with zeros to the
//! layout size `M`, applies the inverse transform and scatters the result onto
//! the layout positions. Everything outside the layout stays exactly zero.
//!
//! The fast path computes both transforms with a single complex FFT of length
//! `J` (even/odd reordering plus a quarter-wave twiddle). The direct `O(J^2)`
//! sums are kept for testing and for tiny inputs.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{ReservoirLayout, SparseReservoir};

/// Precomputed FFT plans and twiddles for one transform length.
pub struct DctPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // e^{-i pi l / (2J)}
    twiddles: Vec<Complex<f64>>,
}

impl DctPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::domain("DCT of an empty sequence"));
        }
        let mut planner = FftPlanner::new();
        let twiddles = (0..len)
            .map(|l| {
                let a = -PI * l as f64 / (2 * len) as f64;
                Complex::new(a.cos(), a.sin())
            })
            .collect();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            twiddles,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, s: &[f64]) -> Vec<f64> {
        let j = self.len;
        assert_eq!(s.len(), j, "input length does not match plan");
        let mut buf = vec![Complex::new(0.0, 0.0); j];
        for k in 0..j.div_ceil(2) {
            buf[k].re = s[2 * k];
        }
        for k in 0..j / 2 {
            buf[j - 1 - k].re = s[2 * k + 1];
        }
        self.forward.process(&mut buf);

        let dc = 1.0 / (j as f64).sqrt();
        let ac = (2.0 / j as f64).sqrt();
        buf.iter()
            .zip(&self.twiddles)
            .enumerate()
            .map(|(l, (v, w))| (v * w).re * if l == 0 { dc } else { ac })
            .collect()
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let j = self.len;
        assert_eq!(coeffs.len(), j, "input length does not match plan");
        let dc = (j as f64).sqrt();
        let ac = (j as f64 / 2.0).sqrt();
        let y = |l: usize| coeffs[l] * if l == 0 { dc } else { ac };

        let mut buf = Vec::with_capacity(j);
        buf.push(Complex::new(y(0), 0.0));
        for l in 1..j {
            let z = Complex::new(y(l), -y(j - l));
            buf.push(z * self.twiddles[l].conj());
        }
        self.inverse.process(&mut buf);

        let norm = 1.0 / j as f64;
        let mut s = vec![0.0; j];
        for k in 0..j.div_ceil(2) {
            s[2 * k] = buf[k].re * norm;
        }
        for k in 0..j / 2 {
            s[2 * k + 1] = buf[j - 1 - k].re * norm;
        }
        s
    }
}

fn plan_for(len: usize) -> Result<Arc<DctPlan>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<DctPlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(p) = cache.lock().unwrap().get(&len) {
        return Ok(p.clone());
    }
    let plan = Arc::new(DctPlan::new(len)?);
    cache.lock().unwrap().insert(len, plan.clone());
    Ok(plan)
}

/// Orthonormal DCT-II.
pub fn dct(s: &[f64]) -> Result<Vec<f64>> {
    Ok(plan_for(s.len())?.forward(s))
}

/// Orthonormal DCT-III, the inverse of [`dct`].
pub fn idct(coeffs: &[f64]) -> Result<Vec<f64>> {
    Ok(plan_for(coeffs.len())?.inverse(coeffs))
}

// cos(pi * num / (2J)) with num reduced modulo 4J so the argument stays small.
fn cos_quarter(num: u128, j: usize) -> f64 {
    let period = 4 * j as u128;
    (PI * (num % period) as f64 / (2 * j) as f64).cos()
}

/// Direct evaluation of the DCT-II sums, `O(J^2)`.
pub fn dct_direct(s: &[f64]) -> Result<Vec<f64>> {
    let j = s.len();
    if j == 0 {
        return Err(Error::domain("DCT of an empty sequence"));
    }
    Ok((0..j).map(|l| dct_direct_coeff(s, l)).collect())
}

/// A single DCT-II coefficient by direct summation.
pub fn dct_direct_coeff(s: &[f64], l: usize) -> f64 {
    let j = s.len();
    let scale = if l == 0 {
        1.0 / (j as f64).sqrt()
    } else {
        (2.0 / j as f64).sqrt()
    };
    let sum: f64 = s
        .iter()
        .enumerate()
        .map(|(k, &v)| v * cos_quarter(l as u128 * (2 * k as u128 + 1), j))
        .sum();
    scale * sum
}

/// Direct evaluation of the DCT-III (inverse) sums, `O(J^2)`.
pub fn idct_direct(coeffs: &[f64]) -> Result<Vec<f64>> {
    let j = coeffs.len();
    if j == 0 {
        return Err(Error::domain("inverse DCT of an empty sequence"));
    }
    let dc = coeffs[0] / (j as f64).sqrt();
    let ac = (2.0 / j as f64).sqrt();
    Ok((0..j)
        .map(|l| {
            let tail: f64 = (1..j)
                .map(|k| coeffs[k] * cos_quarter(k as u128 * (2 * l as u128 + 1), j))
                .sum();
            dc + ac * tail
        })
        .collect())
}

/// Low-frequency DCT coefficients of a reservoir weight vector (the GA genotype).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    coeffs: Vec<f64>,
}

impl Chromosome {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::domain("chromosome needs at least one coefficient"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("chromosome has non-finite coefficients"));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.coeffs
    }
}

/// Reservoir weights in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
}

/// Zero-extends the chromosome to length `m`.
pub fn pad(alpha: &Chromosome, m: usize) -> Result<Vec<f64>> {
    if alpha.len() > m {
        return Err(Error::domain(format!(
            "chromosome length {} exceeds weight count {m}",
            alpha.len()
        )));
    }
    let mut out = Vec::with_capacity(m);
    out.extend_from_slice(&alpha.coeffs);
    out.resize(m, 0.0);
    Ok(out)
}

/// Keeps the first `c` coefficients.
pub fn truncate(coeffs: &[f64], c: usize) -> Result<Chromosome> {
    if c > coeffs.len() {
        return Err(Error::domain(format!(
            "cannot keep {c} of {} coefficients",
            coeffs.len()
        )));
    }
    Chromosome::new(coeffs[..c].to_vec())
}

/// Chromosome -> weight vector: pad then inverse DCT.
pub fn decode_weights(alpha: &Chromosome, m: usize) -> Result<WeightVector> {
    let padded = pad(alpha, m)?;
    Ok(WeightVector {
        values: idct(&padded)?,
    })
}

/// Chromosome -> reservoir matrix on `layout`.
pub fn decode(alpha: &Chromosome, layout: &Arc<ReservoirLayout>) -> Result<SparseReservoir> {
    let w = decode_weights(alpha, layout.len())?;
    SparseReservoir::new(layout.clone(), w.values)
}

/// Weight vector -> first `c` DCT coefficients.
pub fn encode_weights(nu: &[f64], c: usize) -> Result<Chromosome> {
    if c == 0 {
        return Err(Error::domain("chromosome needs at least one coefficient"));
    }
    truncate(&dct(nu)?, c)
}

/// Reservoir -> chromosome. Fails when `w` has nonzeros outside `layout`.
pub fn encode(w: &DMatrix<f64>, layout: &ReservoirLayout, c: usize) -> Result<Chromosome> {
    let nu = layout.gather(w)?;
    encode_weights(&nu, c)
}

/// Squared reconstruction error of keeping `c` coefficients; by orthonormality
/// this equals the energy of the dropped tail.
pub fn tail_energy(coeffs: &[f64], c: usize) -> f64 {
    coeffs[c.min(coeffs.len())..].iter().map(|v| v * v).sum()
}
