use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest eigenvalue modulus, via a dense real Schur decomposition.
///
/// Power iteration is not used: reservoir matrices are non-symmetric and the
/// dominant eigenvalue is frequently a complex pair.
pub fn spectral_radius(w: &DMatrix<f64>) -> Result<f64> {
    if !w.is_square() {
        return Err(Error::dim(format!("{}x{} matrix is not square", w.nrows(), w.ncols())));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(0, "matrix has non-finite entries"));
    }
    if w.nrows() == 0 || w.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let eig = w.complex_eigenvalues();
    Ok(eig.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_two_by_two() {
        let a = -2.5;
        let w = DMatrix::from_row_slice(2, 2, &[0.0, a, a, 0.0]);
        assert!((spectral_radius(&w).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn identity() {
        let w = DMatrix::<f64>::identity(40, 40);
        assert!((spectral_radius(&w).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_has_complex_pair() {
        // eigenvalues 0.5 * (cos t +- i sin t)
        let (s, c) = 0.3f64.sin_cos();
        let w = DMatrix::from_row_slice(2, 2, &[0.5 * c, -0.5 * s, 0.5 * s, 0.5 * c]);
        assert!((spectral_radius(&w).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_nan() {
        let mut w = DMatrix::<f64>::identity(3, 3);
        w[(1, 2)] = f64::NAN;
        assert!(matches!(spectral_radius(&w), Err(Error::Numeric { .. })));
    }
}
