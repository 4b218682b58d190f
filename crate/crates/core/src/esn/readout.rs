use nalgebra::DMatrix;

use super::{Activation, StateTrajectory};
use crate::error::{Error, Result};

/// Design matrix `A` with rows `[u(t); x(t)]`, i.e. `X^T`.
pub fn design_matrix(traj: &StateTrajectory) -> DMatrix<f64> {
    let t = traj.len();
    let n_in = traj.inputs.ncols();
    let n = traj.states.ncols();
    let mut a = DMatrix::zeros(t, n_in + n);
    a.view_mut((0, 0), (t, n_in)).copy_from(&traj.inputs);
    a.view_mut((0, n_in), (t, n)).copy_from(&traj.states);
    a
}

/// Readout targets in the pre-activation space of `g`.
pub fn readout_targets(traj: &StateTrajectory, readout: Activation) -> Result<DMatrix<f64>> {
    match readout {
        Activation::Identity => Ok(traj.targets.clone()),
        Activation::Tanh => {
            if let Some(v) = traj.targets.iter().find(|v| v.abs() >= 1.0) {
                return Err(Error::domain(format!(
                    "tanh readout needs targets in (-1, 1), found {v}"
                )));
            }
            Ok(traj.targets.map(f64::atanh))
        }
    }
}

/// Ridge regression `W_out = Z X^T (X X^T + lambda I)^{-1}`, returned as an
/// `L x (n + N)` matrix.
pub fn train_readout(traj: &StateTrajectory, ridge: f64, readout: Activation) -> Result<DMatrix<f64>> {
    if traj.is_empty() {
        return Err(Error::domain("cannot train a readout on an empty trajectory"));
    }
    if !(ridge >= 0.0) {
        return Err(Error::domain(format!("ridge parameter {ridge} must be nonnegative")));
    }
    let z = readout_targets(traj, readout)?;
    let a = design_matrix(traj);
    let at = a.transpose();
    let mut gram = &at * &a;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let rhs = &at * &z;
    let solution = solve_spd(gram, &rhs, ridge)?;
    Ok(solution.transpose())
}

fn solve_spd(gram: DMatrix<f64>, rhs: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if let Some(chol) = gram.clone().cholesky() {
        let sol = chol.solve(rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return Ok(sol);
        }
    }
    let lu = gram.lu();
    match lu.solve(rhs) {
        Some(sol) if sol.iter().all(|v| v.is_finite()) => Ok(sol),
        _ if ridge == 0.0 => Err(Error::LinAlg(
            "normal matrix is singular; use a ridge parameter > 0".into(),
        )),
        _ => Err(Error::LinAlg("normal matrix could not be factorized".into())),
    }
}
