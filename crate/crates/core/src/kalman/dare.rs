//! Riccati fixed points, analytic trace bounds and the periodic lifting.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::RealBlockModel;
use crate::observability::{assemble, Trajectory, RANK_TOL};

#[derive(Clone, Debug)]
pub struct DareSolution {
    pub sigma: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius norm of the Riccati equation residual at `sigma`.
    pub residual: f64,
}

fn riccati_map(a: &DMatrix<f64>, c: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let post = if c.nrows() == 0 {
        sigma.clone()
    } else {
        let sct = sigma * c.transpose();
        let innov = c * &sct + r;
        let innov = (&innov + innov.transpose()) * 0.5;
        let chol = innov.cholesky().ok_or(Error::Conditioning {
            step: 0,
            condition: f64::INFINITY,
        })?;
        sigma - &sct * chol.solve(&sct.transpose())
    };
    let next = a * post * a.transpose() + q;
    Ok((&next + next.transpose()) * 0.5)
}

/// Iterates `Sigma <- A Sigma A^T - A Sigma C^T (C Sigma C^T + R)^-1 C Sigma A^T + Q`
/// from `Sigma = Q` until the relative Frobenius change drops below `tol`.
///
/// `(A, C)` must be observable, or `A` Schur stable.
pub fn dare_iterate(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DareSolution> {
    let m = a.nrows();
    if a.ncols() != m || q.shape() != (m, m) || c.ncols() != m || r.shape() != (c.nrows(), c.nrows()) {
        return Err(Error::arg("inconsistent DARE dimensions"));
    }
    if !(tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    if !observable_pair(a, c) && spectral_radius(a) >= 1.0 {
        return Err(Error::Unobservable);
    }
    let mut sigma = q.clone();
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let next = riccati_map(a, c, q, r, &sigma)?;
        change = (&next - &sigma).norm() / sigma.norm().max(f64::MIN_POSITIVE);
        sigma = next;
        if change < tol {
            let residual = (riccati_map(a, c, q, r, &sigma)? - &sigma).norm();
            return Ok(DareSolution {
                sigma,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: change,
    })
}

fn observable_pair(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    let m = a.nrows();
    if c.nrows() == 0 {
        return false;
    }
    let k = c.nrows();
    let mut stack = DMatrix::zeros(k * m, m);
    let mut block = c.clone();
    for i in 0..m {
        stack.view_mut((i * k, 0), (k, m)).copy_from(&block);
        block = &block * a;
    }
    let s = linalg::singular_values(&stack);
    linalg::numerical_rank(&s, RANK_TOL) == m
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Upper and lower bounds on `tr(Sigma*)` in terms of the spectra of `A`, `Q` and
/// `C^T R^-1 C`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DareBounds {
    pub lower: f64,
    pub upper: f64,
    pub a1: f64,
    pub a2: f64,
    pub lower_applicable: bool,
    pub upper_applicable: bool,
    /// `lambda_1(A^T A) >= 1 - tr(Q) / (n lambda_1(Q))`: the upper bound then
    /// decreases monotonically in `lambda_n(C^T R^-1 C)`.
    pub monotone: bool,
}

pub fn dare_trace_bounds(a: &DMatrix<f64>, c: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DareBounds> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) || c.ncols() != n || r.shape() != (c.nrows(), c.nrows()) {
        return Err(Error::arg("inconsistent dimensions"));
    }
    let nf = n as f64;
    let info = if c.nrows() == 0 {
        DMatrix::zeros(n, n)
    } else {
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::arg("measurement covariance is singular"))?;
        c.transpose() * r_inv * c
    };
    let info_ev = linalg::sym_eigenvalues(&info);
    let (info_max, info_min) = (info_ev[0], info_ev[n - 1]);
    let q_ev = linalg::sym_eigenvalues(q);
    let (q_max, q_min) = (q_ev[0], q_ev[n - 1]);
    let tr_q = q.trace();
    let ata_max = linalg::sym_eigenvalues(&(a.transpose() * a))[0];

    let a1 = 1.0 - ata_max - q_max * info_min;
    let upper = 2.0 * tr_q / (a1 + (a1 * a1 + 4.0 * info_min * tr_q / nf).sqrt());

    // Squared eigenvalue moduli; with them the bound is exact for scalar systems.
    let abs_sq: f64 = a.complex_eigenvalues().iter().map(|l| l.norm_sqr()).sum();
    let tr_sqrt_q = linalg::sym_sqrt(q).trace();
    let t = tr_sqrt_q * tr_sqrt_q;
    let a2 = nf - abs_sq - t * info_max;
    let lower = 2.0 * t / (a2 + (a2 * a2 + 4.0 * nf * info_max * t).sqrt());

    let tol = 1e-12 * info_max.abs().max(f64::MIN_POSITIVE);
    let applicable = info_min > tol && q_min > 0.0;
    Ok(DareBounds {
        lower,
        upper,
        a1,
        a2,
        lower_applicable: applicable,
        upper_applicable: applicable,
        monotone: q_max > 0.0 && ata_max >= 1.0 - tr_q / (nf * q_max),
    })
}

/// Time-invariant lifting of a periodic schedule: `A_hat = Lambda^l`, `C_hat = O_sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedSystem {
    pub a_hat: DMatrix<f64>,
    pub c_hat: DMatrix<f64>,
}

pub fn lift_system(model: &RealBlockModel, traj: &Trajectory) -> Result<LiftedSystem> {
    Ok(LiftedSystem {
        a_hat: model.dynamics_power(traj.period()),
        c_hat: assemble(model, traj)?.into_matrix(),
    })
}
