//! Kalman filtering along periodic schedules in real-block reduced coordinates.
//!
//! A step updates with the measurements taken at time `t` and then predicts to
//! `t + 1`, so the covariance carried between steps is the one-step-ahead (prior)
//! covariance, whose time-invariant limit is the DARE solution.

mod dare;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use dare::{dare_iterate, dare_trace_bounds, lift_system, DareBounds, DareSolution, LiftedSystem};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{NoiseSpec, RealBlockModel, SnapshotMatrix};
use crate::observability::Trajectory;

/// Innovation covariances with a larger condition number are rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e14;
/// Below this measurement variance the Joseph-form update is used.
pub const JOSEPH_THRESHOLD: f64 = 1e-6;
/// Default diffuse prior scale (`Sigma_0 = 10 I`).
pub const DEFAULT_PRIOR_SCALE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct KfState {
    pub estimate: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl KfState {
    pub fn new(estimate: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = estimate.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(Error::arg("covariance shape does not match estimate"));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        let scale = covariance.amax().max(1e-300);
        if asym > 1e-10 * scale {
            return Err(Error::arg("covariance is not symmetric"));
        }
        let trace = covariance.trace();
        let min = linalg::sym_eigenvalues(&covariance).last().copied().unwrap_or(0.0);
        if min < -1e-10 * trace.abs().max(1e-300) {
            return Err(Error::arg("covariance is not positive semidefinite"));
        }
        Ok(Self {
            estimate,
            covariance,
        })
    }

    /// Zero estimate with covariance `scale * I`.
    pub fn diffuse(m: usize, scale: f64) -> Self {
        Self {
            estimate: DVector::zeros(m),
            covariance: DMatrix::identity(m, m) * scale,
        }
    }
}

/// Measurement update with the rows `sel` of the real modes matrix.
pub fn kf_update(
    model: &RealBlockModel,
    state: &KfState,
    sel: &[usize],
    y: &[f64],
    rho: f64,
) -> Result<KfState> {
    if sel.len() != y.len() {
        return Err(Error::arg("selection and measurement lengths differ"));
    }
    if sel.is_empty() {
        return Ok(state.clone());
    }
    if let Some(&bad) = sel.iter().find(|&&i| i >= model.n()) {
        return Err(Error::arg(format!("measurement index {bad} out of range")));
    }
    let m = model.rank();
    let c = model.modes().select_rows(sel.iter());
    let sigma = &state.covariance;
    let sct = sigma * c.transpose();
    let mut innov = &c * &sct;
    for i in 0..sel.len() {
        innov[(i, i)] += rho;
    }
    let innov = (&innov + innov.transpose()) * 0.5;
    let ev = linalg::sym_eigenvalues(&innov);
    let (max, min) = (ev[0], *ev.last().unwrap());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition > MAX_INNOVATION_CONDITION {
        return Err(Error::Conditioning { step: 0, condition });
    }
    let chol = innov.cholesky().ok_or(Error::Conditioning { step: 0, condition })?;
    // K = Sigma C^T S^-1, computed as (S^-1 C Sigma)^T.
    let gain = chol.solve(&sct.transpose()).transpose();
    let innovation = DVector::from_column_slice(y) - &c * &state.estimate;
    let estimate = &state.estimate + &gain * innovation;
    let covariance = if rho < JOSEPH_THRESHOLD {
        let ikc = DMatrix::identity(m, m) - &gain * &c;
        &ikc * sigma * ikc.transpose() + &gain * gain.transpose() * rho
    } else {
        sigma - &gain * sct.transpose()
    };
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(KfState {
        estimate,
        covariance,
    })
}

/// Time update `z <- Lambda z`, `Sigma <- Lambda Sigma Lambda^T + q I`.
pub fn kf_predict(model: &RealBlockModel, state: &KfState, q: f64) -> KfState {
    let a = model.dynamics();
    let mut covariance = a * &state.covariance * a.transpose();
    for i in 0..covariance.nrows() {
        covariance[(i, i)] += q;
    }
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    KfState {
        estimate: model.propagate(&state.estimate),
        covariance,
    }
}

/// One filter step: update with `y` measured at `sel`, then predict.
pub fn kf_step(
    model: &RealBlockModel,
    state: &KfState,
    sel: &[usize],
    y: &[f64],
    noise: NoiseSpec,
) -> Result<KfState> {
    let post = kf_update(model, state, sel, y, noise.rho)?;
    Ok(kf_predict(model, &post, noise.q))
}

/// Where measurements come from.
#[derive(Clone, Debug)]
pub enum Measurements<'a> {
    /// Covariance recursion only; no estimates or errors are produced.
    None,
    /// Truth generated by simulating the model from `c0` with disturbance `q`;
    /// measurements add `N(0, rho)` noise.
    Simulate { c0: DVector<f64>, seed: u64 },
    /// Known truth fields; measurements add `N(0, rho)` noise.
    Truth { data: &'a SnapshotMatrix, seed: u64 },
    /// Raw data rows used directly as measurements; errors are against the same data.
    Raw(&'a SnapshotMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KfRun {
    pub dt: f64,
    /// `trace(Sigma_t)` of the prior covariance at each step.
    pub trace_series: Vec<f64>,
    /// Posterior coefficient estimates, when measurements are supplied.
    pub estimate_series: Option<Vec<DVector<f64>>>,
    /// `||x_hat_t - x_t||^2 / n` of the posterior reconstruction, when truth is known.
    pub recon_error_series: Option<Vec<f64>>,
}

impl KfRun {
    pub fn steps(&self) -> usize {
        self.trace_series.len()
    }

    /// Mean trace over the last `window` steps.
    pub fn limiting_trace(&self, window: usize) -> f64 {
        tail_mean(&self.trace_series, window)
    }

    /// Mean reconstruction error over the last `window` steps.
    pub fn steady_error(&self, window: usize) -> Option<f64> {
        self.recon_error_series.as_ref().map(|e| tail_mean(e, window))
    }

    /// CSV with columns `step,time,trace_sigma,recon_mse` (`recon_mse` empty without truth).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time,trace_sigma,recon_mse\n");
        for (t, tr) in self.trace_series.iter().enumerate() {
            let err = self
                .recon_error_series
                .as_ref()
                .map(|e| format!("{:e}", e[t]))
                .unwrap_or_default();
            let _ = writeln!(out, "{t},{},{tr:e},{err}", t as f64 * self.dt);
        }
        out
    }
}

fn tail_mean(v: &[f64], window: usize) -> f64 {
    let w = window.clamp(1, v.len().max(1));
    let tail = &v[v.len().saturating_sub(w)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Runs the filter for `steps` steps with `sel = traj.at(t)`.
pub fn run_filter(
    model: &RealBlockModel,
    traj: &Trajectory,
    source: Measurements<'_>,
    noise: NoiseSpec,
    steps: usize,
    sigma0: Option<DMatrix<f64>>,
    dt: f64,
) -> Result<KfRun> {
    if steps == 0 {
        return Err(Error::arg("steps must be at least 1"));
    }
    traj.validate_for(model.n())?;
    let m = model.rank();
    let mut state = match sigma0 {
        Some(s) => KfState::new(DVector::zeros(m), s)?,
        None => KfState::diffuse(m, DEFAULT_PRIOR_SCALE),
    };

    let simulated;
    let (truth, noisy, seed): (Option<&DMatrix<f64>>, bool, u64) = match &source {
        Measurements::None => (None, false, 0),
        Measurements::Simulate { c0, seed } => {
            simulated = model.simulate_coefficients(c0, steps, noise.q, *seed)?.1;
            (Some(&simulated), true, seed ^ 0x9e37_79b9_7f4a_7c15)
        }
        Measurements::Truth { data, seed } => (Some(data.data()), true, *seed),
        Measurements::Raw(data) => (Some(data.data()), false, 0),
    };
    if let Some(x) = truth {
        if x.nrows() != model.n() {
            return Err(Error::arg("data dimension does not match model"));
        }
        if x.ncols() < steps {
            return Err(Error::arg(format!(
                "{steps} steps requested but only {} snapshots available",
                x.ncols()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = noise.rho.sqrt();
    let n = model.n() as f64;

    let mut trace_series = Vec::with_capacity(steps);
    let mut estimates = truth.map(|_| Vec::with_capacity(steps));
    let mut errors = truth.map(|_| Vec::with_capacity(steps));
    for t in 0..steps {
        trace_series.push(state.covariance.trace());
        let sel = traj.at(t);
        let post = match truth {
            None => {
                let y = vec![0.0; sel.len()];
                kf_update(model, &state, sel, &y, noise.rho)
            }
            Some(x) => {
                let y: Vec<f64> = sel
                    .iter()
                    .map(|&i| {
                        let e: f64 = if noisy { StandardNormal.sample(&mut rng) } else { 0.0 };
                        x[(i, t)] + sd * e
                    })
                    .collect();
                kf_update(model, &state, sel, &y, noise.rho)
            }
        }
        .map_err(|e| match e {
            Error::Conditioning { condition, .. } => Error::Conditioning { step: t, condition },
            other => other,
        })?;
        if let (Some(x), Some(est), Some(err)) = (truth, estimates.as_mut(), errors.as_mut()) {
            let recon = model.field(&post.estimate);
            err.push((recon - x.column(t)).norm_squared() / n);
            est.push(post.estimate.clone());
        }
        state = kf_predict(model, &post, noise.q);
    }
    Ok(KfRun {
        dt,
        trace_series,
        estimate_series: estimates,
        recon_error_series: errors,
    })
}
