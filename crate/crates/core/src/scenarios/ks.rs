//! Kuramoto-Sivashinsky `u_t + u u_x + u_xx + u_xxxx = 0` on a periodic domain,
//! Fourier pseudo-spectral in space and ETDRK4 in time.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::model::SnapshotMatrix;

/// Solutions with a larger sup norm are treated as blown up.
pub const BLOW_UP_NORM: f64 = 1e6;
const CONTOUR_POINTS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsSpec {
    pub n_grid: usize,
    pub domain_length: f64,
    pub dt_solver: f64,
    /// Snapshots start here; earlier steps are burn-in.
    #[serde(default)]
    pub t_start: f64,
    pub t_final: f64,
    /// Snapshot interval, a multiple of `dt_solver`.
    pub output_dt: f64,
    /// Seed of the standard normal initial condition.
    pub seed: u64,
}

impl KsSpec {
    /// Desk scale: 256 points on a chaotic domain of length 22.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_grid: 256,
            domain_length: 22.0,
            dt_solver: 0.05,
            t_start: 200.0,
            t_final: 1200.0,
            output_dt: 0.25,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid < 4 || !self.n_grid.is_power_of_two() {
            return Err(Error::arg("n_grid must be a power of two, at least 4"));
        }
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Error::arg("domain_length must be positive"));
        }
        if !(self.dt_solver > 0.0) {
            return Err(Error::arg("dt_solver must be positive"));
        }
        if !(self.t_start >= 0.0 && self.t_final >= self.t_start) {
            return Err(Error::arg("need 0 <= t_start <= t_final"));
        }
        self.steps_for(self.output_dt, "output_dt")?;
        self.steps_for(self.t_start, "t_start")?;
        self.steps_for(self.t_final, "t_final")?;
        if self.steps_for(self.output_dt, "output_dt")? == 0 {
            return Err(Error::arg("output_dt must be at least dt_solver"));
        }
        Ok(())
    }

    fn steps_for(&self, t: f64, name: &str) -> Result<usize> {
        let s = (t / self.dt_solver).round();
        if !s.is_finite() || (s * self.dt_solver - t).abs() > 1e-9 * t.abs().max(self.dt_solver) {
            return Err(Error::arg(format!("{name} must be a multiple of dt_solver")));
        }
        Ok(s as usize)
    }

    /// Grid points `x_i = i L / n`.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_grid)
            .map(|i| self.domain_length * i as f64 / self.n_grid as f64)
            .collect()
    }
}

/// Solves from a standard normal initial condition drawn with `spec.seed`.
pub fn solve_ks(spec: &KsSpec) -> Result<SnapshotMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u0: Vec<f64> = (0..spec.n_grid).map(|_| StandardNormal.sample(&mut rng)).collect();
    solve_ks_from(spec, &u0)
}

pub fn solve_ks_from(spec: &KsSpec, u0: &[f64]) -> Result<SnapshotMatrix> {
    spec.validate()?;
    let n = spec.n_grid;
    if u0.len() != n {
        return Err(Error::arg(format!("initial condition has {} points, expected {n}", u0.len())));
    }
    let burn = spec.steps_for(spec.t_start, "t_start")?;
    let stride = spec.steps_for(spec.output_dt, "output_dt")?;
    let total = spec.steps_for(spec.t_final, "t_final")?;
    let snapshots = (total - burn) / stride + 1;

    let mut solver = Etdrk4::new(n, spec.domain_length, spec.dt_solver);
    let mut v: Vec<Complex64> = u0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    solver.forward.process(&mut v);

    let mut data = DMatrix::zeros(n, snapshots);
    let mut col = 0;
    for step in 0..=total {
        if step >= burn && (step - burn) % stride == 0 && col < snapshots {
            let u = solver.physical(&v);
            data.set_column(col, &nalgebra::DVector::from_vec(u));
            col += 1;
        }
        if step == total {
            break;
        }
        solver
            .step(&mut v)
            .map_err(|_| Error::BlowUp { time: step as f64 * spec.dt_solver })?;
    }
    Ok(SnapshotMatrix::new(data, spec.output_dt)?.with_grid(Geometry::line(n, true)?))
}

struct Etdrk4 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `-0.5 i k`, zeroed outside the two-thirds band.
    nonlinear: Vec<Complex64>,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Etdrk4 {
    fn new(n: usize, length: f64, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let signed = |j: usize| if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
        let mut nonlinear = Vec::with_capacity(n);
        let (mut e, mut e2, mut q, mut f1, mut f2, mut f3) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for j in 0..n {
            let js = signed(j);
            let k = 2.0 * PI * js / length;
            let keep = 3.0 * js.abs() < n as f64;
            nonlinear.push(if keep { Complex64::new(0.0, -0.5 * k) } else { Complex64::new(0.0, 0.0) });
            let lin = k * k - k * k * k * k;
            e.push((h * lin).exp());
            e2.push((h * lin / 2.0).exp());
            // Contour averages of the phi-functions around h L.
            let (mut sq, mut s1, mut s2, mut s3) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
            for p in 1..=CONTOUR_POINTS {
                let r = Complex64::from_polar(1.0, PI * (p as f64 - 0.5) / CONTOUR_POINTS as f64 * 2.0);
                let lr = Complex64::new(h * lin, 0.0) + r;
                let ex = lr.exp();
                let lr3 = lr * lr * lr;
                sq += ((lr / 2.0).exp() - 1.0) / lr;
                s1 += (-4.0 - lr + ex * (4.0 - 3.0 * lr + lr * lr)) / lr3;
                s2 += (2.0 + lr + ex * (lr - 2.0)) / lr3;
                s3 += (-4.0 - 3.0 * lr - lr * lr + ex * (4.0 - lr)) / lr3;
            }
            let mean = |s: Complex64| h * s.re / CONTOUR_POINTS as f64;
            q.push(mean(sq));
            f1.push(mean(s1));
            f2.push(mean(s2));
            f3.push(mean(s3));
        }
        Self {
            n,
            forward,
            inverse,
            nonlinear,
            e,
            e2,
            q,
            f1,
            f2,
            f3,
            scratch: vec![Complex64::default(); n],
        }
    }

    fn physical(&mut self, v: &[Complex64]) -> Vec<f64> {
        self.scratch.copy_from_slice(v);
        self.inverse.process(&mut self.scratch);
        let scale = 1.0 / self.n as f64;
        self.scratch.iter().map(|c| c.re * scale).collect()
    }

    /// `-0.5 i k FFT(u^2)`; errors when the solution leaves the finite range.
    fn eval(&mut self, v: &[Complex64]) -> std::result::Result<Vec<Complex64>, ()> {
        self.scratch.copy_from_slice(v);
        self.inverse.process(&mut self.scratch);
        let scale = 1.0 / self.n as f64;
        for c in self.scratch.iter_mut() {
            let u = c.re * scale;
            if !(u.abs() <= BLOW_UP_NORM) {
                return Err(());
            }
            *c = Complex64::new(u * u, 0.0);
        }
        self.forward.process(&mut self.scratch);
        Ok(self.scratch.iter().zip(&self.nonlinear).map(|(w, g)| w * g).collect())
    }

    fn step(&mut self, v: &mut [Complex64]) -> std::result::Result<(), ()> {
        let n = self.n;
        let nv = self.eval(v)?;
        let a: Vec<Complex64> = (0..n).map(|j| v[j] * self.e2[j] + nv[j] * self.q[j]).collect();
        let na = self.eval(&a)?;
        let b: Vec<Complex64> = (0..n).map(|j| v[j] * self.e2[j] + na[j] * self.q[j]).collect();
        let nb = self.eval(&b)?;
        let c: Vec<Complex64> = (0..n)
            .map(|j| a[j] * self.e2[j] + (nb[j] * 2.0 - nv[j]) * self.q[j])
            .collect();
        let nc = self.eval(&c)?;
        for j in 0..n {
            v[j] = v[j] * self.e[j] + nv[j] * self.f1[j] + (na[j] + nb[j]) * (2.0 * self.f2[j]) + nc[j] * self.f3[j];
        }
        // Project back onto the spectrum of a real field.
        v[0].im = 0.0;
        v[n / 2].im = 0.0;
        for j in 1..n / 2 {
            let sym = (v[j] + v[n - j].conj()) * 0.5;
            v[j] = sym;
            v[n - j] = sym.conj();
        }
        Ok(())
    }
}
