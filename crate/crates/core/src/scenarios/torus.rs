//! Sparse linear dynamics on a periodic grid: global plane waves plus localized
//! Gaussian wave packets.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::linalg;
use crate::model::ReducedModel;

const CENTER_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusSpec {
    pub rows: usize,
    pub cols: usize,
    /// Conjugate pairs of plane-wave modes.
    pub n_fourier: usize,
    /// Conjugate pairs of Gaussian wave-packet modes.
    pub n_gauss: usize,
    /// Envelope standard deviation in cells.
    pub gauss_width: f64,
    /// Angular frequencies (rad per unit time), sampled uniformly.
    pub freq_range: [f64; 2],
    /// Damping rates (per unit time, <= 0), sampled uniformly.
    pub damp_range: [f64; 2],
    /// Sampling interval.
    pub dt: f64,
    pub seed: u64,
}

impl TorusSpec {
    /// Desk-scale defaults: 32 x 32 grid, two plane-wave and three packet pairs.
    pub fn desk(seed: u64) -> Self {
        Self {
            rows: 32,
            cols: 32,
            n_fourier: 2,
            n_gauss: 3,
            gauss_width: 2.0,
            freq_range: [0.05, 0.3],
            damp_range: [-0.005, -0.001],
            dt: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 4 || self.cols < 4 {
            return Err(Error::arg("torus grid needs at least 4 x 4 cells"));
        }
        if self.n_fourier + self.n_gauss == 0 {
            return Err(Error::arg("torus model needs at least one mode pair"));
        }
        if !(self.gauss_width > 0.0) {
            return Err(Error::arg("gauss_width must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::arg("dt must be positive"));
        }
        let [f0, f1] = self.freq_range;
        if !(f0 > 0.0 && f0 <= f1 && f1 * self.dt < PI) {
            return Err(Error::arg(
                "freq_range must satisfy 0 < lo <= hi < pi / dt",
            ));
        }
        let [d0, d1] = self.damp_range;
        if !(d0.is_finite() && d0 <= d1 && d1 <= 0.0) {
            return Err(Error::arg("damp_range must satisfy lo <= hi <= 0"));
        }
        let kmax = self.max_wavenumber();
        let available = (((2 * kmax + 1) * (2 * kmax + 1) - 1) / 2) as usize;
        if self.n_fourier > available {
            return Err(Error::arg(format!(
                "at most {available} distinct plane waves fit this grid"
            )));
        }
        Ok(())
    }

    fn max_wavenumber(&self) -> i64 {
        (self.rows.min(self.cols) as i64 / 2 - 1).clamp(1, 3)
    }
}

#[derive(Clone, Debug)]
pub struct TorusScenario {
    pub model: ReducedModel,
    pub geometry: Geometry,
    /// Packet centers as state indices, in mode order.
    pub gauss_centers: Vec<usize>,
    pub spec: TorusSpec,
}

impl TorusScenario {
    /// Highest sampled angular frequency (rad per unit time).
    pub fn max_frequency(&self) -> f64 {
        self.model
            .eigenvalues()
            .iter()
            .map(|l| l.arg().abs())
            .fold(0.0, f64::max)
            / self.spec.dt
    }

    /// Sampling steps in one Nyquist period `pi / omega_max`: the cycle budget.
    pub fn nyquist_steps(&self) -> usize {
        ((PI / self.max_frequency()) / self.spec.dt).floor().max(1.0) as usize
    }
}

pub fn make_torus(spec: &TorusSpec) -> Result<TorusScenario> {
    spec.validate()?;
    let geometry = Geometry::torus(spec.rows, spec.cols)?;
    let n = spec.rows * spec.cols;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let eig = |rng: &mut ChaCha8Rng| {
        let w = uniform(rng, spec.freq_range);
        let d = uniform(rng, spec.damp_range);
        Complex64::new(d * spec.dt, w * spec.dt).exp()
    };

    let mut units: Vec<(Complex64, DVector<Complex64>, Option<usize>)> = Vec::new();
    let kmax = spec.max_wavenumber();
    let mut waves: Vec<(i64, i64)> = Vec::new();
    while waves.len() < spec.n_fourier {
        let k = (rng.random_range(-kmax..=kmax), rng.random_range(-kmax..=kmax));
        if k == (0, 0) || waves.contains(&k) || waves.contains(&(-k.0, -k.1)) {
            continue;
        }
        waves.push(k);
    }
    for &(kr, kc) in &waves {
        let scale = 1.0 / (n as f64).sqrt();
        let v = DVector::from_fn(n, |i, _| {
            let (r, c) = ((i / spec.cols) as f64, (i % spec.cols) as f64);
            let phase = 2.0 * PI * (kr as f64 * r / spec.rows as f64 + kc as f64 * c / spec.cols as f64);
            Complex64::from_polar(scale, phase)
        });
        units.push((eig(&mut rng), v, None));
    }

    let centers = sample_centers(spec, &geometry, &mut rng)?;
    for &center in &centers {
        let [cr, cc] = geometry.coords(center);
        let heading = rng.random_range(0.0..2.0 * PI);
        let carrier = 1.0 / spec.gauss_width;
        let v = DVector::from_fn(n, |i, _| {
            let (dr, dc) = wrapped_offset(geometry.coords(i), [cr, cc], spec.rows, spec.cols);
            let env = (-(dr * dr + dc * dc) / (2.0 * spec.gauss_width * spec.gauss_width)).exp();
            let phase = carrier * (dr * heading.sin() + dc * heading.cos());
            Complex64::from_polar(env, phase)
        });
        let v = linalg::normalize_phase(&v / Complex64::new(v.norm(), 0.0));
        units.push((eig(&mut rng), v, Some(center)));
    }

    units.sort_by(|a, b| linalg::canonical_cmp(&a.0, &b.0));
    let order_centers: Vec<usize> = units.iter().filter_map(|u| u.2).collect();
    let m = 2 * units.len();
    let mut values = Vec::with_capacity(m);
    let mut modes = DMatrix::zeros(n, m);
    for (lam, v, _) in units {
        let j = values.len();
        values.push(lam);
        modes.set_column(j, &v);
        values.push(lam.conj());
        modes.set_column(j + 1, &v.map(|c| c.conj()));
    }
    let model = ReducedModel::from_canonical(values, modes)?;
    Ok(TorusScenario {
        model,
        geometry,
        gauss_centers: order_centers,
        spec: spec.clone(),
    })
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn wrapped_offset(p: [f64; 2], c: [f64; 2], rows: usize, cols: usize) -> (f64, f64) {
    let wrap = |d: f64, len: f64| d - len * (d / len).round();
    (wrap(p[0] - c[0], rows as f64), wrap(p[1] - c[1], cols as f64))
}

fn sample_centers(spec: &TorusSpec, geom: &Geometry, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = spec.rows * spec.cols;
    for _ in 0..CENTER_ATTEMPTS {
        let centers: Vec<usize> = (0..spec.n_gauss).map(|_| rng.random_range(0..n)).collect();
        let separated = centers.iter().enumerate().all(|(a, &ca)| {
            centers[..a]
                .iter()
                .all(|&cb| geom.distance(ca, cb) >= 2.0 * spec.gauss_width)
        });
        if separated {
            return Ok(centers);
        }
    }
    Err(Error::arg(format!(
        "could not place {} packets at least {} cells apart in {CENTER_ATTEMPTS} attempts",
        spec.n_gauss,
        2.0 * spec.gauss_width
    )))
}
