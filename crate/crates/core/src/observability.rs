//! Observability matrices of periodic sensor schedules and their conditioning.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::linalg;
use crate::model::RealBlockModel;

/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOL: f64 = 1e-10;
/// Below this ratio `sigma_min / sigma_max` the condition number is reported as infinite.
pub const CONDITION_CUTOFF: f64 = 1e-12;

/// Periodic schedule: `locations[t][j]` is sensor `j`'s state index at step `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    k: usize,
    locations: Vec<Vec<usize>>,
}

impl Trajectory {
    pub fn new(locations: Vec<Vec<usize>>) -> Result<Self> {
        let Some(first) = locations.first() else {
            return Err(Error::arg("trajectory period must be at least 1"));
        };
        let k = first.len();
        if k == 0 {
            return Err(Error::arg("trajectory needs at least one sensor"));
        }
        for (t, step) in locations.iter().enumerate() {
            if step.len() != k {
                return Err(Error::arg(format!(
                    "step {t} has {} sensors, expected {k}",
                    step.len()
                )));
            }
            for (a, &i) in step.iter().enumerate() {
                if step[..a].contains(&i) {
                    return Err(Error::arg(format!("duplicate location {i} at step {t}")));
                }
            }
        }
        Ok(Self { k, locations })
    }

    /// Stationary placement (period 1).
    pub fn stationary(locations: Vec<usize>) -> Result<Self> {
        Self::new(vec![locations])
    }

    pub fn period(&self) -> usize {
        self.locations.len()
    }

    pub fn sensors(&self) -> usize {
        self.k
    }

    pub fn steps(&self) -> &[Vec<usize>] {
        &self.locations
    }

    /// Locations at step `t` (0-based), wrapping periodically.
    pub fn at(&self, t: usize) -> &[usize] {
        &self.locations[t % self.period()]
    }

    /// Positions of sensor `j` over one period.
    pub fn sensor_path(&self, j: usize) -> Vec<usize> {
        self.locations.iter().map(|s| s[j]).collect()
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        for (t, step) in self.locations.iter().enumerate() {
            if let Some(&bad) = step.iter().find(|&&i| i >= n) {
                return Err(Error::arg(format!(
                    "location {bad} at step {t} out of range for n = {n}"
                )));
            }
        }
        Ok(())
    }

    /// Same schedule with the period extended by repeating the cycle.
    pub fn repeated(&self, times: usize) -> Self {
        let locations = (0..times).flat_map(|_| self.locations.iter().cloned()).collect();
        Self {
            k: self.k,
            locations,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TrajectoryFile {
            l: self.period(),
            k: self.k,
            locations: self.locations.iter().flatten().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: TrajectoryFile = serde_json::from_str(s)?;
        if f.l == 0 || f.k == 0 || f.locations.len() != f.l * f.k {
            return Err(Error::format(
                "trajectory file",
                format!(
                    "l = {}, k = {} but {} locations",
                    f.l,
                    f.k,
                    f.locations.len()
                ),
            ));
        }
        Self::new(f.locations.chunks(f.k).map(<[usize]>::to_vec).collect())
    }

    /// CSV with columns `t,sensor_id,index,grid_coords`.
    pub fn to_csv(&self, geom: Option<&Geometry>) -> String {
        let mut out = String::from("t,sensor_id,index,grid_coords\n");
        for (t, step) in self.locations.iter().enumerate() {
            for (j, &i) in step.iter().enumerate() {
                let coords = geom.map(|g| g.coord_label(i)).unwrap_or_default();
                let _ = writeln!(out, "{t},{j},{i},{coords}");
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    l: usize,
    k: usize,
    locations: Vec<usize>,
}

/// Stacked `C(sigma_t) Psi Lambda^{t-1}` rows in real-block coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityMatrix {
    matrix: DMatrix<f64>,
    source: Trajectory,
}

impl ObservabilityMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.source
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// `modes * dynamics^t`, by repeated right-multiplication.
pub fn projected_block(model: &RealBlockModel, t: usize) -> DMatrix<f64> {
    let mut x = model.modes().clone();
    for _ in 0..t {
        model.right_multiply(&mut x);
    }
    x
}

/// Stacks, for `t = 1..=l`, the rows of `projected_block(model, t - 1)` selected by
/// `sigma_t` in schedule order.
pub fn assemble(model: &RealBlockModel, traj: &Trajectory) -> Result<ObservabilityMatrix> {
    traj.validate_for(model.n())?;
    let m = model.rank();
    let k = traj.sensors();
    let mut matrix = DMatrix::zeros(traj.period() * k, m);
    let mut x = model.modes().clone();
    for (t, step) in traj.steps().iter().enumerate() {
        if t > 0 {
            model.right_multiply(&mut x);
        }
        for (j, &i) in step.iter().enumerate() {
            matrix.set_row(t * k + j, &x.row(i));
        }
    }
    Ok(ObservabilityMatrix {
        matrix,
        source: traj.clone(),
    })
}

/// `sigma_max / sigma_min` over the `m` columns; `f64::INFINITY` when the matrix has
/// fewer rows than columns or `sigma_min < 1e-12 sigma_max`.
pub fn condition_number(obs: &ObservabilityMatrix) -> f64 {
    matrix_condition(&obs.matrix)
}

pub fn matrix_condition(a: &DMatrix<f64>) -> f64 {
    let m = a.ncols();
    if m == 0 {
        return 1.0;
    }
    if a.nrows() < m {
        return f64::INFINITY;
    }
    let s = linalg::singular_values(a);
    let (max, min) = (s[0], s[m - 1]);
    if max == 0.0 || min < CONDITION_CUTOFF * max {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub observable: bool,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

/// Full column rank test of the assembled observability matrix.
pub fn is_observable(model: &RealBlockModel, traj: &Trajectory) -> Result<RankReport> {
    let obs = assemble(model, traj)?;
    let singular_values = linalg::singular_values(obs.matrix());
    let rank = linalg::numerical_rank(&singular_values, RANK_TOL);
    Ok(RankReport {
        observable: rank == model.rank(),
        rank,
        singular_values,
    })
}
