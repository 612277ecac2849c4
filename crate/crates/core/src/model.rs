//! Reduced-order linear models `x_t = Psi z_t`, `z_{t+1} = Lambda z_t + w_t`.
//!
//! The complex diagonal form ([`ReducedModel`]) is canonical. Filtering and
//! planning consume the real block-diagonal form ([`RealBlockModel`]), obtained
//! with [`ReducedModel::to_real_blocks`].
//!
//! Real-block convention: for a conjugate pair `lambda = a + ib` (b > 0) with lead
//! mode `psi = u + iv`, the real coordinates are `c1 = 2 Re z`, `c2 = 2 Im z`, the
//! dynamics block is `[[a, -b], [b, a]]` and the real mode columns are `[u, -v]`,
//! so that `u c1 - v c2 = Re(psi z + conj(psi z))`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::linalg::{self, Unit};

/// Full-order system `x_{t+1} = A x_t + w_t`, `y_t = C_t x_t + v_t`.
#[derive(Clone, Debug)]
pub struct FullModel {
    a: DMatrix<f64>,
    q_scale: f64,
    r_scale: f64,
}

impl FullModel {
    pub fn new(a: DMatrix<f64>, q_scale: f64, r_scale: f64) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::arg(format!(
                "dynamics matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !(q_scale >= 0.0) || !(r_scale > 0.0) {
            return Err(Error::arg("require q >= 0 and rho > 0"));
        }
        Ok(Self {
            a,
            q_scale,
            r_scale,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            q: self.q_scale,
            rho: self.r_scale,
        }
    }
}

/// Disturbance variance `q` (Q = qI in reduced coordinates) and measurement variance `rho` (R = rho I).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub q: f64,
    pub rho: f64,
}

impl NoiseSpec {
    pub fn new(q: f64, rho: f64) -> Result<Self> {
        if !(q >= 0.0) || !(rho > 0.0) || !q.is_finite() || !rho.is_finite() {
            return Err(Error::arg(format!("invalid noise spec q={q}, rho={rho}")));
        }
        Ok(Self { q, rho })
    }
}

/// Conjugate structure of a mode column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMarker {
    Real,
    PairLead,
    /// Conjugate partner of the column with the given index.
    PairFollow(usize),
}

/// Diagonal complex reduced model.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedModel {
    eigenvalues: Vec<Complex64>,
    modes: DMatrix<Complex64>,
    pair_map: Vec<PairMarker>,
}

impl ReducedModel {
    /// Validates the conjugate structure: paired columns adjacent and conjugate
    /// (eigenvalues and modes to 1e-10 relative), real columns with real eigenvalue and mode.
    pub fn new(
        eigenvalues: Vec<Complex64>,
        modes: DMatrix<Complex64>,
        pair_map: Vec<PairMarker>,
    ) -> Result<Self> {
        let m = eigenvalues.len();
        if m == 0 {
            return Err(Error::arg("model rank must be at least 1"));
        }
        if modes.ncols() != m || pair_map.len() != m {
            return Err(Error::Structure(format!(
                "{} eigenvalues, {} mode columns, {} pair markers",
                m,
                modes.ncols(),
                pair_map.len()
            )));
        }
        if m > modes.nrows() {
            return Err(Error::arg(format!(
                "rank {m} exceeds state dimension {}",
                modes.nrows()
            )));
        }
        let mut j = 0;
        while j < m {
            match pair_map[j] {
                PairMarker::Real => {
                    let lam = eigenvalues[j];
                    let col = modes.column(j);
                    let imag = col.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
                    if lam.im.abs() > 1e-10 * lam.norm().max(1e-300) || imag > 1e-10 * col.norm()
                    {
                        return Err(Error::Structure(format!(
                            "column {j} is marked real but is complex"
                        )));
                    }
                    j += 1;
                }
                PairMarker::PairLead => {
                    if j + 1 >= m || pair_map[j + 1] != PairMarker::PairFollow(j) {
                        return Err(Error::Structure(format!(
                            "pair lead at column {j} is not followed by its partner"
                        )));
                    }
                    let (a, b) = (eigenvalues[j], eigenvalues[j + 1]);
                    if (a - b.conj()).norm() > 1e-10 * a.norm().max(1e-300) {
                        return Err(Error::Structure(format!(
                            "eigenvalues at columns {j}, {} are not conjugate",
                            j + 1
                        )));
                    }
                    let (ca, cb) = (modes.column(j), modes.column(j + 1));
                    let diff = ca
                        .iter()
                        .zip(cb.iter())
                        .map(|(x, y)| (x - y.conj()).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    if diff > 1e-10 * ca.norm().max(1e-300) {
                        return Err(Error::Structure(format!(
                            "modes at columns {j}, {} are not conjugate",
                            j + 1
                        )));
                    }
                    j += 2;
                }
                PairMarker::PairFollow(_) => {
                    return Err(Error::Structure(format!(
                        "pair follower at column {j} without a lead"
                    )));
                }
            }
        }
        Ok(Self {
            eigenvalues,
            modes,
            pair_map,
        })
    }

    /// Builds the model from canonical eigenvalues (pairs adjacent, positive imaginary
    /// first) and their eigenvectors, deriving the pair map.
    pub(crate) fn from_canonical(
        eigenvalues: Vec<Complex64>,
        modes: DMatrix<Complex64>,
    ) -> Result<Self> {
        let mut pair_map = Vec::with_capacity(eigenvalues.len());
        for unit in linalg::units_of(&eigenvalues) {
            match unit {
                Unit::Real(_) => pair_map.push(PairMarker::Real),
                Unit::Pair(i) => {
                    pair_map.push(PairMarker::PairLead);
                    pair_map.push(PairMarker::PairFollow(i));
                }
            }
        }
        pair_map.truncate(eigenvalues.len());
        Self::new(eigenvalues, modes, pair_map)
    }

    /// Random model with `n_pairs` conjugate pairs and `n_real` real eigenvalues.
    ///
    /// Pair moduli are drawn from [0.5, 0.99], arguments from [0.05, pi - 0.05];
    /// real eigenvalues from +-[0.3, 0.99]. Modes are Gaussian, unit-norm.
    pub fn random<R: Rng>(n: usize, n_pairs: usize, n_real: usize, rng: &mut R) -> Result<Self> {
        let m = 2 * n_pairs + n_real;
        if m == 0 || m > n {
            return Err(Error::arg(format!("cannot build rank {m} model with n = {n}")));
        }
        let mut units: Vec<(Complex64, DVector<Complex64>)> = Vec::new();
        for _ in 0..n_pairs {
            let r = rng.random_range(0.5..0.99);
            let th = rng.random_range(0.05..(std::f64::consts::PI - 0.05));
            let v = DVector::from_fn(n, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            units.push((Complex64::from_polar(r, th), linalg::normalize_phase(v)));
        }
        for _ in 0..n_real {
            let mag: f64 = rng.random_range(0.3..0.99);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let v = DVector::from_fn(n, |_, _| Complex64::new(rng.sample(StandardNormal), 0.0));
            units.push((Complex64::new(sign * mag, 0.0), linalg::normalize_phase(v)));
        }
        units.sort_by(|a, b| linalg::canonical_cmp(&a.0, &b.0));
        let mut values = Vec::with_capacity(m);
        let mut modes = DMatrix::zeros(n, m);
        for (lam, v) in units {
            let j = values.len();
            values.push(lam);
            modes.set_column(j, &v);
            if lam.im != 0.0 {
                values.push(lam.conj());
                modes.set_column(j + 1, &v.map(|c| c.conj()));
            }
        }
        Self::from_canonical(values, modes)
    }

    pub fn n(&self) -> usize {
        self.modes.nrows()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &DMatrix<Complex64> {
        &self.modes
    }

    pub fn pair_map(&self) -> &[PairMarker] {
        &self.pair_map
    }

    /// Whether `z` satisfies `z[follow] = conj(z[lead])` and is real on real columns.
    pub fn is_conjugate_symmetric(&self, z: &[Complex64], tol: f64) -> bool {
        if z.len() != self.rank() {
            return false;
        }
        let scale = z.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        self.pair_map.iter().enumerate().all(|(j, p)| match p {
            PairMarker::Real => z[j].im.abs() <= tol * scale,
            PairMarker::PairLead => (z[j] - z[j + 1].conj()).norm() <= tol * scale,
            PairMarker::PairFollow(_) => true,
        })
    }

    /// Field `Psi z` (complex; real for conjugate-symmetric `z`).
    pub fn field(&self, z: &[Complex64]) -> DVector<Complex64> {
        &self.modes * DVector::from_column_slice(z)
    }

    /// Real-block coordinates of a conjugate-symmetric complex state.
    pub fn real_coefficients(&self, z: &[Complex64]) -> Result<DVector<f64>> {
        if !self.is_conjugate_symmetric(z, 1e-10) {
            return Err(Error::arg("state is not conjugate-symmetric"));
        }
        let mut c = DVector::zeros(self.rank());
        for (j, p) in self.pair_map.iter().enumerate() {
            match p {
                PairMarker::Real => c[j] = z[j].re,
                PairMarker::PairLead => {
                    c[j] = 2.0 * z[j].re;
                    c[j + 1] = 2.0 * z[j].im;
                }
                PairMarker::PairFollow(_) => {}
            }
        }
        Ok(c)
    }

    /// Real block-diagonal form used by the filter and planner.
    pub fn to_real_blocks(&self) -> Result<RealBlockModel> {
        let n = self.n();
        let m = self.rank();
        let mut blocks = Vec::new();
        let mut modes = DMatrix::zeros(n, m);
        let mut j = 0;
        while j < m {
            match self.pair_map[j] {
                PairMarker::Real => {
                    blocks.push(Block::Real {
                        col: j,
                        value: self.eigenvalues[j].re,
                    });
                    for r in 0..n {
                        modes[(r, j)] = self.modes[(r, j)].re;
                    }
                    j += 1;
                }
                PairMarker::PairLead => {
                    if j + 1 >= m || self.pair_map[j + 1] != PairMarker::PairFollow(j) {
                        return Err(Error::Structure(format!("broken pair at column {j}")));
                    }
                    let lam = self.eigenvalues[j];
                    blocks.push(Block::Rotation {
                        col: j,
                        re: lam.re,
                        im: lam.im,
                    });
                    for r in 0..n {
                        let psi = self.modes[(r, j)];
                        modes[(r, j)] = psi.re;
                        modes[(r, j + 1)] = -psi.im;
                    }
                    j += 2;
                }
                PairMarker::PairFollow(_) => {
                    return Err(Error::Structure(format!("orphan follower at column {j}")));
                }
            }
        }
        Ok(RealBlockModel::from_parts(blocks, modes))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(&self.to_file())?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(&fs::read(path)?)?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    fn to_file(&self) -> ModelFile {
        let n = self.n();
        let m = self.rank();
        let mut modes = Vec::with_capacity(n * m);
        for r in 0..n {
            for c in 0..m {
                let v = self.modes[(r, c)];
                modes.push([v.re, v.im]);
            }
        }
        ModelFile {
            n,
            m,
            eigenvalues: self.eigenvalues.iter().map(|c| [c.re, c.im]).collect(),
            modes,
            pair_map: self.pair_map.clone(),
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.eigenvalues.len() != f.m || f.modes.len() != f.n * f.m {
            return Err(Error::format(
                "model file",
                format!(
                    "expected {} eigenvalues and {} mode entries, found {} and {}",
                    f.m,
                    f.n * f.m,
                    f.eigenvalues.len(),
                    f.modes.len()
                ),
            ));
        }
        let modes = DMatrix::from_fn(f.n, f.m, |r, c| {
            let [re, im] = f.modes[r * f.m + c];
            Complex64::new(re, im)
        });
        let values = f
            .eigenvalues
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        Self::new(values, modes, f.pair_map)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    n: usize,
    m: usize,
    eigenvalues: Vec<[f64; 2]>,
    modes: Vec<[f64; 2]>,
    pair_map: Vec<PairMarker>,
}

/// One diagonal block of the real dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Block {
    Real { col: usize, value: f64 },
    /// `[[re, -im], [im, re]]` acting on columns `col`, `col + 1`.
    Rotation { col: usize, re: f64, im: f64 },
}

/// Real block-diagonal model: `x = modes * c`, `c_{t+1} = dynamics * c_t + w_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealBlockModel {
    blocks: Vec<Block>,
    dynamics: DMatrix<f64>,
    modes: DMatrix<f64>,
}

impl RealBlockModel {
    pub(crate) fn from_parts(blocks: Vec<Block>, modes: DMatrix<f64>) -> Self {
        let m = modes.ncols();
        let mut dynamics = DMatrix::zeros(m, m);
        for b in &blocks {
            match *b {
                Block::Real { col, value } => dynamics[(col, col)] = value,
                Block::Rotation { col, re, im } => {
                    dynamics[(col, col)] = re;
                    dynamics[(col, col + 1)] = -im;
                    dynamics[(col + 1, col)] = im;
                    dynamics[(col + 1, col + 1)] = re;
                }
            }
        }
        Self {
            blocks,
            dynamics,
            modes,
        }
    }

    pub fn n(&self) -> usize {
        self.modes.nrows()
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn dynamics(&self) -> &DMatrix<f64> {
        &self.dynamics
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// Same dynamics with every mode column scaled by `c`.
    pub fn with_scaled_modes(&self, c: f64) -> Self {
        Self {
            blocks: self.blocks.clone(),
            dynamics: self.dynamics.clone(),
            modes: &self.modes * c,
        }
    }

    /// The same model sampled every `stride` steps: each block is raised to that power,
    /// modes unchanged.
    pub fn resampled(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::arg("stride must be at least 1"));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| match *b {
                Block::Real { col, value } => Block::Real {
                    col,
                    value: value.powi(stride as i32),
                },
                Block::Rotation { col, re, im } => {
                    let p = Complex64::new(re, im).powu(stride as u32);
                    Block::Rotation { col, re: p.re, im: p.im }
                }
            })
            .collect();
        Ok(Self::from_parts(blocks, self.modes.clone()))
    }

    /// Eigenvalues of the block dynamics (positive-imaginary member first per pair).
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.rank());
        for b in &self.blocks {
            match *b {
                Block::Real { value, .. } => out.push(Complex64::new(value, 0.0)),
                Block::Rotation { re, im, .. } => {
                    out.push(Complex64::new(re, im));
                    out.push(Complex64::new(re, -im));
                }
            }
        }
        out
    }

    /// In-place `x <- x * dynamics` for a matrix whose columns are in real-block coordinates.
    pub fn right_multiply(&self, x: &mut DMatrix<f64>) {
        for b in &self.blocks {
            match *b {
                Block::Real { col, value } => {
                    x.column_mut(col).scale_mut(value);
                }
                Block::Rotation { col, re, im } => {
                    for r in 0..x.nrows() {
                        let (p, q) = (x[(r, col)], x[(r, col + 1)]);
                        x[(r, col)] = p * re + q * im;
                        x[(r, col + 1)] = -p * im + q * re;
                    }
                }
            }
        }
    }

    /// `dynamics * c`.
    pub fn propagate(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut out = c.clone();
        for b in &self.blocks {
            match *b {
                Block::Real { col, value } => out[col] = value * c[col],
                Block::Rotation { col, re, im } => {
                    out[col] = re * c[col] - im * c[col + 1];
                    out[col + 1] = im * c[col] + re * c[col + 1];
                }
            }
        }
        out
    }

    /// `dynamics^t` by repeated multiplication.
    pub fn dynamics_power(&self, t: usize) -> DMatrix<f64> {
        let mut p = DMatrix::identity(self.rank(), self.rank());
        for _ in 0..t {
            self.right_multiply(&mut p);
        }
        p
    }

    /// Field reconstruction `modes * c`.
    pub fn field(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.modes * c
    }

    /// Noisy trajectory of coefficients and fields from `c0`; columns are time steps.
    pub fn simulate_coefficients(
        &self,
        c0: &DVector<f64>,
        steps: usize,
        q: f64,
        seed: u64,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if c0.len() != self.rank() {
            return Err(Error::arg("initial coefficient length does not match rank"));
        }
        if steps == 0 {
            return Err(Error::arg("steps must be at least 1"));
        }
        if !(q >= 0.0) {
            return Err(Error::arg("disturbance variance must be nonnegative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = q.sqrt();
        let mut coeffs = DMatrix::zeros(self.rank(), steps);
        let mut c = c0.clone();
        for t in 0..steps {
            coeffs.set_column(t, &c);
            let mut next = self.propagate(&c);
            if sd > 0.0 {
                for v in next.iter_mut() {
                    *v += sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            c = next;
        }
        let fields = &self.modes * &coeffs;
        Ok((coeffs, fields))
    }
}

/// Field snapshots, one column per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    dt: f64,
    grid: Option<Geometry>,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>, dt: f64) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::arg("snapshot matrix must be non-empty"));
        }
        if !(dt > 0.0) {
            return Err(Error::arg("sampling interval must be positive"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite snapshot entry at row {}, column {}",
                pos % data.nrows(),
                pos / data.nrows()
            )));
        }
        Ok(Self {
            data,
            dt,
            grid: None,
        })
    }

    pub fn with_grid(mut self, grid: Geometry) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> Option<&Geometry> {
        self.grid.as_ref()
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Every `stride`-th column starting at column 0.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::arg("stride must be positive"));
        }
        let cols: Vec<usize> = (0..self.len()).step_by(stride).collect();
        let data = self.data.select_columns(cols.iter());
        Ok(Self {
            data,
            dt: self.dt * stride as f64,
            grid: self.grid.clone(),
        })
    }

    /// Columns `[start, end)`.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::arg(format!("invalid window [{start}, {end})")));
        }
        Ok(Self {
            data: self.data.columns(start, end - start).into_owned(),
            dt: self.dt,
            grid: self.grid.clone(),
        })
    }
}

/// Result of [`spectral_truncate`]; `model.rank()` may be one less than requested
/// when the cut would split a conjugate pair.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub model: ReducedModel,
    pub requested_rank: usize,
}

impl Truncation {
    pub fn adjusted(&self) -> bool {
        self.model.rank() != self.requested_rank
    }
}

/// Keeps the `m` eigenvalues of largest modulus of a known system matrix together
/// with their eigenvectors.
pub fn spectral_truncate(full: &FullModel, m: usize) -> Result<Truncation> {
    if m < 1 {
        return Err(Error::arg("rank must be at least 1"));
    }
    if m > full.n() {
        return Err(Error::arg(format!(
            "rank {m} exceeds state dimension {}",
            full.n()
        )));
    }
    let all = linalg::canonical_eigenvalues(full.a());
    let mut kept = Vec::with_capacity(m);
    for unit in linalg::units_of(&all) {
        match unit {
            Unit::Real(i) => {
                if kept.len() + 1 > m {
                    break;
                }
                kept.push(all[i]);
            }
            Unit::Pair(i) => {
                if kept.len() + 2 > m {
                    break;
                }
                kept.push(all[i]);
                kept.push(all[i + 1]);
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::arg(
            "rank 1 would split a conjugate pair; request rank 2",
        ));
    }
    let modes = linalg::eigenvectors_for(full.a(), &kept)?;
    Ok(Truncation {
        model: ReducedModel::from_canonical(kept, modes)?,
        requested_rank: m,
    })
}

/// Exact DMD at rank `m`, with unit-norm modes in canonical eigenvalue order.
pub fn fit_dmd(snaps: &SnapshotMatrix, m: usize) -> Result<ReducedModel> {
    if m < 1 {
        return Err(Error::arg("rank must be at least 1"));
    }
    let t = snaps.len();
    if t < m + 1 {
        return Err(Error::arg(format!(
            "need at least {} snapshots for rank {m}, got {t}",
            m + 1
        )));
    }
    let data = snaps.data();
    let x = data.columns(0, t - 1).into_owned();
    let y = data.columns(1, t - 1);

    let svd = x.svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sorted: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let achievable = linalg::numerical_rank(&sorted, 1e-12);
    if achievable < m {
        return Err(Error::DegenerateRank {
            requested: m,
            achievable,
        });
    }
    let u_full = svd.u.expect("left vectors requested");
    let vt_full = svd.v_t.expect("right vectors requested");
    let u = u_full.select_columns(order[..m].iter());
    let v = vt_full.select_rows(order[..m].iter()).transpose();
    let s_inv = DMatrix::from_diagonal(&DVector::from_iterator(
        m,
        sorted[..m].iter().map(|s| 1.0 / s),
    ));

    // Y V S^-1 is shared by the reduced operator and the exact modes.
    let yvs = y * &v * &s_inv;
    let reduced = u.transpose() * &yvs;
    let values = linalg::canonical_eigenvalues(&reduced);
    let w = linalg::eigenvectors_for(&reduced, &values)?;

    let yvs_c = yvs.map(|x| Complex64::new(x, 0.0));
    let u_c = u.map(|x| Complex64::new(x, 0.0));
    let max_mod = values.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let n = snaps.n();
    let mut modes = DMatrix::<Complex64>::zeros(n, m);
    let mut j = 0;
    while j < m {
        let wj = w.column(j);
        let mut phi = &yvs_c * wj;
        if values[j].norm() <= 1e-12 * max_mod || phi.norm() <= 1e-12 {
            // Zero eigenvalue: exact mode vanishes, use the projected mode.
            phi = &u_c * wj;
        }
        if values[j].im == 0.0 {
            phi.iter_mut().for_each(|c| c.im = 0.0);
        }
        let phi = linalg::normalize_phase(phi);
        modes.set_column(j, &phi);
        if values[j].im != 0.0 {
            modes.set_column(j + 1, &phi.map(|c| c.conj()));
            j += 2;
        } else {
            j += 1;
        }
    }
    ReducedModel::from_canonical(values, modes)
}

/// Forward simulation `z_{t+1} = Lambda z_t + w_t`, emitting `x_t = Re(Psi z_t)` for
/// `t = 0..steps`. The disturbance is drawn as `N(0, q I)` in real-block coordinates.
pub fn simulate(
    model: &ReducedModel,
    z0: &[Complex64],
    steps: usize,
    noise: NoiseSpec,
    seed: u64,
    dt: f64,
) -> Result<SnapshotMatrix> {
    let c0 = model.real_coefficients(z0)?;
    let real = model.to_real_blocks()?;
    let (_, fields) = real.simulate_coefficients(&c0, steps, noise.q, seed)?;
    SnapshotMatrix::new(fields, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rotation(theta: f64, r: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                r * theta.cos(),
                -r * theta.sin(),
                r * theta.sin(),
                r * theta.cos(),
            ],
        )
    }

    #[test]
    fn truncate_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5, 0.1]));
        let t = spectral_truncate(&FullModel::new(a, 0.1, 1.0).unwrap(), 2).unwrap();
        assert!(!t.adjusted());
        let ev = t.model.eigenvalues();
        assert_relative_eq!(ev[0].re, 0.9, epsilon = 1e-14);
        assert_relative_eq!(ev[1].re, 0.5, epsilon = 1e-14);
        for j in 0..2 {
            for i in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((t.model.modes()[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn truncate_rotation_gives_pair() {
        let a = rotation(0.3, 0.95);
        let t = spectral_truncate(&FullModel::new(a, 0.0, 1.0).unwrap(), 2).unwrap();
        let ev = t.model.eigenvalues();
        assert!((ev[0] - Complex64::from_polar(0.95, 0.3)).norm() < 1e-12);
        assert!((ev[1] - Complex64::from_polar(0.95, -0.3)).norm() < 1e-12);
        assert_eq!(
            t.model.pair_map(),
            &[PairMarker::PairLead, PairMarker::PairFollow(0)]
        );
    }

    #[test]
    fn truncate_never_splits_pair() {
        let mut a = DMatrix::zeros(3, 3);
        a.view_mut((0, 0), (2, 2)).copy_from(&rotation(0.4, 0.9));
        a[(2, 2)] = 0.3;
        let t = spectral_truncate(&FullModel::new(a, 0.0, 1.0).unwrap(), 1);
        assert!(t.is_err());
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 0)] = 0.95;
        b.view_mut((1, 1), (2, 2)).copy_from(&rotation(0.4, 0.9));
        let t = spectral_truncate(&FullModel::new(b, 0.0, 1.0).unwrap(), 2).unwrap();
        assert!(t.adjusted());
        assert_eq!(t.model.rank(), 1);
    }

    #[test]
    fn truncate_rejects_rank_zero() {
        let a = DMatrix::identity(2, 2);
        assert!(matches!(
            spectral_truncate(&FullModel::new(a, 0.0, 1.0).unwrap(), 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dmd_scalar_geometric() {
        let data = DMatrix::from_fn(1, 20, |_, t| 0.95f64.powi(t as i32));
        let model = fit_dmd(&SnapshotMatrix::new(data, 1.0).unwrap(), 1).unwrap();
        assert!((model.eigenvalues()[0] - Complex64::new(0.95, 0.0)).norm() < 1e-10);
        assert!((model.modes()[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dmd_constant_snapshots_are_degenerate() {
        let data = DMatrix::from_fn(4, 10, |i, _| i as f64 + 1.0);
        let err = fit_dmd(&SnapshotMatrix::new(data, 1.0).unwrap(), 2).unwrap_err();
        assert!(matches!(
            err,
            Error::DegenerateRank {
                requested: 2,
                achievable: 1
            }
        ));
    }

    #[test]
    fn real_blocks_rotation_convention() {
        let a = rotation(0.3, 0.95);
        let model = spectral_truncate(&FullModel::new(a, 0.0, 1.0).unwrap(), 2)
            .unwrap()
            .model;
        let rb = model.to_real_blocks().unwrap();
        let d = rb.dynamics();
        assert_relative_eq!(d[(0, 0)], 0.95 * 0.3f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(d[(0, 1)], -0.95 * 0.3f64.sin(), epsilon = 1e-12);
        assert_relative_eq!(d[(1, 0)], 0.95 * 0.3f64.sin(), epsilon = 1e-12);
        assert_relative_eq!(d[(1, 1)], 0.95 * 0.3f64.cos(), epsilon = 1e-12);
    }

    #[test]
    fn resampling_matches_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = ReducedModel::random(8, 2, 1, &mut rng).unwrap().to_real_blocks().unwrap();
        let r = m.resampled(3).unwrap();
        assert!((r.dynamics() - m.dynamics_power(3)).amax() < 1e-14);
        assert_eq!(r.modes(), m.modes());
        assert!(m.resampled(0).is_err());
    }

    #[test]
    fn real_block_scalar() {
        let model = ReducedModel::new(
            vec![Complex64::new(0.9, 0.0)],
            DMatrix::from_element(2, 1, Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)),
            vec![PairMarker::Real],
        )
        .unwrap();
        let rb = model.to_real_blocks().unwrap();
        assert_eq!(rb.dynamics(), &DMatrix::from_element(1, 1, 0.9));
    }

    #[test]
    fn inconsistent_pair_map_is_structural_error() {
        let modes = DMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64 + 1.0, j as f64 + 1.0));
        let values = vec![Complex64::new(0.5, 0.2), Complex64::new(0.5, -0.2)];
        let err = ReducedModel::new(
            values,
            modes,
            vec![PairMarker::PairLead, PairMarker::PairFollow(0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn real_coefficients_reproduce_complex_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = ReducedModel::random(12, 2, 1, &mut rng).unwrap();
        let z = vec![
            Complex64::new(0.3, -0.7),
            Complex64::new(0.3, 0.7),
            Complex64::new(1.1, 0.2),
            Complex64::new(1.1, -0.2),
            Complex64::new(-0.4, 0.0),
        ];
        let c = model.real_coefficients(&z).unwrap();
        let rb = model.to_real_blocks().unwrap();
        let real = rb.field(&c);
        let complex = model.field(&z);
        for i in 0..12 {
            assert!((real[i] - complex[i].re).abs() < 1e-12);
            assert!(complex[i].im.abs() < 1e-12);
        }
    }

    #[test]
    fn simulate_fixed_point_and_decay() {
        let ones = ReducedModel::new(
            vec![Complex64::new(1.0, 0.0)],
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            vec![PairMarker::Real],
        )
        .unwrap();
        let z0 = [Complex64::new(1.0, 0.0)];
        let s = simulate(&ones, &z0, 5, NoiseSpec::new(0.0, 1.0).unwrap(), 0, 1.0).unwrap();
        assert!(s.data().iter().all(|&v| v == 1.0));

        let half = ReducedModel::new(
            vec![Complex64::new(0.5, 0.0)],
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            vec![PairMarker::Real],
        )
        .unwrap();
        let s = simulate(&half, &z0, 3, NoiseSpec::new(0.0, 1.0).unwrap(), 0, 1.0).unwrap();
        assert_eq!(s.data().as_slice(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn simulate_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = ReducedModel::random(6, 1, 1, &mut rng).unwrap();
        let z0: Vec<Complex64> = model
            .pair_map()
            .iter()
            .map(|p| match p {
                PairMarker::Real => Complex64::new(0.2, 0.0),
                PairMarker::PairLead => Complex64::new(1.0, 0.5),
                PairMarker::PairFollow(_) => Complex64::new(1.0, -0.5),
            })
            .collect();
        let noise = NoiseSpec::new(0.01, 1.0).unwrap();
        let a = simulate(&model, &z0, 50, noise, 42, 0.1).unwrap();
        let b = simulate(&model, &z0, 50, noise, 42, 0.1).unwrap();
        let bits = |s: &SnapshotMatrix| s.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn simulate_rejects_asymmetric_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = ReducedModel::random(6, 1, 0, &mut rng).unwrap();
        let z0 = [Complex64::new(1.0, 0.5), Complex64::new(1.0, 0.5)];
        assert!(simulate(&model, &z0, 3, NoiseSpec::new(0.0, 1.0).unwrap(), 0, 1.0).is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let model = ReducedModel::random(9, 2, 2, &mut rng).unwrap();
        let back = ReducedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);
    }
}
