//! Builds, plans and filters one configuration; runs sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use obsplan::scenarios::{load_gridded, make_torus, mask_geometry, solve_ks, GridFormat, KsSpec, TorusSpec};
use obsplan::{
    dare_iterate, dare_trace_bounds, fit_dmd, is_observable, lift_system, multiscale_refine_with_report,
    plan_with_report, run_filter, Geometry, KfRun, Measurements, MotionConstraint, NoiseSpec, PlanConfig,
    PlanOutcome, RealBlockModel, SnapshotMatrix,
};

use crate::config::{stride_for, ExperimentConfig, MeasurementKind, ModelChoice, Scenario, SensorMode};
use crate::error::CliError;
use crate::manifest::{Failure, FileLog, RunManifest};

/// Training length of a torus DMD fit when the config leaves it out.
const DEFAULT_TORUS_TRAIN: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Plan,
    Filter,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub plan_report: bool,
}

/// Everything the planner and the filter need, at the sampling rate.
pub struct Prepared {
    pub model: RealBlockModel,
    pub geometry: Geometry,
    /// Truth or measurement data for the filter (absent when simulating).
    pub test: Option<SnapshotMatrix>,
    pub sampling_dt: f64,
    pub stride: usize,
    pub nyquist_steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub condition_number: Option<f64>,
    pub observable: bool,
    pub rank: usize,
    pub model_rank: usize,
    pub singular_values: Vec<f64>,
    pub period: usize,
    pub sensors: usize,
    pub nyquist_steps: usize,
    pub sampling_dt: f64,
    pub stride: usize,
    pub fallback_events: usize,
    /// Riccati fixed point and trace bounds (stationary sensors only).
    pub dare: Option<DareReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DareReport {
    pub trace: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_applicable: bool,
    pub upper_applicable: bool,
}

/// Headline numbers of one point.
#[derive(Clone, Debug, Default)]
pub struct PointSummary {
    pub condition: f64,
    pub limiting_trace: Option<f64>,
    pub steady_mse: Option<f64>,
    pub steps: usize,
}

pub struct PointResult {
    pub summary: PointSummary,
    pub kf: Option<KfRun>,
    pub files: FileLog,
}

/// `seed` for a single run, `seed ^ H(key)` for a sweep point.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    if key.is_empty() {
        return seed;
    }
    let digest = Sha256::digest(key.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(b)
}

/// Splits data into the training head and the evaluation tail.
fn split(data: &SnapshotMatrix, fraction: f64) -> Result<(SnapshotMatrix, SnapshotMatrix), CliError> {
    let t = data.len();
    let h = ((t as f64) * fraction).floor() as usize;
    if h < 2 || h >= t {
        return Err(CliError::Config(format!(
            "train_fraction {fraction} leaves no usable split of {t} snapshots"
        )));
    }
    Ok((data.window(0, h)?, data.window(h, t)?))
}

fn nyquist_steps(model: &RealBlockModel) -> usize {
    let w = model.eigenvalues().iter().map(|l| l.arg().abs()).fold(0.0, f64::max);
    if w <= 0.0 {
        1
    } else {
        (std::f64::consts::PI / w).floor().max(1.0) as usize
    }
}

fn normal_vector(m: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(m, |_, _| StandardNormal.sample(rng))
}

pub fn torus_spec(cfg: &ExperimentConfig) -> Option<TorusSpec> {
    match &cfg.scenario {
        Scenario::Torus { rows, cols, n_fourier, n_gauss, gauss_width, freq_range, damp_range, dt } => {
            Some(TorusSpec {
                rows: *rows,
                cols: *cols,
                n_fourier: *n_fourier,
                n_gauss: *n_gauss,
                gauss_width: *gauss_width,
                freq_range: *freq_range,
                damp_range: *damp_range,
                dt: *dt,
                seed: cfg.seed,
            })
        }
        _ => None,
    }
}

/// Builds the scenario and the model at the sampling rate. The scenario itself is
/// drawn from the configured seed; `seed` drives simulated noise and training runs.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared, CliError> {
    let (base, geometry, data, fraction) = match &cfg.scenario {
        Scenario::Torus { dt, .. } => {
            let sc = make_torus(&torus_spec(cfg).expect("torus"))?;
            let known = sc.model.to_real_blocks()?;
            let model = match &cfg.model {
                ModelChoice::Known => known,
                ModelChoice::Dmd { rank, train_steps } => {
                    let steps = train_steps.unwrap_or(DEFAULT_TORUS_TRAIN);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_696e);
                    let c0 = normal_vector(known.rank(), &mut rng);
                    let (_, fields) = known.simulate_coefficients(&c0, steps, cfg.noise.q * dt, rng_seed(&mut rng))?;
                    fit_dmd(&SnapshotMatrix::new(fields, *dt)?, *rank)?.to_real_blocks()?
                }
            };
            (model, sc.geometry, None, 0.0)
        }
        Scenario::Ks { n_grid, domain_length, dt_solver, t_start, t_final, output_dt, train_fraction } => {
            let spec = KsSpec {
                n_grid: *n_grid,
                domain_length: *domain_length,
                dt_solver: *dt_solver,
                t_start: *t_start,
                t_final: *t_final,
                output_dt: *output_dt,
                seed: cfg.seed,
            };
            let data = solve_ks(&spec)?;
            let geometry = Geometry::line(*n_grid, true)?;
            (fit_split(cfg, &data, *train_fraction)?, geometry, Some(data), *train_fraction)
        }
        Scenario::Gridded { path, format, train_fraction } => {
            let fmt = match format {
                Some(f) => GridFormat::parse(f)?,
                None => GridFormat::from_path(path),
            };
            let ds = load_gridded(path, fmt)?;
            let geometry = mask_geometry(&ds)?;
            let data = ds.to_snapshots()?;
            (fit_split(cfg, &data, *train_fraction)?, geometry, Some(data), *train_fraction)
        }
    };
    let base_dt = match &data {
        Some(d) => d.dt(),
        None => cfg.base_dt().expect("torus has a base interval"),
    };
    let sampling_dt = cfg.sampling_dt.unwrap_or(base_dt);
    let stride = stride_for(sampling_dt, base_dt)?;
    let model = base.resampled(stride)?;
    let test = match data {
        Some(d) => {
            let (_, test) = split(&d, fraction)?;
            Some(test.subsample(stride)?)
        }
        None => None,
    };
    Ok(Prepared {
        nyquist_steps: nyquist_steps(&model),
        model,
        geometry,
        test,
        sampling_dt,
        stride,
    })
}

fn rng_seed(rng: &mut ChaCha8Rng) -> u64 {
    use rand::Rng;
    rng.random()
}

fn fit_split(cfg: &ExperimentConfig, data: &SnapshotMatrix, fraction: f64) -> Result<RealBlockModel, CliError> {
    let ModelChoice::Dmd { rank, .. } = cfg.model else {
        return Err(CliError::Config("data scenarios need a dmd model".into()));
    };
    let (train, _) = split(data, fraction)?;
    Ok(fit_dmd(&train, rank)?.to_real_blocks()?)
}

/// Places (stationary) or plans (mobile) the sensors.
pub fn plan_sensors(cfg: &ExperimentConfig, p: &Prepared) -> Result<PlanOutcome, CliError> {
    let k = cfg.sensors.k;
    match cfg.sensors.mode {
        SensorMode::Stationary => Ok(plan_with_report(
            &p.model,
            &p.geometry,
            &MotionConstraint::new(0.0)?,
            &PlanConfig::new(k, 1)?,
        )?),
        SensorMode::Mobile => {
            let v = cfg.sensors.speed.unwrap_or(0.0);
            let period = cfg.sensors.period.unwrap_or(p.nyquist_steps);
            match cfg.sensors.refine {
                None => Ok(plan_with_report(
                    &p.model,
                    &p.geometry,
                    &MotionConstraint::new(v)?,
                    &PlanConfig::new(k, period)?,
                )?),
                Some(f) => {
                    let coarse_model = p.model.resampled(f)?;
                    let coarse = plan_with_report(
                        &coarse_model,
                        &p.geometry,
                        &MotionConstraint::new(v * f as f64)?,
                        &PlanConfig::new(k, period / f)?,
                    )?;
                    let mut fine = multiscale_refine_with_report(
                        &p.model,
                        &coarse.trajectory,
                        f,
                        &p.geometry,
                        &MotionConstraint::new(v)?,
                        &PlanConfig::new(k, period)?,
                    )?;
                    fine.fallback_events += coarse.fallback_events;
                    Ok(fine)
                }
            }
        }
    }
}

fn condition_report(cfg: &ExperimentConfig, p: &Prepared, outcome: &PlanOutcome) -> Result<ConditionReport, CliError> {
    let traj = &outcome.trajectory;
    let rank = is_observable(&p.model, traj)?;
    let condition = match (rank.singular_values.first(), rank.singular_values.last()) {
        (Some(&hi), Some(&lo)) if rank.observable && lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    };
    let dare = if traj.period() == 1 && rank.observable {
        let lifted = lift_system(&p.model, traj)?;
        let m = p.model.rank();
        let q = DMatrix::identity(m, m) * (cfg.noise.q * p.sampling_dt);
        let r = DMatrix::identity(lifted.c_hat.nrows(), lifted.c_hat.nrows()) * cfg.noise.rho;
        match (
            dare_iterate(&lifted.a_hat, &lifted.c_hat, &q, &r, 1e-10, 200_000),
            dare_trace_bounds(&lifted.a_hat, &lifted.c_hat, &q, &r),
        ) {
            (Ok(sol), Ok(b)) => Some(DareReport {
                trace: sol.sigma.trace(),
                lower: b.lower,
                upper: b.upper,
                lower_applicable: b.lower_applicable,
                upper_applicable: b.upper_applicable,
            }),
            (Err(e), _) | (_, Err(e)) => {
                warn!("riccati report skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    Ok(ConditionReport {
        condition_number: condition.is_finite().then_some(condition),
        observable: rank.observable,
        rank: rank.rank,
        model_rank: p.model.rank(),
        singular_values: rank.singular_values,
        period: traj.period(),
        sensors: traj.sensors(),
        nyquist_steps: p.nyquist_steps,
        sampling_dt: p.sampling_dt,
        stride: p.stride,
        fallback_events: outcome.fallback_events,
        dare,
    })
}

fn filter(cfg: &ExperimentConfig, p: &Prepared, outcome: &PlanOutcome, seed: u64) -> Result<KfRun, CliError> {
    let noise = NoiseSpec::new(cfg.noise.q * p.sampling_dt, cfg.noise.rho)?;
    let m = p.model.rank();
    let sigma0 = DMatrix::identity(m, m) * cfg.filter.prior;
    let traj = &outcome.trajectory;
    match &p.test {
        None => {
            let steps = cfg.steps.expect("validated");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c0 = normal_vector(m, &mut rng);
            let source = Measurements::Simulate { c0, seed: rng_seed(&mut rng) };
            Ok(run_filter(&p.model, traj, source, noise, steps, Some(sigma0), p.sampling_dt)?)
        }
        Some(test) => {
            let steps = cfg.steps.unwrap_or(test.len());
            if steps > test.len() {
                return Err(CliError::Config(format!(
                    "steps = {steps} but only {} test snapshots at this sampling rate",
                    test.len()
                )));
            }
            let source = match cfg.filter.measurements.unwrap_or(MeasurementKind::Raw) {
                MeasurementKind::Noisy => Measurements::Truth { data: test, seed },
                _ => Measurements::Raw(test),
            };
            Ok(run_filter(&p.model, traj, source, noise, steps, Some(sigma0), p.sampling_dt)?)
        }
    }
}

/// Runs one point, writing its files under `dir` (relative to the log root).
pub fn run_point(
    cfg: &ExperimentConfig,
    seed: u64,
    stage: Stage,
    opts: &RunOptions,
    root: &Path,
    dir: &str,
) -> Result<PointResult, CliError> {
    let mut files = FileLog::new(root);
    let rel = |name: &str| if dir.is_empty() { name.to_string() } else { format!("{dir}/{name}") };
    let p = prepare(cfg, seed)?;
    let outcome = plan_sensors(cfg, &p)?;
    let report = condition_report(cfg, &p, &outcome)?;
    let traj = &outcome.trajectory;
    files.write(&rel("trajectory.json"), traj.to_json()?.as_bytes())?;
    files.write(&rel("trajectory.csv"), traj.to_csv(Some(&p.geometry)).as_bytes())?;
    files.write(&rel("geometry.json"), json(&p.geometry)?.as_bytes())?;
    files.write(&rel("condition.json"), json(&report)?.as_bytes())?;
    if opts.plan_report {
        files.write(&rel("plan_report.csv"), outcome.report_csv().as_bytes())?;
    }
    let mut summary = PointSummary {
        condition: report.condition_number.unwrap_or(f64::INFINITY),
        ..Default::default()
    };
    let kf = if stage == Stage::Filter {
        let run = filter(cfg, &p, &outcome, seed)?;
        files.write(&rel("kf.csv"), run.to_csv().as_bytes())?;
        let window = (run.steps() / 2).max(1);
        summary.limiting_trace = Some(run.limiting_trace(window));
        summary.steady_mse = run.steady_error(window);
        summary.steps = run.steps();
        Some(run)
    } else {
        None
    };
    Ok(PointResult { summary, kf, files })
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Schema(e.to_string()))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn resolved_config(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

/// Runs a config without sweep axes; writes files and the manifest to `out`.
pub fn run_single(
    cfg: &ExperimentConfig,
    stage: Stage,
    opts: &RunOptions,
    out: &Path,
) -> Result<RunManifest, CliError> {
    if !cfg.sweep.is_empty() {
        return Err(CliError::Config("config has sweep axes; use the sweep command".into()));
    }
    cfg.validate()?;
    let started = Instant::now();
    let start_unix = unix_now();
    let result = run_point(cfg, cfg.seed, stage, opts, out, "")?;
    if let Some(l) = result.summary.limiting_trace {
        info!("limiting trace {l:.6e}, condition {:.4e}", result.summary.condition);
    }
    let manifest = RunManifest {
        name: cfg.name.clone(),
        command: match stage {
            Stage::Plan => "plan".into(),
            Stage::Filter => "filter".into(),
        },
        library_version: env!("CARGO_PKG_VERSION").into(),
        config: resolved_config(cfg),
        seeds: BTreeMap::from([(String::new(), cfg.seed)]),
        started_unix: start_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        files: result.files.into_entries(),
        failures: vec![],
    };
    manifest.write(out)?;
    Ok(manifest)
}

/// Runs every sweep point in a pool of `workers` threads. Failed points are
/// recorded in the manifest; the remaining points still run.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    out: &Path,
    workers: usize,
) -> Result<RunManifest, CliError> {
    let points = cfg.expand()?;
    let started = Instant::now();
    let start_unix = unix_now();
    let axes: Vec<String> = cfg.sweep.keys().cloned().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<PointResult, CliError>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, (key, point))| {
                let seed = derive_seed(cfg.seed, key);
                info!("point {i}: {key}");
                run_point(point, seed, Stage::Filter, opts, out, &point_dir(i))
            })
            .collect()
    });

    let mut files = FileLog::new(out);
    let mut failures = Vec::new();
    let mut seeds = BTreeMap::new();
    let mut long = String::from("point");
    let mut summary = String::from("point");
    for a in &axes {
        let _ = write!(long, ",{a}");
        let _ = write!(summary, ",{a}");
    }
    long.push_str(",step,time,trace_sigma,recon_mse\n");
    summary.push_str(",seed,status,condition,limiting_trace,steady_mse\n");
    for (i, ((key, point), result)) in points.iter().zip(results).enumerate() {
        let seed = derive_seed(cfg.seed, key);
        seeds.insert(key.clone(), seed);
        let values = axis_values(point, &axes);
        match result {
            Ok(r) => {
                if let Some(kf) = &r.kf {
                    for (t, tr) in kf.trace_series.iter().enumerate() {
                        let err = kf
                            .recon_error_series
                            .as_ref()
                            .map(|e| format!("{:e}", e[t]))
                            .unwrap_or_default();
                        let _ = writeln!(long, "{i}{values},{t},{},{tr:e},{err}", t as f64 * kf.dt);
                    }
                }
                let s = &r.summary;
                let _ = writeln!(
                    summary,
                    "{i}{values},{seed},ok,{:e},{},{}",
                    s.condition,
                    opt(s.limiting_trace),
                    opt(s.steady_mse)
                );
                files.extend(r.files);
            }
            Err(e) => {
                warn!("point {i} ({key}) failed: {e}");
                let _ = writeln!(summary, "{i}{values},{seed},failed,,,");
                failures.push(Failure {
                    point: key.clone(),
                    exit_code: e.exit_code(),
                    message: e.to_string(),
                });
            }
        }
    }
    files.write("sweep.csv", long.as_bytes())?;
    files.write("sweep_summary.csv", summary.as_bytes())?;
    let manifest = RunManifest {
        name: cfg.name.clone(),
        command: "sweep".into(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        config: resolved_config(cfg),
        seeds,
        started_unix: start_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        files: files.into_entries(),
        failures,
    };
    manifest.write(out)?;
    Ok(manifest)
}

pub fn point_dir(i: usize) -> String {
    format!("points/p{i:03}")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// `,v1,v2,...` of the point's value on each axis, read back from the resolved config.
fn axis_values(point: &ExperimentConfig, axes: &[String]) -> String {
    let tree = toml::Value::try_from(point).ok();
    let mut s = String::new();
    for a in axes {
        let mut cur = tree.as_ref();
        for part in a.split('.') {
            cur = cur.and_then(|v| v.get(part));
        }
        let text = match cur {
            Some(toml::Value::String(x)) => x.clone(),
            Some(v) => v.to_string(),
            None => String::new(),
        };
        let _ = write!(s, ",{}", csv_field(&text));
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
