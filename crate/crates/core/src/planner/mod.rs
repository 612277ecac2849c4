//! Greedy time-forwarding path planning.
//!
//! At every step of the cycle the planner scores all rows of the current projected
//! block `Psi Lambda^{t}` against the stacked observability rows chosen so far,
//! picks the best row reachable by some sensor, and hands it to the closest
//! sensor that can reach it. Rows are chosen strictly one at a time, so rows
//! picked earlier in the same step already count.
//!
//! Steps are numbered from 1 in records and errors.

mod score;

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

pub use score::{mode_for, selection_score, ScoreMode, Scores};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, MotionConstraint};
use crate::model::RealBlockModel;
use crate::observability::{matrix_condition, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanConfig {
    pub k: usize,
    pub period: usize,
    /// Require every sensor to be able to return to its first location at the end of the period.
    pub enforce_cycle: bool,
}

impl PlanConfig {
    pub fn new(k: usize, period: usize) -> Result<Self> {
        if k == 0 || period == 0 {
            return Err(Error::arg("need k >= 1 sensors and period >= 1"));
        }
        Ok(Self {
            k,
            period,
            enforce_cycle: true,
        })
    }

    pub fn without_cycle(mut self) -> Self {
        self.enforce_cycle = false;
        self
    }

    /// Whether the full schedule collects more rows than the model rank.
    pub fn oversampling(&self, rank: usize) -> bool {
        self.k * self.period > rank
    }
}

/// One greedy selection.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanRecord {
    pub step: usize,
    pub sensor: usize,
    pub index: usize,
    pub score: f64,
    pub candidates: usize,
    pub mode: Option<ScoreMode>,
    /// Condition number of the stack after appending this row.
    pub condition: f64,
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub trajectory: Trajectory,
    pub records: Vec<PlanRecord>,
    pub fallback_events: usize,
}

impl PlanOutcome {
    /// CSV with columns `step,sensor,index,score,candidates,mode,condition`.
    /// Pinned selections have mode `pinned` and an empty score.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("step,sensor,index,score,candidates,mode,condition\n");
        for r in &self.records {
            let mode = match r.mode {
                Some(ScoreMode::Qrcp) => "qrcp",
                Some(ScoreMode::GappyE) => "gappy_e",
                None => "pinned",
            };
            let score = if r.mode.is_some() {
                format!("{:e}", r.score)
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:e}",
                r.step, r.sensor, r.index, score, r.candidates, mode, r.condition
            );
        }
        out
    }
}

/// Locations one sensor may move to at step `step` (1-based, the step being chosen).
///
/// Step 1 has no history: every non-isolated, unoccupied index qualifies. Later
/// steps admit `s` with `distance(current, s) <= v` from which `start` can still be
/// reached in the `period - step + 1` remaining moves, minus `occupied`. When that
/// set is empty the current location is offered if unoccupied.
#[allow(clippy::too_many_arguments)]
pub fn candidate_set(
    geom: &Geometry,
    mc: &MotionConstraint,
    sensor: usize,
    current: usize,
    step: usize,
    period: usize,
    start: usize,
    occupied: &[usize],
) -> Result<Vec<usize>> {
    if current >= geom.n() || start >= geom.n() {
        return Err(Error::arg("sensor location out of range"));
    }
    if step == 0 || step > period {
        return Err(Error::arg(format!("step {step} outside period {period}")));
    }
    let set = if step == 1 {
        first_step_candidates(geom, occupied)
    } else {
        let hops = geom.hops_to(start, mc.speed);
        let remaining = (period - step + 1) as u32;
        constrained_candidates(geom, mc, current, Some((&hops, remaining)), occupied)
    };
    if set.is_empty() {
        return Err(Error::Infeasible {
            sensor,
            step,
            partial: None,
        });
    }
    Ok(set)
}

fn first_step_candidates(geom: &Geometry, occupied: &[usize]) -> Vec<usize> {
    (0..geom.n())
        .filter(|&i| !geom.is_isolated(i) && !occupied.contains(&i))
        .collect()
}

fn constrained_candidates(
    geom: &Geometry,
    mc: &MotionConstraint,
    current: usize,
    target: Option<(&[u32], u32)>,
    occupied: &[usize],
) -> Vec<usize> {
    let mut set: Vec<usize> = geom
        .within(current, mc.speed)
        .into_iter()
        .filter(|s| !occupied.contains(s))
        .filter(|&s| target.is_none_or(|(hops, remaining)| hops[s] <= remaining))
        .collect();
    if set.is_empty() && !occupied.contains(&current) {
        set.push(current);
    }
    set
}

/// Uniformly random feasible schedule: each sensor picks uniformly from its candidate
/// set at every step. Useful as a baseline for planned schedules.
pub fn random_trajectory<R: rand::Rng>(
    geom: &Geometry,
    mc: &MotionConstraint,
    cfg: &PlanConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut steps: Vec<Vec<usize>> = Vec::with_capacity(cfg.period);
    let mut hops: Vec<Vec<u32>> = Vec::new();
    for step in 1..=cfg.period {
        let mut row: Vec<usize> = Vec::with_capacity(cfg.k);
        for j in 0..cfg.k {
            let set = if step == 1 {
                first_step_candidates(geom, &row)
            } else {
                let target = cfg
                    .enforce_cycle
                    .then(|| (hops[j].as_slice(), (cfg.period - step + 1) as u32));
                constrained_candidates(geom, mc, steps[step - 2][j], target, &row)
            };
            if set.is_empty() {
                return Err(Error::Infeasible {
                    sensor: j,
                    step,
                    partial: None,
                });
            }
            row.push(set[rng.random_range(0..set.len())]);
        }
        if step == 1 && cfg.enforce_cycle {
            hops = row.iter().map(|&s| geom.hops_to(s, mc.speed)).collect();
        }
        steps.push(row);
    }
    Trajectory::new(steps)
}

/// Every (sensor, step) whose move to the next step, including the wrap from the
/// last step to the first, exceeds the speed limit. Steps are 1-based source steps.
pub fn motion_violations(
    traj: &Trajectory,
    geom: &Geometry,
    mc: &MotionConstraint,
) -> Vec<(usize, usize)> {
    let l = traj.period();
    let mut out = Vec::new();
    for j in 0..traj.sensors() {
        for t in 0..l {
            let (a, b) = (traj.at(t)[j], traj.at(t + 1)[j]);
            if !mc.allows(geom, a, b) {
                out.push((j, t + 1));
            }
        }
    }
    out
}

/// Greedy time-forwarding plan.
pub fn plan(
    model: &RealBlockModel,
    geom: &Geometry,
    mc: &MotionConstraint,
    cfg: &PlanConfig,
) -> Result<Trajectory> {
    plan_with_report(model, geom, mc, cfg).map(|o| o.trajectory)
}

pub fn plan_with_report(
    model: &RealBlockModel,
    geom: &Geometry,
    mc: &MotionConstraint,
    cfg: &PlanConfig,
) -> Result<PlanOutcome> {
    let pins = vec![None; cfg.period];
    Engine::new(model, geom, mc, cfg)?.run(&pins)
}

/// Fills a faster-rate schedule between the waypoints of `coarse`.
///
/// Coarse step `t` is pinned at fine step `t * refine_factor + 1`; intermediate
/// steps are chosen greedily among locations from which the next pinned waypoint
/// (wrapping to the first) remains reachable.
pub fn multiscale_refine(
    model_fine: &RealBlockModel,
    coarse: &Trajectory,
    refine_factor: usize,
    geom: &Geometry,
    mc_fine: &MotionConstraint,
    cfg_fine: &PlanConfig,
) -> Result<Trajectory> {
    multiscale_refine_with_report(model_fine, coarse, refine_factor, geom, mc_fine, cfg_fine)
        .map(|o| o.trajectory)
}

pub fn multiscale_refine_with_report(
    model_fine: &RealBlockModel,
    coarse: &Trajectory,
    refine_factor: usize,
    geom: &Geometry,
    mc_fine: &MotionConstraint,
    cfg_fine: &PlanConfig,
) -> Result<PlanOutcome> {
    if refine_factor < 2 {
        return Err(Error::arg("refine factor must be at least 2"));
    }
    if cfg_fine.k != coarse.sensors() {
        return Err(Error::arg("fine config and coarse plan disagree on sensor count"));
    }
    if cfg_fine.period != coarse.period() * refine_factor {
        return Err(Error::arg(format!(
            "fine period {} != coarse period {} x factor {refine_factor}",
            cfg_fine.period,
            coarse.period()
        )));
    }
    coarse.validate_for(geom.n())?;
    let mut pins = vec![None; cfg_fine.period];
    for (t, step) in coarse.steps().iter().enumerate() {
        pins[t * refine_factor] = Some(step.clone());
    }
    let mut engine = Engine::new(model_fine, geom, mc_fine, cfg_fine)?;
    let l = coarse.period();
    for j in 0..coarse.sensors() {
        for t in 0..l {
            let (a, b) = (coarse.at(t)[j], coarse.at(t + 1)[j]);
            let hops = engine.hops(b);
            if hops[a] > refine_factor as u32 {
                return Err(Error::WaypointUnreachable {
                    sensor: j,
                    from_step: t * refine_factor + 1,
                    to_step: (t + 1) * refine_factor + 1,
                });
            }
        }
    }
    engine.run(&pins)
}

struct Engine<'a> {
    model: &'a RealBlockModel,
    geom: &'a Geometry,
    mc: &'a MotionConstraint,
    cfg: &'a PlanConfig,
    hop_cache: HashMap<usize, Vec<u32>>,
}

impl<'a> Engine<'a> {
    fn new(
        model: &'a RealBlockModel,
        geom: &'a Geometry,
        mc: &'a MotionConstraint,
        cfg: &'a PlanConfig,
    ) -> Result<Self> {
        if model.n() != geom.n() {
            return Err(Error::arg(format!(
                "model has n = {} but geometry has {} cells",
                model.n(),
                geom.n()
            )));
        }
        let usable = (0..geom.n()).filter(|&i| !geom.is_isolated(i)).count();
        if cfg.k > usable {
            return Err(Error::arg(format!(
                "{} sensors exceed the {usable} usable locations",
                cfg.k
            )));
        }
        Ok(Self {
            model,
            geom,
            mc,
            cfg,
            hop_cache: HashMap::new(),
        })
    }

    fn hops(&mut self, target: usize) -> &[u32] {
        let (geom, speed) = (self.geom, self.mc.speed);
        self.hop_cache
            .entry(target)
            .or_insert_with(|| geom.hops_to(target, speed))
    }

    /// Location sensor `j` must be able to reach, and the number of moves left,
    /// when choosing 0-based step `t`.
    fn target(&self, pins: &[Option<Vec<usize>>], first: &[usize], j: usize, t: usize) -> Option<(usize, u32)> {
        let period = pins.len();
        if let Some(p) = (t + 1..period).find(|&p| pins[p].is_some()) {
            return Some((pins[p].as_ref().unwrap()[j], (p - t) as u32));
        }
        if pins[0].is_some() || self.cfg.enforce_cycle {
            return Some((first[j], (period - t) as u32));
        }
        None
    }

    fn run(&mut self, pins: &[Option<Vec<usize>>]) -> Result<PlanOutcome> {
        let k = self.cfg.k;
        let m = self.model.rank();
        let mut x = self.model.modes().clone();
        let mut stack: Vec<f64> = Vec::new();
        let mut steps: Vec<Vec<usize>> = Vec::with_capacity(pins.len());
        let mut records = Vec::new();
        let mut fallback_events = 0;

        for t in 0..pins.len() {
            if t > 0 {
                self.model.right_multiply(&mut x);
            }
            if let Some(pinned) = &pins[t] {
                for (j, &s) in pinned.iter().enumerate() {
                    stack.extend(x.row(s).iter());
                    records.push(PlanRecord {
                        step: t + 1,
                        sensor: j,
                        index: s,
                        score: f64::NAN,
                        candidates: 1,
                        mode: None,
                        condition: matrix_condition(&stack_matrix(&stack, m)),
                    });
                }
                steps.push(pinned.clone());
                continue;
            }

            let mut assigned: Vec<Option<usize>> = vec![None; k];
            let mut occupied: Vec<usize> = Vec::with_capacity(k);
            for selection in 0..k {
                let mut per_sensor: Vec<(usize, Vec<usize>)> = Vec::new();
                let union: Vec<usize> = if t == 0 {
                    first_step_candidates(self.geom, &occupied)
                } else {
                    let first = &steps[0];
                    let prev = &steps[t - 1];
                    for j in (0..k).filter(|&j| assigned[j].is_none()) {
                        let target = self.target(pins, first, j, t);
                        let (geom, mc) = (self.geom, self.mc);
                        let set = match target {
                            Some((loc, remaining)) => {
                                let hops = self.hops(loc);
                                constrained_candidates(geom, mc, prev[j], Some((hops, remaining)), &occupied)
                            }
                            None => constrained_candidates(geom, mc, prev[j], None, &occupied),
                        };
                        if set.is_empty() {
                            return Err(self.infeasible(j, t + 1, &steps));
                        }
                        per_sensor.push((j, set));
                    }
                    let mut u: Vec<usize> = per_sensor.iter().flat_map(|(_, s)| s.iter().copied()).collect();
                    u.sort_unstable();
                    u.dedup();
                    u
                };
                if union.is_empty() {
                    return Err(self.infeasible(selection, t + 1, &steps));
                }

                let current = stack_matrix(&stack, m);
                let mode = mode_for(&current);
                let scores = selection_score(&x, &current, mode)?;
                fallback_events += scores.fallback_rows.len();
                let s = scores.best_of(&union).expect("non-empty candidate set");

                let sensor = if t == 0 {
                    selection
                } else {
                    let prev = &steps[t - 1];
                    per_sensor
                        .iter()
                        .filter(|(_, set)| set.binary_search(&s).is_ok())
                        .map(|&(j, _)| (self.geom.distance(prev[j], s), j))
                        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                        .map(|(_, j)| j)
                        .expect("selected index belongs to some sensor")
                };
                assigned[sensor] = Some(s);
                occupied.push(s);
                stack.extend(x.row(s).iter());
                records.push(PlanRecord {
                    step: t + 1,
                    sensor,
                    index: s,
                    score: scores.values[s],
                    candidates: union.len(),
                    mode: Some(mode),
                    condition: matrix_condition(&stack_matrix(&stack, m)),
                });
            }
            steps.push(assigned.into_iter().map(|s| s.expect("all sensors assigned")).collect());
        }

        Ok(PlanOutcome {
            trajectory: Trajectory::new(steps)?,
            records,
            fallback_events,
        })
    }

    fn infeasible(&self, sensor: usize, step: usize, steps: &[Vec<usize>]) -> Error {
        let partial = if steps.is_empty() {
            None
        } else {
            Trajectory::new(steps.to_vec()).ok().map(Box::new)
        };
        Error::Infeasible {
            sensor,
            step,
            partial,
        }
    }
}

fn stack_matrix(rows: &[f64], m: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows.len() / m, m, rows)
}
