//! Comfort-constrained reheat scheduling: pick heater slots so the predicted
//! mid-point temperature stays above a comfort threshold at minimum energy,
//! then score the schedule on the true simulator.

pub mod study;

use crate::error::{Error, Result};
use crate::model::DynamicsModel;
use crate::sim::{step, TankConfig, TankState, HOURS_PER_STEP};

/// Feature frame of the last completed reheat before the horizon starts.
/// Carrying it in keeps deployment features aligned with how training
/// examples were anchored: `t0_c` is the mid-point temperature at that reheat
/// end, with hours and liters accumulated since.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub t0_c: f64,
    pub elapsed_h: f64,
    pub drawn_l: f64,
}

impl Anchor {
    /// An anchor set at the horizon start itself, as if a reheat just ended.
    pub fn fresh(t0_c: f64) -> Self {
        Anchor {
            t0_c,
            elapsed_h: 0.0,
            drawn_l: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0_c.is_finite()
            || !self.elapsed_h.is_finite()
            || self.elapsed_h < 0.0
            || !self.drawn_l.is_finite()
            || self.drawn_l < 0.0
        {
            return Err(Error::InvalidConfig(format!(
                "initial anchor must be finite with elapsed_h, drawn_l >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// One day-ahead scheduling instance. `demand_l` is what the day will really
/// draw (used for scoring); `forecast_l` is what the controller believes
/// (equal under perfect foresight).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    pub tank: TankConfig,
    pub horizon_slots: usize,
    pub t_comfort_c: f64,
    /// Anchor temperature assumed after a predicted reheat run; the
    /// household's reheat-off setpoint, matching the training data's
    /// hysteresis controller.
    pub t_reset_c: f64,
    /// Greedy receding-horizon window for horizons beyond the exhaustive cap.
    pub lookahead_slots: usize,
    /// Shortest admissible reheat run (compressor anti-cycling); 1 means
    /// unconstrained.
    pub min_run_slots: usize,
    pub initial_state: TankState,
    /// Where the model's feature clock stood when the horizon began.
    pub initial_anchor: Anchor,
    pub demand_l: Vec<f64>,
    pub forecast_l: Vec<f64>,
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        self.tank.validate()?;
        if self.horizon_slots == 0 {
            return Err(Error::InvalidConfig("horizon_slots must be >= 1".into()));
        }
        if !(30.0..=60.0).contains(&self.t_comfort_c) {
            return Err(Error::InvalidConfig(format!(
                "t_comfort_c must be in [30, 60], got {}",
                self.t_comfort_c
            )));
        }
        if !self.t_reset_c.is_finite() || self.t_reset_c <= self.t_comfort_c {
            return Err(Error::InvalidConfig(format!(
                "t_reset_c must be finite and above t_comfort_c, got {}",
                self.t_reset_c
            )));
        }
        if self.lookahead_slots == 0 {
            return Err(Error::InvalidConfig("lookahead_slots must be >= 1".into()));
        }
        if self.min_run_slots == 0 || self.min_run_slots > self.horizon_slots {
            return Err(Error::InvalidConfig(format!(
                "min_run_slots must be in [1, horizon], got {}",
                self.min_run_slots
            )));
        }
        if self.initial_state.layer_temps.len() != self.tank.n_layers {
            return Err(Error::InvalidConfig(format!(
                "initial state has {} layers, tank has {}",
                self.initial_state.layer_temps.len(),
                self.tank.n_layers
            )));
        }
        if self.initial_state.layer_temps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("initial state must be finite".into()));
        }
        self.initial_anchor.validate()?;
        for (name, series) in [("demand_l", &self.demand_l), ("forecast_l", &self.forecast_l)] {
            if series.len() != self.horizon_slots {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {} slots, horizon is {}",
                    series.len(),
                    self.horizon_slots
                )));
            }
            if series.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} entries must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Heater energy of one active slot, kWh.
    pub fn energy_per_slot_kwh(&self) -> f64 {
        self.tank.heater_power_w * self.tank.dt_seconds / 3.6e6
    }
}

/// Heater on/off per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub hp_active: Vec<bool>,
}

impl Schedule {
    pub fn all_off(n: usize) -> Self {
        Schedule {
            hp_active: vec![false; n],
        }
    }

    pub fn all_on(n: usize) -> Self {
        Schedule {
            hp_active: vec![true; n],
        }
    }

    /// Slot k of an n-slot horizon maps to mask bit n-1-k (slot 0 most
    /// significant), so smaller masks heat later.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Schedule {
            hp_active: (0..n).map(|k| mask >> (n - 1 - k) & 1 == 1).collect(),
        }
    }

    pub fn on_slots(&self) -> usize {
        self.hp_active.iter().filter(|on| **on).count()
    }

    pub fn check_len(&self, problem: &ControlProblem) -> Result<()> {
        if self.hp_active.len() != problem.horizon_slots {
            return Err(Error::InvalidConfig(format!(
                "schedule has {} slots, horizon is {}",
                self.hp_active.len(),
                problem.horizon_slots
            )));
        }
        Ok(())
    }
}

/// Simulator-scored result of one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    pub energy_kwh: f64,
    /// Slots whose simulated mid-point temperature fell below comfort.
    pub violation_slots: usize,
    /// Worst shortfall below the comfort threshold, °C (0 if none).
    pub max_violation_c: f64,
}

/// Anything that can roll a schedule forward into per-slot predicted
/// mid-point temperatures (at each slot's end).
pub trait TrajectoryModel {
    fn predict_trajectory(&self, problem: &ControlProblem, schedule: &Schedule)
        -> Result<Vec<f64>>;
}

/// The learned dynamics model with virtual-anchor bookkeeping. Idle slots
/// advance (t, w) from the forecast and query the model; a reheat run ramps
/// to `t_reset_c` and re-anchors there with t and w zeroed, mirroring how
/// training examples anchor at reheat ends.
pub struct DynamicsTrajectory<'a> {
    pub model: &'a DynamicsModel,
}

impl TrajectoryModel for DynamicsTrajectory<'_> {
    fn predict_trajectory(
        &self,
        problem: &ControlProblem,
        schedule: &Schedule,
    ) -> Result<Vec<f64>> {
        schedule.check_len(problem)?;
        let n = problem.horizon_slots;
        let mut out = vec![0.0; n];
        let mut t0 = problem.initial_anchor.t0_c;
        let mut elapsed_h = problem.initial_anchor.elapsed_h;
        let mut w_cum = problem.initial_anchor.drawn_l;
        let mut k = 0;
        while k < n {
            if schedule.hp_active[k] {
                let mut end = k;
                while end + 1 < n && schedule.hp_active[end + 1] {
                    end += 1;
                }
                let run_len = (end - k + 1) as f64;
                let from = if k == 0 {
                    problem.initial_state.mid_temp()
                } else {
                    out[k - 1]
                };
                for (i, slot) in (k..=end).enumerate() {
                    out[slot] = from + (problem.t_reset_c - from) * (i + 1) as f64 / run_len;
                }
                t0 = problem.t_reset_c;
                elapsed_h = 0.0;
                w_cum = 0.0;
                k = end + 1;
            } else {
                elapsed_h += HOURS_PER_STEP;
                w_cum += problem.forecast_l[k];
                out[k] = self.model.predict([elapsed_h, w_cum, t0])?;
                k += 1;
            }
        }
        Ok(out)
    }
}

/// The simulator itself as a trajectory model (driven by the forecast, like
/// any other model); the oracle when the forecast is perfect.
pub struct SimulatorTrajectory;

impl TrajectoryModel for SimulatorTrajectory {
    fn predict_trajectory(
        &self,
        problem: &ControlProblem,
        schedule: &Schedule,
    ) -> Result<Vec<f64>> {
        schedule.check_len(problem)?;
        let mut state = problem.initial_state.clone();
        let mut out = Vec::with_capacity(problem.horizon_slots);
        for k in 0..problem.horizon_slots {
            let draw = problem.forecast_l[k].min(problem.tank.volume_liters);
            let (next, _) = step(&state, draw, schedule.hp_active[k], &problem.tank)?;
            state = next;
            out.push(state.mid_temp());
        }
        Ok(out)
    }
}

/// Score a schedule on the true simulator with the realized demand.
pub fn evaluate_schedule(problem: &ControlProblem, schedule: &Schedule) -> Result<ControlOutcome> {
    problem.validate()?;
    schedule.check_len(problem)?;
    let mut state = problem.initial_state.clone();
    let mut violation_slots = 0;
    let mut max_violation_c: f64 = 0.0;
    for k in 0..problem.horizon_slots {
        let draw = problem.demand_l[k].min(problem.tank.volume_liters);
        let (next, _) = step(&state, draw, schedule.hp_active[k], &problem.tank)?;
        state = next;
        let t = state.mid_temp();
        if t < problem.t_comfort_c {
            violation_slots += 1;
            max_violation_c = max_violation_c.max(problem.t_comfort_c - t);
        }
    }
    Ok(ControlOutcome {
        energy_kwh: schedule.on_slots() as f64 * problem.energy_per_slot_kwh(),
        violation_slots,
        max_violation_c,
    })
}

/// Horizons up to this length are solved by full exhaustive search.
pub const EXHAUSTIVE_SLOTS: usize = 16;
/// Horizons up to this length enumerate all schedules of at most two
/// contiguous reheat runs; beyond it, receding-horizon greedy.
pub const RUN_ENUM_SLOTS: usize = 32;

fn feasible(trajectory: &[f64], t_comfort: f64) -> bool {
    trajectory.iter().all(|t| *t >= t_comfort)
}

fn predicted_max_violation(trajectory: &[f64], t_comfort: f64) -> f64 {
    trajectory
        .iter()
        .fold(0.0_f64, |acc, t| acc.max(t_comfort - t))
}

/// Scan candidate masks in (energy, lateness) order: first feasible wins;
/// if none is feasible, the minimizer of predicted max violation wins.
fn scan_candidates(
    model: &dyn TrajectoryModel,
    problem: &ControlProblem,
    candidates: impl Iterator<Item = u64>,
) -> Result<Schedule> {
    let n = problem.horizon_slots;
    let mut fallback: Option<(f64, Schedule)> = None;
    for mask in candidates {
        let schedule = Schedule::from_mask(mask, n);
        let trajectory = model.predict_trajectory(problem, &schedule)?;
        if feasible(&trajectory, problem.t_comfort_c) {
            return Ok(schedule);
        }
        let violation = predicted_max_violation(&trajectory, problem.t_comfort_c);
        // Strict < keeps the earliest minimizer, i.e. least energy, then
        // latest heating, matching the feasible tie-break.
        if fallback.as_ref().is_none_or(|(best, _)| violation < *best) {
            fallback = Some((violation, schedule));
        }
    }
    Ok(fallback.expect("candidate set is never empty").1)
}

/// All 2^n masks ordered by (popcount, numeric value). Within a popcount
/// class, Gosper's hack enumerates combinations in increasing order.
fn exhaustive_masks(n: usize) -> impl Iterator<Item = u64> {
    let full: u64 = if n == 64 { u64::MAX } else { (1 << n) - 1 };
    (0..=n).flat_map(move |ones| {
        let mut next = if ones == 0 { Some(0u64) } else { Some((1 << ones) - 1) };
        std::iter::from_fn(move || {
            let mask = next?;
            next = if ones == 0 || mask == 0 {
                None
            } else {
                let c = mask & mask.wrapping_neg();
                let r = mask + c;
                let succ = (((r ^ mask) >> 2) / c) | r;
                (succ <= full).then_some(succ)
            };
            Some(mask)
        })
    })
}

/// All schedules with at most two contiguous reheat runs, ordered by
/// (energy, numeric mask value).
fn run_masks(n: usize) -> Vec<u64> {
    let run = |start: usize, len: usize| -> u64 {
        // Slot `start` is bit n-1-start; a run covers descending bits.
        ((1u64 << len) - 1) << (n - start - len)
    };
    let mut masks = vec![0u64];
    for l1 in 1..=n {
        for s1 in 0..=n - l1 {
            masks.push(run(s1, l1));
            for l2 in 1..=n {
                // A gap of at least one idle slot separates distinct runs.
                for s2 in s1 + l1 + 1..=n.saturating_sub(l2) {
                    masks.push(run(s1, l1) | run(s2, l2));
                }
            }
        }
    }
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks.dedup();
    masks
}

/// Do all contiguous heated runs in the mask meet the minimum run length?
fn runs_ok(mask: u64, n: usize, min_run: usize) -> bool {
    if min_run <= 1 {
        return true;
    }
    let mut run = 0usize;
    for k in 0..n {
        if mask >> (n - 1 - k) & 1 == 1 {
            run += 1;
        } else {
            if run > 0 && run < min_run {
                return false;
            }
            run = 0;
        }
    }
    run == 0 || run >= min_run
}

/// Receding-horizon greedy: at each slot, heat exactly when the model
/// predicts a comfort violation within the lookahead window given no further
/// heating. A triggered run commits at least `min_run_slots` before the next
/// decision, so the run-end anchor reset can never credit a full recharge to
/// a lone heated slot.
fn greedy_schedule(model: &dyn TrajectoryModel, problem: &ControlProblem) -> Result<Schedule> {
    let n = problem.horizon_slots;
    let mut schedule = Schedule::all_off(n);
    let mut k = 0;
    while k < n {
        // Future slots are still off, so the current schedule already means
        // "committed prefix, then idle".
        let trajectory = model.predict_trajectory(problem, &schedule)?;
        let window_end = (k + problem.lookahead_slots).min(n);
        let looming = trajectory[k..window_end]
            .iter()
            .any(|t| *t < problem.t_comfort_c);
        if looming {
            let end = (k + problem.min_run_slots).min(n);
            for slot in &mut schedule.hp_active[k..end] {
                *slot = true;
            }
            k = end;
        } else {
            k += 1;
        }
    }
    Ok(schedule)
}

/// Does the model deem this schedule comfort-feasible? False for the result
/// of `optimize_schedule` exactly when it fell back to violation
/// minimization.
pub fn predicted_feasible(
    model: &dyn TrajectoryModel,
    problem: &ControlProblem,
    schedule: &Schedule,
) -> Result<bool> {
    let trajectory = model.predict_trajectory(problem, schedule)?;
    Ok(feasible(&trajectory, problem.t_comfort_c))
}

/// Minimum-energy schedule whose predicted trajectory keeps comfort, ties
/// broken by latest-possible heating; falls back to minimizing the predicted
/// worst shortfall when the model deems the problem infeasible. Candidate
/// runs honor `min_run_slots`. Exhaustive for short horizons, contiguous-run
/// enumeration up to 32 slots, greedy receding horizon beyond.
pub fn optimize_schedule(model: &dyn TrajectoryModel, problem: &ControlProblem) -> Result<Schedule> {
    problem.validate()?;
    let n = problem.horizon_slots;
    let min_run = problem.min_run_slots;
    if n <= EXHAUSTIVE_SLOTS {
        scan_candidates(
            model,
            problem,
            exhaustive_masks(n).filter(|m| runs_ok(*m, n, min_run)),
        )
    } else if n <= RUN_ENUM_SLOTS {
        scan_candidates(
            model,
            problem,
            run_masks(n).into_iter().filter(|m| runs_ok(*m, n, min_run)),
        )
    } else {
        greedy_schedule(model, problem)
    }
}
