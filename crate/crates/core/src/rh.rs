//! On-line receding-horizon control.
//!
//! At each decision point the controller sees only tasks arriving within `H`
//! seconds. It plans them as an off-line problem under a worst-case guess about
//! the first unseen task, applies the plan's first control, and moves on.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::gctda::{solve_raw, SolverConfig, SubProblem};
use crate::schedule::within_deadline;
use crate::task::Instance;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhConfig {
    /// Lookahead window `H` in seconds.
    pub window: f64,
    /// Compare against the rate-limited off-line optimum rather than the
    /// unconstrained one.
    pub power_constrained: bool,
    pub solver: SolverConfig,
}

impl RhConfig {
    pub fn new(window: f64) -> Self {
        RhConfig {
            window,
            power_constrained: true,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::param(format!("window must be positive, got {}", self.window)));
        }
        self.solver.validate()
    }
}

/// The tasks visible at a decision point, with worst-case deadlines.
#[derive(Clone, Debug, PartialEq)]
pub struct Horizon {
    /// `max(x̃_t, a_{t+1})`: when the next control is chosen.
    pub decision_time: f64,
    /// 0-based indices `first..=last` of the visible tasks.
    pub first: usize,
    pub last: usize,
    /// Deadlines for `first..=last`; the last one is cut to `decision_time + H`
    /// unless the horizon reaches the final task.
    pub deadlines: Vec<f64>,
    pub finalized: bool,
}

/// Tasks `t..` (0-based `t` is the next task) visible from departure `x_t`.
pub fn build_planning_horizon(inst: &Instance, t: usize, x_t: f64, window: f64) -> Horizon {
    let tasks = inst.tasks();
    let decision_time = x_t.max(tasks[t].arrival);
    let edge = decision_time + window;
    let mut last = t;
    while last + 1 < tasks.len() && tasks[last + 1].arrival <= edge {
        last += 1;
    }
    let finalized = last + 1 == tasks.len();
    let mut deadlines: Vec<f64> = tasks[t..=last].iter().map(|k| k.deadline).collect();
    if !finalized {
        let d = deadlines.last_mut().expect("horizon is nonempty");
        *d = d.min(edge);
    }
    Horizon {
        decision_time,
        first: t,
        last,
        deadlines,
        finalized,
    }
}

/// Largest `j < h` such that full-rate service from the decision point keeps
/// every task `t..=j` within `min(dᵢ, a_{j+1})`, with the deadlines of the
/// relaxed horizon `t..=ĥ`.
pub fn compute_h_hat(inst: &Instance, t: usize, decision_time: f64, h: usize) -> Option<(usize, Vec<f64>)> {
    let tasks = inst.tasks();
    let mut x_hat = Vec::with_capacity(h + 1 - t);
    let mut prev = decision_time;
    for k in &tasks[t..=h] {
        prev = prev.max(k.arrival) + k.tau_min * k.bits as f64;
        x_hat.push(prev);
    }
    // Running max of x̂ᵢ − dᵢ tells whether every deadline up to j holds, and
    // x̂ is nondecreasing, so x̂ᵢ ≤ a_{j+1} for all i ≤ j iff x̂_j ≤ a_{j+1}.
    let mut all_deadlines = true;
    let mut best = None;
    for j in t..h {
        all_deadlines &= x_hat[j - t] <= tasks[j].deadline;
        if !all_deadlines {
            break;
        }
        if x_hat[j - t] <= tasks[j + 1].arrival {
            best = Some(j);
        }
    }
    best.map(|h_hat| {
        let mut d: Vec<f64> = tasks[t..=h_hat].iter().map(|k| k.deadline).collect();
        let cut = d.last_mut().expect("nonempty");
        *cut = cut.min(tasks[h_hat + 1].arrival);
        (h_hat, d)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhStepKind {
    /// The worst-case horizon problem respected every rate limit.
    QTilde,
    /// The relaxed horizon problem respected every rate limit.
    QHat,
    /// Full rate for the next task.
    TauMinFallback,
}

impl RhStepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RhStepKind::QTilde => "q_tilde",
            RhStepKind::QHat => "q_hat",
            RhStepKind::TauMinFallback => "tau_min",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhStep {
    pub decision_time: f64,
    /// 0-based last visible task.
    pub horizon_last: usize,
    pub used_step: RhStepKind,
    pub control: f64,
}

/// Solve tasks `t..=end` from the decision point with the given deadlines;
/// `None` when the plan is infeasible or dips below a rate limit.
fn plan(inst: &Instance, t: usize, decision_time: f64, deadlines: Vec<f64>, cfg: &SolverConfig) -> Result<Option<f64>> {
    let end = t + deadlines.len() - 1;
    let func_of: Vec<usize> = (t..=end).map(|i| inst.function_index(i)).collect();
    let bits: Vec<f64> = inst.tasks()[t..=end].iter().map(|k| k.bits as f64).collect();
    let arrivals = inst.tasks()[t..=end]
        .iter()
        .map(|k| k.arrival.max(decision_time))
        .collect();
    let sub = SubProblem {
        funcs: inst.functions(),
        func_of: &func_of,
        bits: &bits,
        arrivals,
        deadlines,
    };
    let Ok((controls, _)) = solve_raw(&sub, cfg)? else {
        return Ok(None);
    };
    let ok = controls
        .iter()
        .zip(&inst.tasks()[t..=end])
        .all(|(&tau, k)| tau > 0.0 && tau >= k.tau_min * (1.0 - 1e-12));
    Ok(ok.then_some(controls[0]))
}

/// One decision: choose the control of task `t` (0-based) given the previous
/// departure `x_t`.
pub fn rh_step(inst: &Instance, t: usize, x_t: f64, cfg: &RhConfig) -> Result<RhStep> {
    let horizon = build_planning_horizon(inst, t, x_t, cfg.window);
    let step = |used_step, control| RhStep {
        decision_time: horizon.decision_time,
        horizon_last: horizon.last,
        used_step,
        control,
    };
    if let Some(tau) = plan(inst, t, horizon.decision_time, horizon.deadlines.clone(), &cfg.solver)? {
        return Ok(step(RhStepKind::QTilde, tau));
    }
    if let Some((_, d_hat)) = compute_h_hat(inst, t, horizon.decision_time, horizon.last) {
        if let Some(tau) = plan(inst, t, horizon.decision_time, d_hat, &cfg.solver)? {
            return Ok(step(RhStepKind::QHat, tau));
        }
    }
    let task = &inst.tasks()[t];
    let control = if task.tau_min > 0.0 {
        task.tau_min
    } else {
        // No rate limit: finish within the visible window instead.
        let end = task.deadline.min(horizon.decision_time + cfg.window);
        (end - horizon.decision_time) / task.bits as f64
    };
    Ok(step(RhStepKind::TauMinFallback, control))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhRecord {
    pub decision_time: f64,
    pub horizon_last: usize,
    pub used_step: RhStepKind,
    pub control: f64,
    pub departure: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhTrace {
    pub records: Vec<RhRecord>,
    pub total_cost: f64,
    /// 1-based id of the first task past its deadline.
    pub first_miss: Option<usize>,
    /// Wall time spent choosing controls, summed over decisions.
    pub compute_time_s: f64,
}

impl RhTrace {
    pub fn feasible(&self) -> bool {
        self.first_miss.is_none()
    }

    pub fn controls(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.control).collect()
    }

    pub fn departures(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.departure).collect()
    }

    /// Write `task_id,decision_time,horizon_last,used_step,tau,departure` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "task_id",
            "decision_time",
            "horizon_last",
            "used_step",
            "tau",
            "departure",
        ])?;
        for (i, r) in self.records.iter().enumerate() {
            w.serialize((
                i + 1,
                r.decision_time,
                r.horizon_last + 1,
                r.used_step.as_str(),
                r.control,
                r.departure,
            ))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn simulate_rh(inst: &Instance, cfg: &RhConfig) -> Result<RhTrace> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(inst.len());
    let mut x = 0.0;
    let mut total_cost = 0.0;
    let mut first_miss = None;
    let mut compute_time_s = 0.0;
    for (t, task) in inst.tasks().iter().enumerate() {
        let clock = Instant::now();
        let step = rh_step(inst, t, x, cfg)?;
        compute_time_s += clock.elapsed().as_secs_f64();
        let v = task.bits as f64;
        x = x.max(task.arrival) + v * step.control;
        total_cost += v * inst.energy_of(t).eval(step.control);
        if first_miss.is_none() && !within_deadline(x, task.deadline) {
            first_miss = Some(t + 1);
        }
        records.push(RhRecord {
            decision_time: step.decision_time,
            horizon_last: step.horizon_last,
            used_step: step.used_step,
            control: step.control,
            departure: x,
        });
    }
    Ok(RhTrace {
        records,
        total_cost,
        first_miss,
        compute_time_s,
    })
}
