//! Schedules: per-task controls and departures under the FCFS max-plus dynamics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::task::Instance;

/// Slack allowed when comparing departures against deadlines, relative to the
/// magnitude of the deadline.
pub const TIME_TOL: f64 = 1e-9;

pub(crate) fn within_deadline(x: f64, d: f64) -> bool {
    x <= d + TIME_TOL * d.abs().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleStatus {
    Optimal,
    /// Controls below `tau_min` were raised to it; feasible but not proven optimal.
    ClampedNearOptimal,
    /// Produced with table-lookup inverse derivatives; feasible, approximately optimal.
    TableApproximate,
    /// The task (1-based id) whose deadline cannot be met.
    Infeasible {
        task: usize,
    },
}

impl ScheduleStatus {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, ScheduleStatus::Infeasible { .. })
    }
}

/// Where the optimal derivative sequence jumps after a task.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    #[default]
    None,
    /// Derivative drops after the task; it departs at the next arrival.
    Left,
    /// Derivative rises after the task; it departs at its deadline.
    Right,
}

impl CriticalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CriticalKind::None => "none",
            CriticalKind::Left => "left",
            CriticalKind::Right => "right",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    /// Seconds per bit, one per task.
    pub controls: Vec<f64>,
    pub departures: Vec<f64>,
    pub total_cost: f64,
    pub status: ScheduleStatus,
    pub critical: Vec<CriticalKind>,
}

/// Departures `xᵢ = max(xᵢ₋₁, aᵢ) + vᵢτᵢ` from `x₀ = start`.
pub fn max_plus_departures(arrivals: &[f64], bits: &[f64], controls: &[f64], start: f64) -> Vec<f64> {
    let mut prev = start;
    arrivals
        .iter()
        .zip(bits)
        .zip(controls)
        .map(|((&a, &v), &tau)| {
            prev = prev.max(a) + v * tau;
            prev
        })
        .collect()
}

/// First task (0-based) whose departure misses its deadline.
pub fn first_deadline_miss(departures: &[f64], deadlines: &[f64]) -> Option<usize> {
    departures
        .iter()
        .zip(deadlines)
        .position(|(&x, &d)| !within_deadline(x, d))
}

impl Schedule {
    /// Build a schedule from controls, computing departures, cost and
    /// feasibility; `status` is used when every deadline holds.
    pub fn from_controls(
        inst: &Instance,
        controls: Vec<f64>,
        critical: Vec<CriticalKind>,
        status: ScheduleStatus,
    ) -> Schedule {
        let departures = max_plus_departures(&inst.arrivals(), &inst.bits(), &controls, 0.0);
        let total_cost = inst.cost(&controls);
        let status = match first_deadline_miss(&departures, &inst.deadlines()) {
            Some(i) => ScheduleStatus::Infeasible { task: i + 1 },
            None => status,
        };
        Schedule {
            controls,
            departures,
            total_cost,
            status,
            critical,
        }
    }

    pub fn infeasible(inst: &Instance, task: usize) -> Schedule {
        let n = inst.len();
        Schedule {
            controls: vec![f64::NAN; n],
            departures: vec![f64::NAN; n],
            total_cost: f64::INFINITY,
            status: ScheduleStatus::Infeasible { task },
            critical: vec![CriticalKind::None; n],
        }
    }

    /// Write `task_id,tau,departure,energy,critical_kind` rows.
    pub fn write_csv<W: Write>(&self, inst: &Instance, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task_id", "tau", "departure", "energy", "critical_kind"])?;
        for (i, t) in inst.tasks().iter().enumerate() {
            let energy = t.bits as f64 * inst.energy_of(i).eval(self.controls[i]);
            w.serialize((
                t.id,
                self.controls[i],
                self.departures[i],
                energy,
                self.critical.get(i).copied().unwrap_or_default().as_str(),
            ))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A parsed row of the schedule CSV.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct ScheduleRow {
    pub task_id: usize,
    pub tau: f64,
    pub departure: f64,
    pub energy: f64,
    pub critical_kind: CriticalKind,
}
