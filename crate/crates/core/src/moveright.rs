//! Iterative pairwise baseline.
//!
//! The state is the departure vector. A pass walks the boundaries between
//! consecutive tasks from left to right; at boundary `i` the tasks `i, i+1`
//! share the window from task `i`'s start to task `i+1`'s departure with equal
//! derivatives, and the boundary is clipped to `[a_{i+1}, dᵢ]`. When task `i`
//! can finish at its cap before `a_{i+1}`, ending there is also tried.

use crate::decomposition::partition_busy_periods;
use crate::energy::EnergyFunction;
use crate::error::{Error, Result};
use crate::ne::{NeConfig, Segment};
use crate::schedule::{CriticalKind, Schedule, ScheduleStatus};
use crate::task::Instance;

#[derive(Clone, Debug, PartialEq)]
pub struct MoveRightReport {
    pub passes: usize,
    /// Cost after initialization, then after each pass.
    pub cost_trace: Vec<f64>,
    pub final_schedule: Schedule,
    /// The last pass lowered the cost by less than the tolerance.
    pub converged: bool,
}

/// A feasible starting point: each busy period spread at its even rate
/// `(d_n − a_k)/Σv`, pulled back halfway to the tightest deadline ahead
/// whenever the even rate would overrun it.
fn initial_departures(inst: &Instance) -> Vec<f64> {
    let (a, d, v) = (inst.arrivals(), inst.deadlines(), inst.bits());
    let mut x = vec![0.0; inst.len()];
    for bp in partition_busy_periods(inst) {
        let even = (d[bp.last] - a[bp.first]) / v[bp.range()].iter().sum::<f64>();
        // later[m]: tightest deadline strictly after task m of the period.
        let mut later = vec![f64::INFINITY; bp.len()];
        for m in (0..bp.len() - 1).rev() {
            later[m] = later[m + 1].min(d[bp.first + m + 1]);
        }
        let mut prev = a[bp.first];
        for (m, i) in bp.range().enumerate() {
            let start = prev.max(a[i]);
            let cand = start + v[i] * even;
            x[i] = if cand < later[m] && cand <= d[i] {
                cand
            } else {
                0.5 * (start + later[m].min(d[i]))
            };
            prev = x[i];
        }
    }
    x
}

fn cost_of(f: &EnergyFunction, bits: f64, span: f64) -> f64 {
    bits * f.eval(span / bits)
}

pub fn move_right(inst: &Instance, max_passes: usize, tol: f64) -> Result<MoveRightReport> {
    move_right_with(inst, max_passes, tol, &NeConfig::default())
}

pub fn move_right_with(inst: &Instance, max_passes: usize, tol: f64, ne: &NeConfig) -> Result<MoveRightReport> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::param(format!("tolerance must be nonnegative, got {tol}")));
    }
    ne.validate()?;
    let n = inst.len();
    let (a, d, v) = (inst.arrivals(), inst.deadlines(), inst.bits());
    let f: Vec<&EnergyFunction> = (0..n).map(|i| inst.energy_of(i)).collect();
    let slot: Vec<usize> = (0..n).map(|i| inst.function_index(i)).collect();
    let mut x = initial_departures(inst);
    let start = |x: &[f64], i: usize| if i == 0 { a[0] } else { x[i - 1].max(a[i]) };
    let total = |x: &[f64]| -> f64 { (0..n).map(|i| cost_of(f[i], v[i], x[i] - start(x, i))).sum() };

    let mut seg = Segment::new(inst.functions());
    let mut cost_trace = vec![total(&x)];
    let mut passes = 0;
    let mut converged = false;
    while passes < max_passes {
        passes += 1;
        for i in 0..n.saturating_sub(1) {
            let s = start(&x, i);
            let end = x[i + 1];
            let before = cost_of(f[i], v[i], x[i] - s) + cost_of(f[i + 1], v[i + 1], end - x[i].max(a[i + 1]));
            let lo = a[i + 1].max(s);
            let hi = d[i].min(end);
            let pair = |t: f64| cost_of(f[i], v[i], t - s) + cost_of(f[i + 1], v[i + 1], end - t.max(a[i + 1]));
            let joint = if hi <= lo {
                hi
            } else {
                seg.clear();
                seg.add(slot[i], v[i]);
                seg.add(slot[i + 1], v[i + 1]);
                let taus = seg.controls(&[(slot[i], v[i]), (slot[i + 1], v[i + 1])], end - s, ne);
                (s + v[i] * taus[0]).clamp(lo, hi)
            };
            // Task i alone at its cap, idling before i+1 arrives.
            let alone = (s + v[i] * f[i].domain_max()).min(hi);
            let target = if alone < a[i + 1] && pair(alone) < pair(joint) {
                alone
            } else {
                joint
            };
            if target <= s || target.max(a[i + 1]) >= end {
                continue;
            }
            if pair(target) <= before {
                x[i] = target;
            }
        }
        // The last task can always stretch to its deadline.
        let s = start(&x, n - 1);
        let stretched = d[n - 1].min(s + v[n - 1] * f[n - 1].domain_max());
        if cost_of(f[n - 1], v[n - 1], stretched - s) <= cost_of(f[n - 1], v[n - 1], x[n - 1] - s) {
            x[n - 1] = stretched;
        }
        let c = total(&x);
        let prev = *cost_trace.last().expect("initial cost recorded");
        cost_trace.push(c);
        if prev.is_finite() && prev - c <= tol * prev.abs() {
            converged = true;
            break;
        }
    }

    let controls: Vec<f64> = (0..n).map(|i| (x[i] - start(&x, i)) / v[i]).collect();
    let mut critical = vec![CriticalKind::None; n];
    for i in 0..n.saturating_sub(1) {
        let (di, dj) = (f[i].deriv(controls[i]), f[i + 1].deriv(controls[i + 1]));
        let gap = 1e-7 * di.abs().max(dj.abs());
        if di > dj + gap && x[i] <= a[i + 1] {
            critical[i] = CriticalKind::Left;
        } else if di + gap < dj && x[i] >= d[i] {
            critical[i] = CriticalKind::Right;
        }
    }
    let final_schedule = Schedule::from_controls(inst, controls, critical, ScheduleStatus::Optimal);
    Ok(MoveRightReport {
        passes,
        cost_trace,
        final_schedule,
        converged,
    })
}
