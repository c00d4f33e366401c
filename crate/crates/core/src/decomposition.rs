//! Busy-period partition of an instance.

use crate::task::Instance;

/// A maximal block of tasks `first..=last` (0-based) served back to back at the
/// optimum. The server idles between `d_last` and the next arrival.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BusyPeriod {
    pub first: usize,
    pub last: usize,
}

impl BusyPeriod {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }

    /// Arrival time of the first task.
    pub fn start(&self, inst: &Instance) -> f64 {
        inst.tasks()[self.first].arrival
    }
}

/// Cut after task `i` exactly when `dᵢ < aᵢ₊₁`; a tie keeps the tasks together.
pub fn partition_by_deadlines(arrivals: &[f64], deadlines: &[f64]) -> Vec<BusyPeriod> {
    let n = arrivals.len();
    let mut out = Vec::new();
    let mut first = 0;
    for i in 0..n {
        if i + 1 == n || deadlines[i] < arrivals[i + 1] {
            out.push(BusyPeriod { first, last: i });
            first = i + 1;
        }
    }
    out
}

pub fn partition_busy_periods(inst: &Instance) -> Vec<BusyPeriod> {
    partition_by_deadlines(&inst.arrivals(), &inst.deadlines())
}
