//! Off-line optimal scheduling by critical-task decomposition.
//!
//! Each busy period is scanned from its current start `p`: the first critical
//! task is the point where the equal-derivative segment starting at `p` must
//! end, either at a deadline (right-critical) or at the next arrival
//! (left-critical). The segment is solved, the start moves past it, and the
//! scan repeats until the remainder is a single segment ending at `d_n`.

use crate::decomposition::{partition_by_deadlines, BusyPeriod};
use crate::energy::{EnergyFunction, Marginal, TabulatedEnergy, DEFAULT_TABLE_POINTS};
use crate::error::{Error, Result};
use crate::ne::{NeConfig, Segment, Sigma};
use crate::schedule::{max_plus_departures, CriticalKind, Schedule, ScheduleStatus};
use crate::task::Instance;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolveMode {
    #[default]
    Exact,
    /// Inverse derivatives come from precomputed derivative tables.
    TableLookup,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PowerMode {
    #[default]
    Unconstrained,
    /// Enforce `tau_min` by clamping, flagging the result when clamping was needed.
    ClampAndFlag,
}

/// Table sizing for [`SolveMode::TableLookup`].
///
/// Each distinct energy function is tabulated over `[tau_lo, tau_hi]`, where
/// `tau_hi` is the largest per-bit time any task could use (its busy period's
/// span over its size, clipped to the cap) and `tau_lo` is `lo_factor` times
/// the smallest even share `(dᵢ − aᵢ)/V_BP` of any task's own window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableConfig {
    pub points: usize,
    pub lo_factor: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            points: DEFAULT_TABLE_POINTS,
            lo_factor: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub mode: SolveMode,
    pub ne: NeConfig,
    pub power_mode: PowerMode,
    pub table: TableConfig,
    /// Relative margin a derivative comparison must clear to declare a task
    /// critical; smaller differences count as ties.
    pub margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: SolveMode::Exact,
            ne: NeConfig::default(),
            power_mode: PowerMode::Unconstrained,
            table: TableConfig::default(),
            margin: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn table_lookup() -> Self {
        SolverConfig {
            mode: SolveMode::TableLookup,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ne.validate()?;
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::param(format!(
                "comparison margin must be nonnegative, got {}",
                self.margin
            )));
        }
        if self.table.points < 2 || !(self.table.lo_factor > 0.0 && self.table.lo_factor <= 1.0) {
            return Err(Error::param(format!("invalid table configuration {:?}", self.table)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalTask {
    /// 1-based task id.
    pub index: usize,
    pub kind: CriticalKind,
    /// `a_{index+1}` when left-critical, `d_index` when right-critical.
    pub departure: f64,
}

/// Start of the segment beginning at `p` in busy period `first..`: the period's
/// first arrival, or the departure of the task before `p`.
pub fn t1_anchor(arrivals: &[f64], first: usize, p: usize, prior_departure: f64) -> f64 {
    if p == first {
        arrivals[first]
    } else {
        prior_departure
    }
}

/// Earliest end of the segment closing at `i` in busy period `..=last`.
pub fn t2_anchor(arrivals: &[f64], deadlines: &[f64], last: usize, i: usize) -> f64 {
    if i < last {
        arrivals[i + 1]
    } else {
        deadlines[last]
    }
}

/// `a` exceeds `b` by more than the relative margin.
fn exceeds(a: Sigma, b: Sigma, margin: f64) -> bool {
    match (a, b) {
        (Sigma::NegInfinity, _) => false,
        (Sigma::Finite(_), Sigma::NegInfinity) => true,
        (Sigma::Finite(x), Sigma::Finite(y)) => x - y > margin * x.abs().max(y.abs()),
    }
}

/// A deadline at or before the segment start leaves no time for the task.
struct Blocked(usize);

/// One problem: per-task function slots, sizes, a working copy of arrivals
/// (lifted after right-critical tasks) and deadlines.
struct Problem<'a, M> {
    funcs: &'a [M],
    func_of: &'a [usize],
    bits: &'a [f64],
    arrivals: Vec<f64>,
    deadlines: &'a [f64],
    cfg: &'a SolverConfig,
}

impl<'a, M: Marginal> Problem<'a, M> {
    fn window(&self, seg: &Segment<'a, M>, t1: f64, end: f64) -> Sigma {
        self.window_sat(seg, t1, end).0
    }

    /// Also reports whether the window outlasts every task's cap.
    fn window_sat(&self, seg: &Segment<'a, M>, t1: f64, end: f64) -> (Sigma, bool) {
        seg.sigma(end - t1, &self.cfg.ne)
    }

    fn first_critical(
        &self,
        seg: &mut Segment<'a, M>,
        p: usize,
        last: usize,
        t1: f64,
    ) -> std::result::Result<Option<CriticalTask>, Blocked> {
        let (a, d) = (&self.arrivals, self.deadlines);
        let margin = self.cfg.margin;
        seg.clear();
        seg.add(self.func_of[p], self.bits[p]);
        if d[p] <= t1 {
            return Err(Blocked(p));
        }
        // A block that can finish at its caps before the next arrival is cut
        // there: it already runs at minimum cost, and at caps it may idle, so
        // it cannot be merged with what follows.
        let left_at = |l: usize| {
            Ok(Some(CriticalTask {
                index: l + 1,
                kind: CriticalKind::Left,
                departure: a[l + 1],
            }))
        };
        let (mut r, mut sigma_r) = (p, self.window(seg, t1, d[p]));
        let (mut l, (mut sigma_l, sat)) = (p, self.window_sat(seg, t1, t2_anchor(a, d, last, p)));
        if sat && p < last {
            return left_at(p);
        }
        for i in p + 1..=last {
            if d[i] <= t1 {
                return Err(Blocked(i));
            }
            seg.add(self.func_of[i], self.bits[i]);
            let (s_t2, sat) = self.window_sat(seg, t1, t2_anchor(a, d, last, i));
            if exceeds(s_t2, sigma_r, margin) {
                return Ok(Some(CriticalTask {
                    index: r + 1,
                    kind: CriticalKind::Right,
                    departure: d[r],
                }));
            }
            let s_d = self.window(seg, t1, d[i]);
            if exceeds(sigma_l, s_d, margin) {
                return left_at(l);
            }
            if !exceeds(s_d, sigma_r, margin) {
                r = i;
                sigma_r = s_d;
            }
            if !exceeds(sigma_l, s_t2, margin) {
                l = i;
                sigma_l = s_t2;
                if sat && i < last {
                    return left_at(i);
                }
            }
        }
        Ok(None)
    }

    /// Equal-derivative controls for tasks `p..=end` over `(t1, t2)`.
    fn fill(&self, seg: &mut Segment<'a, M>, p: usize, end: usize, t1: f64, t2: f64, out: &mut [f64]) {
        seg.clear();
        let tasks: Vec<(usize, f64)> = (p..=end).map(|m| (self.func_of[m], self.bits[m])).collect();
        for &(f, v) in &tasks {
            seg.add(f, v);
        }
        let taus = seg.controls(&tasks, t2 - t1, &self.cfg.ne);
        out[p..=end].copy_from_slice(&taus);
    }

    fn solve_bp(
        &mut self,
        bp: BusyPeriod,
        controls: &mut [f64],
        kinds: &mut [CriticalKind],
    ) -> std::result::Result<(), Blocked> {
        let mut seg = Segment::new(self.funcs);
        let mut fill_seg = Segment::new(self.funcs);
        let last = bp.last;
        let mut p = bp.first;
        let mut t1 = self.arrivals[p];
        loop {
            match self.first_critical(&mut seg, p, last, t1)? {
                Some(c) => {
                    let at = c.index - 1;
                    self.fill(&mut fill_seg, p, at, t1, c.departure, controls);
                    kinds[at] = c.kind;
                    if c.kind == CriticalKind::Right {
                        for a in &mut self.arrivals[at + 1..=last] {
                            if *a < c.departure {
                                *a = c.departure;
                            }
                        }
                    }
                    t1 = c.departure;
                    p = at + 1;
                }
                None => {
                    let end = self.deadlines[last];
                    self.fill(&mut fill_seg, p, last, t1, end, controls);
                    return Ok(());
                }
            }
        }
    }

    fn solve(mut self) -> std::result::Result<(Vec<f64>, Vec<CriticalKind>), Blocked> {
        let n = self.bits.len();
        let mut controls = vec![0.0; n];
        let mut kinds = vec![CriticalKind::None; n];
        for bp in partition_by_deadlines(&self.arrivals, self.deadlines) {
            self.solve_bp(bp, &mut controls, &mut kinds)?;
        }
        Ok((controls, kinds))
    }
}

/// Raw problem data, used by the on-line controller for horizon subproblems.
#[derive(Clone, Debug)]
pub struct SubProblem<'a> {
    pub funcs: &'a [EnergyFunction],
    pub func_of: &'a [usize],
    pub bits: &'a [f64],
    pub arrivals: Vec<f64>,
    pub deadlines: Vec<f64>,
}

/// Controls, critical marks, and the 0-based task that blocked, if any.
pub(crate) type RawSolution = std::result::Result<(Vec<f64>, Vec<CriticalKind>), usize>;

/// Raise `lo` toward `hi` until the derivative is representable; steep
/// functions overflow well inside a short window.
fn finite_floor(f: &EnergyFunction, lo: f64, hi: f64) -> f64 {
    if f.deriv(lo).is_finite() || !f.deriv(hi).is_finite() {
        return lo;
    }
    let (mut bad, mut good) = (lo, hi);
    for _ in 0..100 {
        let mid = (bad * good).sqrt();
        if mid <= bad || mid >= good {
            break;
        }
        if f.deriv(mid).is_finite() {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

fn tables_for(sub: &SubProblem<'_>, cfg: &SolverConfig) -> Result<Vec<TabulatedEnergy>> {
    let bps = partition_by_deadlines(&sub.arrivals, &sub.deadlines);
    let nf = sub.funcs.len();
    let mut hi = vec![0.0f64; nf];
    let mut lo = vec![f64::INFINITY; nf];
    for bp in bps {
        let span = sub.deadlines[bp.last] - sub.arrivals[bp.first];
        let total: f64 = sub.bits[bp.range()].iter().sum();
        for i in bp.range() {
            let f = sub.func_of[i];
            hi[f] = hi[f].max(span / sub.bits[i]);
            lo[f] = lo[f].min((sub.deadlines[i] - sub.arrivals[i]) / total);
        }
    }
    sub.funcs
        .iter()
        .enumerate()
        .map(|(k, f)| {
            if hi[k] == 0.0 {
                // Unused function: any valid table will do.
                let top = f.domain_max().min(1.0);
                TabulatedEnergy::new(f, 2, top * 0.5, top)
            } else {
                let top = hi[k].min(f.domain_max());
                let bottom = finite_floor(f, (lo[k] * cfg.table.lo_factor).min(top * 0.5), top * 0.5);
                TabulatedEnergy::new(f, cfg.table.points, bottom, top)
            }
        })
        .collect()
}

pub(crate) fn solve_raw(sub: &SubProblem<'_>, cfg: &SolverConfig) -> Result<RawSolution> {
    cfg.validate()?;
    let run = |funcs_exact: Option<&[EnergyFunction]>, tables: Option<&[TabulatedEnergy]>| {
        let res = match (funcs_exact, tables) {
            (Some(f), _) => Problem {
                funcs: f,
                func_of: sub.func_of,
                bits: sub.bits,
                arrivals: sub.arrivals.clone(),
                deadlines: &sub.deadlines,
                cfg,
            }
            .solve(),
            (None, Some(t)) => Problem {
                funcs: t,
                func_of: sub.func_of,
                bits: sub.bits,
                arrivals: sub.arrivals.clone(),
                deadlines: &sub.deadlines,
                cfg,
            }
            .solve(),
            (None, None) => unreachable!(),
        };
        res.map_err(|Blocked(i)| i)
    };
    Ok(match cfg.mode {
        SolveMode::Exact => run(Some(sub.funcs), None),
        SolveMode::TableLookup => {
            let tables = tables_for(sub, cfg)?;
            run(None, Some(&tables))
        }
    })
}

fn subproblem(inst: &Instance) -> (Vec<usize>, Vec<f64>) {
    let func_of = (0..inst.len()).map(|i| inst.function_index(i)).collect();
    (func_of, inst.bits())
}

fn base_status(cfg: &SolverConfig) -> ScheduleStatus {
    match cfg.mode {
        SolveMode::Exact => ScheduleStatus::Optimal,
        SolveMode::TableLookup => ScheduleStatus::TableApproximate,
    }
}

/// Minimum-energy schedule without the power limit.
pub fn solve_p1(inst: &Instance, cfg: &SolverConfig) -> Result<Schedule> {
    let (func_of, bits) = subproblem(inst);
    let sub = SubProblem {
        funcs: inst.functions(),
        func_of: &func_of,
        bits: &bits,
        arrivals: inst.arrivals(),
        deadlines: inst.deadlines(),
    };
    Ok(match solve_raw(&sub, cfg)? {
        Ok((controls, kinds)) => Schedule::from_controls(inst, controls, kinds, base_status(cfg)),
        Err(i) => Schedule::infeasible(inst, i + 1),
    })
}

/// Solve one busy period of `inst` in isolation.
pub fn solve_bp(inst: &Instance, bp: BusyPeriod, cfg: &SolverConfig) -> Result<Schedule> {
    let (func_of, bits) = subproblem(inst);
    let r = bp.range();
    let sub = SubProblem {
        funcs: inst.functions(),
        func_of: &func_of[r.clone()],
        bits: &bits[r.clone()],
        arrivals: inst.arrivals()[r.clone()].to_vec(),
        deadlines: inst.deadlines()[r].to_vec(),
    };
    let n = bp.len();
    Ok(match solve_raw(&sub, cfg)? {
        Ok((controls, critical)) => {
            let departures = max_plus_departures(&sub.arrivals, sub.bits, &controls, 0.0);
            let total_cost = (0..n)
                .map(|m| sub.bits[m] * inst.energy_of(bp.first + m).eval(controls[m]))
                .sum();
            Schedule {
                controls,
                departures,
                total_cost,
                status: base_status(cfg),
                critical,
            }
        }
        Err(i) => Schedule {
            controls: vec![f64::NAN; n],
            departures: vec![f64::NAN; n],
            total_cost: f64::INFINITY,
            status: ScheduleStatus::Infeasible { task: bp.first + i + 1 },
            critical: vec![CriticalKind::None; n],
        },
    })
}

/// First critical task of busy period `bp` when the segment starts at task
/// `p` (0-based) at time `t_start`, using the instance's own arrivals.
pub fn find_first_critical(
    inst: &Instance,
    bp: BusyPeriod,
    p: usize,
    t_start: f64,
    cfg: &SolverConfig,
) -> Result<Option<CriticalTask>> {
    if !bp.range().contains(&p) {
        return Err(Error::param(format!("task index {p} lies outside the busy period")));
    }
    cfg.validate()?;
    let (func_of, bits) = subproblem(inst);
    let deadlines = inst.deadlines();
    let prob = Problem {
        funcs: inst.functions(),
        func_of: &func_of,
        bits: &bits,
        arrivals: inst.arrivals(),
        deadlines: &deadlines,
        cfg,
    };
    let mut seg = Segment::new(inst.functions());
    prob.first_critical(&mut seg, p, bp.last, t_start)
        .map_err(|Blocked(i)| Error::invalid(Some(i + 1), "deadline does not follow the segment start"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    /// 1-based id of the first task that misses its deadline at full power.
    Infeasible {
        task: usize,
    },
}

/// Serve every task at its maximum rate; the power-limited problem is feasible
/// exactly when this meets every deadline.
pub fn check_feasibility_p2(inst: &Instance) -> Feasibility {
    let x = max_plus_departures(&inst.arrivals(), &inst.bits(), &inst.tau_mins(), 0.0);
    match x.iter().zip(inst.tasks()).position(|(&x, t)| x > t.deadline) {
        Some(i) => Feasibility::Infeasible { task: i + 1 },
        None => Feasibility::Feasible,
    }
}

fn meets_floor(tau: f64, floor: f64) -> bool {
    tau >= floor * (1.0 - 1e-12)
}

/// Minimum-energy schedule under the per-task `tau_min` floor.
///
/// Returns the unconstrained optimum when it already respects every floor.
/// Otherwise violators are raised to their floor. If that misses a deadline
/// and some control of the offending busy period lies below the period's
/// smallest floor, the instance is reported infeasible. Otherwise the period
/// is moved toward full-rate service until it fits.
pub fn solve_p2(inst: &Instance, cfg: &SolverConfig) -> Result<Schedule> {
    if let Feasibility::Infeasible { task } = check_feasibility_p2(inst) {
        return Ok(Schedule::infeasible(inst, task));
    }
    let p1 = solve_p1(inst, cfg)?;
    if !p1.status.is_feasible() {
        return Ok(p1);
    }
    let floors = inst.tau_mins();
    if p1.controls.iter().zip(&floors).all(|(&t, &m)| meets_floor(t, m)) {
        return Ok(p1);
    }
    let mut controls: Vec<f64> = p1.controls.iter().zip(&floors).map(|(&t, &m)| t.max(m)).collect();
    let bps = partition_by_deadlines(&inst.arrivals(), &inst.deadlines());
    let mut rescaled = Vec::new();
    loop {
        let s = Schedule::from_controls(
            inst,
            controls.clone(),
            p1.critical.clone(),
            ScheduleStatus::ClampedNearOptimal,
        );
        let ScheduleStatus::Infeasible { task } = s.status else {
            return Ok(s);
        };
        let bp = *bps
            .iter()
            .find(|bp| bp.range().contains(&(task - 1)))
            .expect("every task lies in a busy period");
        let inf = floors[bp.range()].iter().copied().fold(f64::INFINITY, f64::min);
        if p1.controls[bp.range()].iter().any(|&t| t < inf) {
            return Ok(Schedule::infeasible(inst, task));
        }
        if rescaled.contains(&bp.first) {
            return Ok(Schedule::infeasible(inst, task));
        }
        rescaled.push(bp.first);
        shrink_toward_floors(inst, bp, &floors, &mut controls);
    }
}

/// Move the period's controls toward their floors, `τ = m + s·(τ − m)`, with
/// the largest `s ∈ [0, 1]` that meets every deadline up to the period's end.
/// `s = 0` is full-rate service, feasible whenever the full-rate check passes.
fn shrink_toward_floors(inst: &Instance, bp: BusyPeriod, floors: &[f64], controls: &mut [f64]) {
    let base = controls[bp.range()].to_vec();
    let arrivals = inst.arrivals();
    let bits = inst.bits();
    let deadlines = inst.deadlines();
    let start = if bp.first == 0 {
        0.0
    } else {
        max_plus_departures(&arrivals[..bp.first], &bits[..bp.first], &controls[..bp.first], 0.0)[bp.first - 1]
    };
    let trial = |s: f64| -> Vec<f64> {
        base.iter()
            .zip(&floors[bp.range()])
            .map(|(&t, &m)| m + s * (t - m))
            .collect()
    };
    let fits = |taus: &[f64]| {
        let x = max_plus_departures(&arrivals[bp.range()], &bits[bp.range()], taus, start);
        x.iter().zip(&deadlines[bp.range()]).all(|(&x, &d)| x <= d)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if fits(&trial(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    controls[bp.range()].copy_from_slice(&trial(lo));
}

/// Dispatch on the configured power mode.
pub fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<Schedule> {
    match cfg.power_mode {
        PowerMode::Unconstrained => solve_p1(inst, cfg),
        PowerMode::ClampAndFlag => solve_p2(inst, cfg),
    }
}
