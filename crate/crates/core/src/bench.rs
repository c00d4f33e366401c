//! Experiment harness: algorithm comparisons on one instance, and Monte-Carlo
//! runs of the on-line controller against the off-line optimum.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gctda::{solve_p1, solve_p2, SolverConfig};
use crate::moveright::move_right;
use crate::rh::{simulate_rh, RhConfig};
use crate::task::Instance;
use crate::workload::Workload;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "GCTDA")]
    Gctda,
    #[serde(rename = "GCTDA_TL")]
    GctdaTl,
    MoveRight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub algorithm: Algorithm,
    pub wall_time_s: f64,
    pub cost: f64,
    /// Passes run (MoveRight only).
    pub passes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    /// SHA-256 of the instance's JSON text; every algorithm saw this instance.
    pub instance_sha256: String,
    pub results: Vec<BenchResult>,
}

pub fn instance_hash(inst: &Instance) -> String {
    hex::encode(Sha256::digest(inst.to_json().as_bytes()))
}

/// Median wall time of `runs` calls, with the last call's output.
fn timed<T>(runs: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut times = Vec::with_capacity(runs);
    let mut out = None;
    for _ in 0..runs.max(1) {
        let clock = Instant::now();
        let r = f()?;
        times.push(clock.elapsed().as_secs_f64());
        out = Some(r);
    }
    times.sort_by(f64::total_cmp);
    Ok((times[times.len() / 2], out.expect("at least one run")))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchConfig {
    pub moveright_passes: usize,
    /// MoveRight stops early once a pass gains less than this relative amount.
    pub moveright_tol: f64,
    pub solver: SolverConfig,
    /// Timed runs per algorithm; the median is reported.
    pub runs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            moveright_passes: 10_000,
            moveright_tol: 0.0,
            solver: SolverConfig::default(),
            runs: 3,
        }
    }
}

/// Run the exact solver, the table-lookup solver and MoveRight on `inst`.
pub fn run_bench(inst: &Instance, cfg: &BenchConfig) -> Result<BenchReport> {
    let exact = SolverConfig {
        mode: crate::gctda::SolveMode::Exact,
        ..cfg.solver
    };
    let table = SolverConfig {
        mode: crate::gctda::SolveMode::TableLookup,
        ..cfg.solver
    };
    let (t_exact, s_exact) = timed(cfg.runs, || solve_p1(inst, &exact))?;
    let (t_table, s_table) = timed(cfg.runs, || solve_p1(inst, &table))?;
    let (t_mr, mr) = timed(cfg.runs, || move_right(inst, cfg.moveright_passes, cfg.moveright_tol))?;
    Ok(BenchReport {
        instance_sha256: instance_hash(inst),
        results: vec![
            BenchResult {
                algorithm: Algorithm::Gctda,
                wall_time_s: t_exact,
                cost: s_exact.total_cost,
                passes: None,
            },
            BenchResult {
                algorithm: Algorithm::GctdaTl,
                wall_time_s: t_table,
                cost: s_table.total_cost,
                passes: None,
            },
            BenchResult {
                algorithm: Algorithm::MoveRight,
                wall_time_s: t_mr,
                cost: mr.final_schedule.total_cost,
                passes: Some(mr.passes),
            },
        ],
    })
}

/// Header `algorithm,wall_time_s,cost,passes`.
pub fn write_bench_csv<W: Write>(results: &[BenchResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse `lo:hi:step` into `lo, lo+step, …` up to `hi` inclusive.
pub fn parse_window_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::param(format!("window grid {spec:?} is not lo:hi:step"));
    let [lo, hi, step] = parts.as_slice() else {
        return Err(bad());
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (lo, hi, step) = (parse(lo)?, parse(hi)?, parse(step)?);
    if !(lo > 0.0 && hi >= lo && step > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhExperiment {
    /// Replication `r` runs this workload seeded `seed + r`.
    pub workload: Workload,
    pub windows: Vec<f64>,
    pub reps: usize,
    pub power_constrained: bool,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhRepRow {
    pub rep: usize,
    #[serde(rename = "H")]
    pub window: f64,
    pub rh_cost: f64,
    pub offline_cost: f64,
    pub diff: f64,
    pub calc_time_per_task_s: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhSummaryRow {
    #[serde(rename = "H")]
    pub window: f64,
    pub mean_diff: f64,
    pub worst_diff: f64,
    pub best_diff: f64,
    pub mean_calc_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhExperimentResult {
    pub reps: Vec<RhRepRow>,
    pub summary: Vec<RhSummaryRow>,
}

fn run_rep(exp: &RhExperiment, rep: usize) -> Result<Vec<RhRepRow>> {
    let inst = exp
        .workload
        .with_seed(exp.workload.seed().wrapping_add(rep as u64))
        .generate()?;
    let offline = if exp.power_constrained {
        solve_p2(&inst, &exp.solver)?
    } else {
        solve_p1(&inst, &exp.solver)?
    };
    if !offline.status.is_feasible() {
        return Err(Error::Infeasible(format!(
            "replication {rep} has no feasible off-line schedule"
        )));
    }
    exp.windows
        .iter()
        .map(|&h| {
            let cfg = RhConfig {
                window: h,
                power_constrained: exp.power_constrained,
                solver: exp.solver,
            };
            let trace = simulate_rh(&inst, &cfg)?;
            Ok(RhRepRow {
                rep,
                window: h,
                rh_cost: trace.total_cost,
                offline_cost: offline.total_cost,
                diff: (trace.total_cost - offline.total_cost) / offline.total_cost,
                calc_time_per_task_s: trace.compute_time_s / inst.len() as f64,
                feasible: trace.feasible(),
            })
        })
        .collect()
}

/// Replications run in parallel; rows come back ordered by replication, then
/// window.
pub fn run_rh_experiment(exp: &RhExperiment) -> Result<RhExperimentResult> {
    if exp.reps == 0 || exp.windows.is_empty() {
        return Err(Error::param("experiment needs at least one replication and one window"));
    }
    let per_rep: Vec<Vec<RhRepRow>> = (0..exp.reps)
        .into_par_iter()
        .map(|rep| run_rep(exp, rep))
        .collect::<Result<_>>()?;
    let summary = exp
        .windows
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let rows: Vec<&RhRepRow> = per_rep.iter().map(|r| &r[k]).collect();
            let n = rows.len() as f64;
            RhSummaryRow {
                window: h,
                mean_diff: rows.iter().map(|r| r.diff).sum::<f64>() / n,
                worst_diff: rows.iter().map(|r| r.diff).fold(f64::NEG_INFINITY, f64::max),
                best_diff: rows.iter().map(|r| r.diff).fold(f64::INFINITY, f64::min),
                mean_calc_time_s: rows.iter().map(|r| r.calc_time_per_task_s).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(RhExperimentResult {
        reps: per_rep.into_iter().flatten().collect(),
        summary,
    })
}

/// Header `H,mean_diff,worst_diff,best_diff,mean_calc_time_s`.
pub fn write_rh_summary_csv<W: Write>(rows: &[RhSummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Header `rep,H,rh_cost,offline_cost,diff,calc_time_per_task_s,feasible`.
pub fn write_rh_reps_csv<W: Write>(rows: &[RhRepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
