//! Minimum-energy transmission scheduling for deadline-constrained packets on a
//! single first-come-first-served link.
//!
//! Packets arrive at `aᵢ`, must leave by `dᵢ`, and carry `vᵢ` bits sent at a
//! constant `τᵢ` seconds per bit, so departures follow
//! `xᵢ = max(xᵢ₋₁, aᵢ) + vᵢτᵢ`. Sending a bit in `τ` seconds costs `ωᵢ(τ)`.
//!
//! * [`solve_p1`] / [`solve_p2`]: off-line optimum, without and with a per-task
//!   rate limit.
//! * [`move_right`]: an iterative pairwise baseline.
//! * [`simulate_rh`]: an on-line receding-horizon controller.
//! * [`bench`]: the experiment harness used by the CLI.

pub mod bench;
pub mod decomposition;
pub mod energy;
pub mod error;
pub mod gctda;
pub mod moveright;
pub mod ne;
pub mod rh;
pub mod schedule;
pub mod task;
pub mod workload;

pub use decomposition::{partition_busy_periods, BusyPeriod};
pub use energy::{
    inverse_power_energy, shannon_energy, tabulate, EnergyFunction, Lookup, Marginal, ShannonParams, TabulatedEnergy,
};
pub use error::{Error, Result};
pub use gctda::{
    check_feasibility_p2, find_first_critical, solve, solve_bp, solve_p1, solve_p2, t1_anchor, t2_anchor, CriticalTask,
    Feasibility, PowerMode, SolveMode, SolverConfig, TableConfig,
};
pub use moveright::{move_right, MoveRightReport};
pub use ne::{sigma, solve_ne, NeConfig, NeSolution, Sigma};
pub use rh::{
    build_planning_horizon, compute_h_hat, rh_step, simulate_rh, Horizon, RhConfig, RhRecord, RhStep, RhStepKind,
    RhTrace,
};
pub use schedule::{CriticalKind, Schedule, ScheduleRow, ScheduleStatus};
pub use task::{load_instance, save_instance, Instance, Task};
pub use workload::{
    generate_bursty, generate_poisson, BitsRule, BurstyParams, DeadlineRule, EnergyAssignment, PoissonParams, Workload,
};
