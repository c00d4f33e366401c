use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use txsched::bench::{
    parse_window_grid, run_bench, run_rh_experiment, write_bench_csv, write_rh_reps_csv, write_rh_summary_csv,
    BenchConfig, RhExperiment,
};
use txsched::{
    generate_bursty, generate_poisson, load_instance, save_instance, solve_p1, solve_p2, BitsRule, BurstyParams,
    DeadlineRule, EnergyAssignment, EnergyFunction, Error, NeConfig, PoissonParams, ScheduleStatus, ShannonParams,
    SolveMode, SolverConfig, Workload,
};

const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(name = "txsched", version, about = "Minimum-energy packet transmission scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance file.
    Gen(GenArgs),
    /// Solve an instance off-line and write the schedule.
    Solve(SolveArgs),
    /// Run the receding-horizon controller against the off-line optimum.
    Rh(RhArgs),
    /// Compare GCTDA, GCTDA_TL and MoveRight on one instance.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Poisson arrivals (the default).
    #[arg(long, conflicts_with = "bursty")]
    poisson: bool,
    /// Bursty arrivals.
    #[arg(long)]
    bursty: bool,
    /// Poisson arrival rate (per second).
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Deadline offset from arrival (seconds); the lower end with --deadline-max.
    #[arg(long, default_value_t = 10.0)]
    deadline: f64,
    /// Draw each offset uniformly from [--deadline, --deadline-max].
    #[arg(long, conflicts_with = "common_deadline")]
    deadline_max: Option<f64>,
    /// Give every task the deadline a_N + --deadline.
    #[arg(long)]
    common_deadline: bool,
    #[arg(long, default_value_t = 4096)]
    bits: u64,
    /// Draw sizes uniformly from {--bits..=--bits-max}.
    #[arg(long)]
    bits_max: Option<u64>,
    /// Gap between burst starts, lo:hi seconds.
    #[arg(long, default_value = "8:12")]
    burst_interval: String,
    /// Tasks per burst, lo:hi.
    #[arg(long, default_value = "10:20")]
    burst_size: String,
    /// Gap between tasks inside a burst, lo:hi seconds.
    #[arg(long, default_value = "0:1")]
    intra_gap: String,
    #[command(flatten)]
    energy: EnergyArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EnergyArgs {
    /// Energy model: shannon or inverse-power.
    #[arg(long, default_value = "shannon")]
    energy: String,
    /// Shannon: channel bandwidth (Hz).
    #[arg(long, default_value_t = 6000.0)]
    bandwidth: f64,
    /// Shannon: noise power (W).
    #[arg(long, default_value_t = 1e-3)]
    n0: f64,
    /// Shannon: channel gain; the lower end with --gain-max.
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    /// Shannon: one function per task, gain uniform on [--gain, --gain-max].
    #[arg(long)]
    gain_max: Option<f64>,
    /// Shannon: maximum transmit power (W), which sets each task's tau_min.
    #[arg(long, default_value_t = 1.0, conflicts_with = "no_power_limit")]
    p_max: f64,
    /// Shannon: no maximum power (tau_min = 0).
    #[arg(long)]
    no_power_limit: bool,
    /// Inverse power: coefficient k of k/τ^p; the lower end with --k-max.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Inverse power: one function per task, k uniform on [--k, --k-max].
    #[arg(long)]
    k_max: Option<f64>,
    /// Inverse power: exponent p.
    #[arg(long, default_value_t = 2.0)]
    power: f64,
}

#[derive(Args)]
struct SolverArgs {
    /// Answer inverse-derivative queries from precomputed tables.
    #[arg(long)]
    table_lookup: bool,
    /// Relative tolerance of the equal-derivative root finder.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Enforce each task's tau_min.
    #[arg(long)]
    power_constrained: bool,
    /// Schedule CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RhArgs {
    instance: PathBuf,
    /// Window grid lo:hi:step (seconds).
    #[arg(long, default_value = "1:11:1")]
    window: String,
    /// Replications, regenerated from the instance's recorded workload.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// First replication seed (defaults to the instance's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Compare against the rate-limited off-line optimum.
    #[arg(long)]
    power_constrained: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Summary CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-replication CSV.
    #[arg(long)]
    reps_output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    moveright_passes: usize,
    /// Timed runs per algorithm; the median is reported.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Bench CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn range<T: std::str::FromStr>(spec: &str, what: &str) -> anyhow::Result<(T, T)> {
    let parsed = spec
        .split_once(':')
        .and_then(|(lo, hi)| Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?)));
    parsed.with_context(|| format!("--{what} expects lo:hi, got {spec:?}"))
}

fn energy_assignment(e: &EnergyArgs) -> anyhow::Result<EnergyAssignment> {
    let p_max = (!e.no_power_limit).then_some(e.p_max);
    Ok(match e.energy.as_str() {
        "shannon" => match e.gain_max {
            None => EnergyAssignment::Shared(EnergyFunction::Shannon(ShannonParams::new(
                e.n0,
                e.gain,
                e.bandwidth,
                p_max,
            )?)),
            Some(hi) => EnergyAssignment::ShannonGains {
                n0: e.n0,
                bandwidth: e.bandwidth,
                p_max,
                gain: (e.gain, hi),
            },
        },
        "inverse-power" => match e.k_max {
            None => EnergyAssignment::Shared(txsched::inverse_power_energy(e.k, e.power)?),
            Some(hi) => EnergyAssignment::InversePowerCoefficients {
                k: (e.k, hi),
                p: e.power,
            },
        },
        other => bail!("unknown energy model {other:?} (expected shannon or inverse-power)"),
    })
}

fn solver_config(args: &SolverArgs) -> SolverConfig {
    let mut cfg = SolverConfig::default();
    if args.table_lookup {
        cfg.mode = SolveMode::TableLookup;
    }
    if let Some(tol) = args.tolerance {
        cfg.ne = NeConfig { rel_tol: tol, ..cfg.ne };
    }
    cfg
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load(path: &Path) -> anyhow::Result<txsched::Instance> {
    load_instance(path).with_context(|| format!("cannot load {}", path.display()))
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<u8> {
    let deadline = if args.common_deadline {
        DeadlineRule::Common(args.deadline)
    } else if let Some(hi) = args.deadline_max {
        DeadlineRule::UniformOffset(args.deadline, hi)
    } else {
        DeadlineRule::Offset(args.deadline)
    };
    let bits = match args.bits_max {
        Some(hi) => BitsRule::Uniform(args.bits, hi),
        None => BitsRule::Fixed(args.bits),
    };
    let energy = energy_assignment(&args.energy)?;
    let inst = if args.bursty {
        let mut p = BurstyParams::new(
            range(&args.burst_interval, "burst-interval")?,
            range(&args.burst_size, "burst-size")?,
            range(&args.intra_gap, "intra-gap")?,
            args.deadline,
            args.bits,
            args.n,
            args.seed,
        )
        .energy(energy);
        p.deadline = deadline;
        p.bits = bits;
        generate_bursty(&p)?
    } else {
        let p = PoissonParams::new(args.n, args.lambda, args.deadline, args.bits, args.seed)
            .energy(energy)
            .deadlines(deadline)
            .bits(bits);
        generate_poisson(&p)?
    };
    save_instance(&inst, &args.output).with_context(|| format!("cannot write {}", args.output.display()))?;
    println!("wrote {} tasks to {}", inst.len(), args.output.display());
    Ok(0)
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<u8> {
    let inst = load(&args.instance)?;
    let cfg = solver_config(&args.solver);
    let schedule = if args.power_constrained {
        solve_p2(&inst, &cfg)?
    } else {
        solve_p1(&inst, &cfg)?
    };
    let status = match schedule.status {
        ScheduleStatus::Optimal => "optimal".to_string(),
        ScheduleStatus::ClampedNearOptimal => "clamped_near_optimal".to_string(),
        ScheduleStatus::TableApproximate => "table_approximate".to_string(),
        ScheduleStatus::Infeasible { task } => format!("infeasible (task {task})"),
    };
    println!("status: {status}");
    if !schedule.status.is_feasible() {
        return Ok(EXIT_INFEASIBLE);
    }
    println!("cost: {}", schedule.total_cost);
    if let Some(path) = &args.output {
        schedule.write_csv(&inst, create(path)?)?;
    }
    Ok(0)
}

fn cmd_rh(args: RhArgs) -> anyhow::Result<u8> {
    let inst = load(&args.instance)?;
    let workload = match Workload::from_instance(&inst) {
        Some(w) => w,
        None => bail!(
            "{} does not record the workload that generated it; create it with `txsched gen`",
            args.instance.display()
        ),
    };
    let seed = args.seed.unwrap_or(workload.seed());
    let exp = RhExperiment {
        workload: workload.with_seed(seed),
        windows: parse_window_grid(&args.window)?,
        reps: args.reps,
        power_constrained: args.power_constrained,
        solver: solver_config(&args.solver),
    };
    let result = match run_rh_experiment(&exp) {
        Ok(r) => r,
        Err(Error::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            return Ok(EXIT_INFEASIBLE);
        }
        Err(e) => return Err(e.into()),
    };
    write_rh_summary_csv(&result.summary, std::io::stdout().lock())?;
    if let Some(path) = &args.output {
        write_rh_summary_csv(&result.summary, create(path)?)?;
    }
    if let Some(path) = &args.reps_output {
        write_rh_reps_csv(&result.reps, create(path)?)?;
    }
    let misses = result.reps.iter().filter(|r| !r.feasible).count();
    if misses > 0 {
        eprintln!("{misses} runs missed a deadline");
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<u8> {
    let inst = load(&args.instance)?;
    let mut cfg = BenchConfig {
        moveright_passes: args.moveright_passes,
        runs: args.runs,
        ..BenchConfig::default()
    };
    if let Some(tol) = args.tolerance {
        cfg.solver.ne.rel_tol = tol;
    }
    let report = run_bench(&inst, &cfg)?;
    println!("instance sha256: {}", report.instance_sha256);
    write_bench_csv(&report.results, std::io::stdout().lock())?;
    if let Some(path) = &args.output {
        write_bench_csv(&report.results, create(path)?)?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Rh(a) => cmd_rh(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
