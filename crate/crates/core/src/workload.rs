//! Seeded workload generators.
//!
//! All generators draw from `ChaCha8Rng::seed_from_u64(seed)`. Exponential gaps
//! use inverse-CDF sampling `−ln(1−U)/λ` on `U = rng.gen::<f64>()`, and
//! uniform draws use `lo + U·(hi − lo)`, so a seed pins the instance exactly.
//!
//! Generated instances record their [`Workload`] as JSON in `horizon_note`, so
//! replications can be regenerated from any one of them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyFunction, ShannonParams};
use crate::error::{Error, Result};
use crate::task::{Instance, Task};

/// How each task's deadline is set from its arrival.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadlineRule {
    /// `dᵢ = aᵢ + offset`.
    Offset(f64),
    /// `dᵢ = aᵢ + U[lo, hi]`.
    UniformOffset(f64, f64),
    /// One shared deadline `a_N + offset` for every task.
    Common(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitsRule {
    Fixed(u64),
    /// Uniform over `{lo..=hi}`.
    Uniform(u64, u64),
}

/// How energy functions are attached to generated tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyAssignment {
    /// Every task uses the same function.
    Shared(EnergyFunction),
    /// One Shannon function per task, gain drawn uniformly from `gain`.
    /// When `p_max` is set the induced `tau_min` is written into each task.
    ShannonGains {
        n0: f64,
        bandwidth: f64,
        p_max: Option<f64>,
        gain: (f64, f64),
    },
    /// One `k/τᵖ` function per task with `k` drawn uniformly.
    InversePowerCoefficients { k: (f64, f64), p: f64 },
}

impl Default for EnergyAssignment {
    /// Shannon model for 512-byte packets: `N0 = 1 mW`, unit gain, `B = 6 kHz`,
    /// `P_max = 1 W`. A packet takes at most ~0.47 s (the cap) and at least
    /// ~0.068 s (full power).
    fn default() -> Self {
        EnergyAssignment::Shared(EnergyFunction::Shannon(ShannonParams {
            n0: 1e-3,
            gain: 1.0,
            bandwidth: 6000.0,
            p_max: Some(1.0),
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct PoissonParams {
    pub n: usize,
    /// Arrival rate λ (per second).
    pub rate: f64,
    pub deadline: DeadlineRule,
    pub bits: BitsRule,
    pub energy: EnergyAssignment,
    pub seed: u64,
}

impl PoissonParams {
    pub fn new(n: usize, rate: f64, deadline_offset: f64, bits: u64, seed: u64) -> Self {
        PoissonParams {
            n,
            rate,
            deadline: DeadlineRule::Offset(deadline_offset),
            bits: BitsRule::Fixed(bits),
            energy: EnergyAssignment::default(),
            seed,
        }
    }

    pub fn energy(mut self, energy: EnergyAssignment) -> Self {
        self.energy = energy;
        self
    }

    pub fn deadlines(mut self, rule: DeadlineRule) -> Self {
        self.deadline = rule;
        self
    }

    pub fn bits(mut self, rule: BitsRule) -> Self {
        self.bits = rule;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct BurstyParams {
    /// Range of the gap between consecutive burst starts (seconds).
    pub burst_interval: (f64, f64),
    /// Inclusive range of tasks per burst.
    pub burst_size: (usize, usize),
    /// Range of the gap between tasks inside a burst (seconds).
    pub intra_gap: (f64, f64),
    pub deadline: DeadlineRule,
    pub bits: BitsRule,
    pub energy: EnergyAssignment,
    pub n: usize,
    pub seed: u64,
}

impl BurstyParams {
    pub fn new(
        burst_interval: (f64, f64),
        burst_size: (usize, usize),
        intra_gap: (f64, f64),
        deadline_offset: f64,
        bits: u64,
        n: usize,
        seed: u64,
    ) -> Self {
        BurstyParams {
            burst_interval,
            burst_size,
            intra_gap,
            deadline: DeadlineRule::Offset(deadline_offset),
            bits: BitsRule::Fixed(bits),
            energy: EnergyAssignment::default(),
            n,
            seed,
        }
    }

    pub fn energy(mut self, energy: EnergyAssignment) -> Self {
        self.energy = energy;
        self
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + rng.gen::<f64>() * (hi - lo)
    }
}

fn check_range(name: &str, lo: f64, hi: f64, allow_zero: bool) -> Result<()> {
    let ok = lo.is_finite() && hi.is_finite() && lo <= hi && if allow_zero { lo >= 0.0 } else { lo > 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::param(format!("{name} range [{lo}, {hi}] is invalid")))
    }
}

fn check_rules(deadline: &DeadlineRule, bits: &BitsRule, energy: &EnergyAssignment) -> Result<()> {
    match *deadline {
        DeadlineRule::Offset(d) | DeadlineRule::Common(d) => check_range("deadline offset", d, d, false)?,
        DeadlineRule::UniformOffset(lo, hi) => check_range("deadline offset", lo, hi, false)?,
    }
    match *bits {
        BitsRule::Fixed(0) => return Err(Error::param("bits must be positive")),
        BitsRule::Uniform(lo, hi) if lo == 0 || lo > hi => {
            return Err(Error::param(format!("bits range {{{lo}..{hi}}} is invalid")))
        }
        _ => {}
    }
    match energy {
        EnergyAssignment::Shared(f) => f.validate()?,
        EnergyAssignment::ShannonGains {
            n0,
            bandwidth,
            p_max,
            gain,
        } => {
            check_range("gain", gain.0, gain.1, false)?;
            ShannonParams::new(*n0, gain.0, *bandwidth, *p_max)?;
        }
        EnergyAssignment::InversePowerCoefficients { k, p } => {
            check_range("k", k.0, k.1, false)?;
            crate::energy::inverse_power_energy(k.0, *p)?;
        }
    }
    Ok(())
}

/// Attach deadlines, sizes and energy functions to a sorted arrival sequence.
fn assemble(
    arrivals: Vec<f64>,
    deadline: &DeadlineRule,
    bits: &BitsRule,
    energy: &EnergyAssignment,
    rng: &mut ChaCha8Rng,
    note: String,
) -> Result<Instance> {
    let last = *arrivals.last().expect("at least one arrival");
    let mut table = BTreeMap::new();
    if let EnergyAssignment::Shared(f) = energy {
        table.insert("f0".to_string(), f.clone());
    }
    let mut tasks = Vec::with_capacity(arrivals.len());
    for (i, &a) in arrivals.iter().enumerate() {
        let d = match *deadline {
            DeadlineRule::Offset(off) => a + off,
            DeadlineRule::UniformOffset(lo, hi) => a + uniform(rng, lo, hi),
            DeadlineRule::Common(off) => last + off,
        };
        let v = match *bits {
            BitsRule::Fixed(b) => b,
            BitsRule::Uniform(lo, hi) => rng.gen_range(lo..=hi),
        };
        let (name, f) = match energy {
            EnergyAssignment::Shared(f) => ("f0".to_string(), f.clone()),
            EnergyAssignment::ShannonGains {
                n0,
                bandwidth,
                p_max,
                gain,
            } => {
                let g = uniform(rng, gain.0, gain.1);
                let f = EnergyFunction::Shannon(ShannonParams::new(*n0, g, *bandwidth, *p_max)?);
                (format!("f{}", i + 1), f)
            }
            EnergyAssignment::InversePowerCoefficients { k, p } => {
                let f = EnergyFunction::InversePower {
                    k: uniform(rng, k.0, k.1),
                    p: *p,
                };
                (format!("f{}", i + 1), f)
            }
        };
        tasks.push(Task {
            id: i + 1,
            arrival: a,
            deadline: d,
            bits: v,
            energy: name.clone(),
            tau_min: f.tau_min().unwrap_or(0.0),
        });
        table.entry(name).or_insert(f);
    }
    Instance::new(tasks, table, Some(note))
}

/// Poisson arrivals: exponential inter-arrival gaps with mean `1/rate`.
pub fn generate_poisson(params: &PoissonParams) -> Result<Instance> {
    if params.n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    if !(params.rate.is_finite() && params.rate > 0.0) {
        return Err(Error::param(format!("rate must be positive, got {}", params.rate)));
    }
    check_rules(&params.deadline, &params.bits, &params.energy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut t = 0.0;
    let arrivals: Vec<f64> = (0..params.n)
        .map(|_| {
            let u: f64 = rng.gen();
            t += -(1.0 - u).ln() / params.rate;
            t
        })
        .collect();
    let note = Workload::Poisson(params.clone()).to_note();
    assemble(arrivals, &params.deadline, &params.bits, &params.energy, &mut rng, note)
}

/// Bursty arrivals: burst starts spaced uniformly over `burst_interval`, burst
/// sizes uniform over `burst_size`, gaps inside a burst uniform over `intra_gap`.
/// Overlapping bursts are merged in time order and the result truncated to `n`.
pub fn generate_bursty(params: &BurstyParams) -> Result<Instance> {
    if params.n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    check_range(
        "burst interval",
        params.burst_interval.0,
        params.burst_interval.1,
        false,
    )?;
    check_range("intra-burst gap", params.intra_gap.0, params.intra_gap.1, true)?;
    let (smin, smax) = params.burst_size;
    if smin == 0 || smin > smax {
        return Err(Error::param(format!("burst size range {{{smin}..{smax}}} is invalid")));
    }
    check_rules(&params.deadline, &params.bits, &params.energy)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut arrivals: Vec<f64> = Vec::with_capacity(params.n + smax);
    let mut start = 0.0;
    loop {
        let size = rng.gen_range(smin..=smax);
        let mut t = start;
        for j in 0..size {
            if j > 0 {
                t += uniform(&mut rng, params.intra_gap.0, params.intra_gap.1);
            }
            arrivals.push(t);
        }
        start += uniform(&mut rng, params.burst_interval.0, params.burst_interval.1);
        if arrivals.len() >= params.n {
            arrivals.sort_by(f64::total_cmp);
            // A later burst can still land before the n-th arrival.
            if start > arrivals[params.n - 1] {
                break;
            }
        }
    }
    arrivals.truncate(params.n);
    let note = Workload::Bursty(params.clone()).to_note();
    let (deadline, bits, energy) = (&params.deadline, &params.bits, &params.energy);
    assemble(arrivals, deadline, bits, energy, &mut rng, note)
}

/// A generator with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arrivals", rename_all = "snake_case")]
pub enum Workload {
    Poisson(PoissonParams),
    Bursty(BurstyParams),
}

impl Workload {
    pub fn seed(&self) -> u64 {
        match self {
            Workload::Poisson(p) => p.seed,
            Workload::Bursty(p) => p.seed,
        }
    }

    /// The same workload under another seed.
    pub fn with_seed(&self, seed: u64) -> Workload {
        match self {
            Workload::Poisson(p) => Workload::Poisson(PoissonParams { seed, ..p.clone() }),
            Workload::Bursty(p) => Workload::Bursty(BurstyParams { seed, ..p.clone() }),
        }
    }

    pub fn generate(&self) -> Result<Instance> {
        match self {
            Workload::Poisson(p) => generate_poisson(p),
            Workload::Bursty(p) => generate_bursty(p),
        }
    }

    fn to_note(&self) -> String {
        serde_json::to_string(self).expect("workload serialization cannot fail")
    }

    /// The workload recorded in a generated instance, if any.
    pub fn from_instance(inst: &Instance) -> Option<Workload> {
        serde_json::from_str(inst.horizon_note()?).ok()
    }
}
