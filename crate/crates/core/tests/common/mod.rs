//! Independent oracles and instance builders shared by the integration tests.
//!
//! The oracles never call a solver from the library: energy functions are
//! re-derived from their parameters and every optimum is found by generic
//! numerical search.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod ne;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use txsched::{CriticalKind, EnergyFunction, Instance, Schedule, ShannonParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-bit energy with its first two derivatives, from closed forms.
#[derive(Clone, Copy, Debug)]
pub enum Omega {
    /// `c·τ·2^{1/(Bτ)}`
    Shannon { c: f64, b: f64 },
    /// `k·τ^{−p}`
    Power { k: f64, p: f64 },
}

impl Omega {
    pub fn of(f: &EnergyFunction) -> Omega {
        match f {
            EnergyFunction::Shannon(s) => Omega::Shannon {
                c: s.n0 / s.gain,
                b: s.bandwidth,
            },
            EnergyFunction::InversePower { k, p } => Omega::Power { k: *k, p: *p },
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Omega::Shannon { c, b } => c * t * 2f64.powf(1.0 / (b * t)),
            Omega::Power { k, p } => k * t.powf(-p),
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        match *self {
            Omega::Shannon { c, b } => {
                let y = std::f64::consts::LN_2 / (b * t);
                c * y.exp() * (1.0 - y)
            }
            Omega::Power { k, p } => -p * k * t.powf(-p - 1.0),
        }
    }

    pub fn d2(&self, t: f64) -> f64 {
        match *self {
            Omega::Shannon { c, b } => {
                let y = std::f64::consts::LN_2 / (b * t);
                c * y.exp() * y * y / t
            }
            Omega::Power { k, p } => p * (p + 1.0) * k * t.powf(-p - 2.0),
        }
    }

    /// Energy-minimizing `τ`, if finite.
    pub fn cap(&self) -> f64 {
        match *self {
            Omega::Shannon { b, .. } => std::f64::consts::LN_2 / b,
            Omega::Power { .. } => f64::INFINITY,
        }
    }
}

/// Plain data view of an instance.
#[derive(Clone, Debug)]
pub struct Data {
    pub a: Vec<f64>,
    pub d: Vec<f64>,
    pub v: Vec<f64>,
    pub f: Vec<Omega>,
    pub tau_min: Vec<f64>,
}

impl Data {
    pub fn of(inst: &Instance) -> Data {
        let t = inst.tasks();
        Data {
            a: t.iter().map(|k| k.arrival).collect(),
            d: t.iter().map(|k| k.deadline).collect(),
            v: t.iter().map(|k| k.bits as f64).collect(),
            f: (0..t.len()).map(|i| Omega::of(inst.energy_of(i))).collect(),
            tau_min: t.iter().map(|k| k.tau_min).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn cost(&self, tau: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.v[i] * self.f[i].eval(tau[i])).sum()
    }

    pub fn departures(&self, tau: &[f64]) -> Vec<f64> {
        let mut x = 0.0f64;
        (0..self.n())
            .map(|i| {
                x = x.max(self.a[i]) + self.v[i] * tau[i];
                x
            })
            .collect()
    }

    pub fn feasible(&self, tau: &[f64]) -> bool {
        tau.iter().all(|&t| t > 0.0) && self.departures(tau).iter().zip(&self.d).all(|(x, d)| x <= d)
    }

    /// Busy periods from the deadline/arrival rule, 0-based inclusive ranges.
    pub fn busy_periods(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut first = 0;
        for i in 0..self.n() {
            if i + 1 == self.n() || self.d[i] < self.a[i + 1] {
                out.push((first, i));
                first = i + 1;
            }
        }
        out
    }
}

/// Dense linear solve by Gaussian elimination with partial pivoting.
fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        rhs.swap(c, piv);
        for r in c + 1..n {
            let k = m[r][c] / m[c][c];
            for j in c..n {
                m[r][j] -= k * m[c][j];
            }
            rhs[r] -= k * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|j| m[c][j] * x[j]).sum();
        x[c] = (rhs[c] - s) / m[c][c];
    }
    x
}

/// Log-barrier interior-point method on the max-plus-expanded convex program
///
/// `min Σ vᵢωᵢ(τᵢ)  s.t.  Σ_{m=j..i} v_m τ_m ≤ dᵢ − a_j  (j ≤ i),  τ > 0`,
///
/// which is equivalent to the queueing constraints because
/// `xᵢ = max_j (a_j + Σ_{m=j..i} v_m τ_m)`. Returns the cost and controls of a
/// strictly feasible point whose duality gap is below `1e-13` of its cost.
pub fn convex_oracle(p: &Data) -> (f64, Vec<f64>) {
    let n = p.n();
    let cons: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|j| (j..n).map(move |i| (j, i)))
        .map(|(j, i)| (j, i, p.d[i] - p.a[j]))
        .collect();
    // Interior start: each τ takes 0.9 of its tightest share.
    let mut tau: Vec<f64> = (0..n)
        .map(|m| {
            cons.iter()
                .filter(|&&(j, i, _)| j <= m && m <= i)
                .map(|&(j, i, r)| r / p.v[j..=i].iter().sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                * 0.9
        })
        .collect();
    let scale = p.cost(&tau);
    let slack = |tau: &[f64]| -> Option<Vec<f64>> {
        let g: Vec<f64> = cons
            .iter()
            .map(|&(j, i, r)| r - (j..=i).map(|m| p.v[m] * tau[m]).sum::<f64>())
            .collect();
        (g.iter().all(|&s| s > 0.0) && tau.iter().all(|&t| t > 0.0)).then_some(g)
    };
    let phi = |t: f64, tau: &[f64]| -> f64 {
        match slack(tau) {
            None => f64::INFINITY,
            Some(g) => {
                t * p.cost(tau) / scale
                    - g.iter().map(|s| s.ln()).sum::<f64>()
                    - tau.iter().map(|x| x.ln()).sum::<f64>()
            }
        }
    };
    let m_cons = (cons.len() + n) as f64;
    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            let g = slack(&tau).expect("iterate stays interior");
            let mut grad = vec![0.0; n];
            let mut hess = vec![vec![0.0; n]; n];
            for m in 0..n {
                grad[m] = t * p.v[m] * p.f[m].d1(tau[m]) / scale - 1.0 / tau[m];
                hess[m][m] = t * p.v[m] * p.f[m].d2(tau[m]) / scale + 1.0 / (tau[m] * tau[m]);
            }
            for (&(j, i, _), &s) in cons.iter().zip(&g) {
                for m in j..=i {
                    grad[m] += p.v[m] / s;
                    for q in j..=i {
                        hess[m][q] += p.v[m] * p.v[q] / (s * s);
                    }
                }
            }
            let step = solve_dense(hess, grad.iter().map(|x| -x).collect());
            let dec: f64 = -grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
            if dec < 1e-18 {
                break;
            }
            let f0 = phi(t, &tau);
            let mut alpha = 1.0;
            loop {
                let cand: Vec<f64> = tau.iter().zip(&step).map(|(x, s)| x + alpha * s).collect();
                if phi(t, &cand) <= f0 - 0.25 * alpha * dec {
                    tau = cand;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-20 {
                    break;
                }
            }
            if alpha < 1e-20 || dec < 1e-16 {
                break;
            }
        }
        if m_cons / t * scale < 1e-13 * p.cost(&tau) {
            break;
        }
        t *= 8.0;
    }
    (p.cost(&tau), tau)
}

/// Exhaustive grid search with zoom for `N ≤ 3` over the departure vector:
/// `per_dim + 1` nodes per axis, re-centred on the best feasible point and
/// halved in width `zooms` times.
pub fn grid_oracle(p: &Data, per_dim: usize, zooms: usize) -> f64 {
    let n = p.n();
    assert!((1..=3).contains(&n));
    let to_tau = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|m| {
                let s = if m == 0 { p.a[0] } else { x[m - 1].max(p.a[m]) };
                (x[m] - s) / p.v[m]
            })
            .collect()
    };
    let mut lo: Vec<f64> = p.a.clone();
    let mut hi: Vec<f64> = p.d.clone();
    let mut best = (f64::INFINITY, p.d.clone());
    for _ in 0..=zooms {
        // Endpoint-inclusive nodes, plus the next arrival where the cost kinks.
        let axes: Vec<Vec<f64>> = (0..n)
            .map(|m| {
                let mut ax: Vec<f64> = (0..=per_dim)
                    .map(|j| lo[m] + (hi[m] - lo[m]) * j as f64 / per_dim as f64)
                    .collect();
                if m + 1 < n && p.a[m + 1] > lo[m] && p.a[m + 1] < hi[m] {
                    ax.push(p.a[m + 1]);
                }
                ax
            })
            .collect();
        let total: usize = axes.iter().map(Vec::len).product();
        let mut x = vec![0.0; n];
        for k in 0..total {
            let mut r = k;
            for m in 0..n {
                x[m] = axes[m][r % axes[m].len()];
                r /= axes[m].len();
            }
            let tau = to_tau(&x);
            if tau.iter().all(|&t| t > 0.0) && p.feasible(&tau) {
                let c = p.cost(&tau);
                if c < best.0 {
                    best = (c, x.clone());
                }
            }
        }
        for m in 0..n {
            let w = 0.25 * (hi[m] - lo[m]);
            lo[m] = (best.1[m] - w).max(p.a[m]);
            hi[m] = (best.1[m] + w).min(p.d[m]);
        }
    }
    best.0
}

/// Zoomed grid (halving per level) over the simplex `Σ v_m τ_m = Δ`, minimizing `Σ v_m ω_m(τ_m)`.
pub fn simplex_oracle(f: &[Omega], v: &[f64], delta: f64, per_dim: usize, zooms: usize) -> f64 {
    let k = f.len();
    let cost = |w: &[f64]| -> f64 {
        let last = 1.0 - w.iter().sum::<f64>();
        if last <= 0.0 || w.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        let share = |m: usize| if m + 1 == k { last } else { w[m] };
        (0..k).map(|m| v[m] * f[m].eval(delta * share(m) / v[m])).sum()
    };
    if k == 1 {
        return cost(&[]);
    }
    let dims = k - 1;
    let mut lo = vec![0.0; dims];
    let mut hi = vec![1.0; dims];
    let mut best = (f64::INFINITY, vec![1.0 / k as f64; dims]);
    let mut idx = vec![0usize; dims];
    for _ in 0..=zooms {
        let step: Vec<f64> = (0..dims).map(|m| (hi[m] - lo[m]) / per_dim as f64).collect();
        for code in 0..per_dim.pow(dims as u32) {
            let mut r = code;
            for slot in idx.iter_mut() {
                *slot = r % per_dim;
                r /= per_dim;
            }
            let w: Vec<f64> = (0..dims).map(|m| lo[m] + (idx[m] as f64 + 0.5) * step[m]).collect();
            let c = cost(&w);
            if c < best.0 {
                best = (c, w);
            }
        }
        for m in 0..dims {
            let r = 0.25 * (hi[m] - lo[m]);
            lo[m] = (best.1[m] - r).max(0.0);
            hi[m] = (best.1[m] + r).min(1.0);
        }
    }
    best.0
}

pub fn rel_diff(x: f64, y: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE)
}

/// Structural optimality check on an off-line schedule, per busy period.
///
/// Left-critical: departs at the next arrival with a derivative drop. Right-
/// critical: departs at its deadline with a derivative rise. Otherwise the next
/// task continues the segment with an equal derivative. A task at its energy
/// minimum (Shannon cap) may instead depart early, with derivative zero.
pub fn certificate(inst: &Instance, s: &Schedule) -> Result<(), String> {
    let p = Data::of(inst);
    let x = &s.departures;
    let tau = &s.controls;
    let near = |u: f64, w: f64| (u - w).abs() <= 1e-9 * u.abs().max(w.abs()).max(1.0);
    let at_cap = |i: usize| tau[i] >= p.f[i].cap() * (1.0 - 1e-9);
    for i in 0..p.n() {
        if !(x[i] <= p.d[i] * (1.0 + 1e-12)) {
            return Err(format!("task {} departs {} after deadline {}", i + 1, x[i], p.d[i]));
        }
    }
    for (first, last) in p.busy_periods() {
        if !(near(x[last], p.d[last]) || at_cap(last)) {
            return Err(format!("busy period ends at {} before deadline {}", x[last], p.d[last]));
        }
        for i in first..last {
            let (di, dj) = (p.f[i].d1(tau[i]), p.f[i + 1].d1(tau[i + 1]));
            let ok = match s.critical[i] {
                CriticalKind::Left => (near(x[i], p.a[i + 1]) && di > dj) || (at_cap(i) && x[i] <= p.a[i + 1]),
                CriticalKind::Right => near(x[i], p.d[i]) && di < dj,
                CriticalKind::None => {
                    // Floor on the derivative's natural unit ω/τ, for tasks at
                    // their cap where the derivative is zero up to rounding.
                    let floor = 1e-6 * p.f[i].eval(tau[i]) / tau[i];
                    (di - dj).abs() <= 1e-7 * di.abs().max(dj.abs()).max(floor)
                        && x[i] >= p.a[i + 1] - 1e-9 * p.a[i + 1].max(1.0)
                }
            };
            if !ok {
                return Err(format!(
                    "task {} ({:?}): x={} a_next={} d={} deriv {} vs next {}",
                    i + 1,
                    s.critical[i],
                    x[i],
                    p.a[i + 1],
                    p.d[i],
                    di,
                    dj
                ));
            }
        }
    }
    Ok(())
}

/// Which energy families a random instance draws from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Shannon,
    Power,
    Mixed,
}

/// Shannon function whose cap leaves `v` bits at least `2·window` seconds, so
/// the task never wants more time than any busy period can give it.
pub fn roomy_shannon(rng: &mut ChaCha8Rng, v: f64, window: f64) -> EnergyFunction {
    let b = rng.gen_range(0.1..0.5) * v * std::f64::consts::LN_2 / window;
    EnergyFunction::Shannon(ShannonParams::new(rng.gen_range(0.5..2.0), 1.0, b, None).unwrap())
}

/// Shannon function whose cap is shorter than the task's own window.
pub fn tight_shannon(rng: &mut ChaCha8Rng, v: f64, window: f64) -> EnergyFunction {
    let b = rng.gen_range(1.0..3.0) * v * std::f64::consts::LN_2 / window;
    EnergyFunction::Shannon(ShannonParams::new(rng.gen_range(0.5..2.0), 1.0, b, None).unwrap())
}

pub fn power_fn(rng: &mut ChaCha8Rng) -> EnergyFunction {
    EnergyFunction::InversePower {
        k: rng.gen_range(0.5..2.0),
        p: rng.gen_range(1.0..3.0),
    }
}

/// Random instance: exponential gaps (with occasional ties), windows
/// `U(0.3, 3)` so deadlines are not monotone, sizes `{1..5}`. With
/// `saturating`, Shannon tasks may have caps shorter than their windows.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, family: Family, saturating: bool) -> Instance {
    let mut a = Vec::with_capacity(n);
    let mut t = rng.gen_range(0.0..1.0);
    for _ in 0..n {
        if rng.gen_bool(0.8) {
            t += -(1.0 - rng.gen::<f64>()).ln();
        }
        a.push(t);
    }
    let d: Vec<f64> = a.iter().map(|&x| x + rng.gen_range(0.3..3.0)).collect();
    let bits: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
    let energies = (0..n)
        .map(|i| {
            let (v, w) = (bits[i] as f64, d[i] - a[i]);
            let shannon = match family {
                Family::Shannon => true,
                Family::Power => false,
                Family::Mixed => rng.gen_bool(0.5),
            };
            if !shannon {
                power_fn(rng)
            } else if saturating && rng.gen_bool(0.3) {
                tight_shannon(rng, v, w)
            } else {
                roomy_shannon(rng, v, w)
            }
        })
        .collect();
    Instance::with_task_energies(&a, &d, &bits, energies).unwrap()
}

/// Max-rate service: every task at `tau_min`. Returns the first 1-based task
/// past its deadline.
pub fn max_rate_miss(p: &Data) -> Option<usize> {
    p.departures(&p.tau_min)
        .iter()
        .zip(&p.d)
        .position(|(x, d)| x > d)
        .map(|i| i + 1)
}

/// Shannon tasks sharing `N0`, `B` and `P_max`, with per-task gains, so each
/// task's rate floor comes from the power limit. Deadlines are tight enough
/// that floors bind, so some draws are infeasible even at full power.
pub fn rate_limited_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let b = rng.gen_range(0.2..2.0);
    let p_max = rng.gen_range(1.0..4.0);
    let mut a = Vec::with_capacity(n);
    let mut t = 0.0;
    for _ in 0..n {
        if rng.gen_bool(0.85) {
            t += -(1.0 - rng.gen::<f64>()).ln() * rng.gen_range(0.2..2.0);
        }
        a.push(t);
    }
    let bits: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
    let energies: Vec<EnergyFunction> = (0..n)
        .map(|_| {
            // P_max·s/N0 between 2^2 and 2^12: floors from 1/(12B) to 1/(2B).
            let gain = 2f64.powf(rng.gen_range(2.0..12.0)) / p_max;
            EnergyFunction::Shannon(ShannonParams::new(1.0, gain, b, Some(p_max)).unwrap())
        })
        .collect();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let floor = energies[i].tau_min().unwrap() * bits[i] as f64;
            a[i] + floor * rng.gen_range(1.2..8.0)
        })
        .collect();
    Instance::with_task_energies(&a, &d, &bits, energies).unwrap()
}
