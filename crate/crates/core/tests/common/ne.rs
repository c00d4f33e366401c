//! Random equal-derivative systems and the four structural checks on them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use txsched::{sigma, solve_ne, EnergyFunction, NeConfig};

use super::{power_fn, rel_diff, roomy_shannon, Omega};

/// Tasks with sizes, plus a window they can absorb.
pub struct Draw {
    pub funcs: Vec<EnergyFunction>,
    pub bits: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
}

impl Draw {
    pub fn random(rng: &mut ChaCha8Rng, max_tasks: usize) -> Draw {
        let k = rng.gen_range(1..=max_tasks);
        let t1 = rng.gen_range(0.0..10.0);
        let t2 = t1 + rng.gen_range(0.2..5.0);
        let bits: Vec<f64> = (0..k).map(|_| rng.gen_range(1..=5) as f64).collect();
        // Shannon caps leave room for at least twice the window.
        let funcs = bits
            .iter()
            .map(|&v| {
                if rng.gen_bool(0.5) {
                    roomy_shannon(rng, v, t2 - t1)
                } else {
                    power_fn(rng)
                }
            })
            .collect();
        Draw { funcs, bits, t1, t2 }
    }

    pub fn items(&self, range: std::ops::Range<usize>) -> Vec<(&EnergyFunction, f64)> {
        range.map(|m| (&self.funcs[m], self.bits[m])).collect()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn omegas(&self) -> Vec<Omega> {
        self.funcs.iter().map(Omega::of).collect()
    }
}

/// `τ` with `ω'(τ) = σ` by bisection on the closed-form derivative.
pub fn inverse(f: &Omega, s: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = f.cap();
    if hi.is_finite() && f.d1(hi) <= s {
        return hi;
    }
    if !hi.is_finite() {
        hi = 1.0;
    }
    while f.d1(hi) < s {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.d1(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Independent root of `Σ v τ(σ) = Δ` by bisection on `ln(−σ)`, started from
/// the bracket `[−e^{hi}, −e^{lo}]` and widened until it straddles the root.
pub fn oracle_sigma(f: &[Omega], v: &[f64], delta: f64, mut lo: f64, mut hi: f64) -> f64 {
    let used = |s: f64| -> f64 { f.iter().zip(v).map(|(f, v)| v * inverse(f, s)).sum() };
    // Larger magnitude ⇒ more negative σ ⇒ less time used.
    while used(-hi.exp()) > delta {
        hi += 10.0;
    }
    while used(-lo.exp()) < delta {
        lo -= 10.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if used(-mid.exp()) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    -(0.5 * (lo + hi)).exp()
}

/// Structural checks on one draw. Returns a description of the first failure.
pub fn check(d: &Draw, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let cfg = NeConfig::default();
    let k = d.len();
    let (t1, t2) = (d.t1, d.t2);
    let all = d.items(0..k);
    let full = solve_ne(&all, t1, t2, &cfg).map_err(|e| e.to_string())?;
    let s = full.sigma.value();

    // Definition: fills the window with a common derivative.
    let used: f64 = full.controls.iter().zip(&d.bits).map(|(t, v)| t * v).sum();
    if rel_diff(used, t2 - t1) > 1e-10 {
        return Err(format!("fill {used} vs window {}", t2 - t1));
    }
    let om = d.omegas();
    if k > 1 {
        for (f, &t) in om.iter().zip(&full.controls) {
            if rel_diff(f.d1(t), s) > 1e-8 {
                return Err(format!("derivative {} vs common {s}", f.d1(t)));
            }
        }
    }

    // (i) Uniqueness: an independent search from a random bracket lands on the same root.
    let centre: f64 = rng.gen_range(-30.0..30.0);
    let width: f64 = rng.gen_range(0.1..20.0);
    let other = oracle_sigma(&om, &d.bits, t2 - t1, centre - width, centre + width);
    if rel_diff(other, s) > 1e-9 {
        return Err(format!("uniqueness: {s} vs independent root {other}"));
    }
    // The task order does not matter either.
    let mut order: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let shuffled: Vec<_> = order.iter().map(|&m| (&d.funcs[m], d.bits[m])).collect();
    let s2 = sigma(&shuffled, t1, t2, &cfg).map_err(|e| e.to_string())?.value();
    if rel_diff(s2, s) > 1e-9 {
        return Err(format!("uniqueness under reordering: {s} vs {s2}"));
    }

    // (ii) Monotonicity in the window length.
    let narrow = t1 + rng.gen_range(0.05..0.95) * (t2 - t1);
    let sn = sigma(&all, t1, narrow, &cfg).map_err(|e| e.to_string())?.value();
    if !(sn < s) {
        return Err(format!(
            "monotonicity: sigma({}) = {sn} not below sigma({}) = {s}",
            narrow - t1,
            t2 - t1
        ));
    }

    if k < 2 {
        return Ok(());
    }
    let p = rng.gen_range(1..k);

    // (iii) Split identity at the full solution's own boundary.
    let split = t1 + full.controls[..p].iter().zip(&d.bits).map(|(t, v)| t * v).sum::<f64>();
    let left = sigma(&d.items(0..p), t1, split, &cfg)
        .map_err(|e| e.to_string())?
        .value();
    let right = sigma(&d.items(p..k), split, t2, &cfg)
        .map_err(|e| e.to_string())?
        .value();
    if rel_diff(left, s) > 1e-8 || rel_diff(right, s) > 1e-8 {
        return Err(format!("split identity: {left} | {right} vs {s}"));
    }

    // (iv) Interleaving at an arbitrary split point.
    let t3 = t1 + rng.gen_range(0.05..0.95) * (t2 - t1);
    let c1 = sigma(&d.items(0..p), t1, t3, &cfg).map_err(|e| e.to_string())?.value();
    let c2 = sigma(&d.items(p..k), t3, t2, &cfg).map_err(|e| e.to_string())?.value();
    let distinct = rel_diff(c1, c2) > 1e-9 && rel_diff(c1, s) > 1e-9 && rel_diff(c2, s) > 1e-9;
    if distinct && !(c1.min(c2) < s && s < c1.max(c2)) {
        return Err(format!("interleaving: {s} not between {c1} and {c2}"));
    }
    Ok(())
}
