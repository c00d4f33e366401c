//! Equal-derivative window filling.
//!
//! Given tasks `i..=j` and a window `(t₁, t₂)`, find controls with a common
//! derivative `σ` such that `Σ v_m τ_m = t₂ − t₁`. The common derivative is the
//! root of `T(σ) = Σ v_m·inv_m(σ) − (t₂ − t₁)`, which is nondecreasing in `σ`.

use crate::energy::Marginal;
use crate::error::{Error, Result};

/// A derivative value with an explicit `−∞` for empty windows.
///
/// The derived ordering puts `NegInfinity` below every finite value.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum Sigma {
    NegInfinity,
    Finite(f64),
}

impl Sigma {
    pub fn value(self) -> f64 {
        match self {
            Sigma::NegInfinity => f64::NEG_INFINITY,
            Sigma::Finite(s) => s,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Sigma::Finite(_))
    }
}

impl From<Sigma> for f64 {
    fn from(s: Sigma) -> f64 {
        s.value()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeConfig {
    /// Stop once `|T(σ)| ≤ rel_tol·(t₂ − t₁)`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for NeConfig {
    fn default() -> Self {
        NeConfig {
            rel_tol: 1e-12,
            max_iter: 200,
        }
    }
}

impl NeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::param(format!(
                "root finder needs a positive tolerance and iteration budget, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeSolution {
    pub controls: Vec<f64>,
    pub sigma: Sigma,
    pub window: (f64, f64),
}

/// Outcome of the scalar root search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Root {
    Found(f64),
    /// The window exceeds what the capped domains can absorb; `σ` is the largest
    /// resolvable derivative and every control sits at its cap.
    Saturated(f64),
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    // Derivative values span hundreds of decades near τ → 0, so negative
    // brackets are split geometrically; a zero upper end counts as the
    // smallest normal magnitude.
    if lo < 0.0 && hi <= 0.0 && lo.is_finite() {
        let (l, h) = (-lo, if hi < 0.0 { -hi } else { f64::MIN_POSITIVE });
        if l > 4.0 * h {
            return -(0.5 * (l.ln() + h.ln())).exp();
        }
    }
    0.5 * (lo + hi)
}

/// Root of `T(σ)` over groups `(f, V)` with `V` the summed bits sharing `f`.
///
/// `delta` must be positive. Exact marginals use safeguarded Newton; table
/// marginals (piecewise-constant inverse) use bisection and return the largest
/// `σ` with `T(σ) ≤ 0`, so the window is never overrun.
pub(crate) fn root<'a, M, I>(groups: I, delta: f64, cfg: &NeConfig) -> Root
where
    M: Marginal + 'a,
    I: Iterator<Item = (&'a M, f64)> + Clone,
{
    let total: f64 = groups.clone().map(|(_, v)| v).sum();
    let even = delta / total;
    let mut single = None;
    let mut count = 0usize;
    let mut capacity = 0.0;
    let mut all_exceed = true;
    let mut lo = f64::INFINITY;
    let mut hi_even = f64::NEG_INFINITY;
    let mut hi_cap = f64::NEG_INFINITY;
    let mut exact = true;
    for (f, v) in groups.clone() {
        count += 1;
        single = Some(f);
        let cap = f.tau_max();
        capacity += v * cap;
        all_exceed &= cap >= even;
        lo = lo.min(f.deriv(even.min(cap)));
        hi_even = hi_even.max(f.deriv(even));
        hi_cap = hi_cap.max(f.deriv_max());
        exact &= f.inv_slope(even.min(cap)).is_some();
    }
    if capacity < delta {
        return Root::Saturated(hi_cap);
    }
    if count == 1 {
        return Root::Found(single.expect("one group").deriv(even));
    }
    let mut hi = if all_exceed { hi_even } else { hi_cap };

    let eval = |s: f64| -> (f64, f64) {
        let mut t = -delta;
        let mut slope = 0.0;
        for (f, v) in groups.clone() {
            let tau = f.inv_clamped(s);
            t += v * tau;
            if exact {
                slope += v * f.inv_slope(tau).unwrap_or(0.0);
            }
        }
        (t, slope)
    };

    // A steep function can overflow at the even share while the common root
    // is still finite; only a fill that overruns at −MAX puts it out of range.
    if lo == f64::NEG_INFINITY {
        lo = -f64::MAX;
        if eval(lo).0 > 0.0 {
            return Root::Found(f64::NEG_INFINITY);
        }
    }
    let tol = cfg.rel_tol * delta;
    if !exact {
        for _ in 0..cfg.max_iter.max(200) {
            let mid = midpoint(lo, hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if eval(mid).0 <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Root::Found(lo);
    }

    let (t_hi, _) = eval(hi);
    if t_hi.abs() <= tol {
        return Root::Found(hi);
    }
    let mut s = midpoint(lo, hi);
    let mut last_abs = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let (t, slope) = eval(s);
        if t.abs() <= tol {
            return Root::Found(s);
        }
        if t < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - t / slope;
        let progressing = t.abs() <= 0.5 * last_abs;
        last_abs = t.abs();
        let next = if slope > 0.0 && newton > lo && newton < hi && progressing {
            newton
        } else {
            midpoint(lo, hi)
        };
        if next <= lo || next >= hi {
            break;
        }
        s = next;
    }
    Root::Found(s)
}

/// Per-bit even split of `delta` with caps, for roots past the `f64` range.
///
/// Every derivative overflows there, so the common level cannot be resolved;
/// spreading the window evenly and water-filling around caps keeps the sum exact.
fn even_fill(items: impl Iterator<Item = (f64, f64)>, delta: f64) -> Vec<f64> {
    let caps: Vec<(f64, f64)> = items.collect();
    let mut capped = vec![false; caps.len()];
    let mut left = delta;
    loop {
        let free: f64 = caps
            .iter()
            .zip(&capped)
            .filter(|(_, c)| !**c)
            .map(|((_, v), _)| v)
            .sum();
        let share = if free > 0.0 { left / free } else { 0.0 };
        let mut changed = false;
        for (m, &(cap, v)) in caps.iter().enumerate() {
            if !capped[m] && cap < share {
                capped[m] = true;
                left -= v * cap;
                changed = true;
            }
        }
        if !changed {
            return caps
                .iter()
                .zip(&capped)
                .map(|(&(cap, _), &c)| if c { cap } else { share })
                .collect();
        }
    }
}

/// Solve the equal-derivative system for `items = [(ω_m, v_m)]` over `(t₁, t₂)`.
pub fn solve_ne<M: Marginal>(items: &[(&M, f64)], t1: f64, t2: f64, cfg: &NeConfig) -> Result<NeSolution> {
    if items.is_empty() {
        return Err(Error::param("equal-derivative system needs at least one task"));
    }
    if !(t1.is_finite() && t2.is_finite()) || t1 > t2 {
        return Err(Error::param(format!("window ({t1}, {t2}) is reversed or not finite")));
    }
    if items.iter().any(|(_, v)| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::param("bit counts must be positive"));
    }
    cfg.validate()?;
    let delta = t2 - t1;
    if delta == 0.0 {
        return Ok(NeSolution {
            controls: vec![0.0; items.len()],
            sigma: Sigma::NegInfinity,
            window: (t1, t2),
        });
    }
    match root(items.iter().map(|&(f, v)| (f, v)), delta, cfg) {
        Root::Saturated(_) => {
            let task = items
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .0.tau_max().total_cmp(&b.1 .0.tau_max()))
                .map(|(m, _)| m)
                .unwrap_or(0);
            Err(Error::DomainSaturation { task, window: delta })
        }
        Root::Found(s) if s == f64::NEG_INFINITY => Ok(NeSolution {
            controls: even_fill(items.iter().map(|&(f, v)| (f.tau_max(), v)), delta),
            sigma: Sigma::NegInfinity,
            window: (t1, t2),
        }),
        Root::Found(s) => {
            let controls = if items.len() == 1 {
                vec![delta / items[0].1]
            } else {
                items.iter().map(|(f, _)| f.inv_clamped(s)).collect()
            };
            Ok(NeSolution {
                controls,
                sigma: Sigma::Finite(s),
                window: (t1, t2),
            })
        }
    }
}

/// The common derivative of [`solve_ne`].
pub fn sigma<M: Marginal>(items: &[(&M, f64)], t1: f64, t2: f64, cfg: &NeConfig) -> Result<Sigma> {
    solve_ne(items, t1, t2, cfg).map(|s| s.sigma)
}

/// Tasks grouped by energy function, built up one task at a time.
///
/// Tasks that share a function collapse into one group, so a root search costs
/// `O(#distinct functions)` regardless of how many tasks the segment holds.
pub(crate) struct Segment<'a, M> {
    funcs: &'a [M],
    groups: Vec<(usize, f64)>,
    slot: Vec<usize>,
}

impl<'a, M: Marginal> Segment<'a, M> {
    pub(crate) fn new(funcs: &'a [M]) -> Self {
        Segment {
            funcs,
            groups: Vec::new(),
            slot: vec![usize::MAX; funcs.len()],
        }
    }

    pub(crate) fn clear(&mut self) {
        for &(f, _) in &self.groups {
            self.slot[f] = usize::MAX;
        }
        self.groups.clear();
    }

    pub(crate) fn add(&mut self, func: usize, bits: f64) {
        match self.slot[func] {
            usize::MAX => {
                self.slot[func] = self.groups.len();
                self.groups.push((func, bits));
            }
            g => self.groups[g].1 += bits,
        }
    }

    /// Common derivative over a window of length `delta ≥ 0`.
    pub(crate) fn sigma(&self, delta: f64, cfg: &NeConfig) -> (Sigma, bool) {
        if delta <= 0.0 {
            return (Sigma::NegInfinity, false);
        }
        let funcs = self.funcs;
        match root(self.groups.iter().map(|&(f, v)| (&funcs[f], v)), delta, cfg) {
            Root::Found(s) if s == f64::NEG_INFINITY => (Sigma::NegInfinity, false),
            Root::Found(s) => (Sigma::Finite(s), false),
            Root::Saturated(s) => (Sigma::Finite(s), true),
        }
    }

    /// Controls for tasks `(func, bits)` at the segment's root over `delta`.
    pub(crate) fn controls(&self, tasks: &[(usize, f64)], delta: f64, cfg: &NeConfig) -> Vec<f64> {
        if delta <= 0.0 {
            return vec![0.0; tasks.len()];
        }
        if self.groups.len() == 1 {
            let total = self.groups[0].1;
            let tau = (delta / total).min(self.funcs[self.groups[0].0].tau_max());
            return vec![tau; tasks.len()];
        }
        let s = match self.sigma(delta, cfg).0 {
            Sigma::NegInfinity => {
                return even_fill(tasks.iter().map(|&(f, v)| (self.funcs[f].tau_max(), v)), delta);
            }
            Sigma::Finite(s) => s,
        };
        tasks.iter().map(|&(f, _)| self.funcs[f].inv_clamped(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{inverse_power_energy, shannon_energy, EnergyFunction, ShannonParams};

    fn ip(k: f64) -> EnergyFunction {
        inverse_power_energy(k, 1.0).unwrap()
    }

    #[test]
    fn single_task_is_linear() {
        let f = ip(1.0);
        let s = solve_ne(&[(&f, 2.0)], 0.0, 4.0, &NeConfig::default()).unwrap();
        assert_eq!(s.controls, vec![2.0]);
        assert_eq!(s.sigma, Sigma::Finite(f.deriv(2.0)));
    }

    #[test]
    fn symmetric_pair() {
        let f = ip(1.0);
        let s = solve_ne(&[(&f, 1.0), (&f, 1.0)], 0.0, 2.0, &NeConfig::default()).unwrap();
        assert!((s.controls[0] - 1.0).abs() < 1e-12 && (s.controls[1] - 1.0).abs() < 1e-12);
        assert!((s.sigma.value() + 1.0).abs() < 1e-11);
    }

    #[test]
    fn asymmetric_pair_closed_form() {
        let (f, g) = (ip(1.0), ip(4.0));
        let s = solve_ne(&[(&f, 1.0), (&g, 1.0)], 0.0, 3.0, &NeConfig::default()).unwrap();
        assert!((s.controls[0] - 1.0).abs() < 1e-11);
        assert!((s.controls[1] - 2.0).abs() < 1e-11);
        assert!((s.sigma.value() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn empty_window_is_neg_infinity() {
        let f = ip(1.0);
        assert_eq!(
            sigma(&[(&f, 1.0)], 3.0, 3.0, &NeConfig::default()).unwrap(),
            Sigma::NegInfinity
        );
        assert!(Sigma::NegInfinity < Sigma::Finite(-1e300));
        assert!(matches!(
            sigma(&[(&f, 1.0)], 3.0, 2.0, &NeConfig::default()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn wider_window_raises_sigma() {
        let (f, g) = (ip(1.0), ip(3.0));
        let items = [(&f, 2.0), (&g, 1.0)];
        let a = sigma(&items, 0.0, 2.0, &NeConfig::default()).unwrap();
        let b = sigma(&items, 0.0, 3.0, &NeConfig::default()).unwrap();
        assert!(a < b);
    }

    #[test]
    fn saturation_is_reported() {
        let f = shannon_energy(ShannonParams::new(1.0, 1.0, 1.0, None).unwrap()).unwrap();
        let g = shannon_energy(ShannonParams::new(1.0, 1.0, 10.0, None).unwrap()).unwrap();
        let err = solve_ne(&[(&f, 1.0), (&g, 1.0)], 0.0, 5.0, &NeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DomainSaturation { task: 1, .. }), "{err}");
    }

    #[test]
    fn shannon_pair_fills_window() {
        let f = shannon_energy(ShannonParams::new(1e-3, 1.0, 100.0, None).unwrap()).unwrap();
        let g = shannon_energy(ShannonParams::new(1e-3, 0.3, 100.0, None).unwrap()).unwrap();
        let s = solve_ne(&[(&f, 4096.0), (&g, 2048.0)], 1.0, 4.0, &NeConfig::default()).unwrap();
        let fill = 4096.0 * s.controls[0] + 2048.0 * s.controls[1];
        assert!((fill - 3.0).abs() < 1e-11);
        assert!(((f.deriv(s.controls[0]) - g.deriv(s.controls[1])) / s.sigma.value()).abs() < 1e-9);
    }

    #[test]
    fn segment_groups_shared_functions() {
        let funcs = [ip(1.0), ip(4.0)];
        let mut seg = Segment::new(&funcs);
        seg.add(0, 1.0);
        seg.add(1, 1.0);
        seg.add(0, 1.0);
        assert_eq!(seg.groups.len(), 2);
        let tasks = [(0, 1.0), (1, 1.0), (0, 1.0)];
        let c = seg.controls(&tasks, 4.0, &NeConfig::default());
        // 2τ₀ + τ₁ = 4 with τ₁ = 2τ₀.
        assert!((c[0] - 1.0).abs() < 1e-11 && (c[1] - 2.0).abs() < 1e-11);
        seg.clear();
        seg.add(1, 2.0);
        assert_eq!(seg.controls(&[(1, 2.0)], 4.0, &NeConfig::default()), vec![2.0]);
    }

    #[test]
    fn bracket_spanning_hundreds_of_decades() {
        // One task reaches its cap (upper bracket 0) while another starts
        // near 1e-96 in derivative; the fill must still be exact.
        let sh = |n0: f64, b: f64| shannon_energy(ShannonParams::new(n0, 1.0, b, None).unwrap()).unwrap();
        let f = [sh(1.6757, 0.028561), sh(1.1040, 0.58482), sh(0.89539, 12.1436)];
        let items = [(&f[0], 1.0), (&f[1], 1.0), (&f[2], 5.0)];
        let s = solve_ne(&items, 0.0, 0.7657, &NeConfig::default()).unwrap();
        let used: f64 = s.controls.iter().zip(&items).map(|(t, (_, v))| t * v).sum();
        assert!((used - 0.7657).abs() < 1e-12, "{used}");
        let d: Vec<f64> = s.controls.iter().zip(&f).map(|(&t, f)| f.deriv(t)).collect();
        assert!((d[0] - d[2]).abs() < 1e-9 * d[0].abs(), "{d:?}");
    }
}
