//! Per-bit energy cost families `ω(τ)`.
//!
//! Every family is nonnegative, strictly convex and strictly decreasing on its
//! working domain, with `ω'(τ) → −∞` as `τ → 0⁺`. The solvers only ever talk to
//! these functions through [`Marginal`], which also lets a precomputed
//! derivative table ([`TabulatedEnergy`]) stand in for the exact inverse.

use std::f64::consts::{E, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the Shannon-capacity energy model.
///
/// Transmitting one bit in `τ` seconds over bandwidth `B` needs power
/// `P(τ) = (N₀/s)·2^{1/(Bτ)}`, so the energy per bit is `ω(τ) = P(τ)·τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShannonParams {
    pub n0: f64,
    pub gain: f64,
    pub bandwidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
}

impl ShannonParams {
    pub fn new(n0: f64, gain: f64, bandwidth: f64, p_max: Option<f64>) -> Result<Self> {
        let params = ShannonParams {
            n0,
            gain,
            bandwidth,
            p_max,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("shannon {name} must be positive, got {v}")))
            }
        };
        positive("n0", self.n0)?;
        positive("gain", self.gain)?;
        positive("bandwidth", self.bandwidth)?;
        if let Some(p) = self.p_max {
            positive("p_max", p)?;
            if p * self.gain / self.n0 <= 1.0 {
                return Err(Error::param(format!(
                    "shannon p_max {p} does not exceed the noise floor n0/gain = {}",
                    self.n0 / self.gain
                )));
            }
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.n0 / self.gain
    }

    /// Transmit power needed to send at `τ` seconds per bit.
    pub fn power(&self, tau: f64) -> f64 {
        self.scale() * (LN_2 / (self.bandwidth * tau)).exp()
    }

    /// Seconds-per-bit at full power, `1/(B·log₂(P_max·s/N₀))`.
    pub fn tau_min(&self) -> Option<f64> {
        self.p_max
            .map(|p| 1.0 / (self.bandwidth * (p * self.gain / self.n0).log2()))
    }

    /// The derivative written without the `ln 2` factor from the chain rule,
    /// `P(τ)·(1 − 1/(Bτ))`. Not used by any solver; kept for comparison.
    pub fn deriv_without_ln2(&self, tau: f64) -> f64 {
        self.power(tau) * (1.0 - 1.0 / (self.bandwidth * tau))
    }
}

/// A per-bit energy cost function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum EnergyFunction {
    Shannon(ShannonParams),
    /// `ω(τ) = k/τᵖ`.
    InversePower {
        k: f64,
        p: f64,
    },
}

pub fn shannon_energy(params: ShannonParams) -> Result<EnergyFunction> {
    params.validate()?;
    Ok(EnergyFunction::Shannon(params))
}

pub fn inverse_power_energy(k: f64, p: f64) -> Result<EnergyFunction> {
    let f = EnergyFunction::InversePower { k, p };
    f.validate()?;
    Ok(f)
}

impl EnergyFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnergyFunction::Shannon(s) => s.validate(),
            EnergyFunction::InversePower { k, p } => {
                if !(k.is_finite() && *k > 0.0) {
                    return Err(Error::param(format!("inverse_power k must be positive, got {k}")));
                }
                if !(p.is_finite() && *p >= 1.0) {
                    return Err(Error::param(format!("inverse_power p must be >= 1, got {p}")));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        match self {
            EnergyFunction::Shannon(s) => s.power(tau) * tau,
            EnergyFunction::InversePower { k, p } => k * tau.powf(-p),
        }
    }

    /// Exact derivative `dω/dτ`.
    pub fn deriv(&self, tau: f64) -> f64 {
        match self {
            EnergyFunction::Shannon(s) => {
                let y = LN_2 / (s.bandwidth * tau);
                -s.scale() * y.exp() * (y - 1.0)
            }
            EnergyFunction::InversePower { k, p } => -p * k * tau.powf(-p - 1.0),
        }
    }

    pub fn second_deriv(&self, tau: f64) -> f64 {
        match self {
            EnergyFunction::Shannon(s) => {
                let y = LN_2 / (s.bandwidth * tau);
                s.scale() * y * y * y * y.exp() * s.bandwidth / LN_2
            }
            EnergyFunction::InversePower { k, p } => p * (p + 1.0) * k * tau.powf(-p - 2.0),
        }
    }

    /// Upper end of the strictly decreasing domain, `None` when unbounded.
    ///
    /// The Shannon cost is minimised at `τ = ln2/B`; beyond it the cost grows,
    /// so the working domain stops there.
    pub fn cap(&self) -> Option<f64> {
        match self {
            EnergyFunction::Shannon(s) => Some(LN_2 / s.bandwidth),
            EnergyFunction::InversePower { .. } => None,
        }
    }

    pub fn domain_max(&self) -> f64 {
        self.cap().unwrap_or(f64::INFINITY)
    }

    /// Derivative value at the top of the domain (0 for Shannon, 0⁻ limit for
    /// the inverse-power family).
    pub fn deriv_at_cap(&self) -> f64 {
        // Exactly zero: evaluating `deriv(ln2/B)` leaves ±1 ulp noise that
        // would make saturated tasks with different functions look unequal.
        0.0
    }

    pub fn in_domain(&self, tau: f64) -> bool {
        tau > 0.0 && tau <= self.domain_max()
    }

    /// Minimum seconds-per-bit imposed by a power limit, if the family carries one.
    pub fn tau_min(&self) -> Option<f64> {
        match self {
            EnergyFunction::Shannon(s) => s.tau_min(),
            EnergyFunction::InversePower { .. } => None,
        }
    }

    /// The `τ` in the domain with `ω'(τ) = σ`, in closed form.
    pub fn inv_deriv(&self, sigma: f64) -> Result<f64> {
        if sigma.is_nan() || sigma > self.deriv_at_cap() {
            return Err(Error::Domain { sigma });
        }
        match self {
            EnergyFunction::InversePower { k, p } => {
                if sigma >= 0.0 {
                    return Err(Error::Domain { sigma });
                }
                Ok((p * k / -sigma).powf(1.0 / (p + 1.0)))
            }
            EnergyFunction::Shannon(s) => {
                // With w = ln2/(Bτ) − 1 the equation ω'(τ) = σ becomes w·eʷ = −σ/(e·N₀/s).
                let w = lambert_w0(-sigma / (E * s.scale()));
                Ok(LN_2 / (s.bandwidth * (1.0 + w)))
            }
        }
    }

    /// Like [`inv_deriv`](Self::inv_deriv), but derivative values at or above
    /// the cap return the cap (∞ for unbounded families).
    pub fn inv_deriv_clamped(&self, sigma: f64) -> f64 {
        if sigma >= self.deriv_at_cap() {
            self.domain_max()
        } else if sigma == f64::NEG_INFINITY {
            0.0
        } else {
            self.inv_deriv(sigma).unwrap_or_else(|_| self.domain_max())
        }
    }
}

/// Solve `ω'(τ) = σ` by bisection on `τ`, the generic route for any member of
/// the family. Works in `log τ` so that the bracket can span many decades.
pub fn inv_deriv_bisection(f: &EnergyFunction, sigma: f64, max_iter: usize) -> Result<f64> {
    let top = f.deriv_at_cap();
    if sigma.is_nan() || sigma > top || (f.cap().is_none() && sigma >= 0.0) {
        return Err(Error::Domain { sigma });
    }
    if sigma == top {
        return Ok(f.domain_max());
    }
    let mut hi = match f.cap() {
        Some(c) => c,
        None => {
            let mut h = 1.0;
            while f.deriv(h) < sigma {
                h *= 2.0;
            }
            h
        }
    };
    let mut lo = hi;
    while f.deriv(lo) >= sigma {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::Domain { sigma });
        }
    }
    for _ in 0..max_iter {
        let mid = (lo * hi).sqrt();
        if f.deriv(mid) < sigma {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 <= 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Principal branch of the Lambert W function for `x ≥ 0`.
pub(crate) fn lambert_w0(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    if x <= E {
        // Halley on w·eʷ − x.
        let mut w = (1.0 + x).ln();
        for _ in 0..64 {
            let ew = w.exp();
            let f = w * ew - x;
            let wp1 = w + 1.0;
            let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
            w -= step;
            if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
                break;
            }
        }
        w
    } else {
        // Newton on w + ln w − ln x, which stays finite for huge x.
        let lx = x.ln();
        let llx = lx.ln();
        let mut w = lx - llx + llx / lx;
        for _ in 0..64 {
            let g = w + w.ln() - lx;
            let step = g / (1.0 + 1.0 / w);
            w -= step;
            if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
                break;
            }
        }
        w
    }
}

/// The interface the NE root finder needs from an energy function.
pub trait Marginal {
    fn eval(&self, tau: f64) -> f64;
    fn deriv(&self, tau: f64) -> f64;
    /// `τ` with `ω'(τ) = σ`, clamped to `[0, tau_max()]`.
    fn inv_clamped(&self, sigma: f64) -> f64;
    /// `dτ/dσ` at `τ`; `None` when the inverse is piecewise constant.
    fn inv_slope(&self, tau: f64) -> Option<f64>;
    fn tau_max(&self) -> f64;
    /// Largest derivative value the inverse can resolve.
    fn deriv_max(&self) -> f64;
}

impl Marginal for EnergyFunction {
    fn eval(&self, tau: f64) -> f64 {
        EnergyFunction::eval(self, tau)
    }

    fn deriv(&self, tau: f64) -> f64 {
        EnergyFunction::deriv(self, tau)
    }

    fn inv_clamped(&self, sigma: f64) -> f64 {
        self.inv_deriv_clamped(sigma)
    }

    fn inv_slope(&self, tau: f64) -> Option<f64> {
        if tau >= self.domain_max() || tau <= 0.0 {
            return Some(0.0);
        }
        let curv = self.second_deriv(tau);
        Some(if curv.is_finite() && curv > 0.0 {
            1.0 / curv
        } else {
            0.0
        })
    }

    fn tau_max(&self) -> f64 {
        self.domain_max()
    }

    fn deriv_max(&self) -> f64 {
        self.deriv_at_cap()
    }
}

/// Result of a table lookup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lookup {
    pub tau: f64,
    /// Set when `σ` fell outside the tabulated derivative range and was clamped.
    pub saturated: bool,
}

/// A derivative table over a log-uniform `τ` grid, answering inverse-derivative
/// queries by binary search.
#[derive(Clone, Debug)]
pub struct TabulatedEnergy {
    base: EnergyFunction,
    taus: Vec<f64>,
    derivs: Vec<f64>,
}

pub const DEFAULT_TABLE_POINTS: usize = 1000;

impl TabulatedEnergy {
    /// Tabulate `f` at `n` points log-uniformly spaced over `[tau_lo, tau_hi]`;
    /// `tau_hi` is clipped to the function's cap.
    pub fn new(f: &EnergyFunction, n: usize, tau_lo: f64, tau_hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("a derivative table needs at least 2 points"));
        }
        let hi = tau_hi.min(f.domain_max());
        if !(tau_lo > 0.0 && hi.is_finite() && tau_lo < hi) {
            return Err(Error::param(format!(
                "table span [{tau_lo}, {hi}] is empty or outside the domain"
            )));
        }
        let ratio = (hi / tau_lo).ln();
        let taus: Vec<f64> = (0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    tau_lo * (ratio * k as f64 / (n - 1) as f64).exp()
                }
            })
            .collect();
        let derivs: Vec<f64> = taus.iter().map(|&t| f.deriv(t)).collect();
        if derivs.windows(2).any(|w| !(w[0] < w[1])) || !derivs[0].is_finite() {
            return Err(Error::param(format!(
                "derivative is not strictly increasing and finite over [{tau_lo}, {hi}]"
            )));
        }
        Ok(TabulatedEnergy {
            base: f.clone(),
            taus,
            derivs,
        })
    }

    pub fn base(&self) -> &EnergyFunction {
        &self.base
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.taus.iter().copied().zip(self.derivs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn tau_lo(&self) -> f64 {
        self.taus[0]
    }

    pub fn tau_hi(&self) -> f64 {
        *self.taus.last().unwrap()
    }

    /// Grid `τ` whose tabulated derivative is nearest `σ`.
    pub fn lookup_inv_deriv(&self, sigma: f64) -> Lookup {
        let last = self.derivs.len() - 1;
        if sigma < self.derivs[0] {
            return Lookup {
                tau: self.taus[0],
                saturated: true,
            };
        }
        if sigma > self.derivs[last] {
            return Lookup {
                tau: self.taus[last],
                saturated: true,
            };
        }
        let idx = self.derivs.partition_point(|&d| d < sigma);
        let pick = if idx == 0 {
            0
        } else if idx > last {
            last
        } else if sigma - self.derivs[idx - 1] <= self.derivs[idx] - sigma {
            idx - 1
        } else {
            idx
        };
        Lookup {
            tau: self.taus[pick],
            saturated: false,
        }
    }
}

pub fn tabulate(f: &EnergyFunction, n: usize, tau_lo: f64, tau_hi: f64) -> Result<TabulatedEnergy> {
    TabulatedEnergy::new(f, n, tau_lo, tau_hi)
}

impl Marginal for TabulatedEnergy {
    fn eval(&self, tau: f64) -> f64 {
        self.base.eval(tau)
    }

    fn deriv(&self, tau: f64) -> f64 {
        self.base.deriv(tau)
    }

    fn inv_clamped(&self, sigma: f64) -> f64 {
        if sigma == f64::NEG_INFINITY {
            return 0.0;
        }
        self.lookup_inv_deriv(sigma).tau
    }

    fn inv_slope(&self, _tau: f64) -> Option<f64> {
        None
    }

    fn tau_max(&self) -> f64 {
        self.tau_hi()
    }

    fn deriv_max(&self) -> f64 {
        *self.derivs.last().unwrap()
    }
}
