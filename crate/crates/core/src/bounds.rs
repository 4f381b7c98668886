//! Closed-form lower bounds and constants used as oracles by the experiments.
//!
//! `e` is always the full-precision constant.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::{convergence_rate, lipschitz_bound};
use crate::model::ModelParams;

/// A probability lower bound that may be vacuous (`<= 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    pub vacuous: bool,
}

impl LowerBound {
    fn new(value: f64) -> Self {
        Self {
            value,
            vacuous: value <= 0.0,
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::out_of_range("delta", format!("{delta} not in (0, 1)")));
    }
    Ok(())
}

fn require_second(params: &ModelParams) -> Result<f64> {
    let p2 = params.second_mean();
    if p2 <= 0.0 {
        return Err(Error::SecondBestZero);
    }
    Ok(p2)
}

/// `mu p1 / (K e)`: lower bound on the chance that one agent holds the best
/// arm after exactly one wake-up by time `1 / lambda`.
pub fn initial_wealth_rate(params: &ModelParams) -> f64 {
    params.explore_prob() * params.best_mean() / (params.n_arms() as f64 * E)
}

/// `1 - (p1/p2)^{-(1-delta) a N} - exp(-a delta^2 N / 2)` with `a = mu p1 / (K e)`.
pub fn theorem1_bound(params: &ModelParams, delta: f64) -> Result<LowerBound> {
    check_delta(delta)?;
    let p2 = require_second(params)?;
    let a = initial_wealth_rate(params);
    let n = f64::from(params.n_agents());
    let ratio = params.best_mean() / p2;
    let ruin = ratio.powf(-(1.0 - delta) * a * n);
    let short = (-a * delta * delta / 2.0 * n).exp();
    Ok(LowerBound::new(1.0 - ruin - short))
}

/// `1 - (p1/p2)^{-z0}`.
pub fn gambler_bound(params: &ModelParams, z0: u32) -> Result<f64> {
    let p2 = require_second(params)?;
    Ok(1.0 - (params.best_mean() / p2).powi(-(z0 as i32)))
}

/// Probability that the biased walk started at `z0` is absorbed at `n`:
/// `(1 - r^z0) / (1 - r^n)` with `r = p2 / p1`.
pub fn gambler_exact(params: &ModelParams, z0: u32, n: u32) -> Result<f64> {
    let p2 = require_second(params)?;
    if z0 > n {
        return Err(Error::out_of_range("z0", format!("{z0} exceeds {n}")));
    }
    let r = p2 / params.best_mean();
    // powi keeps small powers exact; ln_1p-based form avoids cancellation
    // when r is close to 1.
    let num = -(z0 as f64 * r.ln()).exp_m1();
    let den = -(n as f64 * r.ln()).exp_m1();
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialWealth {
    /// `floor((1-delta) mu p1 / (K e) N)`.
    pub threshold: u32,
    /// `1 - exp(-mu p1 / (K e) delta^2 / 2 N)`.
    pub prob: f64,
}

pub fn initial_wealth_bound(params: &ModelParams, delta: f64) -> Result<InitialWealth> {
    check_delta(delta)?;
    let a = initial_wealth_rate(params);
    let n = f64::from(params.n_agents());
    Ok(InitialWealth {
        threshold: ((1.0 - delta) * a * n).floor() as u32,
        prob: -(-a * delta * delta / 2.0 * n).exp_m1(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Constants {
    /// `2 (K + 1)`.
    pub c0: f64,
    /// `(3 - e) / (9 T lambda) eps'^2 / ((K + 1) exp(2 lambda (5 + sqrt K) T))`.
    pub c1: f64,
    pub rate: f64,
    pub discovery_rate: f64,
}

impl Theorem2Constants {
    pub fn t_bar(&self, c: f64) -> f64 {
        (1.0 / c).ln() / self.discovery_rate
    }
}

/// Upper end of the admissible `eps'` window: `lambda T sqrt(K+1) exp(lambda (5 + sqrt K) T)`.
pub fn eps_window(params: &ModelParams, horizon: f64) -> f64 {
    let k1 = (params.n_arms() + 1) as f64;
    params.clock_rate() * horizon * k1.sqrt() * (lipschitz_bound(params) * horizon).exp()
}

pub fn theorem2_constants(params: &ModelParams, horizon: f64, eps: f64) -> Result<Theorem2Constants> {
    if !(horizon > 0.0) {
        return Err(Error::out_of_range("horizon", format!("{horizon} is not positive")));
    }
    let upper = eps_window(params, horizon);
    if !(eps > 0.0 && eps < upper) {
        return Err(Error::EpsOutOfWindow { eps, upper });
    }
    let lambda = params.clock_rate();
    let k = params.n_arms() as f64;
    let c1 = (3.0 - E) / (9.0 * horizon * lambda) * eps * eps
        / ((k + 1.0) * (2.0 * lambda * (5.0 + k.sqrt()) * horizon).exp());
    let r = convergence_rate(params);
    Ok(Theorem2Constants {
        c0: 2.0 * (k + 1.0),
        c1,
        rate: r.rate,
        discovery_rate: r.discovery_rate,
    })
}

/// Exponent constant `C(eps')` of the fluid-limit deviation bound, evaluated
/// from the Lipschitz constant `L = lambda (5 + sqrt K)` as
/// `(3 - e) eps'^2 exp(-2 L T) / (9 T lambda (K + 1))`.
pub fn deviation_constant(params: &ModelParams, horizon: f64, eps: f64) -> f64 {
    let lambda = params.clock_rate();
    let dim = (params.n_arms() + 1) as f64;
    let growth = (-2.0 * lipschitz_bound(params) * horizon).exp();
    (3.0 - E) * eps.powi(2) * growth / (9.0 * horizon * lambda * dim)
}

/// `2 (K + 1) exp(-N C(eps'))`, bound on `P(sup_t |Y^N - Y| >= eps')`.
pub fn deviation_bound(params: &ModelParams, horizon: f64, eps: f64) -> f64 {
    let c = deviation_constant(params, horizon, eps);
    2.0 * (params.n_arms() + 1) as f64 * (-(f64::from(params.n_agents())) * c).exp()
}

/// Inputs for [`BoundsReport::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsInputs {
    pub delta: f64,
    /// Warm-up constant `c` in `(0, 1)`.
    pub c: f64,
    pub horizon: f64,
    pub eps_prime: f64,
}

impl Default for BoundsInputs {
    fn default() -> Self {
        Self {
            delta: 0.5,
            c: 0.5,
            horizon: 30.0,
            eps_prime: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub inputs: BoundsInputs,
    /// Raw Theorem-1 value; negative means the bound is vacuous.
    pub theorem1_lower: f64,
    pub theorem1_vacuous: bool,
    /// Gambler's-ruin bound and exact value at `z0 = initial_wealth_threshold`.
    pub gambler_lower: f64,
    pub gambler_exact: f64,
    pub initial_wealth_threshold: u32,
    pub initial_wealth_prob: f64,
    pub t_bar: f64,
    pub rate_r: f64,
    pub c0: f64,
    pub c1: f64,
    pub deviation_c: f64,
    pub deviation_bound: f64,
    pub deviation_vacuous: bool,
}

impl BoundsReport {
    pub fn evaluate(params: &ModelParams, inputs: BoundsInputs) -> Result<Self> {
        if !(inputs.c > 0.0 && inputs.c < 1.0) {
            return Err(Error::out_of_range("c", format!("{} not in (0, 1)", inputs.c)));
        }
        let t1 = theorem1_bound(params, inputs.delta)?;
        let iw = initial_wealth_bound(params, inputs.delta)?;
        let t2 = theorem2_constants(params, inputs.horizon, inputs.eps_prime)?;
        let dev = deviation_bound(params, inputs.horizon, inputs.eps_prime);
        Ok(Self {
            inputs,
            theorem1_lower: t1.value,
            theorem1_vacuous: t1.vacuous,
            gambler_lower: gambler_bound(params, iw.threshold)?,
            gambler_exact: gambler_exact(params, iw.threshold, params.n_agents())?,
            initial_wealth_threshold: iw.threshold,
            initial_wealth_prob: iw.prob,
            t_bar: t2.t_bar(inputs.c),
            rate_r: t2.rate,
            c0: t2.c0,
            c1: t2.c1,
            deviation_c: deviation_constant(params, inputs.horizon, inputs.eps_prime),
            deviation_bound: dev,
            deviation_vacuous: dev >= 1.0,
        })
    }
}
