//! Parameter and state types shared by the simulators and the analysis code.
//!
//! Arms are numbered `1..=K`. State vectors have `K + 1` entries with index 0
//! holding the agents that have no preference yet, so arm `k` lives at
//! offset `k`.
//!
//! A population of a single agent (`N = 1`) is accepted. Social sampling then
//! always returns the agent's own memory, which makes the dynamics degenerate:
//! the first successful uniform pull is immediately absorbing.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unvalidated instance description, as read from a config file or CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    /// Population size N.
    pub n: u32,
    /// Number of arms K. When absent it is taken from `p.len()`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Clock rate lambda of each agent.
    pub lambda: f64,
    /// Probability mu that a preference-free agent samples uniformly.
    pub mu: f64,
    /// Bernoulli means of the arms, `p[0]` is arm 1.
    pub p: Vec<f64>,
}

impl RawParams {
    pub fn validate(&self) -> Result<ModelParams> {
        ModelParams::new(self.n, self.k.unwrap_or(self.p.len()), self.lambda, self.mu, self.p.clone())
    }
}

/// A validated model instance `(N, K, lambda, mu, p_1..p_K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    n_agents: u32,
    n_arms: usize,
    clock_rate: f64,
    explore_prob: f64,
    arm_means: Vec<f64>,
    best_arm: usize,
    second_mean: f64,
}

impl ModelParams {
    pub fn new(n_agents: u32, n_arms: usize, clock_rate: f64, explore_prob: f64, arm_means: Vec<f64>) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::out_of_range("n", "population must contain at least one agent"));
        }
        if n_arms == 0 {
            return Err(Error::out_of_range("k", "at least one arm is required"));
        }
        if arm_means.len() != n_arms {
            return Err(Error::out_of_range(
                "p",
                format!("expected {n_arms} arm means, got {}", arm_means.len()),
            ));
        }
        if !(clock_rate.is_finite() && clock_rate > 0.0) {
            return Err(Error::out_of_range("lambda", format!("{clock_rate} is not a positive finite rate")));
        }
        if explore_prob == 0.0 {
            return Err(Error::ZeroExplore);
        }
        if !(explore_prob > 0.0 && explore_prob <= 1.0) {
            return Err(Error::out_of_range("mu", format!("{explore_prob} is not in (0, 1]")));
        }
        for (i, &p) in arm_means.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::out_of_range("p", format!("arm {} has mean {p} outside [0, 1]", i + 1)));
            }
        }

        let mut best = 0;
        for (i, &p) in arm_means.iter().enumerate() {
            if p > arm_means[best] {
                best = i;
            }
        }
        let best_mean = arm_means[best];
        if let Some(tie) = arm_means.iter().enumerate().position(|(i, &p)| i != best && p == best_mean) {
            let (first, second) = if tie < best { (tie, best) } else { (best, tie) };
            return Err(Error::NonUniqueBestArm {
                mean: best_mean,
                first: first + 1,
                second: second + 1,
            });
        }
        let second_mean = arm_means
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &p)| p)
            .fold(0.0, f64::max);

        Ok(Self {
            n_agents,
            n_arms,
            clock_rate,
            explore_prob,
            arm_means,
            best_arm: best + 1,
            second_mean,
        })
    }

    #[inline]
    pub fn n_agents(&self) -> u32 {
        self.n_agents
    }

    #[inline]
    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    #[inline]
    pub fn clock_rate(&self) -> f64 {
        self.clock_rate
    }

    #[inline]
    pub fn explore_prob(&self) -> f64 {
        self.explore_prob
    }

    pub fn arm_means(&self) -> &[f64] {
        &self.arm_means
    }

    /// Mean of arm `k` (1-based). Arm 0 is the NULL arm with mean 0.
    #[inline]
    pub fn mean(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.arm_means[k - 1]
        }
    }

    /// Index (1-based) of the unique best arm.
    #[inline]
    pub fn best_arm(&self) -> usize {
        self.best_arm
    }

    #[inline]
    pub fn best_mean(&self) -> f64 {
        self.arm_means[self.best_arm - 1]
    }

    /// Largest mean among the non-best arms (0 when K = 1).
    #[inline]
    pub fn second_mean(&self) -> f64 {
        self.second_mean
    }

    /// `p1 / (p1 + p2)`, the up-probability of the reference biased walk.
    pub fn walk_up_prob(&self) -> f64 {
        self.best_mean() / (self.best_mean() + self.second_mean)
    }

    /// `lambda * mu / K * sum_k p_k`, the decay rate of the no-preference mass.
    pub fn uniform_discovery_rate(&self) -> f64 {
        self.clock_rate * self.explore_prob / self.n_arms as f64 * self.arm_means.iter().sum::<f64>()
    }

    /// Same instance with a different explore probability.
    pub fn with_explore_prob(&self, mu: f64) -> Result<Self> {
        Self::new(self.n_agents, self.n_arms, self.clock_rate, mu, self.arm_means.clone())
    }

    /// Same instance with a different population size.
    pub fn with_agents(&self, n: u32) -> Result<Self> {
        Self::new(n, self.n_arms, self.clock_rate, self.explore_prob, self.arm_means.clone())
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            n: self.n_agents,
            k: Some(self.n_arms),
            lambda: self.clock_rate,
            mu: self.explore_prob,
            p: self.arm_means.clone(),
        }
    }

    /// Default cap on emitted events: `50 N K max(1, 1 / (lambda min_{p>0} p))`.
    pub fn default_event_cap(&self) -> u64 {
        let min_pos = self
            .arm_means
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min);
        let factor = (1.0 / (self.clock_rate * min_pos)).max(1.0);
        (50.0 * self.n_agents as f64 * self.n_arms as f64 * factor).ceil() as u64
    }
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        raw.validate()
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        p.to_raw()
    }
}

/// A single transition of the aggregate chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionDirection {
    /// A preference-free agent adopts `arm` (direction `e^arm`).
    Birth { arm: usize },
    /// An agent switches its preference from `from` to `to` (direction `e^to - e^from`).
    Swap { from: usize, to: usize },
}

impl TransitionDirection {
    /// Class that loses one agent.
    #[inline]
    pub fn source(&self) -> usize {
        match *self {
            TransitionDirection::Birth { .. } => 0,
            TransitionDirection::Swap { from, .. } => from,
        }
    }

    /// Class that gains one agent.
    #[inline]
    pub fn target(&self) -> usize {
        match *self {
            TransitionDirection::Birth { arm } => arm,
            TransitionDirection::Swap { to, .. } => to,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TransitionDirection::Birth { .. } => "birth",
            TransitionDirection::Swap { .. } => "swap",
        }
    }

    /// Builds the direction moving one agent from class `from` to class `to`.
    pub fn between(from: usize, to: usize) -> Result<Self> {
        match (from, to) {
            (_, 0) => Err(Error::InvalidState("no transition enters the no-preference class".into())),
            (0, arm) => Ok(TransitionDirection::Birth { arm }),
            (f, t) if f == t => Err(Error::InvalidState(format!("class {f} cannot move to itself"))),
            (from, to) => Ok(TransitionDirection::Swap { from, to }),
        }
    }

    /// The direction as a vector `l` in `Z^{K+1}`.
    pub fn as_vector(&self, n_arms: usize) -> Vec<i32> {
        let mut v = vec![0; n_arms + 1];
        v[self.source()] -= 1;
        v[self.target()] += 1;
        v
    }
}

impl fmt::Display for TransitionDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionDirection::Birth { arm } => write!(f, "birth({arm})"),
            TransitionDirection::Swap { from, to } => write!(f, "swap({from}->{to})"),
        }
    }
}

/// Occupancy vector `[X_0, X_1, .., X_K]` summing to N.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemState {
    counts: Vec<u32>,
}

impl SystemState {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidState(format!(
                "state needs at least two classes, got {}",
                counts.len()
            )));
        }
        if counts.iter().map(|&c| u64::from(c)).sum::<u64>() == 0 {
            return Err(Error::InvalidState("state has no agents".into()));
        }
        Ok(Self { counts })
    }

    /// Checks that the state belongs to the given instance.
    pub fn check_for(&self, params: &ModelParams) -> Result<()> {
        if self.counts.len() != params.n_arms() + 1 {
            return Err(Error::InvalidState(format!(
                "state has {} classes, model has {}",
                self.counts.len(),
                params.n_arms() + 1
            )));
        }
        if self.total() != u64::from(params.n_agents()) {
            return Err(Error::InvalidState(format!(
                "state holds {} agents, model has {}",
                self.total(),
                params.n_agents()
            )));
        }
        Ok(())
    }

    /// `X^N(0) = [N, 0, .., 0]`.
    pub fn initial(params: &ModelParams) -> Self {
        let mut counts = vec![0; params.n_arms() + 1];
        counts[0] = params.n_agents();
        Self { counts }
    }

    /// `N e^k`: every agent prefers arm `k`.
    pub fn consensus(params: &ModelParams, arm: usize) -> Self {
        let mut counts = vec![0; params.n_arms() + 1];
        counts[arm] = params.n_agents();
        Self { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn count(&self, class: usize) -> u32 {
        self.counts[class]
    }

    pub fn n_arms(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Class holding the most agents (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    /// `Some(k)` when the state is `N e^k` for an arm `k >= 1`.
    pub fn consensus_arm(&self) -> Option<usize> {
        let total = self.total();
        self.counts
            .iter()
            .enumerate()
            .skip(1)
            .find(|&(_, &c)| u64::from(c) == total)
            .map(|(k, _)| k)
    }

    pub fn apply(&self, dir: TransitionDirection) -> Result<Self> {
        let mut next = self.clone();
        next.apply_in_place(dir)?;
        Ok(next)
    }

    pub fn apply_in_place(&mut self, dir: TransitionDirection) -> Result<()> {
        let (src, dst) = (dir.source(), dir.target());
        if src >= self.counts.len() || dst >= self.counts.len() {
            return Err(Error::InvalidState(format!("{dir} references a class outside 0..={}", self.n_arms())));
        }
        if self.counts[src] == 0 {
            return Err(Error::NegativeCount { class: src });
        }
        self.counts[src] -= 1;
        self.counts[dst] += 1;
        Ok(())
    }

    /// `Y^N = X^N / N`.
    pub fn scaled(&self) -> ScaledState {
        let n = self.total() as f64;
        ScaledState {
            point: self.counts.iter().map(|&c| f64::from(c) / n).collect(),
        }
    }

    /// Every state of `n` agents over `n_arms + 1` classes.
    pub fn enumerate(n: u32, n_arms: usize) -> Vec<SystemState> {
        fn rec(prefix: &mut Vec<u32>, remaining: u32, slots: usize, out: &mut Vec<SystemState>) {
            if slots == 1 {
                prefix.push(remaining);
                out.push(SystemState { counts: prefix.clone() });
                prefix.pop();
                return;
            }
            for c in 0..=remaining {
                prefix.push(c);
                rec(prefix, remaining - c, slots - 1, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::with_capacity(n_arms + 1), n, n_arms + 1, &mut out);
        out
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

/// Tolerance on the simplex sum for states obtained by exact scaling.
pub const EXACT_SIMPLEX_TOL: f64 = 1e-12;
/// Tolerance on the simplex sum for integrated ODE states.
pub const ODE_SIMPLEX_TOL: f64 = 1e-9;

/// A point on the simplex `Delta^K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaledState {
    point: Vec<f64>,
}

impl ScaledState {
    /// Wraps `point`, rejecting it if any entry is below `-tol` or the sum is off by more than `tol`.
    pub fn new(point: Vec<f64>, tol: f64) -> Result<Self> {
        let dev = simplex_deviation(&point);
        if point.len() < 2 || dev > tol {
            return Err(Error::OffSimplex(dev));
        }
        Ok(Self { point })
    }

    /// `[1, 0, .., 0]`.
    pub fn origin(n_arms: usize) -> Self {
        let mut point = vec![0.0; n_arms + 1];
        point[0] = 1.0;
        Self { point }
    }

    /// The vertex `e^k`.
    pub fn vertex(n_arms: usize, k: usize) -> Self {
        let mut point = vec![0.0; n_arms + 1];
        point[k] = 1.0;
        Self { point }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.point
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.point
    }

    pub fn n_arms(&self) -> usize {
        self.point.len() - 1
    }
}

/// Largest violation of the simplex constraints: negativity of any entry or
/// the distance of the entry sum from 1.
pub fn simplex_deviation(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().sum();
    let neg = x.iter().fold(0.0_f64, |m, &v| m.max(-v));
    neg.max((sum - 1.0).abs())
}

/// Euclidean distance between two equally sized vectors.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
