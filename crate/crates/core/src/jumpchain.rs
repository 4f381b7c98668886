//! Space-time decomposition of a trace and the coupling of the best-arm walk
//! with a standard biased random walk.
//!
//! The jump chain is the sequence of visited states together with the time
//! spent in each. Restricting attention to the best-arm coordinate and
//! dropping the jumps that leave it unchanged gives the embedded walk `W`,
//! whose steps are exactly +1 or -1. While `W` is strictly inside `(0, N)` it
//! moves up with probability `eta(state) >= p1 / (p1 + p2)`.
//!
//! [`couple`] builds a walk `W_hat` driven by the same moves:
//!
//! * `W` moves down: `W_hat` moves down.
//! * `W` moves up: `W_hat` moves up, then a coin with HEAD probability
//!   `p1 / ((p1 + p2) eta)` is flipped; TAIL sends `W_hat` two positions down.
//!   The composite step is therefore +1 (HEAD) or -1 (TAIL).
//! * `W_hat` is frozen once it reaches 0 or N.
//!
//! Marginally `W_hat` is the standard walk with up-probability
//! `p1 / (p1 + p2)`, and `W >= W_hat` holds pathwise.

use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ctmc::{birth_rate, death_rate, EventTrace};
use crate::error::{Error, Result};
use crate::model::{ModelParams, SystemState};

/// Relative slack allowed when comparing `eta` with `p1 / (p1 + p2)`. The two
/// sides are equal in exact arithmetic on states where only the best and the
/// second-best arm are occupied.
pub const ETA_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpChain {
    pub states: Vec<SystemState>,
    pub holding_times: Vec<f64>,
    /// Time of jump `l` (entering `states[l]`), for `l >= 1`.
    pub jump_times: Vec<f64>,
}

impl JumpChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Splits a trace into visited states and holding times.
///
/// A trace without events yields a single-state chain.
pub fn extract_jump_chain(trace: &EventTrace) -> Result<JumpChain> {
    let states = trace.replay()?;
    let mut holding_times = Vec::with_capacity(trace.events.len());
    let mut prev = 0.0;
    for e in &trace.events {
        holding_times.push(e.time - prev);
        prev = e.time;
    }
    Ok(JumpChain {
        states,
        holding_times,
        jump_times: trace.events.iter().map(|e| e.time).collect(),
    })
}

/// Embedded walk of one coordinate of the jump chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestArmWalk {
    pub arm: usize,
    pub positions: Vec<u32>,
    /// Jump index `l` of the chain at which move `j` happened
    /// (`states[l]` is the state after the move).
    pub jump_indices: Vec<usize>,
    /// State immediately before move `j`.
    pub pre_jump_states: Vec<SystemState>,
    /// Time at which move `j` happened.
    pub move_times: Vec<f64>,
}

impl BestArmWalk {
    pub fn n_moves(&self) -> usize {
        self.positions.len() - 1
    }

    /// `(from, went_up, pre_state)` for every move.
    pub fn moves(&self) -> impl Iterator<Item = (u32, bool, &SystemState)> + '_ {
        self.positions
            .windows(2)
            .zip(&self.pre_jump_states)
            .map(|(w, s)| (w[0], w[1] > w[0], s))
    }

    /// Moves that start strictly inside `(0, N)`.
    pub fn conditioned_moves(&self, n: u32) -> impl Iterator<Item = (u32, bool, &SystemState)> + '_ {
        self.moves().filter(move |&(from, _, _)| from > 0 && from < n)
    }
}

pub fn extract_best_arm_walk(chain: &JumpChain, arm: usize) -> BestArmWalk {
    let mut positions = vec![chain.states[0].count(arm)];
    let mut jump_indices = Vec::new();
    let mut pre_jump_states = Vec::new();
    let mut move_times = Vec::new();
    for (l, pair) in chain.states.windows(2).enumerate() {
        let (before, after) = (&pair[0], &pair[1]);
        if after.count(arm) != before.count(arm) {
            positions.push(after.count(arm));
            jump_indices.push(l + 1);
            pre_jump_states.push(before.clone());
            move_times.push(chain.jump_times[l]);
        }
    }
    BestArmWalk {
        arm,
        positions,
        jump_indices,
        pre_jump_states,
        move_times,
    }
}

/// Probability that the next move of the best-arm count is upward, given the
/// state just before it: birth rate over birth plus death rate.
pub fn eta(params: &ModelParams, state: &SystemState) -> Result<f64> {
    let best = params.best_arm();
    let birth = birth_rate(params, state, best);
    let death = death_rate(params, state, best);
    if birth + death <= 0.0 {
        return Err(Error::UndefinedEta);
    }
    Ok(birth / (birth + death))
}

/// `eta >= p1 / (p1 + p2)` up to [`ETA_REL_TOL`].
pub fn eta_meets_bound(params: &ModelParams, eta: f64) -> bool {
    eta >= params.walk_up_prob() * (1.0 - ETA_REL_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coin {
    Head,
    Tail,
    /// No coin flipped: `W` moved down or `W_hat` was already absorbed.
    NotApplicable,
}

impl Coin {
    pub fn label(&self) -> &'static str {
        match self {
            Coin::Head => "HEAD",
            Coin::Tail => "TAIL",
            Coin::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledWalkPair {
    /// `W` from the coupling start on; `w[0] = X_best(t_c)`.
    pub w: Vec<u32>,
    pub w_hat: Vec<u32>,
    /// Coin for the step leading to index `j + 1`.
    pub coin_outcomes: Vec<Coin>,
    pub n: u32,
}

impl CoupledWalkPair {
    /// `min_k (W[k] - W_hat[k])`.
    pub fn dominance_margin(&self) -> i64 {
        self.w
            .iter()
            .zip(&self.w_hat)
            .map(|(&a, &b)| i64::from(a) - i64::from(b))
            .min()
            .unwrap_or(0)
    }

    /// `(ups, downs)` of `W_hat` over steps where it was not yet absorbed.
    pub fn hat_step_counts(&self) -> (u64, u64) {
        let mut ups = 0;
        let mut downs = 0;
        for w in self.w_hat.windows(2) {
            if w[0] == 0 || w[0] == self.n {
                continue;
            }
            if w[1] > w[0] {
                ups += 1;
            } else {
                downs += 1;
            }
        }
        (ups, downs)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["step", "w", "w_hat", "coin"])?;
        for k in 0..self.w.len() {
            let coin = if k == 0 { "" } else { self.coin_outcomes[k - 1].label() };
            out.write_record([k.to_string(), self.w[k].to_string(), self.w_hat[k].to_string(), coin.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Couples the embedded walk with the standard biased walk from time `t_c`.
///
/// Moves at times `< t_c` set the starting point `W_hat(0) = X_best(t_c)`; a
/// move exactly at `t_c` counts as happening after it.
pub fn couple<R: Rng + ?Sized>(
    params: &ModelParams,
    walk: &BestArmWalk,
    coupling_start: f64,
    rng: &mut R,
) -> Result<CoupledWalkPair> {
    let n = params.n_agents();
    let start = walk.move_times.partition_point(|&t| t < coupling_start);
    let w: Vec<u32> = walk.positions[start..].to_vec();
    let mut w_hat = Vec::with_capacity(w.len());
    let mut coins = Vec::with_capacity(w.len().saturating_sub(1));
    let mut cur = w[0];
    w_hat.push(cur);
    let target = params.walk_up_prob();
    for j in start..walk.n_moves() {
        let up = walk.positions[j + 1] > walk.positions[j];
        if cur == 0 || cur == n {
            coins.push(Coin::NotApplicable);
        } else if !up {
            cur -= 1;
            coins.push(Coin::NotApplicable);
        } else {
            let e = eta(params, &walk.pre_jump_states[j])?;
            let mut head = target / e;
            if head > 1.0 {
                if head > 1.0 + ETA_REL_TOL {
                    return Err(Error::InvalidCoin(head));
                }
                head = 1.0;
            }
            if rng.random::<f64>() < head {
                cur += 1;
                coins.push(Coin::Head);
            } else {
                cur -= 1;
                coins.push(Coin::Tail);
            }
        }
        w_hat.push(cur);
    }
    Ok(CoupledWalkPair {
        w,
        w_hat,
        coin_outcomes: coins,
        n,
    })
}

fn walk_step<R: Rng + ?Sized>(pos: u32, n: u32, up_prob: f64, rng: &mut R) -> u32 {
    if pos == 0 || pos == n {
        pos
    } else if rng.random::<f64>() < up_prob {
        pos + 1
    } else {
        pos - 1
    }
}

/// `steps` steps of the biased walk on `{0..n}` with up-probability
/// `p1 / (p1 + p2)`, absorbed at 0 and `n`. Returns `steps + 1` positions.
pub fn standard_walk<R: Rng + ?Sized>(
    params: &ModelParams,
    z0: u32,
    n: u32,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    if z0 > n {
        return Err(Error::out_of_range("z0", format!("{z0} exceeds {n}")));
    }
    let up = params.walk_up_prob();
    let mut out = Vec::with_capacity(steps + 1);
    let mut pos = z0;
    out.push(pos);
    for _ in 0..steps {
        pos = walk_step(pos, n, up, rng);
        out.push(pos);
    }
    Ok(out)
}

/// Runs the biased walk from `z0` until it hits 0 or `n`; returns the hit point.
pub fn standard_walk_absorption<R: Rng + ?Sized>(params: &ModelParams, z0: u32, n: u32, rng: &mut R) -> Result<u32> {
    if z0 > n {
        return Err(Error::out_of_range("z0", format!("{z0} exceeds {n}")));
    }
    let up = params.walk_up_prob();
    let mut pos = z0;
    while pos != 0 && pos != n {
        pos = walk_step(pos, n, up, rng);
    }
    Ok(pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::{simulate_ctmc, Event, StopRule, TerminalReason};
    use crate::model::TransitionDirection;
    use crate::rng::stream;

    fn base() -> ModelParams {
        ModelParams::new(200, 2, 1.0, 0.2, vec![0.8, 0.4]).unwrap()
    }

    fn birth(arm: usize) -> TransitionDirection {
        TransitionDirection::Birth { arm }
    }

    #[test]
    fn holding_times_are_differences() {
        let p = ModelParams::new(10, 2, 1.0, 0.2, vec![0.8, 0.4]).unwrap();
        let trace = EventTrace {
            initial: SystemState::initial(&p),
            events: vec![Event { time: 0.3, dir: birth(1) }, Event { time: 0.7, dir: birth(2) }],
            terminal: TerminalReason::TimeLimit,
        };
        let chain = extract_jump_chain(&trace).unwrap();
        assert_eq!(chain.states.len(), 3);
        assert!((chain.holding_times[0] - 0.3).abs() < 1e-15);
        assert!((chain.holding_times[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn event_free_trace_gives_single_state() {
        let p = base();
        let s = SystemState::consensus(&p, 1);
        let trace = EventTrace {
            initial: s.clone(),
            events: vec![],
            terminal: TerminalReason::Absorbed(1),
        };
        let chain = extract_jump_chain(&trace).unwrap();
        assert_eq!(chain.states, vec![s]);
        assert!(chain.holding_times.is_empty());
        let walk = extract_best_arm_walk(&chain, 1);
        assert_eq!(walk.positions, vec![200]);
    }

    #[test]
    fn holding_times_telescope() {
        let p = base();
        let t = simulate_ctmc(&p, &SystemState::initial(&p), StopRule::until(10.0, 100_000), &mut stream(4, 0)).unwrap();
        let chain = extract_jump_chain(&t).unwrap();
        let total: f64 = chain.holding_times.iter().sum();
        assert!((total - t.last_time()).abs() < 1e-9);
        assert_eq!(chain.holding_times.len(), chain.states.len() - 1);
    }

    #[test]
    fn walk_drops_repeats() {
        // coordinate-1 values 0, 1, 1, 2, 1
        let states = [[5, 0, 0], [4, 1, 0], [3, 1, 1], [2, 2, 1], [2, 1, 2]]
            .iter()
            .map(|c| SystemState::new(c.to_vec()).unwrap())
            .collect();
        let chain = JumpChain {
            states,
            holding_times: vec![0.1; 4],
            jump_times: vec![0.1, 0.2, 0.3, 0.4],
        };
        let walk = extract_best_arm_walk(&chain, 1);
        assert_eq!(walk.positions, vec![0, 1, 2, 1]);
        assert_eq!(walk.jump_indices, vec![1, 3, 4]);
        assert_eq!(walk.pre_jump_states[1].counts(), &[3, 1, 1]);
        assert_eq!(walk.move_times, vec![0.1, 0.3, 0.4]);
    }

    #[test]
    fn absorbed_walk_ends_at_n() {
        let p = base();
        for seed in 0..5 {
            let t = simulate_ctmc(&p, &SystemState::initial(&p), StopRule::absorption(p.default_event_cap()), &mut stream(seed, 0))
                .unwrap();
            let walk = extract_best_arm_walk(&extract_jump_chain(&t).unwrap(), 1);
            assert!(walk.positions.windows(2).all(|w| w[0].abs_diff(w[1]) == 1));
            if t.terminal == TerminalReason::Absorbed(1) {
                assert_eq!(*walk.positions.last().unwrap(), 200);
            }
        }
    }

    #[test]
    fn eta_is_one_without_competitors() {
        let p = ModelParams::new(10, 2, 1.0, 0.2, vec![0.8, 0.4]).unwrap();
        let s = SystemState::new(vec![6, 4, 0]).unwrap();
        assert_eq!(eta(&p, &s).unwrap(), 1.0);
    }

    #[test]
    fn eta_at_mixed_state() {
        // 1.808 / (1.808 + 0.36), birth/death of arm 1 at [4, 3, 3] evaluated by hand
        let p = ModelParams::new(10, 2, 1.0, 0.2, vec![0.8, 0.4]).unwrap();
        let e = eta(&p, &SystemState::new(vec![4, 3, 3]).unwrap()).unwrap();
        assert!((e - 1.808 / 2.168).abs() < 1e-12);
        assert!((e - 0.833_948_339_483_394_9).abs() < 1e-12);
        assert!(e >= 2.0 / 3.0);
    }

    #[test]
    fn eta_undefined_without_flow() {
        let p = base();
        let s = SystemState::consensus(&p, 2);
        assert!(matches!(eta(&p, &s), Err(Error::UndefinedEta)));
    }

    fn synthetic_walk(positions: &[u32], state: &SystemState) -> BestArmWalk {
        let m = positions.len() - 1;
        BestArmWalk {
            arm: 1,
            positions: positions.to_vec(),
            jump_indices: (1..=m).collect(),
            pre_jump_states: vec![state.clone(); m],
            move_times: (1..=m).map(|i| i as f64).collect(),
        }
    }

    #[test]
    fn head_only_coupling_mirrors_walk() {
        // With p2 = 0 and no competitors eta = 1 and HEAD probability is 1.
        let p = ModelParams::new(10, 2, 1.0, 0.5, vec![0.8, 0.0]).unwrap();
        let s = SystemState::new(vec![5, 5, 0]).unwrap();
        let walk = synthetic_walk(&[2, 3, 4, 3, 4, 5], &s);
        let pair = couple(&p, &walk, 0.0, &mut stream(0, 0)).unwrap();
        assert_eq!(pair.w_hat, pair.w);
        assert!(pair.coin_outcomes.iter().all(|c| *c != Coin::Tail));
    }

    #[test]
    fn absorbed_hat_stays_at_zero() {
        let p = base();
        let s = SystemState::new(vec![0, 100, 100]).unwrap();
        let walk = synthetic_walk(&[1, 0, 1, 2, 3, 4, 5], &s);
        let pair = couple(&p, &walk, 0.5, &mut stream(0, 0)).unwrap();
        assert_eq!(pair.w_hat, vec![1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(pair.dominance_margin(), 0);
    }

    #[test]
    fn coupling_start_skips_early_moves() {
        let p = base();
        let s = SystemState::new(vec![0, 100, 100]).unwrap();
        let walk = synthetic_walk(&[0, 1, 2, 3, 2], &s);
        // moves at t = 1, 2, 3, 4; a move exactly at t_c belongs to the coupled part
        let pair = couple(&p, &walk, 2.0, &mut stream(0, 0)).unwrap();
        assert_eq!(pair.w, vec![1, 2, 3, 2]);
        assert_eq!(pair.w_hat[0], 1);
    }

    #[test]
    fn standard_walk_absorbing_ends() {
        let p = ModelParams::new(10, 2, 1.0, 0.2, vec![0.8, 0.4]).unwrap();
        assert!(standard_walk(&p, 0, 10, 50, &mut stream(0, 0)).unwrap().iter().all(|&x| x == 0));
        assert!(standard_walk(&p, 10, 10, 50, &mut stream(0, 0)).unwrap().iter().all(|&x| x == 10));
        assert!(standard_walk(&p, 11, 10, 5, &mut stream(0, 0)).is_err());
        let w = standard_walk(&p, 5, 10, 200, &mut stream(1, 0)).unwrap();
        assert_eq!(w.len(), 201);
    }

    #[test]
    fn csv_layout() {
        let pair = CoupledWalkPair {
            w: vec![2, 3, 2],
            w_hat: vec![2, 1, 0],
            coin_outcomes: vec![Coin::Tail, Coin::NotApplicable],
            n: 10,
        };
        let mut buf = Vec::new();
        pair.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,w,w_hat,coin\n0,2,2,\n1,3,1,TAIL\n2,2,0,n/a\n");
    }
}
