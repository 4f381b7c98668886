//! Exact simulation of the learning dynamics.
//!
//! Two simulators produce the same [`EventTrace`] type:
//!
//! * [`simulate_ctmc`] works on the aggregate occupancy vector. It draws an
//!   exponential holding time with rate equal to the total outflow of the
//!   current state and then picks a direction with probability proportional
//!   to its rate.
//! * [`simulate_agents`] runs the per-agent protocol. All N rate-lambda clocks
//!   are merged into one rate-`N lambda` clock with a uniformly chosen agent,
//!   which is equal in law to N independent clocks. Wake-ups that leave the
//!   agent's memory unchanged are not recorded.
//!
//! Both stop at absorption, at an optional time horizon, or when the number of
//! emitted events reaches a cap. A state with zero total outflow terminates
//! immediately as `Absorbed(argmax)` without emitting an event.

use std::io;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SystemState, TransitionDirection};

/// Rate at which class `arm` gains an agent.
pub fn birth_rate(params: &ModelParams, state: &SystemState, arm: usize) -> f64 {
    let n = f64::from(params.n_agents());
    let k = params.n_arms() as f64;
    let lambda = params.clock_rate();
    let mu = params.explore_prob();
    let p = params.mean(arm);
    let x0 = f64::from(state.count(0));
    let xk = f64::from(state.count(arm));
    let others: f64 = (1..=params.n_arms())
        .filter(|&j| j != arm)
        .map(|j| f64::from(state.count(j)))
        .sum();
    x0 * lambda * (mu / k + (1.0 - mu) * xk / n) * p + others * lambda * (xk / n) * p
}

/// Rate at which class `arm` loses an agent to another arm.
pub fn death_rate(params: &ModelParams, state: &SystemState, arm: usize) -> f64 {
    let n = f64::from(params.n_agents());
    let lambda = params.clock_rate();
    let xk = f64::from(state.count(arm));
    let pull: f64 = (1..=params.n_arms())
        .filter(|&j| j != arm)
        .map(|j| f64::from(state.count(j)) / n * params.mean(j))
        .sum();
    xk * lambda * pull
}

/// Birth rate of the NULL class. Identically zero because the NULL
/// arm never pays out; kept in its written form.
pub fn null_birth_rate(params: &ModelParams, state: &SystemState) -> f64 {
    let n = f64::from(params.n_agents());
    let x0 = f64::from(state.count(0));
    (n - x0) * params.clock_rate() * (x0 / n) * params.mean(0)
}

/// Rate at which preference-free agents adopt some arm.
pub fn null_death_rate(params: &ModelParams, state: &SystemState) -> f64 {
    let n = f64::from(params.n_agents());
    let k = params.n_arms() as f64;
    let mu = params.explore_prob();
    let x0 = f64::from(state.count(0));
    let s: f64 = (1..=params.n_arms())
        .map(|j| (mu / k + (1.0 - mu) * f64::from(state.count(j)) / n) * params.mean(j))
        .sum();
    x0 * params.clock_rate() * s
}

/// Off-diagonal entries of row `state` of the generator, restricted to
/// strictly positive rates.
pub fn generator_row(params: &ModelParams, state: &SystemState) -> Vec<(TransitionDirection, f64)> {
    let mut row = Vec::new();
    generator_row_into(params, state.counts(), &mut row);
    row
}

/// Diagonal entry `q_{s,s}`: minus the total outflow.
pub fn generator_diagonal(params: &ModelParams, state: &SystemState) -> f64 {
    -total_outflow(params, state.counts())
}

pub(crate) fn generator_row_into(params: &ModelParams, counts: &[u32], row: &mut Vec<(TransitionDirection, f64)>) {
    row.clear();
    let n = f64::from(params.n_agents());
    let kf = params.n_arms() as f64;
    let lambda = params.clock_rate();
    let mu = params.explore_prob();
    let s0 = f64::from(counts[0]);
    for k in 1..=params.n_arms() {
        let sk = f64::from(counts[k]);
        let pk = params.mean(k);
        let birth = s0 * lambda * (mu / kf + (1.0 - mu) * sk / n) * pk;
        if birth > 0.0 {
            row.push((TransitionDirection::Birth { arm: k }, birth));
        }
        for from in 1..=params.n_arms() {
            if from == k {
                continue;
            }
            let swap = f64::from(counts[from]) * lambda * (sk / n) * pk;
            if swap > 0.0 {
                row.push((TransitionDirection::Swap { from, to: k }, swap));
            }
        }
    }
}

pub(crate) fn total_outflow(params: &ModelParams, counts: &[u32]) -> f64 {
    let n = f64::from(params.n_agents());
    let kf = params.n_arms() as f64;
    let lambda = params.clock_rate();
    let mu = params.explore_prob();
    let s0 = f64::from(counts[0]);
    let mut total = 0.0;
    for k in 1..=params.n_arms() {
        let sk = f64::from(counts[k]);
        let pk = params.mean(k);
        total += s0 * lambda * (mu / kf + (1.0 - mu) * sk / n) * pk;
        let movers = f64::from(params.n_agents()) - s0 - sk;
        total += movers * lambda * (sk / n) * pk;
    }
    total
}

/// When to stop a simulation. Absorption always stops it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop before the first event after this time.
    pub horizon: Option<f64>,
    /// Maximum number of emitted events.
    pub event_cap: u64,
}

impl StopRule {
    /// Run until absorption or `event_cap` events.
    pub fn absorption(event_cap: u64) -> Self {
        Self { horizon: None, event_cap }
    }

    /// Run on `[0, horizon]`.
    pub fn until(horizon: f64, event_cap: u64) -> Self {
        Self {
            horizon: Some(horizon),
            event_cap,
        }
    }

    fn check(&self) -> Result<()> {
        if self.event_cap == 0 {
            return Err(Error::out_of_range("event_cap", "must be at least 1"));
        }
        if let Some(h) = self.horizon {
            if !(h >= 0.0) {
                return Err(Error::out_of_range("horizon", format!("{h} is negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    /// Reached a state without outflow; carries the class holding the most agents.
    Absorbed(usize),
    TimeLimit,
    EventCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub dir: TransitionDirection,
}

/// Time-ordered transitions of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub initial: SystemState,
    pub events: Vec<Event>,
    pub terminal: TerminalReason,
}

impl EventTrace {
    /// State after the last event.
    pub fn final_state(&self) -> Result<SystemState> {
        let mut s = self.initial.clone();
        for e in &self.events {
            s.apply_in_place(e.dir)?;
        }
        Ok(s)
    }

    /// All visited states, starting with `initial`.
    pub fn replay(&self) -> Result<Vec<SystemState>> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut s = self.initial.clone();
        out.push(s.clone());
        for e in &self.events {
            s.apply_in_place(e.dir)?;
            out.push(s.clone());
        }
        Ok(out)
    }

    pub fn last_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Right-continuous occupancy counts sampled at increasing `times`.
    pub fn counts_on_grid(&self, times: &[f64]) -> Result<Vec<Vec<u32>>> {
        let mut out = Vec::with_capacity(times.len());
        let mut s = self.initial.clone();
        let mut next = 0;
        for &t in times {
            while next < self.events.len() && self.events[next].time <= t {
                s.apply_in_place(self.events[next].dir)?;
                next += 1;
            }
            out.push(s.counts().to_vec());
        }
        Ok(out)
    }

    /// `Y^N(t)` at increasing `times`, as a right-continuous step function.
    pub fn scaled_on_grid(&self, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.initial.total() as f64;
        Ok(self
            .counts_on_grid(times)?
            .into_iter()
            .map(|c| c.into_iter().map(|v| f64::from(v) / n).collect())
            .collect())
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, e) in self.events.iter().enumerate() {
            w.serialize(EventRow {
                event_index: i,
                time: e.time,
                kind: e.dir.kind().to_string(),
                from_class: e.dir.source(),
                to_class: e.dir.target(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads events written by [`EventTrace::write_csv`].
    pub fn read_csv<R: io::Read>(initial: SystemState, terminal: TerminalReason, reader: R) -> Result<Self> {
        let mut events = Vec::new();
        for (i, row) in csv::Reader::from_reader(reader).deserialize::<EventRow>().enumerate() {
            let row = row?;
            if row.event_index != i {
                return Err(Error::InvalidState(format!("event {i} has index {}", row.event_index)));
            }
            let dir = TransitionDirection::between(row.from_class, row.to_class)?;
            if dir.kind() != row.kind {
                return Err(Error::InvalidState(format!("event {i}: kind {} does not match classes", row.kind)));
            }
            events.push(Event { time: row.time, dir });
        }
        Ok(Self {
            initial,
            events,
            terminal,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    event_index: usize,
    time: f64,
    kind: String,
    from_class: usize,
    to_class: usize,
}

/// JSON header written next to an events CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub params: ModelParams,
    pub seed: u64,
    pub stream: u64,
    pub mode: SimMode,
    pub terminal_reason: TerminalReason,
    pub initial: SystemState,
    pub n_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Ctmc,
    Agents,
}

fn exp_holding<R: Rng + ?Sized>(rng: &mut R, rate: f64, now: f64) -> f64 {
    loop {
        let e: f64 = rng.sample(Exp1);
        let next = now + e / rate;
        if next > now {
            return next;
        }
    }
}

/// Aggregate-level exact simulation from `initial`.
pub fn simulate_ctmc<R: Rng + ?Sized>(
    params: &ModelParams,
    initial: &SystemState,
    stop: StopRule,
    rng: &mut R,
) -> Result<EventTrace> {
    initial.check_for(params)?;
    stop.check()?;
    let mut state = initial.clone();
    let mut events = Vec::new();
    let mut row = Vec::with_capacity(params.n_arms() * params.n_arms());
    let mut now = 0.0;
    let terminal = loop {
        generator_row_into(params, state.counts(), &mut row);
        let total: f64 = row.iter().map(|&(_, r)| r).sum();
        if total <= 0.0 {
            break TerminalReason::Absorbed(state.argmax());
        }
        if events.len() as u64 >= stop.event_cap {
            break TerminalReason::EventCap;
        }
        let next = exp_holding(rng, total, now);
        if stop.horizon.is_some_and(|h| next > h) {
            break TerminalReason::TimeLimit;
        }
        let mut u = rng.random::<f64>() * total;
        let mut dir = row[row.len() - 1].0;
        for &(d, r) in &row {
            if u < r {
                dir = d;
                break;
            }
            u -= r;
        }
        state.apply_in_place(dir)?;
        now = next;
        events.push(Event { time: now, dir });
    };
    Ok(EventTrace {
        initial: initial.clone(),
        events,
        terminal,
    })
}

/// Agent-level simulation of the protocol from `initial`.
///
/// On each wake-up the chosen agent picks an arm: a preference-free agent
/// samples uniformly with probability mu and otherwise copies the memory of a
/// uniformly chosen peer (itself included); an agent with a preference always
/// copies a peer. Copying a preference-free peer pulls the NULL arm, which
/// never pays. A reward of 1 sets the memory to the pulled arm.
pub fn simulate_agents<R: Rng + ?Sized>(
    params: &ModelParams,
    initial: &SystemState,
    stop: StopRule,
    rng: &mut R,
) -> Result<EventTrace> {
    initial.check_for(params)?;
    stop.check()?;
    let n = params.n_agents() as usize;
    let n_arms = params.n_arms();
    let mu = params.explore_prob();
    let wake_rate = params.clock_rate() * n as f64;

    let mut memory = Vec::with_capacity(n);
    for (class, &c) in initial.counts().iter().enumerate() {
        memory.extend(std::iter::repeat_n(class, c as usize));
    }
    let mut state = initial.clone();
    let mut events = Vec::new();
    let mut now = 0.0;
    let mut absorbed = total_outflow(params, state.counts()) <= 0.0;

    let terminal = loop {
        if absorbed {
            break TerminalReason::Absorbed(state.argmax());
        }
        if events.len() as u64 >= stop.event_cap {
            break TerminalReason::EventCap;
        }
        now = exp_holding(rng, wake_rate, now);
        if stop.horizon.is_some_and(|h| now > h) {
            break TerminalReason::TimeLimit;
        }
        let agent = rng.random_range(0..n);
        let current = memory[agent];
        let choice = if current == 0 && rng.random::<f64>() < mu {
            rng.random_range(1..=n_arms)
        } else {
            memory[rng.random_range(0..n)]
        };
        if choice == 0 || choice == current {
            // NULL arm, or a reward would not change memory; the pull still
            // happens but its outcome is irrelevant.
            continue;
        }
        if rng.random::<f64>() < params.mean(choice) {
            memory[agent] = choice;
            let dir = TransitionDirection::between(current, choice)?;
            state.apply_in_place(dir)?;
            events.push(Event { time: now, dir });
            absorbed = total_outflow(params, state.counts()) <= 0.0;
        }
    };
    Ok(EventTrace {
        initial: initial.clone(),
        events,
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn base() -> ModelParams {
        ModelParams::new(200, 2, 1.0, 0.2, vec![0.8, 0.4]).unwrap()
    }

    fn small_base() -> ModelParams {
        ModelParams::new(10, 2, 1.0, 0.2, vec![0.8, 0.4]).unwrap()
    }

    fn state(c: &[u32]) -> SystemState {
        SystemState::new(c.to_vec()).unwrap()
    }

    #[test]
    fn birth_rate_at_start() {
        // 200 * 1 * (0.2 / 2) * 0.8
        let r = birth_rate(&base(), &state(&[200, 0, 0]), 1);
        assert!((r - 16.0).abs() < 1e-12);
    }

    // Reference values for [4, 3, 3] under (N=10, K=2, lambda=1, mu=0.2, p=[0.8, 0.4]),
    // evaluated by hand outside this crate:
    //   birth_1 = 4 (0.1 + 0.8 * 0.3) 0.8 + 3 * 0.3 * 0.8 = 1.808
    //   death_1 = 3 * (0.3 * 0.4)                         = 0.36
    //   birth_2 = 4 (0.1 + 0.8 * 0.3) 0.4 + 3 * 0.3 * 0.4 = 0.904
    //   death_2 = 3 * (0.3 * 0.8)                         = 0.72
    #[test]
    fn rates_at_mixed_state() {
        let p = small_base();
        let s = state(&[4, 3, 3]);
        assert!((birth_rate(&p, &s, 1) - 1.808).abs() < 1e-12);
        assert!((death_rate(&p, &s, 1) - 0.36).abs() < 1e-12);
        assert!((birth_rate(&p, &s, 2) - 0.904).abs() < 1e-12);
        assert!((death_rate(&p, &s, 2) - 0.72).abs() < 1e-12);
    }

    #[test]
    fn absorbing_state_has_no_flow() {
        let p = base();
        let s = SystemState::consensus(&p, 1);
        assert_eq!(birth_rate(&p, &s, 2), 0.0);
        assert_eq!(death_rate(&p, &s, 2), 0.0);
        assert!(generator_row(&p, &s).is_empty());
        assert_eq!(death_rate(&p, &state(&[200, 0, 0]), 1), 0.0);
    }

    #[test]
    fn generator_row_at_start_has_only_births() {
        let p = ModelParams::new(30, 3, 2.0, 0.5, vec![0.3, 0.9, 0.6]).unwrap();
        let row = generator_row(&p, &SystemState::initial(&p));
        assert_eq!(row.len(), 3);
        for (d, r) in row {
            let TransitionDirection::Birth { arm } = d else {
                panic!("unexpected {d}");
            };
            let expect = 30.0 * 2.0 * (0.5 / 3.0) * p.mean(arm);
            assert!((r - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_row_sums_against_diagonal() {
        let p = small_base();
        let s = state(&[4, 3, 3]);
        let off: f64 = generator_row(&p, &s).iter().map(|&(_, r)| r).sum();
        assert!((off + generator_diagonal(&p, &s)).abs() < 1e-12);
        assert!((null_birth_rate(&p, &s)).abs() == 0.0);
    }

    #[test]
    fn single_arm_always_absorbs_at_one() {
        let p = ModelParams::new(25, 1, 1.0, 0.3, vec![0.5]).unwrap();
        for seed in 0..20 {
            let mut rng = stream(seed, 0);
            let t = simulate_ctmc(&p, &SystemState::initial(&p), StopRule::absorption(p.default_event_cap()), &mut rng)
                .unwrap();
            assert_eq!(t.terminal, TerminalReason::Absorbed(1));
            assert_eq!(t.final_state().unwrap().counts(), &[0, 25]);
        }
    }

    #[test]
    fn first_event_is_a_birth() {
        let p = base();
        for seed in 0..20 {
            let mut rng = stream(seed, 1);
            let stop = StopRule::until(5.0, 1_000_000);
            let a = simulate_ctmc(&p, &SystemState::initial(&p), stop, &mut rng).unwrap();
            let b = simulate_agents(&p, &SystemState::initial(&p), stop, &mut rng).unwrap();
            for t in [a, b] {
                let first = t.events[0];
                assert!(matches!(first.dir, TransitionDirection::Birth { .. }));
                let s1 = t.initial.apply(first.dir).unwrap();
                assert_eq!(s1.count(0), 199);
            }
        }
    }

    #[test]
    fn trace_invariants_hold() {
        let p = base();
        let mut rng = stream(3, 0);
        let t = simulate_ctmc(&p, &SystemState::initial(&p), StopRule::absorption(p.default_event_cap()), &mut rng)
            .unwrap();
        assert!(t.events.windows(2).all(|w| w[0].time < w[1].time));
        let TerminalReason::Absorbed(k) = t.terminal else {
            panic!("not absorbed: {:?}", t.terminal)
        };
        assert_eq!(t.final_state().unwrap(), SystemState::consensus(&p, k));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = base();
        let stop = StopRule::until(20.0, 100_000);
        let a = simulate_ctmc(&p, &SystemState::initial(&p), stop, &mut stream(11, 2)).unwrap();
        let b = simulate_ctmc(&p, &SystemState::initial(&p), stop, &mut stream(11, 2)).unwrap();
        assert_eq!(a, b);
        let a = simulate_agents(&p, &SystemState::initial(&p), stop, &mut stream(11, 2)).unwrap();
        let b = simulate_agents(&p, &SystemState::initial(&p), stop, &mut stream(11, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_outflow_start_emits_nothing() {
        let p = base();
        let s = SystemState::consensus(&p, 2);
        let t = simulate_ctmc(&p, &s, StopRule::until(10.0, 10), &mut stream(0, 0)).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.terminal, TerminalReason::Absorbed(2));
        let t = simulate_agents(&p, &s, StopRule::until(10.0, 10), &mut stream(0, 0)).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.terminal, TerminalReason::Absorbed(2));
    }

    #[test]
    fn consensus_agent_never_changes() {
        // N e^k: every wake-up copies k, so memory never moves.
        let p = ModelParams::new(8, 3, 1.0, 0.5, vec![0.2, 0.9, 0.4]).unwrap();
        let s = SystemState::consensus(&p, 3);
        let t = simulate_agents(&p, &s, StopRule::until(100.0, 100), &mut stream(5, 0)).unwrap();
        assert!(t.events.is_empty());
    }

    #[test]
    fn event_cap_is_reported() {
        let p = base();
        let t = simulate_ctmc(&p, &SystemState::initial(&p), StopRule::absorption(7), &mut stream(1, 0)).unwrap();
        assert_eq!(t.events.len(), 7);
        assert_eq!(t.terminal, TerminalReason::EventCap);
        assert!(simulate_ctmc(&p, &SystemState::initial(&p), StopRule::absorption(0), &mut stream(1, 0)).is_err());
    }

    #[test]
    fn time_limit_respected() {
        let p = base();
        let t = simulate_agents(&p, &SystemState::initial(&p), StopRule::until(2.0, 1 << 30), &mut stream(9, 0))
            .unwrap();
        assert_eq!(t.terminal, TerminalReason::TimeLimit);
        assert!(t.last_time() <= 2.0);
    }

    #[test]
    fn grid_sampling_is_right_continuous() {
        let p = small_base();
        let trace = EventTrace {
            initial: SystemState::initial(&p),
            events: vec![
                Event { time: 0.5, dir: TransitionDirection::Birth { arm: 1 } },
                Event { time: 1.0, dir: TransitionDirection::Birth { arm: 2 } },
            ],
            terminal: TerminalReason::TimeLimit,
        };
        let g = trace.counts_on_grid(&[0.0, 0.5, 0.9, 1.0, 3.0]).unwrap();
        assert_eq!(g, vec![vec![10, 0, 0], vec![9, 1, 0], vec![9, 1, 0], vec![8, 1, 1], vec![8, 1, 1]]);
    }

    #[test]
    fn csv_round_trip() {
        let p = base();
        let t = simulate_ctmc(&p, &SystemState::initial(&p), StopRule::until(3.0, 1000), &mut stream(2, 0)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("event_index,time,kind,from_class,to_class\n"));
        let back = EventTrace::read_csv(t.initial.clone(), t.terminal, buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }
}
