use serde::{Deserialize, Serialize};
use serde_json::json;

use super::output::{EstimateRecord, ExperimentOutput, Table};
use super::stats::{chi_square_gof, mean_ci, wilson, ChiSquareTest, Estimate};
use super::{run_trials, ExperimentConfig};
use crate::bounds::{
    deviation_bound, gambler_exact, theorem1_bound, theorem2_constants, BoundsInputs, BoundsReport, LowerBound,
};
use crate::ctmc::{simulate_agents, simulate_ctmc, EventTrace, SimMode, StopRule, TerminalReason, TraceHeader};
use crate::error::{Error, Result};
use crate::jumpchain::{
    couple, eta, eta_meets_bound, extract_best_arm_walk, extract_jump_chain, standard_walk_absorption,
};
use crate::meanfield::{
    convergence_rate, integrate, tail_log_slope, write_simplex_csv, y0_envelope, OdeTrajectory,
};
use crate::model::{l2_distance, simplex_deviation, ModelParams, SystemState};
use crate::rng::stream;

const CONFIDENCE: f64 = 0.95;
const WALK_CONFIDENCE: f64 = 0.99;
/// Share of event-capped runs above which a warning is attached.
const CAP_WARN_FRACTION: f64 = 0.01;

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn simplex_table(name: impl Into<String>, times: &[f64], points: &[Vec<f64>]) -> Result<Table> {
    let mut csv = Vec::new();
    write_simplex_csv(&mut csv, times, points)?;
    Ok(Table { name: name.into(), csv })
}

fn theorem1_or_none(params: &ModelParams, delta: f64) -> Result<Option<LowerBound>> {
    match theorem1_bound(params, delta) {
        Ok(b) => Ok(Some(b)),
        Err(Error::SecondBestZero) => Ok(None),
        Err(e) => Err(e),
    }
}

fn cap_warning(capped: u64, trials: u64) -> Option<String> {
    let frac = capped as f64 / trials as f64;
    (frac > CAP_WARN_FRACTION).then(|| format!("{capped} of {trials} runs hit the event cap"))
}

/// Uniform grid on `[0, end]` with spacing at most `step`, same layout as the ODE grid.
fn uniform_grid(end: f64, step: f64) -> Vec<f64> {
    if end <= 0.0 {
        return vec![0.0];
    }
    let n = (end / step - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|i| i as f64 * (end / n as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    /// Frequency of absorption at the best arm among absorbed runs.
    pub success: Estimate,
    pub absorbed_best: u64,
    pub absorbed_other: u64,
    pub capped: u64,
    pub warning: Option<String>,
    pub delta: f64,
    /// `None` when the second-best mean is zero.
    pub theorem1: Option<LowerBound>,
}

impl SuccessReport {
    pub fn to_output(&self, config: &ExperimentConfig) -> ExperimentOutput {
        let mut rec = EstimateRecord::new(config, "success", &self.success);
        if let Some(b) = self.theorem1 {
            rec = rec.with_bound(b.value, b.vacuous);
        }
        let mut out = ExperimentOutput::new(serde_json::to_value(self).expect("plain data"));
        out.estimates.push(rec);
        out
    }
}

fn success_run(params: &ModelParams, config: &ExperimentConfig, stream_offset: u64) -> Result<SuccessReport> {
    let trials = config.trials();
    let cap = config.event_cap.unwrap_or(params.default_event_cap());
    let initial = SystemState::initial(params);
    let best = params.best_arm();
    let terminals = run_trials(trials, config.workers, |i| {
        let mut rng = stream(config.master_seed, stream_offset + i);
        Ok(simulate_ctmc(params, &initial, StopRule::absorption(cap), &mut rng)?.terminal)
    })?;
    let (mut good, mut bad, mut capped) = (0, 0, 0);
    for t in terminals {
        match t {
            TerminalReason::Absorbed(arm) if arm == best => good += 1,
            TerminalReason::Absorbed(_) => bad += 1,
            _ => capped += 1,
        }
    }
    Ok(SuccessReport {
        success: wilson(good, good + bad, CONFIDENCE),
        absorbed_best: good,
        absorbed_other: bad,
        capped,
        warning: cap_warning(capped, trials),
        delta: config.delta,
        theorem1: theorem1_or_none(params, config.delta)?,
    })
}

/// Runs trials to absorption and estimates the probability of consensus on
/// the best arm.
pub fn estimate_success(config: &ExperimentConfig) -> Result<SuccessReport> {
    success_run(&config.params, config, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// Mean over trials of `sup_t |Y^N(t) - Y(t)|` on the ODE grid.
    pub mean_sup: Estimate,
    /// Frequency of `sup >= eps'`.
    pub exceedance: Estimate,
    pub eps_prime: f64,
    pub bound: f64,
    pub vacuous: bool,
    /// Largest deviation at `t = 0` over all trials.
    pub deviation_at_zero: f64,
    pub horizon: f64,
    pub step_size: f64,
    pub capped: u64,
    pub sups: Vec<f64>,
}

/// Sup-norm distance between simulated scaled paths and the ODE solution.
pub fn estimate_deviation(config: &ExperimentConfig) -> Result<(DeviationReport, ExperimentOutput)> {
    let params = &config.params;
    let horizon = config.horizon();
    let ode = integrate(params, horizon, config.ode_step())?;
    let initial = SystemState::initial(params);
    let cap = config.event_cap();
    let runs = run_trials(config.trials(), config.workers, |i| {
        let mut rng = stream(config.master_seed, i);
        let trace = simulate_ctmc(params, &initial, StopRule::until(horizon, cap), &mut rng)?;
        let path = trace.scaled_on_grid(&ode.times)?;
        let dists: Vec<f64> = path.iter().zip(&ode.points).map(|(a, b)| l2_distance(a, b)).collect();
        let sup = dists.iter().copied().fold(0.0, f64::max);
        Ok((sup, dists[0], trace.terminal == TerminalReason::EventCap))
    })?;
    let sups: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let at_zero = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    let capped = runs.iter().filter(|r| r.2).count() as u64;
    let exceed = sups.iter().filter(|&&s| s >= config.eps_prime).count() as u64;
    let bound = deviation_bound(params, horizon, config.eps_prime);
    let report = DeviationReport {
        mean_sup: mean_ci(&sups, CONFIDENCE),
        exceedance: wilson(exceed, sups.len() as u64, CONFIDENCE),
        eps_prime: config.eps_prime,
        bound,
        vacuous: bound >= 1.0,
        deviation_at_zero: at_zero,
        horizon,
        step_size: ode.step_size,
        capped,
        sups,
    };
    let mut out = ExperimentOutput::new(to_value(&json!({
        "mean_sup": report.mean_sup,
        "exceedance": report.exceedance,
        "eps_prime": report.eps_prime,
        "bound": report.bound,
        "vacuous": report.vacuous,
        "deviation_at_zero": report.deviation_at_zero,
        "horizon": report.horizon,
        "step_size": report.step_size,
        "capped": report.capped,
        "warning": cap_warning(capped, config.trials()),
    }))?);
    out.estimates.push(EstimateRecord::new(config, "mean_sup_deviation", &report.mean_sup));
    out.estimates
        .push(EstimateRecord::new(config, "exceedance", &report.exceedance).with_bound(bound, report.vacuous));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "sup_deviation"])?;
    for (i, s) in report.sups.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string()])?;
    }
    out.tables.push(Table {
        name: "deviation_trials".into(),
        csv: w.into_inner().map_err(|e| e.into_error())?,
    });
    if at_zero != 0.0 {
        out.failures.push(format!("deviation at t = 0 is {at_zero}, expected 0"));
    }
    Ok((report, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkReport {
    /// Up-move frequency of the best-arm walk over moves from `(0, N)`.
    pub up_frequency: Estimate,
    /// `p1 / (p1 + p2)`.
    pub target: f64,
    pub ups: u64,
    pub downs: u64,
    pub runs: u64,
    pub capped: u64,
    /// Smallest exact eta over visited pre-jump states.
    pub eta_min: f64,
    pub eta_visits: u64,
    pub eta_violations: u64,
    /// `ci_low >= target - 0.01`.
    pub meets_bound: bool,
}

impl WalkReport {
    pub fn to_output(&self, config: &ExperimentConfig) -> ExperimentOutput {
        let mut out = ExperimentOutput::new(serde_json::to_value(self).expect("plain data"));
        out.estimates.push(
            EstimateRecord::new(config, "up_move_frequency", &self.up_frequency).with_bound(self.target, false),
        );
        if self.eta_violations > 0 {
            out.failures.push(format!("{} visited states have eta below p1/(p1+p2)", self.eta_violations));
        }
        out
    }
}

/// Pools the conditioned moves of the best-arm walk over trials run to absorption.
pub fn verify_walk(config: &ExperimentConfig) -> Result<WalkReport> {
    let params = &config.params;
    let n = params.n_agents();
    let best = params.best_arm();
    let initial = SystemState::initial(params);
    let cap = config.event_cap();
    let runs = run_trials(config.trials(), config.workers, |i| {
        let mut rng = stream(config.master_seed, i);
        let trace = simulate_ctmc(params, &initial, StopRule::absorption(cap), &mut rng)?;
        let walk = extract_best_arm_walk(&extract_jump_chain(&trace)?, best);
        let (mut ups, mut downs, mut bad) = (0u64, 0u64, 0u64);
        let mut eta_min = f64::INFINITY;
        for (_, up, state) in walk.conditioned_moves(n) {
            if up {
                ups += 1;
            } else {
                downs += 1;
            }
            let e = eta(params, state)?;
            eta_min = eta_min.min(e);
            if !eta_meets_bound(params, e) {
                bad += 1;
            }
        }
        Ok((ups, downs, bad, eta_min, trace.terminal == TerminalReason::EventCap))
    })?;
    let ups = runs.iter().map(|r| r.0).sum();
    let downs = runs.iter().map(|r| r.1).sum();
    let est = wilson(ups, ups + downs, WALK_CONFIDENCE);
    let target = params.walk_up_prob();
    Ok(WalkReport {
        up_frequency: est,
        target,
        ups,
        downs,
        runs: runs.len() as u64,
        capped: runs.iter().filter(|r| r.4).count() as u64,
        eta_min: runs.iter().map(|r| r.3).fold(f64::INFINITY, f64::min),
        eta_visits: ups + downs,
        eta_violations: runs.iter().map(|r| r.2).sum(),
        meets_bound: est.ci_low >= target - 0.01,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub runs: u64,
    pub capped: u64,
    pub min_margin: i64,
    /// Up/down steps of the coupled walk while strictly inside `(0, N)`.
    pub hat_ups: u64,
    pub hat_downs: u64,
    pub hat_up_frequency: Estimate,
    pub step_test: ChiSquareTest,
    pub w_success: Estimate,
    pub hat_success: Estimate,
    /// Mean of the exact absorption probability over the observed starting points.
    pub hat_expected: Option<f64>,
    pub hat_standard_error: Option<f64>,
    pub hat_z_score: Option<f64>,
    pub ordering_holds: bool,
}

struct CoupledRun {
    w_success: bool,
    z0: u32,
    hat_final: u32,
    margin: i64,
    ups: u64,
    downs: u64,
    capped: bool,
    csv: Option<Vec<u8>>,
}

/// Couples the best-arm walk of each trial with a standard biased walk and
/// checks dominance, the step law and the absorption frequency.
pub fn verify_coupling(config: &ExperimentConfig) -> Result<(CouplingReport, ExperimentOutput)> {
    let params = &config.params;
    let n = params.n_agents();
    let best = params.best_arm();
    let initial = SystemState::initial(params);
    let cap = config.event_cap();
    let tc = config.coupling_start();
    let runs = run_trials(config.trials(), config.workers, |i| {
        let mut rng = stream(config.master_seed, i);
        let trace = simulate_ctmc(params, &initial, StopRule::absorption(cap), &mut rng)?;
        let walk = extract_best_arm_walk(&extract_jump_chain(&trace)?, best);
        let pair = couple(params, &walk, tc, &mut rng)?;
        let margin = pair.dominance_margin();
        if margin < 0 {
            return Err(Error::DominanceViolated { trial: i, margin });
        }
        let (ups, downs) = pair.hat_step_counts();
        let last = *pair.w_hat.last().expect("non-empty");
        // W absorbed at N before W_hat; finish W_hat on its own.
        let hat_final = standard_walk_absorption(params, last, n, &mut rng)?;
        let csv = if i == 0 {
            let mut buf = Vec::new();
            pair.write_csv(&mut buf)?;
            Some(buf)
        } else {
            None
        };
        Ok(CoupledRun {
            w_success: trace.terminal == TerminalReason::Absorbed(best),
            z0: pair.w_hat[0],
            hat_final,
            margin,
            ups,
            downs,
            capped: trace.terminal == TerminalReason::EventCap,
            csv,
        })
    })?;
    let total = runs.len() as u64;
    let hat_ups: u64 = runs.iter().map(|r| r.ups).sum();
    let hat_downs: u64 = runs.iter().map(|r| r.downs).sum();
    let up = params.walk_up_prob();
    let w_wins = runs.iter().filter(|r| r.w_success).count() as u64;
    let hat_wins = runs.iter().filter(|r| r.hat_final == n).count() as u64;
    let w_success = wilson(w_wins, total, CONFIDENCE);
    let hat_success = wilson(hat_wins, total, CONFIDENCE);

    let exact: Option<Vec<f64>> = match runs.iter().map(|r| gambler_exact(params, r.z0, n)).collect() {
        Ok(v) => Some(v),
        Err(Error::SecondBestZero) => None,
        Err(e) => return Err(e),
    };
    let (expected, se, z) = match exact {
        Some(g) => {
            let mean = g.iter().sum::<f64>() / total as f64;
            let se = g.iter().map(|p| p * (1.0 - p)).sum::<f64>().sqrt() / total as f64;
            let z = if se > 0.0 { (hat_success.point - mean) / se } else { 0.0 };
            (Some(mean), Some(se), Some(z))
        }
        None => (None, None, None),
    };
    let report = CouplingReport {
        runs: total,
        capped: runs.iter().filter(|r| r.capped).count() as u64,
        min_margin: runs.iter().map(|r| r.margin).min().unwrap_or(0),
        hat_ups,
        hat_downs,
        hat_up_frequency: wilson(hat_ups, hat_ups + hat_downs, CONFIDENCE),
        step_test: chi_square_gof(&[hat_ups, hat_downs], &[up, 1.0 - up]),
        w_success,
        hat_success,
        hat_expected: expected,
        hat_standard_error: se,
        hat_z_score: z,
        ordering_holds: w_wins >= hat_wins,
    };
    let mut out = ExperimentOutput::new(to_value(&report)?);
    out.estimates.push(EstimateRecord::new(config, "w_absorbed_at_n", &w_success));
    let mut hat = EstimateRecord::new(config, "w_hat_absorbed_at_n", &hat_success);
    hat.bound = expected;
    out.estimates.push(hat);
    out.estimates.push(
        EstimateRecord::new(config, "w_hat_up_frequency", &report.hat_up_frequency).with_bound(up, false),
    );
    if let Some(csv) = runs.into_iter().next().and_then(|r| r.csv) {
        out.tables.push(Table {
            name: "coupled_walk_0".into(),
            csv,
        });
    }
    if !report.ordering_holds {
        out.failures.push("W reached N less often than the coupled walk".into());
    }
    Ok((report, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub horizon: f64,
    pub step_size: f64,
    pub rate_r: f64,
    pub t_bar: f64,
    pub eps_prime: f64,
    pub c0: f64,
    pub c1: f64,
    /// `1 - C0 exp(-N C1)`; the guarantee is vacuous when this is not positive.
    pub guarantee: f64,
    pub vacuous: bool,
    /// First grid time with `Y_best >= 0.9`, per simulated path.
    pub sim_crossing_0_9: Vec<Option<f64>>,
    pub ode_crossing_0_9: Option<f64>,
    /// Largest `|sum_k Y_k^N(t) - 1|` over all sampled rows.
    pub max_row_sum_error: f64,
}

fn crossing(times: &[f64], points: &[Vec<f64>], arm: usize, level: f64) -> Option<f64> {
    times.iter().zip(points).find(|(_, y)| y[arm] >= level).map(|(t, _)| *t)
}

/// Simulated and mean-field trajectories on a shared grid, with the
/// per-time bound curve `exp(-t R) + eps'` for `t >= t_bar(c)`.
pub fn run_trajectory(config: &ExperimentConfig) -> Result<(TrajectoryReport, ExperimentOutput)> {
    let params = &config.params;
    let horizon = config.horizon();
    let ode = integrate(params, horizon, config.ode_step())?;
    let t2 = theorem2_constants(params, horizon, config.eps_prime)?;
    let t_bar = t2.t_bar(config.c);
    let best = params.best_arm();
    let initial = SystemState::initial(params);
    let cap = config.event_cap();
    let paths = run_trials(config.trials(), config.workers, |i| {
        let mut rng = stream(config.master_seed, i);
        simulate_ctmc(params, &initial, StopRule::until(horizon, cap), &mut rng)?.scaled_on_grid(&ode.times)
    })?;

    let width = (paths.len().saturating_sub(1)).to_string().len();
    let mut tables = vec![simplex_table("trajectory_ode", &ode.times, &ode.points)?];
    for (i, p) in paths.iter().enumerate() {
        tables.push(simplex_table(format!("trajectory_sim_{i:0width$}"), &ode.times, p)?);
    }
    tables.push(bound_curve(params, &ode, &paths[0], t2.rate, config.eps_prime, t_bar)?);

    let guarantee = 1.0 - t2.c0 * (-(f64::from(params.n_agents())) * t2.c1).exp();
    let max_row_sum_error = paths.iter().flatten().map(|y| simplex_deviation(y)).fold(0.0, f64::max);
    let report = TrajectoryReport {
        horizon,
        step_size: ode.step_size,
        rate_r: t2.rate,
        t_bar,
        eps_prime: config.eps_prime,
        c0: t2.c0,
        c1: t2.c1,
        guarantee,
        vacuous: guarantee <= 0.0,
        sim_crossing_0_9: paths.iter().map(|p| crossing(&ode.times, p, best, 0.9)).collect(),
        ode_crossing_0_9: crossing(&ode.times, &ode.points, best, 0.9),
        max_row_sum_error,
    };
    let mut out = ExperimentOutput::new(to_value(&report)?);
    out.tables = tables;
    if max_row_sum_error > 1e-12 {
        out.failures.push(format!("simulated rows leave the simplex by {max_row_sum_error}"));
    }
    Ok((report, out))
}

fn bound_curve(
    params: &ModelParams,
    ode: &OdeTrajectory,
    sim: &[Vec<f64>],
    rate: f64,
    eps: f64,
    t_bar: f64,
) -> Result<Table> {
    let best = params.best_arm();
    let others: Vec<usize> = (1..=params.n_arms()).filter(|&k| k != best).collect();
    let ode_gap = ode.gap(best);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "bound".into(), "ode_gap".into(), "sim_gap".into()];
    header.extend(others.iter().map(|k| format!("sim_y{k}")));
    w.write_record(&header)?;
    for (i, &t) in ode.times.iter().enumerate() {
        if t < t_bar {
            continue;
        }
        let y = &sim[i];
        let gap: f64 = y.iter().enumerate().filter(|&(k, _)| k != best).map(|(_, v)| v).sum();
        let mut rec = vec![
            t.to_string(),
            ((-t * rate).exp() + eps).to_string(),
            ode_gap[i].to_string(),
            gap.to_string(),
        ];
        rec.extend(others.iter().map(|&k| y[k].to_string()));
        w.write_record(&rec)?;
    }
    Ok(Table {
        name: "theorem2_bound".into(),
        csv: w.into_inner().map_err(|e| e.into_error())?,
    })
}

/// Closed-form bounds at the configured parameters.
pub fn run_bounds(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let inputs = BoundsInputs {
        delta: config.delta,
        c: config.c,
        horizon: config.horizon(),
        eps_prime: config.eps_prime,
    };
    let report = BoundsReport::evaluate(&config.params, inputs)?;
    Ok(ExperimentOutput::new(json!({
        "params": config.params,
        "bounds": report,
    })))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuSweepRow {
    pub mu: f64,
    pub success: Estimate,
    pub capped: u64,
    pub rate_r: f64,
    pub t_bar: f64,
    pub theorem1: Option<LowerBound>,
}

/// Success probability, convergence rate and warm-up time as functions of mu.
/// Sweep point `j` uses streams `j * trials ..`.
pub fn mu_sweep(config: &ExperimentConfig) -> Result<(Vec<MuSweepRow>, ExperimentOutput)> {
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for (j, &mu) in config.mu_values().iter().enumerate() {
        let params = config.params.with_explore_prob(mu)?;
        let s = success_run(&params, config, j as u64 * config.trials())?;
        let r = convergence_rate(&params);
        let mut rec = EstimateRecord::new(config, format!("success_mu_{mu}"), &s.success).with_params(&params);
        if let Some(b) = s.theorem1 {
            rec = rec.with_bound(b.value, b.vacuous);
        }
        estimates.push(rec);
        rows.push(MuSweepRow {
            mu,
            success: s.success,
            capped: s.capped,
            rate_r: r.rate,
            t_bar: r.t_bar(config.c),
            theorem1: s.theorem1,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mu", "point", "ci_low", "ci_high", "n", "capped", "rate_r", "t_bar", "theorem1_lower", "vacuous",
    ])?;
    for r in &rows {
        w.write_record([
            r.mu.to_string(),
            r.success.point.to_string(),
            r.success.ci_low.to_string(),
            r.success.ci_high.to_string(),
            r.success.n.to_string(),
            r.capped.to_string(),
            r.rate_r.to_string(),
            r.t_bar.to_string(),
            r.theorem1.map(|b| b.value.to_string()).unwrap_or_default(),
            r.theorem1.map(|b| b.vacuous.to_string()).unwrap_or_default(),
        ])?;
    }
    let mut out = ExperimentOutput::new(json!({ "delta": config.delta, "c": config.c, "rows": rows }));
    out.estimates = estimates;
    out.tables.push(Table {
        name: "mu_sweep".into(),
        csv: w.into_inner().map_err(|e| e.into_error())?,
    });
    Ok((rows, out))
}

/// One trace from the all-NULL start: events, header and the scaled path.
/// Runs to absorption unless a horizon is configured.
pub fn run_simulate(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = &config.params;
    let initial = SystemState::initial(params);
    let cap = config.event_cap();
    let stop = match config.horizon {
        Some(h) => StopRule::until(h, cap),
        None => StopRule::absorption(cap),
    };
    let mode = config.sim_mode();
    let mut rng = stream(config.master_seed, 0);
    let trace: EventTrace = match mode {
        SimMode::Ctmc => simulate_ctmc(params, &initial, stop, &mut rng)?,
        SimMode::Agents => simulate_agents(params, &initial, stop, &mut rng)?,
    };
    let header = TraceHeader {
        params: params.clone(),
        seed: config.master_seed,
        stream: 0,
        mode,
        terminal_reason: trace.terminal,
        initial: initial.clone(),
        n_events: trace.events.len(),
    };
    let end = config.horizon.unwrap_or(trace.last_time());
    let grid = uniform_grid(end, config.ode_step());
    let path = trace.scaled_on_grid(&grid)?;
    let mut events = Vec::new();
    trace.write_csv(&mut events)?;
    let mut out = ExperimentOutput::new(to_value(&header)?);
    out.tables.push(Table {
        name: "events".into(),
        csv: events,
    });
    out.tables.push(simplex_table("path", &grid, &path)?);
    Ok(out)
}

/// Integrates the mean-field ODE and reports convergence diagnostics.
pub fn run_ode(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = &config.params;
    let traj = integrate(params, config.horizon(), config.ode_step())?;
    let best = params.best_arm();
    let r = convergence_rate(params);
    let t_bar = r.t_bar(config.c);
    let envelope_excess = traj
        .times
        .iter()
        .zip(&traj.points)
        .map(|(&t, y)| y[0] - y0_envelope(params, t))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = ExperimentOutput::new(json!({
        "horizon": traj.horizon(),
        "step_size": traj.step_size,
        "endpoint": traj.endpoint(),
        "gap_at_horizon": traj.gap(best).last(),
        "rate_r": r.rate,
        "t_bar": t_bar,
        "tail_log_slope": tail_log_slope(&traj, best, t_bar),
        "y0_envelope_max_excess": envelope_excess,
    }));
    out.tables.push(simplex_table("ode", &traj.times, &traj.points)?);
    Ok(out)
}
