//! Deterministic mean-field limit `dY/dt = F(Y)` on the simplex.
//!
//! `F` is available in two algebraically equivalent forms: [`drift`] sums
//! `l * f(x, l)` over the transition directions, and [`vector_field`]
//! evaluates the expanded per-coordinate formulas. The integrator uses the
//! expanded form; tests hold the two against each other.

use std::io;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{l2_distance, simplex_deviation, ModelParams, ScaledState, TransitionDirection, ODE_SIMPLEX_TOL};
use crate::rng::stream;

/// Simplex violation tolerated by [`integrate`] before the step is halved.
pub const STEP_EXIT_TOL: f64 = 1e-6;
/// Number of times [`integrate`] halves the step before giving up.
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEval {
    pub input: ScaledState,
    pub output: Vec<f64>,
    pub per_direction: Vec<(TransitionDirection, f64)>,
}

/// Intensity of each direction at `x`, assembled into `F(x)`.
pub fn drift(params: &ModelParams, x: &ScaledState) -> Result<DriftEval> {
    let xs = x.as_slice();
    if xs.len() != params.n_arms() + 1 {
        return Err(Error::InvalidState(format!(
            "point has {} coordinates, model needs {}",
            xs.len(),
            params.n_arms() + 1
        )));
    }
    let dev = simplex_deviation(xs);
    if dev > ODE_SIMPLEX_TOL {
        return Err(Error::OffSimplex(dev));
    }
    let k_arms = params.n_arms();
    let lambda = params.clock_rate();
    let mu = params.explore_prob();
    let mut per_direction = Vec::with_capacity(k_arms * k_arms);
    for k in 1..=k_arms {
        let pk = params.mean(k);
        per_direction.push((
            TransitionDirection::Birth { arm: k },
            lambda * xs[0] * (mu / k_arms as f64 + (1.0 - mu) * xs[k]) * pk,
        ));
        for from in (1..=k_arms).filter(|&j| j != k) {
            per_direction.push((TransitionDirection::Swap { from, to: k }, lambda * xs[from] * xs[k] * pk));
        }
    }
    let mut output = vec![0.0; k_arms + 1];
    for &(dir, f) in &per_direction {
        output[dir.source()] -= f;
        output[dir.target()] += f;
    }
    Ok(DriftEval {
        input: x.clone(),
        output,
        per_direction,
    })
}

/// Expanded form of `F`:
///
/// ```text
/// F_0 = -Y_0 lambda mu/K sum_k p_k - Y_0 lambda sum_k (1-mu) p_k Y_k
/// F_k =  Y_0 lambda mu/K p_k + Y_k lambda ((1-mu) p_k Y_0 + sum_j (p_k - p_j) Y_j)
/// ```
///
/// No simplex check; intermediate integrator stages may sit slightly off it.
pub fn vector_field(params: &ModelParams, y: &[f64], out: &mut [f64]) {
    let k_arms = params.n_arms();
    let lambda = params.clock_rate();
    let mu = params.explore_prob();
    let explore = mu / k_arms as f64;
    let mut sum_p = 0.0;
    let mut social = 0.0;
    let mut mean_payoff = 0.0;
    for j in 1..=k_arms {
        let pj = params.mean(j);
        sum_p += pj;
        social += (1.0 - mu) * pj * y[j];
        mean_payoff += pj * y[j];
    }
    out[0] = -y[0] * lambda * explore * sum_p - y[0] * lambda * social;
    let mass: f64 = y[1..].iter().sum();
    for k in 1..=k_arms {
        let pk = params.mean(k);
        // sum_j (p_k - p_j) Y_j = p_k sum_j Y_j - sum_j p_j Y_j
        let advantage = pk * mass - mean_payoff;
        out[k] = y[0] * lambda * explore * pk + y[k] * lambda * ((1.0 - mu) * pk * y[0] + advantage);
    }
}

/// Solution of the mean-field ODE on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub step_size: f64,
}

impl OdeTrajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.points.last().expect("trajectory has at least one point")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// `1 - Y_arm(t)` computed as the mass outside `arm`, which keeps relative
    /// precision when `Y_arm` is close to 1.
    pub fn gap(&self, arm: usize) -> Vec<f64> {
        self.points
            .iter()
            .map(|y| y.iter().enumerate().filter(|&(i, _)| i != arm).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        write_simplex_csv(writer, &self.times, &self.points)
    }
}

/// Writes rows `(t, y0, .., yK)`.
pub fn write_simplex_csv<W: io::Write>(writer: W, times: &[f64], points: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let k = points.first().map_or(0, |p| p.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|i| format!("y{i}")));
    out.write_record(&header)?;
    for (t, y) in times.iter().zip(points) {
        let mut rec = Vec::with_capacity(k + 1);
        rec.push(t.to_string());
        rec.extend(y.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Default step `0.01 / lambda`.
pub fn default_step(params: &ModelParams) -> f64 {
    0.01 / params.clock_rate()
}

/// Classical fixed-step RK4 from `Y(0) = [1, 0, .., 0]` over `[0, horizon]`.
///
/// The requested step is shrunk so that an integer number of steps lands on
/// `horizon` exactly. If the state leaves the simplex by more than
/// [`STEP_EXIT_TOL`] the whole integration is retried with half the step.
/// The state is never projected back onto the simplex.
pub fn integrate(params: &ModelParams, horizon: f64, step: f64) -> Result<OdeTrajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::out_of_range("horizon", format!("{horizon} is not positive")));
    }
    if !(step > 0.0 && step <= horizon) {
        return Err(Error::out_of_range("step", format!("{step} not in (0, {horizon}]")));
    }
    let mut h = step;
    for _ in 0..=MAX_HALVINGS {
        if let Some(traj) = try_integrate(params, horizon, h) {
            return Ok(traj);
        }
        h /= 2.0;
    }
    Err(Error::StepTooLarge(h * 2.0))
}

fn try_integrate(params: &ModelParams, horizon: f64, step: f64) -> Option<OdeTrajectory> {
    let n_steps = (horizon / step - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / n_steps as f64;
    let dim = params.n_arms() + 1;
    let mut y = ScaledState::origin(params.n_arms()).into_vec();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut points = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    points.push(y.clone());
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    for i in 1..=n_steps {
        vector_field(params, &y, &mut k1);
        for d in 0..dim {
            tmp[d] = y[d] + 0.5 * h * k1[d];
        }
        vector_field(params, &tmp, &mut k2);
        for d in 0..dim {
            tmp[d] = y[d] + 0.5 * h * k2[d];
        }
        vector_field(params, &tmp, &mut k3);
        for d in 0..dim {
            tmp[d] = y[d] + h * k3[d];
        }
        vector_field(params, &tmp, &mut k4);
        for d in 0..dim {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        if !y.iter().all(|v| v.is_finite()) || simplex_deviation(&y) > STEP_EXIT_TOL {
            return None;
        }
        times.push(i as f64 * h);
        points.push(y.clone());
    }
    Some(OdeTrajectory {
        times,
        points,
        step_size: h,
    })
}

/// `exp(-lambda mu/K sum_k p_k t)`, an upper bound on `Y_0(t)`.
pub fn y0_envelope(params: &ModelParams, t: f64) -> f64 {
    (-params.uniform_discovery_rate() * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRate {
    /// `R = min{lambda (p1 - p2), lambda (mu/K + 1 - mu) p1}`.
    pub rate: f64,
    /// `lambda mu/K sum_k p_k`.
    pub discovery_rate: f64,
}

impl ConvergenceRate {
    /// Warm-up time `log(1/c) / (lambda mu/K sum_k p_k)` after which the rate applies.
    pub fn t_bar(&self, c: f64) -> f64 {
        (1.0 / c).ln() / self.discovery_rate
    }
}

pub fn convergence_rate(params: &ModelParams) -> ConvergenceRate {
    let lambda = params.clock_rate();
    let mu = params.explore_prob();
    let p1 = params.best_mean();
    let gap = lambda * (p1 - params.second_mean());
    let social = lambda * (mu / params.n_arms() as f64 + (1.0 - mu)) * p1;
    ConvergenceRate {
        rate: gap.min(social),
        discovery_rate: params.uniform_discovery_rate(),
    }
}

/// Least-squares slope of `log(1 - Y_arm(t))` over grid points with `t >= from`.
pub fn tail_log_slope(traj: &OdeTrajectory, arm: usize, from: f64) -> Option<f64> {
    let gap = traj.gap(arm);
    let (xs, ys): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&gap)
        .filter(|&(&t, &g)| t >= from && g > 0.0)
        .map(|(&t, &g)| (t, g.ln()))
        .unzip();
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub empirical_sup: f64,
    /// `lambda (5 + sqrt(K))`.
    pub bound: f64,
    pub pairs_used: u64,
}

/// `lambda (5 + sqrt(K))`.
pub fn lipschitz_bound(params: &ModelParams) -> f64 {
    params.clock_rate() * (5.0 + (params.n_arms() as f64).sqrt())
}

/// Uniform point on the simplex via normalised exponentials.
pub fn sample_simplex<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Largest observed `|F(x) - F(y)| / |x - y|` over `n_pairs` uniform pairs.
/// Identical pairs are skipped.
pub fn lipschitz_check(params: &ModelParams, n_pairs: u64, seed: u64) -> LipschitzReport {
    let dim = params.n_arms() + 1;
    let mut rng = stream(seed, 0);
    let (mut fx, mut fy) = (vec![0.0; dim], vec![0.0; dim]);
    let mut sup = 0.0_f64;
    let mut used = 0;
    for _ in 0..n_pairs {
        let x = sample_simplex(dim, &mut rng);
        let y = sample_simplex(dim, &mut rng);
        let dist = l2_distance(&x, &y);
        if dist == 0.0 {
            continue;
        }
        vector_field(params, &x, &mut fx);
        vector_field(params, &y, &mut fy);
        sup = sup.max(l2_distance(&fx, &fy) / dist);
        used += 1;
    }
    LipschitzReport {
        empirical_sup: sup,
        bound: lipschitz_bound(params),
        pairs_used: used,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> ModelParams {
        ModelParams::new(200, 2, 1.0, 0.2, vec![0.8, 0.4]).unwrap()
    }

    fn point(v: &[f64]) -> ScaledState {
        ScaledState::new(v.to_vec(), 1e-12).unwrap()
    }

    #[test]
    fn equilibrium_has_zero_drift() {
        let p = base();
        let d = drift(&p, &ScaledState::vertex(2, 1)).unwrap();
        assert!(d.output.iter().all(|&v| v == 0.0));
        let mut out = [1.0; 3];
        vector_field(&p, &[0.0, 1.0, 0.0], &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn drift_at_origin() {
        let p = ModelParams::new(10, 3, 2.0, 0.6, vec![0.5, 0.9, 0.2]).unwrap();
        let d = drift(&p, &ScaledState::origin(3)).unwrap();
        let c = 2.0 * 0.6 / 3.0;
        assert!((d.output[0] + c * 1.6).abs() < 1e-15);
        for k in 1..=3 {
            assert!((d.output[k] - c * p.mean(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn two_drift_forms_agree_at_reference_point() {
        let p = base();
        let x = point(&[0.2, 0.5, 0.3]);
        let d = drift(&p, &x).unwrap();
        let mut closed = [0.0; 3];
        vector_field(&p, x.as_slice(), &mut closed);
        for (a, b) in d.output.iter().zip(closed) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        // hand evaluation: F_1 = 0.2*0.1*0.8 + 0.5*(0.8*0.8*0.2 + 0.4*0.3) = 0.14
        assert!((closed[1] - 0.14).abs() < 1e-14);
    }

    #[test]
    fn off_simplex_rejected() {
        let p = base();
        let bad = ScaledState::new(vec![0.5, 0.5, 0.5], 1.0).unwrap();
        assert!(matches!(drift(&p, &bad), Err(Error::OffSimplex(_))));
    }

    #[test]
    fn envelope_values() {
        let p = base();
        assert_eq!(y0_envelope(&p, 0.0), 1.0);
        assert!((y0_envelope(&p, 10.0) - (-1.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rate_and_warmup() {
        let r = convergence_rate(&base());
        assert!((r.rate - 0.4).abs() < 1e-15);
        assert_eq!(r.t_bar(1.0), 0.0);
        assert!((r.t_bar(0.5) - 2f64.ln() / 0.12).abs() < 1e-12);
        assert!((r.t_bar(0.5) - 5.776).abs() < 1e-3);
    }

    #[test]
    fn trajectory_basics() {
        let p = base();
        let traj = integrate(&p, 60.0, default_step(&p)).unwrap();
        assert_eq!(traj.points[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(traj.times.len(), 6001);
        assert!((traj.horizon() - 60.0).abs() < 1e-12);
        assert!(traj.endpoint()[1] >= 0.999);
        assert!(traj.points.windows(2).all(|w| w[1][0] <= w[0][0]));
        for y in &traj.points {
            assert!(simplex_deviation(y) <= ODE_SIMPLEX_TOL);
        }
        let y10 = &traj.points[1000];
        assert!(y10[0] <= (-1.2f64).exp() + 1e-6);
    }

    #[test]
    fn single_arm_matches_fine_reference() {
        // Y_0' = -Y_0 lambda p (mu + (1 - mu) Y_1), Y_1 = 1 - Y_0
        let p = ModelParams::new(50, 1, 1.5, 0.3, vec![0.7]).unwrap();
        let coarse = integrate(&p, 8.0, 0.05).unwrap();
        let fine = integrate(&p, 8.0, 0.0005).unwrap();
        assert!(l2_distance(coarse.endpoint(), fine.endpoint()) < 1e-7);
    }

    #[test]
    fn step_halving_converges() {
        let p = base();
        let h = default_step(&p);
        let a = integrate(&p, 30.0, h).unwrap();
        let b = integrate(&p, 30.0, h / 2.0).unwrap();
        assert!(l2_distance(a.endpoint(), b.endpoint()) < 1e-8);
    }

    #[test]
    fn uneven_horizon_is_hit_exactly() {
        let p = base();
        let traj = integrate(&p, 1.005, 0.01).unwrap();
        assert!((traj.horizon() - 1.005).abs() < 1e-12);
        assert!(traj.step_size <= 0.01);
        assert!(integrate(&p, 1.0, 2.0).is_err());
        assert!(integrate(&p, -1.0, 0.1).is_err());
    }

    #[test]
    fn lipschitz_bound_value() {
        let b = lipschitz_bound(&base());
        assert!((b - (5.0 + 2f64.sqrt())).abs() < 1e-15);
        assert!((b - 6.414).abs() < 1e-3);
        let r = lipschitz_check(&base(), 10_000, 3);
        assert_eq!(r.pairs_used, 10_000);
        assert!(r.empirical_sup <= r.bound);
    }

    fn arb_params() -> impl Strategy<Value = ModelParams> {
        (prop::collection::vec(0.0f64..=1.0, 1..5), 0.01f64..=1.0, 0.1f64..5.0)
            .prop_filter_map("unique best", |(p, mu, lambda)| ModelParams::new(10, p.len(), lambda, mu, p).ok())
    }

    proptest! {
        #[test]
        fn drift_is_tangent_and_forms_agree(p in arb_params(), seed in any::<u64>()) {
            let mut rng = stream(seed, 0);
            let x = sample_simplex(p.n_arms() + 1, &mut rng);
            let d = drift(&p, &ScaledState::new(x.clone(), 1e-12).unwrap()).unwrap();
            let total: f64 = d.output.iter().sum();
            prop_assert!(total.abs() < 1e-14);
            let mut closed = vec![0.0; p.n_arms() + 1];
            vector_field(&p, &x, &mut closed);
            for (a, b) in d.output.iter().zip(&closed) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
