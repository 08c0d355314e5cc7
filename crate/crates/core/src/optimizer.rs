//! Stochastic approximation over the parameter chart.
//!
//! Iteration `n` draws a gradient estimate from a simulation of length
//! `m = ceil(n^b)` and moves to `theta_n + n^{-a} g`. A candidate outside
//! the feasible set is rejected and the iterate stays put. Objective
//! estimates are recorded every few iterations for diagnostics only.

use crate::channel::{sample_path_stream, ChannelSpec};
use crate::constraint::ForbiddenPairSet;
use crate::error::{Error, Result};
use crate::hmm::{conditional_surprisals, joint_symbols};
use crate::markov::{
    build_transition, feasible, markov_entropy_gradient, markov_entropy_rate, project_feasible,
    MarkovParams, DEFAULT_EPSILON_FLOOR,
};
use crate::rng::StreamId;
use crate::simulator::{build_views, estimate_gradient, estimate_gradient_replicated, min_sample_len, Blocking};
use crate::stats::{batch_means_std_err, fit_line, mean, LineFit};

/// Minimum trace length accepted by [`fit_rates`].
pub const MIN_FIT_RECORDS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialTheta {
    Given(Vec<f64>),
    Random,
}

/// Stop once the mean gradient norm over the last `window` iterations falls
/// below `grad_tol`. A tolerance of zero disables the rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub window: usize,
    pub grad_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            window: 50,
            grad_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SAConfig {
    pub a: f64,
    pub b: f64,
    pub blocking: Blocking,
    pub epsilon_floor: f64,
    pub theta0: InitialTheta,
    pub max_iters: u64,
    pub seed: u64,
    pub stop: StopRule,
    /// Independent gradient draws averaged per iteration.
    pub replicas: usize,
    /// Project infeasible candidates instead of rejecting them.
    pub projection: bool,
    /// Record an objective estimate every this many iterations; 0 disables.
    pub objective_every: u64,
    /// Lower bound on the objective simulation length.
    pub objective_min_len: usize,
    /// Optional cap on the gradient simulation length.
    pub max_sample_len: Option<usize>,
}

impl Default for SAConfig {
    fn default() -> Self {
        SAConfig {
            a: 0.75,
            b: 2.0,
            blocking: Blocking::default(),
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            theta0: InitialTheta::Random,
            max_iters: 1000,
            seed: 0,
            stop: StopRule::default(),
            replicas: 1,
            projection: false,
            objective_every: 50,
            objective_min_len: 10_000,
            max_sample_len: None,
        }
    }
}

fn violated(name: &str, rule: &str, value: f64) -> Error {
    Error::InvalidConfig(format!("{name}: requires {rule}, got {value}"))
}

/// Checks every exponent inequality of the iteration.
pub fn validate_config(cfg: &SAConfig) -> Result<()> {
    let (a, b) = (cfg.a, cfg.b);
    let (alpha, beta) = (cfg.blocking.alpha, cfg.blocking.beta);
    if !(a > 0.5 && a < 1.0) {
        return Err(violated("a", "1/2 < a < 1", a));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(violated("b", "b > 0", b));
    }
    if !(beta > 0.0) {
        return Err(violated("beta", "0 < beta", beta));
    }
    if !(alpha < 1.0 / 3.0) {
        return Err(violated("alpha", "alpha < 1/3", alpha));
    }
    if !(beta < alpha) {
        return Err(violated("alpha", "beta < alpha", alpha));
    }
    let lhs = 2.0 * a + b - 3.0 * b * beta;
    if !(lhs > 1.0) {
        return Err(violated("b", "2a + b - 3 b beta > 1", lhs));
    }
    if !(cfg.epsilon_floor > 0.0 && cfg.epsilon_floor < 1.0) {
        return Err(violated("eps_floor", "0 < eps_floor < 1", cfg.epsilon_floor));
    }
    if cfg.replicas == 0 {
        return Err(Error::InvalidConfig("replicas: requires at least one".into()));
    }
    if cfg.stop.grad_tol < 0.0 || (cfg.stop.grad_tol > 0.0 && cfg.stop.window == 0) {
        return Err(Error::InvalidConfig(
            "grad_tol: requires grad_tol >= 0 and a positive window".into(),
        ));
    }
    Ok(())
}

/// Objective estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub std_err: f64,
}

/// Source of gradient draws and objective values for [`run`].
pub trait GradientOracle {
    fn constraint(&self) -> &ForbiddenPairSet;

    /// Gradient estimate at `theta` from a simulation of length `m`.
    fn gradient(&self, theta: &MarkovParams, m: usize, replicas: usize, stream: StreamId) -> Result<Vec<f64>>;

    fn objective(&self, theta: &MarkovParams, m: usize, stream: StreamId) -> Result<Objective>;

    /// Shortest simulation length the oracle accepts.
    fn min_len(&self) -> usize {
        1
    }
}

/// Simulation-based gradients through a noisy channel.
pub struct SimulatedOracle {
    pub constraint: ForbiddenPairSet,
    pub channel: ChannelSpec,
    pub blocking: Blocking,
}

impl GradientOracle for SimulatedOracle {
    fn constraint(&self) -> &ForbiddenPairSet {
        &self.constraint
    }

    fn gradient(&self, theta: &MarkovParams, m: usize, replicas: usize, stream: StreamId) -> Result<Vec<f64>> {
        if replicas == 1 {
            Ok(estimate_gradient(theta, &self.constraint, &self.channel, m, self.blocking, stream)?.g)
        } else {
            Ok(estimate_gradient_replicated(
                theta,
                &self.constraint,
                &self.channel,
                m,
                self.blocking,
                replicas,
                stream,
            )?
            .mean)
        }
    }

    /// `H(X) + H^(Y) - H^(X, Y)` from one sample path, with a batch-means
    /// error on the per-step surprisal differences.
    fn objective(&self, theta: &MarkovParams, m: usize, stream: StreamId) -> Result<Objective> {
        let views = build_views(theta, &self.constraint, &self.channel)?;
        let path = sample_path_stream(&views.transition, &self.channel, m, stream);
        let z = joint_symbols(&path.x, &path.y, self.channel.outputs());
        let sy = conditional_surprisals(&views.output, &path.y)?;
        let sz = conditional_surprisals(&views.joint, &z)?;
        let diff: Vec<f64> = sy.iter().zip(&sz).map(|(a, b)| a - b).collect();
        Ok(Objective {
            value: markov_entropy_rate(&views.transition) + mean(&diff),
            std_err: batch_means_std_err(&diff),
        })
    }

    fn min_len(&self) -> usize {
        min_sample_len(self.blocking)
    }
}

/// Exact entropy-rate gradient of the input chain, the noiseless limit of
/// the mutual information rate.
pub struct NoiselessOracle {
    pub constraint: ForbiddenPairSet,
}

impl GradientOracle for NoiselessOracle {
    fn constraint(&self) -> &ForbiddenPairSet {
        &self.constraint
    }

    fn gradient(&self, theta: &MarkovParams, _m: usize, _replicas: usize, _stream: StreamId) -> Result<Vec<f64>> {
        markov_entropy_gradient(theta, &self.constraint)
    }

    fn objective(&self, theta: &MarkovParams, _m: usize, _stream: StreamId) -> Result<Objective> {
        Ok(Objective {
            value: markov_entropy_rate(&build_transition(theta, &self.constraint)?),
            std_err: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub n: u64,
    /// Iterate before the step.
    pub theta: Vec<f64>,
    pub g: Vec<f64>,
    pub a_n: f64,
    pub sample_len: usize,
    pub rejected: bool,
    pub f_hat: Option<Objective>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    GradientTolerance,
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SATrace {
    pub theta0: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub theta_final: Vec<f64>,
    pub reject_count: usize,
    /// Rejections still occur in the final tenth of the run.
    pub late_rejections: bool,
    pub stop_reason: StopReason,
}

impl SATrace {
    fn new(theta0: Vec<f64>) -> Self {
        SATrace {
            theta_final: theta0.clone(),
            theta0,
            records: Vec::new(),
            reject_count: 0,
            late_rejections: false,
            stop_reason: StopReason::MaxIters,
        }
    }

    fn finish(&mut self, reason: StopReason) {
        self.stop_reason = reason;
        self.reject_count = self.records.iter().filter(|r| r.rejected).count();
        let tail = self.records.len() / 10;
        self.late_rejections = self.records.iter().rev().take(tail.max(1)).any(|r| r.rejected);
    }

    /// Latest recorded objective estimate.
    pub fn last_objective(&self) -> Option<Objective> {
        self.records.iter().rev().find_map(|r| r.f_hat)
    }
}

/// A run stopped by an error, with everything recorded up to that point.
#[derive(Debug, Clone, PartialEq)]
pub struct Aborted {
    pub error: Error,
    pub trace: SATrace,
}

/// Step size `n^{-a}`.
pub fn step_size(n: u64, a: f64) -> f64 {
    (n as f64).powf(-a)
}

/// Simulation length `ceil(n^b)`, raised to the oracle's minimum and
/// lowered to the configured cap.
pub fn sample_len(n: u64, cfg: &SAConfig, min_len: usize) -> usize {
    let raw = (n as f64).powf(cfg.b).ceil();
    let capped = cfg.max_sample_len.map_or(raw, |c| raw.min(c as f64));
    (capped as usize).max(min_len)
}

/// One iteration from the feasible `theta`.
pub fn sa_step<O: GradientOracle + ?Sized>(
    theta: &[f64],
    n: u64,
    cfg: &SAConfig,
    oracle: &O,
) -> Result<(Vec<f64>, StepRecord)> {
    let f = oracle.constraint();
    let params = MarkovParams::new(theta.to_vec(), cfg.epsilon_floor);
    let m = sample_len(n, cfg, oracle.min_len());
    let g = oracle.gradient(&params, m, cfg.replicas, StreamId::replica(cfg.seed, n, 0))?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { n });
    }
    let a_n = step_size(n, cfg.a);
    let f_hat = if cfg.objective_every > 0 && n.is_multiple_of(cfg.objective_every) {
        Some(oracle.objective(&params, m.max(cfg.objective_min_len), StreamId::objective(cfg.seed, n))?)
    } else {
        None
    };
    let candidate: Vec<f64> = theta.iter().zip(&g).map(|(t, d)| t + a_n * d).collect();
    let (next, rejected) = if feasible(&candidate, f, cfg.epsilon_floor) {
        (candidate, false)
    } else if cfg.projection {
        let projected = project_feasible(&candidate, f, cfg.epsilon_floor);
        if feasible(&projected, f, cfg.epsilon_floor) {
            (projected, true)
        } else {
            (theta.to_vec(), true)
        }
    } else {
        (theta.to_vec(), true)
    };
    let record = StepRecord {
        n,
        theta: theta.to_vec(),
        g,
        a_n,
        sample_len: m,
        rejected,
        f_hat,
    };
    Ok((next, record))
}

fn initial_theta<O: GradientOracle + ?Sized>(cfg: &SAConfig, oracle: &O) -> Result<Vec<f64>> {
    let f = oracle.constraint();
    let theta = match &cfg.theta0 {
        InitialTheta::Given(t) => t.clone(),
        InitialTheta::Random => {
            MarkovParams::random(f, cfg.epsilon_floor, &mut StreamId::init(cfg.seed).rng())?.theta
        }
    };
    build_transition(&MarkovParams::new(theta.clone(), cfg.epsilon_floor), f)?;
    Ok(theta)
}

/// Iterates [`sa_step`] until `max_iters` or the stopping rule fires.
pub fn run<O: GradientOracle + ?Sized>(cfg: &SAConfig, oracle: &O) -> std::result::Result<SATrace, Box<Aborted>> {
    let fail = |error: Error, trace: SATrace| Box::new(Aborted { error, trace });
    let empty = SATrace::new(Vec::new());
    validate_config(cfg).map_err(|e| fail(e, empty.clone()))?;
    let theta0 = initial_theta(cfg, oracle).map_err(|e| fail(e, empty))?;
    let mut trace = SATrace::new(theta0.clone());
    let mut theta = theta0;
    let mut norms: Vec<f64> = Vec::new();
    let mut reason = StopReason::MaxIters;
    for n in 1..=cfg.max_iters {
        match sa_step(&theta, n, cfg, oracle) {
            Ok((next, record)) => {
                debug_assert!(feasible(&next, oracle.constraint(), cfg.epsilon_floor));
                norms.push(record.g.iter().map(|v| v * v).sum::<f64>().sqrt());
                trace.records.push(record);
                theta = next;
            }
            Err(error) => {
                trace.theta_final = theta;
                trace.finish(StopReason::Aborted);
                return Err(fail(error, trace));
            }
        }
        let w = cfg.stop.window;
        if cfg.stop.grad_tol > 0.0 && norms.len() >= w && mean(&norms[norms.len() - w..]) < cfg.stop.grad_tol {
            reason = StopReason::GradientTolerance;
            break;
        }
    }
    trace.theta_final = theta;
    trace.finish(reason);
    Ok(trace)
}

/// Empirical convergence exponents from the tail half of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Slope of `log |theta_n - theta_ref|` against `log n`.
    pub tau_hat: LineFit,
    /// Slope of `log |f_hat_n - f_ref|` against `log n`, when enough
    /// objective estimates are available.
    pub f_rate: Option<LineFit>,
}

impl RateFit {
    pub fn tau_hat_empirical(&self) -> f64 {
        self.tau_hat.slope
    }

    pub fn f_rate_empirical(&self) -> Option<f64> {
        self.f_rate.map(|f| f.slope)
    }
}

/// Least-squares log-log slopes over the tail half of `records`. Exact
/// zeros are dropped since their logarithm is undefined.
pub fn fit_rates(records: &[StepRecord], theta_ref: &[f64], f_ref: Option<f64>) -> Result<RateFit> {
    if records.len() < MIN_FIT_RECORDS {
        return Err(Error::InsufficientTrace {
            got: records.len(),
            need: MIN_FIT_RECORDS,
        });
    }
    let tail = &records[records.len() / 2..];
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in tail {
        let dist = r
            .theta
            .iter()
            .zip(theta_ref)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if dist > 0.0 {
            xs.push((r.n as f64).ln());
            ys.push(dist.ln());
        }
    }
    let tau_hat = fit_line(&xs, &ys).ok_or(Error::InsufficientTrace {
        got: xs.len(),
        need: 2,
    })?;
    let f_rate = f_ref.and_then(|fr| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = tail
            .iter()
            .filter_map(|r| r.f_hat.map(|o| (r.n, (o.value - fr).abs())))
            .filter(|(_, d)| *d > 0.0)
            .map(|(n, d)| ((n as f64).ln(), d.ln()))
            .unzip();
        fit_line(&xs, &ys)
    });
    Ok(RateFit { tau_hat, f_rate })
}
