//! The outer adaptive-regularisation loop.
//!
//! Each iteration:
//!
//! 1. builds the model from subsampled derivatives, tightening the sampling
//!    accuracy until the adaptive accuracy test passes (or the sample is the
//!    full set);
//! 2. computes a trial step (closed form for `p = 1`, BB for `p = 2`);
//! 3. estimates `f` at `x_k` and `x_k + s_k` on independent subsamples sized
//!    for accuracy `ω_k ΔT`;
//! 4. accepts the step iff `ρ_k ≥ η`;
//! 5. shrinks `σ` by `γ` on success (not below `σ_min`), grows it otherwise;
//! 6. sets `ω = min(αη/2, 1/σ)`.
//!
//! For `p = 1` the accuracy test is the relative one, `ε ≤ ω‖ḡ‖`; the
//! theoretical test degenerates there because the closed-form step zeroes the
//! model gradient. For `p = 2` the step is recomputed for each accuracy
//! level until `ε_ℓ ≤ ω ΔT_min / (6 τ^ℓ)` holds for `ℓ = 1, 2`.
//!
//! Work is metered in cost-measure units (CM): one unit is `N` component
//! evaluations. Exact losses recorded in the trace are never charged.

use std::fmt;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::finite_sum::{full_value, FiniteSumProblem, SubsetHessian};
use crate::linalg::{all_finite, norm, CountingOperator};
use crate::model::{accuracy_quantities, ModelOrder, RegularisedModel};
use crate::optimality::{phi_2, TrustRegionOptions};
use crate::sampling::{
    draw_subsample, estimate_gradient, estimate_value, overlap_count, rng_from_seed,
    sampled_hessian, EstimateOrder, SampleRng, SampleSizeSpec,
};
use crate::subproblem::{cubic_step, quadratic_step, BbConfig, SecondOrderCheck};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Optimality order `q ∈ {1, 2}`.
    pub q: usize,
    pub p: ModelOrder,
    pub sigma0: f64,
    pub sigma_min: f64,
    /// First-order tolerance. Zero disables the stopping test.
    pub eps1: f64,
    pub eps2: f64,
    pub theta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Initial sampling accuracy of the inner loops.
    pub kappa_eps: f64,
    /// Contraction of the sampling accuracy between inner attempts.
    pub gamma_eps: f64,
    /// Bound constant of the Bernstein sample sizes.
    pub kappa: f64,
    /// Failure probability of the Bernstein sample sizes.
    pub t: f64,
    pub budget_cm: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub bb: BbConfig,
    pub trust_region: TrustRegionOptions,
    /// Exact losses are traced only when `N` is at most this.
    pub exact_loss_max_components: usize,
    /// Trace exact losses every this many iterations; 0 never.
    pub exact_loss_every: usize,
    /// Abort after this many consecutive zero-decrease iterations at full
    /// sample.
    pub stationary_limit: usize,
}

/// Bound constant tuned for the GISETTE no-net runs.
pub const KAPPA_GISETTE: f64 = 8e-4;
/// Bound constant tuned for the MNIST-B runs.
pub const KAPPA_MNIST_B: f64 = 3e-2;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            q: 1,
            p: ModelOrder::Quadratic,
            sigma0: 1e-1,
            sigma_min: 1e-5,
            eps1: 1e-3,
            eps2: 1e-2,
            theta: 0.5,
            eta: 0.8,
            gamma: 2.0,
            alpha: 0.5,
            kappa_eps: 0.5,
            gamma_eps: 0.5,
            kappa: KAPPA_MNIST_B,
            t: 0.2,
            budget_cm: f64::INFINITY,
            max_iters: 1_000_000,
            seed: 0,
            bb: BbConfig::default(),
            trust_region: TrustRegionOptions::default(),
            exact_loss_max_components: 100_000,
            exact_loss_every: 1,
            stationary_limit: 60,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must lie in (0,1), got {v}")))
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.q) {
            return Err(Error::param(format!("q must be 1 or 2, got {}", self.q)));
        }
        if self.q > self.p.degree() {
            return Err(Error::param("q must not exceed p"));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::param("sigma0 must be positive"));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma0) {
            return Err(Error::param("sigma_min must lie in (0, sigma0)"));
        }
        if !(self.eps1 >= 0.0) || (self.q == 2 && !(self.eps2 >= 0.0)) {
            return Err(Error::param("tolerances must be non-negative"));
        }
        if !(self.theta > 0.0 && self.theta <= 0.5) {
            return Err(Error::param(format!(
                "theta must lie in (0, 0.5], got {}",
                self.theta
            )));
        }
        open_unit("eta", self.eta)?;
        open_unit("alpha", self.alpha)?;
        open_unit("gamma_eps", self.gamma_eps)?;
        open_unit("t", self.t)?;
        if !(self.gamma > 1.0) {
            return Err(Error::param("gamma must exceed 1"));
        }
        if !(self.kappa_eps > 0.0) || !(self.kappa > 0.0) {
            return Err(Error::param("kappa and kappa_eps must be positive"));
        }
        if !(self.budget_cm > 0.0) {
            return Err(Error::param("cost budget must be positive"));
        }
        self.bb.validate()
    }

    /// `min(αη/2, 1/σ)`.
    pub fn omega(&self, sigma: f64) -> f64 {
        (0.5 * self.alpha * self.eta).min(1.0 / sigma)
    }

    /// Regulariser after an iteration with the given outcome.
    pub fn next_sigma(&self, sigma: f64, successful: bool) -> f64 {
        if successful {
            self.sigma_min.max(sigma / self.gamma)
        } else {
            self.gamma * sigma
        }
    }
}

/// `(f̄(x) - f̄(x+s)) / ΔT` when `ΔT > 0`, `-∞` otherwise.
pub fn rho(f_x: f64, f_xs: f64, delta_t: f64) -> f64 {
    if delta_t > 0.0 {
        (f_x - f_xs) / delta_t
    } else {
        f64::NEG_INFINITY
    }
}

/// The index sets one iteration sampled. Empty sets were not drawn.
#[derive(Debug, Clone, Copy, Default)]
pub struct IterationSets<'a> {
    pub d1: &'a [usize],
    pub d2: &'a [usize],
    pub g: &'a [usize],
    pub h: &'a [usize],
}

/// Sizes and overlaps that determine an iteration's cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChargeCounts {
    pub d1: usize,
    pub d2: usize,
    pub g: usize,
    pub h: usize,
    /// `|G ∩ D1|`
    pub g_d1: usize,
    /// `|H ∩ G|`
    pub h_g: usize,
    /// Hessian-vector products performed with the subsampled Hessian.
    pub hessian_products: usize,
}

impl ChargeCounts {
    pub fn from_sets(sets: &IterationSets<'_>, hessian_products: usize) -> Self {
        Self {
            d1: sets.d1.len(),
            d2: sets.d2.len(),
            g: sets.g.len(),
            h: sets.h.len(),
            g_d1: overlap_count(sets.g, sets.d1),
            h_g: overlap_count(sets.h, sets.g),
            hessian_products,
        }
    }

    /// Cost in CM:
    /// `(|D1| + |D2|)/N` for function estimates,
    /// `(2|G \ D1| + |G ∩ D1|)/N` for the gradient,
    /// `2|H|/N` per Hessian product plus `|H \ G|/N` for the base gradients.
    pub fn cost(&self, n_components: usize) -> f64 {
        let n = n_components as f64;
        let function = (self.d1 + self.d2) as f64 / n;
        let gradient = (2 * (self.g - self.g_d1) + self.g_d1) as f64 / n;
        let hessian = if self.h == 0 {
            0.0
        } else {
            (self.hessian_products * 2 * self.h) as f64 / n + (self.h - self.h_g) as f64 / n
        };
        function + gradient + hessian
    }
}

/// Cumulative cost in CM.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostMeter {
    total: f64,
}

impl CostMeter {
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn add(&mut self, charge: f64) -> f64 {
        debug_assert!(charge >= 0.0);
        self.total += charge;
        self.total
    }
}

/// Charges one iteration's sampling work; returns the charge.
pub fn charge_costs(
    meter: &mut CostMeter,
    sets: &IterationSets<'_>,
    n_components: usize,
    hessian_products: usize,
) -> f64 {
    let charge = ChargeCounts::from_sets(sets, hessian_products).cost(n_components);
    meter.add(charge);
    charge
}

/// One row of the iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub iteration: usize,
    /// Cumulative CM after this iteration.
    pub cost: f64,
    /// `σ_k` used by this iteration.
    pub sigma: f64,
    /// `ω_k` used by this iteration.
    pub omega: f64,
    pub grad_norm: f64,
    pub rho: f64,
    pub success: bool,
    pub step_norm: f64,
    pub d1_size: usize,
    pub d2_size: usize,
    pub g_size: usize,
    pub h_size: usize,
    pub g_d1_overlap: usize,
    pub h_g_overlap: usize,
    pub hessian_products: usize,
    pub inner_attempts: usize,
    pub train_loss_estimate: f64,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
}

impl TraceEvent {
    pub fn charge_counts(&self) -> ChargeCounts {
        ChargeCounts {
            d1: self.d1_size,
            d2: self.d2_size,
            g: self.g_size,
            h: self.h_size,
            g_d1: self.g_d1_overlap,
            h_g: self.h_g_overlap,
            hessian_products: self.hessian_products,
        }
    }
}

/// Replays the per-iteration charges of a trace into cumulative costs.
pub fn recompute_costs(trace: &[TraceEvent], n_components: usize) -> Vec<f64> {
    let mut meter = CostMeter::default();
    trace
        .iter()
        .map(|e| meter.add(e.charge_counts().cost(n_components)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Budget,
    IterationCap,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::Budget => "budget",
            StopReason::IterationCap => "iteration_cap",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub x: Vec<f64>,
    pub trace: Vec<TraceEvent>,
    pub stop_reason: StopReason,
    pub cost: f64,
    pub iterations: usize,
    pub successful: usize,
}

/// Hooks into a run. Both methods default to doing nothing.
pub trait Monitor {
    /// Held-out loss at `x`, recorded alongside exact training losses.
    fn test_loss(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Called after every iteration with the event and the new iterate.
    fn observe(&mut self, _event: &TraceEvent, _x: &[f64]) {}
}

impl Monitor for () {}

/// Runs the method from `x0` until convergence, budget or iteration cap.
pub fn run<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    x0: Vec<f64>,
    config: &SolverConfig,
) -> Result<SolverOutput> {
    run_monitored(problem, x0, config, &mut ())
}

pub fn run_monitored<P: FiniteSumProblem + ?Sized, M: Monitor + ?Sized>(
    problem: &P,
    x0: Vec<f64>,
    config: &SolverConfig,
    monitor: &mut M,
) -> Result<SolverOutput> {
    config.validate()?;
    check_dim(problem.dim(), x0.len())?;
    Run::new(problem, config).execute(x0, monitor)
}

/// Derivative estimates and trial step for one iteration.
struct ModelBuild<'a, P: FiniteSumProblem + ?Sized> {
    gradient: Vec<f64>,
    g_indices: Vec<usize>,
    hessian: Option<CountingOperator<SubsetHessian<'a, P>>>,
    step: Vec<f64>,
    delta_t: f64,
    attempts: usize,
}

impl<P: FiniteSumProblem + ?Sized> ModelBuild<'_, P> {
    fn h_indices(&self) -> &[usize] {
        self.hessian.as_ref().map_or(&[], |h| h.inner().indices())
    }

    fn hessian_products(&self) -> usize {
        self.hessian.as_ref().map_or(0, |h| h.calls())
    }

    fn full_sample(&self, n_components: usize) -> bool {
        self.g_indices.len() == n_components
            && self
                .hessian
                .as_ref()
                .is_none_or(|h| h.inner().indices().len() == n_components)
    }
}

struct Run<'a, P: FiniteSumProblem + ?Sized> {
    problem: &'a P,
    config: &'a SolverConfig,
    rng: SampleRng,
    n: usize,
    n_components: usize,
}

impl<'a, P: FiniteSumProblem + ?Sized> Run<'a, P> {
    fn new(problem: &'a P, config: &'a SolverConfig) -> Self {
        Self {
            problem,
            config,
            rng: rng_from_seed(config.seed),
            n: problem.dim(),
            n_components: problem.num_components(),
        }
    }

    fn sample_size(&self, accuracy: f64, order: EstimateOrder) -> Result<usize> {
        SampleSizeSpec {
            target_accuracy: accuracy,
            bound_constant: self.config.kappa,
            failure_probability: self.config.t,
            order,
            dimension: self.n,
            n_components: self.n_components,
        }
        .resolved_size_or_full()
    }

    fn draw(&mut self, size: usize) -> Result<Vec<usize>> {
        draw_subsample(&mut self.rng, self.n_components, size)
    }

    /// Gradient sample for `p = 1`: accept once `ε ≤ ω‖ḡ‖` or the sample is
    /// full.
    fn inner_loop_iar1(&mut self, x: &[f64], sigma: f64, omega: f64) -> Result<ModelBuild<'a, P>> {
        let mut eps = self.config.kappa_eps;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let size = self.sample_size(eps, EstimateOrder::Gradient)?;
            let g_indices = self.draw(size)?;
            let gradient = estimate_gradient(self.problem, &g_indices, x)?;
            if !all_finite(&gradient) {
                return Err(Error::Numerical("non-finite gradient estimate".into()));
            }
            if size == self.n_components || eps <= omega * norm(&gradient) {
                let (step, delta_t) = quadratic_step(&gradient, sigma)?;
                return Ok(ModelBuild {
                    gradient,
                    g_indices,
                    hessian: None,
                    step,
                    delta_t,
                    attempts,
                });
            }
            eps *= self.config.gamma_eps;
        }
    }

    /// Gradient and Hessian samples for `p = 2`: solve the cubic subproblem
    /// for each accuracy level until both derivative accuracies meet their
    /// adaptive targets, or the samples are full.
    fn inner_loop_iar2(&mut self, x: &[f64], sigma: f64, omega: f64) -> Result<ModelBuild<'a, P>> {
        let cfg = self.config;
        let (mut eps_g, mut eps_h) = (cfg.kappa_eps, cfg.kappa_eps);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let g_size = self.sample_size(eps_g, EstimateOrder::Gradient)?;
            let h_size = self.sample_size(eps_h, EstimateOrder::Hessian)?;
            let g_indices = self.draw(g_size)?;
            let h_indices = self.draw(h_size)?;
            let gradient = estimate_gradient(self.problem, &g_indices, x)?;
            if !all_finite(&gradient) {
                return Err(Error::Numerical("non-finite gradient estimate".into()));
            }
            let hessian = CountingOperator::new(sampled_hessian(self.problem, h_indices, x)?);
            let (step, delta_t, accepted) = {
                let model = RegularisedModel::cubic(gradient.clone(), &hessian, sigma)?;
                let second_order = (cfg.q == 2).then_some(SecondOrderCheck {
                    tolerance: cfg.theta * cfg.eps2,
                    trust_region: &cfg.trust_region,
                });
                let solved = cubic_step(&model, &cfg.bb, cfg.theta * cfg.eps1, second_order)?;
                if !solved.converged {
                    debug!(
                        "cubic subproblem stopped after {} inner iterations with ‖∇m‖ = {:.3e}",
                        solved.iterations, solved.model_grad_norm
                    );
                }
                let quantities = accuracy_quantities(&model, &solved.s, cfg.q, &cfg.trust_region)?;
                let [nu_g, nu_h] = quantities.targets(omega);
                let g_ok = g_size == self.n_components || eps_g <= nu_g;
                let h_ok = h_size == self.n_components || eps_h <= nu_h;
                (solved.s, quantities.delta_t_f, g_ok && h_ok)
            };
            if accepted {
                return Ok(ModelBuild {
                    gradient,
                    g_indices,
                    hessian: Some(hessian),
                    step,
                    delta_t,
                    attempts,
                });
            }
            eps_g *= cfg.gamma_eps;
            eps_h *= cfg.gamma_eps;
        }
    }

    fn build_model(&mut self, x: &[f64], sigma: f64, omega: f64) -> Result<ModelBuild<'a, P>> {
        match self.config.p {
            ModelOrder::Quadratic => self.inner_loop_iar1(x, sigma, omega),
            ModelOrder::Cubic => self.inner_loop_iar2(x, sigma, omega),
        }
    }

    /// The estimated stopping test. For `q = 2` this also spends Hessian
    /// products on `φ̄_2`.
    fn converged(&self, build: &ModelBuild<'a, P>) -> Result<bool> {
        let cfg = self.config;
        if cfg.eps1 <= 0.0 || norm(&build.gradient) > cfg.eps1 {
            return Ok(false);
        }
        if cfg.q == 1 {
            return Ok(true);
        }
        let hessian = build
            .hessian
            .as_ref()
            .ok_or_else(|| Error::param("second-order stopping needs a Hessian estimate"))?;
        let r = phi_2(&build.gradient, hessian, &cfg.trust_region)?;
        Ok(r.value <= cfg.eps2 / 2.0)
    }

    fn execute<M: Monitor + ?Sized>(
        mut self,
        x0: Vec<f64>,
        monitor: &mut M,
    ) -> Result<SolverOutput> {
        let cfg = self.config;
        let mut x = x0;
        let mut sigma = cfg.sigma0;
        let mut omega = cfg.omega(sigma);
        let mut meter = CostMeter::default();
        let mut trace = Vec::new();
        let mut successful = 0usize;
        let mut zero_streak = 0usize;
        let mut last_estimate = f64::NAN;
        let track_exact =
            cfg.exact_loss_every > 0 && self.n_components <= cfg.exact_loss_max_components;

        for k in 0.. {
            if k >= cfg.max_iters {
                return Ok(self.finish(x, trace, StopReason::IterationCap, meter, successful));
            }
            let build = self
                .build_model(&x, sigma, omega)
                .map_err(|e| e.at_iteration(k))?;
            let grad_norm = norm(&build.gradient);

            let mut event = TraceEvent {
                iteration: k,
                cost: 0.0,
                sigma,
                omega,
                grad_norm,
                rho: f64::NAN,
                success: false,
                step_norm: norm(&build.step),
                d1_size: 0,
                d2_size: 0,
                g_size: 0,
                h_size: 0,
                g_d1_overlap: 0,
                h_g_overlap: 0,
                hessian_products: 0,
                inner_attempts: build.attempts,
                train_loss_estimate: last_estimate,
                train_loss: None,
                test_loss: None,
            };

            if self.converged(&build).map_err(|e| e.at_iteration(k))? {
                let sets = IterationSets {
                    g: &build.g_indices,
                    h: build.h_indices(),
                    ..Default::default()
                };
                self.record(&mut event, &sets, build.hessian_products(), &mut meter);
                if track_exact {
                    event.train_loss = Some(full_value(self.problem, &x)?);
                    event.test_loss = monitor.test_loss(&x);
                }
                monitor.observe(&event, &x);
                trace.push(event);
                return Ok(self.finish(x, trace, StopReason::Converged, meter, successful));
            }

            if !build.delta_t.is_finite() {
                return Err(
                    Error::Numerical("non-finite predicted decrease".into()).at_iteration(k)
                );
            }
            let trial: Vec<f64> = x.iter().zip(&build.step).map(|(a, b)| a + b).collect();
            let (d1, d2, rho_k) = if build.delta_t > 0.0 {
                zero_streak = 0;
                let nu0 = omega * build.delta_t;
                let size = self.sample_size(nu0, EstimateOrder::Value)?;
                let d1 = self.draw(size)?;
                let d2 = self.draw(size)?;
                let f_x = estimate_value(self.problem, &d1, &x)?;
                let f_xs = estimate_value(self.problem, &d2, &trial)?;
                let r = rho(f_x, f_xs, build.delta_t);
                last_estimate = if r >= cfg.eta { f_xs } else { f_x };
                (d1, d2, r)
            } else {
                if build.full_sample(self.n_components) {
                    zero_streak += 1;
                    if zero_streak >= cfg.stationary_limit {
                        return Err(Error::StationaryEstimate(zero_streak).at_iteration(k));
                    }
                } else {
                    zero_streak = 0;
                }
                (Vec::new(), Vec::new(), f64::NEG_INFINITY)
            };

            let success = rho_k >= cfg.eta;
            let sets = IterationSets {
                d1: &d1,
                d2: &d2,
                g: &build.g_indices,
                h: build.h_indices(),
            };
            self.record(&mut event, &sets, build.hessian_products(), &mut meter);
            event.rho = rho_k;
            event.success = success;
            event.train_loss_estimate = last_estimate;

            if success {
                x = trial;
                successful += 1;
            }
            sigma = cfg.next_sigma(sigma, success);
            omega = cfg.omega(sigma);

            if track_exact && k % cfg.exact_loss_every == 0 {
                event.train_loss = Some(full_value(self.problem, &x)?);
                event.test_loss = monitor.test_loss(&x);
            }
            monitor.observe(&event, &x);
            trace.push(event);

            if meter.total() >= cfg.budget_cm {
                return Ok(self.finish(x, trace, StopReason::Budget, meter, successful));
            }
        }
        unreachable!("iteration loop exits through a stop reason")
    }

    fn record(
        &self,
        event: &mut TraceEvent,
        sets: &IterationSets<'_>,
        products: usize,
        meter: &mut CostMeter,
    ) {
        let counts = ChargeCounts::from_sets(sets, products);
        meter.add(counts.cost(self.n_components));
        event.cost = meter.total();
        event.d1_size = counts.d1;
        event.d2_size = counts.d2;
        event.g_size = counts.g;
        event.h_size = counts.h;
        event.g_d1_overlap = counts.g_d1;
        event.h_g_overlap = counts.h_g;
        event.hessian_products = counts.hessian_products;
    }

    fn finish(
        &self,
        x: Vec<f64>,
        trace: Vec<TraceEvent>,
        stop_reason: StopReason,
        meter: CostMeter,
        successful: usize,
    ) -> SolverOutput {
        SolverOutput {
            x,
            iterations: trace.len(),
            trace,
            stop_reason,
            cost: meter.total(),
            successful,
        }
    }
}
