//! Surrogate-assisted CMA-ES (CMA-SAO) and the plain CMA-ES baseline
//! driven by the same termination rules.
//!
//! After a warm-up of `g_start` true generations, every outer iteration:
//!
//! 1. fits a cubic RBF on the newest archive points in encoded space;
//! 2. minimizes it inside a small box around the CMA mean;
//! 3. evaluates the mean and the box minimizer, and if the minimizer is
//!    strictly better, moves the mean there and updates paths, covariance
//!    and step size along the displacement ([`inject_best`]);
//! 4. runs `n_hat` generations on the surrogate alone;
//! 5. runs one generation on the true objective;
//! 6. scores the surrogate's ranking of that generation and adapts `n_hat`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cma::{gen_cma, Bounds, CmaParams, CmaState};
use crate::controller::{ranking_error, SurrogateController};
use crate::error::{Error, Result};
use crate::local_search::{find_surrogate_minimum, trust_box};
use crate::objective::Objective;
use crate::seed::substream;
use crate::surrogate::{
    build_surrogate, select_training_set, Archive, RbfKernel, SurrogateObjective,
};

/// Which rate drives the step-size change of an injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRate {
    /// `sigma *= exp(c_cov/d_sigma * (|p_sigma|/chi_N - 1))`
    AsPrinted,
    /// `sigma *= exp(c_sigma/d_sigma * (|p_sigma|/chi_N - 1))`
    CsaStandard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaoConfig {
    pub g_start: usize,
    pub n_hat_max: usize,
    pub tau_err: f64,
    pub beta_err: f64,
    pub kernel: RbfKernel,
    pub target_f: f64,
    /// Defaults to `1000 * N^2`.
    pub max_evals: Option<usize>,
    pub seed: u64,
    /// Surrogate evaluations per trust-box search; defaults to `100 * N`.
    pub ls_budget: Option<usize>,
    pub sigma_rate: SigmaRate,
    /// Stop when the best value improves by less than [`STAGNATION_DELTA`]
    /// over `50 * N` consecutive true-objective generations.
    pub stagnation_guard: bool,
}

pub const STAGNATION_DELTA: f64 = 1e-14;

impl Default for SaoConfig {
    fn default() -> Self {
        Self {
            g_start: 5,
            n_hat_max: 20,
            tau_err: 0.45,
            beta_err: 0.2,
            kernel: RbfKernel::Cubic,
            target_f: 1e-10,
            max_evals: None,
            seed: 0,
            ls_budget: None,
            sigma_rate: SigmaRate::AsPrinted,
            stagnation_guard: true,
        }
    }
}

impl SaoConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn max_evals_for(&self, dim: usize) -> usize {
        self.max_evals.unwrap_or(1000 * dim * dim)
    }

    pub fn ls_budget_for(&self, dim: usize) -> usize {
        self.ls_budget.unwrap_or(100 * dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.g_start < 1 {
            return Err(Error::InvalidConfig("g_start must be at least 1".into()));
        }
        if !(self.tau_err > 0.0) || !(self.beta_err > 0.0 && self.beta_err <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau_err {} and beta_err {} must be positive, beta_err at most 1",
                self.tau_err, self.beta_err
            )));
        }
        if !(self.target_f.is_finite()) {
            return Err(Error::InvalidConfig("target_f must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub evals_used: usize,
    pub best_f: f64,
    pub best_x: Vec<f64>,
    pub success: bool,
    /// `(evaluations so far, best value so far)` after each batch of true
    /// evaluations.
    pub history: Vec<(usize, f64)>,
    pub injections_attempted: usize,
    pub injections_accepted: usize,
    pub seed: u64,
}

/// One JSON line per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub function: String,
    pub n: usize,
    pub seed: u64,
    pub evals: usize,
    pub best_f: f64,
    pub success: bool,
    pub injections_attempted: usize,
    pub injections_accepted: usize,
}

impl RunResult {
    pub fn record(&self, function: &str, n: usize) -> RunRecord {
        RunRecord {
            function: function.to_string(),
            n,
            seed: self.seed,
            evals: self.evals_used,
            best_f: self.best_f,
            success: self.success,
            injections_attempted: self.injections_attempted,
            injections_accepted: self.injections_accepted,
        }
    }
}

/// Learning rates of the injection update, with the selection mass fixed
/// to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionRates {
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub c_c: f64,
    pub c_cov: f64,
    pub d_sigma: f64,
}

impl InjectionRates {
    pub fn new(dim: usize) -> Self {
        let n = dim as f64;
        let mu_eff = 1.0;
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 3.0);
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_cov = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        Self {
            mu_eff,
            c_sigma,
            c_c,
            c_cov,
            d_sigma,
        }
    }
}

/// Move the mean to `x_best` and fold the displacement into the evolution
/// paths, the covariance (rank-one) and the step size.
pub fn inject_best(
    state: &mut CmaState,
    x_best: &[f64],
    params: &CmaParams,
    sigma_rate: SigmaRate,
) -> Result<()> {
    let n = state.dim();
    if x_best.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x_best.len(),
        });
    }
    let target = DVector::from_column_slice(x_best);
    let delta = (&target - &state.mean) / state.sigma;
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(x_best.to_vec()));
    }
    let r = InjectionRates::new(n);
    let inv_sqrt = state.inv_sqrt();

    state.p_sigma = &state.p_sigma * (1.0 - r.c_sigma)
        + (&inv_sqrt * &delta) * (r.c_sigma * (2.0 - r.c_sigma) * r.mu_eff).sqrt();
    state.p_c = &state.p_c * (1.0 - r.c_c) + &delta * (r.c_c * (2.0 - r.c_c) * r.mu_eff).sqrt();
    let mut cov = &state.cov * (1.0 - r.c_cov);
    cov.ger(r.c_cov, &state.p_c, &state.p_c, 1.0);
    state.set_covariance(cov);

    let rate = match sigma_rate {
        SigmaRate::AsPrinted => r.c_cov,
        SigmaRate::CsaStandard => r.c_sigma,
    };
    state.sigma *= ((rate / r.d_sigma) * (state.p_sigma.norm() / params.chi_n - 1.0)).exp();
    state.mean = target;
    Ok(())
}

/// Observations emitted while a run progresses.
#[derive(Debug)]
pub enum SaoEvent<'a> {
    /// A true generation finished (warm-up or step 5).
    TrueGeneration {
        state: &'a CmaState,
        archive_len: usize,
    },
    /// Step 3 evaluated the mean and the trust-box minimizer.
    Probe {
        f_mean: f64,
        f_best: f64,
        accepted: bool,
        mean_before: &'a DVector<f64>,
        state: &'a CmaState,
    },
    /// Step 4 ran `generations` surrogate-only generations.
    SurrogatePhase {
        generations: usize,
        archive_before: usize,
        archive_after: usize,
        evals_before: usize,
        evals_after: usize,
    },
    /// Step 6 scored the surrogate.
    ErrorUpdate {
        err: f64,
        err_smoothed: f64,
        n_hat: usize,
    },
}

struct Tracker {
    best_f: f64,
    best_x: Vec<f64>,
    history: Vec<(usize, f64)>,
    last_improvement_value: f64,
    true_gens_since_improvement: usize,
}

impl Tracker {
    fn new() -> Self {
        Self {
            best_f: f64::INFINITY,
            best_x: Vec::new(),
            history: Vec::new(),
            last_improvement_value: f64::INFINITY,
            true_gens_since_improvement: 0,
        }
    }

    fn observe(&mut self, objective: &dyn Objective, x: &[f64], observed: f64) {
        let v = objective.target_value(x, observed);
        if v < self.best_f {
            self.best_f = v;
            self.best_x = x.to_vec();
        }
    }

    fn close_batch(&mut self, evals: usize) {
        self.history.push((evals, self.best_f));
    }

    fn close_true_generation(&mut self) {
        if self.best_f < self.last_improvement_value - STAGNATION_DELTA {
            self.last_improvement_value = self.best_f;
            self.true_gens_since_improvement = 0;
        } else {
            self.true_gens_since_improvement += 1;
        }
    }
}

struct Run<'o> {
    objective: &'o mut dyn Objective,
    params: CmaParams,
    state: CmaState,
    archive: Archive,
    tracker: Tracker,
    max_evals: usize,
    target_f: f64,
    stagnation_limit: Option<usize>,
    attempted: usize,
    accepted: usize,
    seed: u64,
}

impl<'o> Run<'o> {
    fn new(
        objective: &'o mut dyn Objective,
        dim: usize,
        init_box: &Bounds,
        sigma0: f64,
        config: &SaoConfig,
    ) -> Result<Self> {
        config.validate()?;
        let params = CmaParams::new(dim)?;
        let state = CmaState::new(&params, init_box, sigma0, config.seed)?;
        Ok(Self {
            objective,
            params,
            state,
            archive: Archive::new(dim),
            tracker: Tracker::new(),
            max_evals: config.max_evals_for(dim),
            target_f: config.target_f,
            stagnation_limit: config.stagnation_guard.then_some(50 * dim),
            attempted: 0,
            accepted: 0,
            seed: config.seed,
        })
    }

    fn finished(&self) -> bool {
        self.tracker.best_f <= self.target_f
            || self
                .stagnation_limit
                .is_some_and(|limit| self.tracker.true_gens_since_improvement >= limit)
    }

    fn can_spend(&self, evals: usize) -> bool {
        self.state.eval_count + evals <= self.max_evals
    }

    fn true_generation(&mut self) -> Result<Vec<crate::cma::Candidate>> {
        let pop = gen_cma(
            &mut self.state,
            &self.params,
            &mut *self.objective,
            Some(&mut self.archive),
        )?;
        for c in &pop {
            self.tracker.observe(
                &*self.objective,
                c.x.as_slice(),
                c.fitness.unwrap_or(f64::INFINITY),
            );
        }
        self.tracker.close_batch(self.state.eval_count);
        self.tracker.close_true_generation();
        Ok(pop)
    }

    fn evaluate_point(&mut self, x: &[f64]) -> Result<f64> {
        let v = self.objective.evaluate(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation {
                x: x.to_vec(),
                value: v,
            });
        }
        self.state.eval_count += 1;
        self.archive.push(x.to_vec(), v, self.state.generation);
        self.tracker.observe(&*self.objective, x, v);
        Ok(v)
    }

    fn result(self) -> RunResult {
        RunResult {
            evals_used: self.state.eval_count,
            best_f: self.tracker.best_f,
            best_x: self.tracker.best_x,
            success: self.tracker.best_f <= self.target_f,
            history: self.tracker.history,
            injections_attempted: self.attempted,
            injections_accepted: self.accepted,
            seed: self.seed,
        }
    }
}

/// Plain CMA-ES with the same budget, target and stagnation rules as
/// [`run_cma_sao`].
pub fn run_cma_es(
    objective: &mut dyn Objective,
    dim: usize,
    init_box: &Bounds,
    sigma0: f64,
    config: &SaoConfig,
) -> Result<RunResult> {
    let mut run = Run::new(objective, dim, init_box, sigma0, config)?;
    while !run.finished() && run.can_spend(run.params.lambda) {
        run.true_generation()?;
    }
    Ok(run.result())
}

pub fn run_cma_sao(
    objective: &mut dyn Objective,
    dim: usize,
    init_box: &Bounds,
    sigma0: f64,
    config: &SaoConfig,
) -> Result<RunResult> {
    run_cma_sao_observed(objective, dim, init_box, sigma0, config, &mut |_| {})
}

/// [`run_cma_sao`] reporting each phase to `observer`.
pub fn run_cma_sao_observed(
    objective: &mut dyn Objective,
    dim: usize,
    init_box: &Bounds,
    sigma0: f64,
    config: &SaoConfig,
    observer: &mut dyn FnMut(SaoEvent<'_>),
) -> Result<RunResult> {
    let mut run = Run::new(objective, dim, init_box, sigma0, config)?;
    let lambda = run.params.lambda;
    let ls_budget = config.ls_budget_for(dim);
    let mut ls_rng = ChaCha8Rng::seed_from_u64(substream(config.seed, "local-search"));
    let mut ctrl = SurrogateController::new(config.tau_err, config.beta_err, config.n_hat_max);

    for _ in 0..config.g_start {
        if run.finished() || !run.can_spend(lambda) {
            return Ok(run.result());
        }
        run.true_generation()?;
        observer(SaoEvent::TrueGeneration {
            state: &run.state,
            archive_len: run.archive.len(),
        });
    }

    while !run.finished() && run.can_spend(lambda) {
        // A fit can fail on degenerate archives; the iteration then falls
        // back to a plain true generation.
        let model = build_surrogate(&run.archive, &mut run.state, config.kernel).ok();

        if let Some(model) = &model {
            if run.can_spend(2 + lambda) {
                let training: Vec<Vec<f64>> = select_training_set(&run.archive, dim)?
                    .into_iter()
                    .map(|(x, _)| x)
                    .collect();
                let x_mean = run.state.mean.as_slice().to_vec();
                if let Ok(tbox) = trust_box(&training, &x_mean) {
                    let x_best =
                        find_surrogate_minimum(model, &tbox, &x_mean, ls_budget, &mut ls_rng)?;
                    let f_mean = run.evaluate_point(&x_mean)?;
                    let f_best = run.evaluate_point(&x_best)?;
                    run.tracker.close_batch(run.state.eval_count);
                    run.attempted += 1;
                    let mean_before = run.state.mean.clone();
                    let accepted = f_best < f_mean;
                    if accepted {
                        inject_best(&mut run.state, &x_best, &run.params, config.sigma_rate)?;
                        run.accepted += 1;
                    }
                    observer(SaoEvent::Probe {
                        f_mean,
                        f_best,
                        accepted,
                        mean_before: &mean_before,
                        state: &run.state,
                    });
                    if run.finished() {
                        break;
                    }
                }
            }

            let archive_before = run.archive.len();
            let evals_before = run.state.eval_count;
            let mut surrogate = SurrogateObjective(model);
            for _ in 0..ctrl.n_hat {
                gen_cma(
                    &mut run.state,
                    &run.params,
                    &mut surrogate,
                    Some(&mut run.archive),
                )?;
            }
            observer(SaoEvent::SurrogatePhase {
                generations: ctrl.n_hat,
                archive_before,
                archive_after: run.archive.len(),
                evals_before,
                evals_after: run.state.eval_count,
            });
        }

        if !run.can_spend(lambda) {
            break;
        }
        let pop = run.true_generation()?;
        observer(SaoEvent::TrueGeneration {
            state: &run.state,
            archive_len: run.archive.len(),
        });

        if let Some(model) = &model {
            let test: Vec<(Vec<f64>, f64)> = pop
                .iter()
                .map(|c| (c.x.as_slice().to_vec(), c.fitness.unwrap_or(f64::INFINITY)))
                .collect();
            let err = ranking_error(model, &test)?;
            let err_smoothed = ctrl.update_error(err)?;
            let n_hat = ctrl.compute_lifespan();
            observer(SaoEvent::ErrorUpdate {
                err,
                err_smoothed,
                n_hat,
            });
        }
    }
    Ok(run.result())
}

/// Mean evaluation count over the successful runs of a set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub successes: usize,
    pub mean_evals: f64,
}

impl Aggregate {
    pub fn of(runs: &[RunResult]) -> Self {
        let ok: Vec<usize> = runs
            .iter()
            .filter(|r| r.success)
            .map(|r| r.evals_used)
            .collect();
        let mean_evals = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().sum::<usize>() as f64 / ok.len() as f64
        };
        Self {
            trials: runs.len(),
            successes: ok.len(),
            mean_evals,
        }
    }

    pub fn from_mean(mean_evals: f64) -> Self {
        Self {
            trials: 1,
            successes: 1,
            mean_evals,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Baseline mean evaluations over candidate mean evaluations.
pub fn speedup(baseline: &Aggregate, candidate: &Aggregate) -> Result<f64> {
    if !(candidate.mean_evals > 0.0) || !baseline.mean_evals.is_finite() {
        return Err(Error::UndefinedSpeedup);
    }
    Ok(baseline.mean_evals / candidate.mean_evals)
}
