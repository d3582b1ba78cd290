//! (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and
//! rank-one plus rank-mu covariance updates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::encoding::{symmetrized, Eigen};
use crate::error::{Error, Result};
use crate::objective::{Objective, ObjectiveKind};
use crate::surrogate::Archive;

/// Strategy constants for a given dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaParams {
    pub dim: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    /// Approximation of `E||N(0, I)||`.
    pub chi_n: f64,
}

impl CmaParams {
    /// Default population size and learning rates for dimension `dim`.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        let lambda = 4 + (3.0 * (dim as f64).ln()).floor() as usize;
        Self::with_lambda(dim, lambda)
    }

    pub fn with_lambda(dim: usize, lambda: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if lambda < 2 {
            return Err(Error::InvalidConfig(format!(
                "population size {lambda} below 2"
            )));
        }
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu =
            (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        Ok(Self {
            dim,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        })
    }
}

/// Default parameters for dimension `dim`.
pub fn default_params(dim: usize) -> Result<CmaParams> {
    CmaParams::new(dim)
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBox {
                    axis,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: DVector<f64>,
    /// Standard normal draw the point was generated from.
    pub z: DVector<f64>,
    pub fitness: Option<f64>,
}

/// Complete mutable state of one CMA-ES run.
#[derive(Debug, Clone)]
pub struct CmaState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    eigen: Eigen,
    eigen_fresh: bool,
    pub generation: usize,
    pub eval_count: usize,
    rng: ChaCha8Rng,
}

impl CmaState {
    /// Mean drawn uniformly in `init_box`, identity covariance, zero paths.
    pub fn new(params: &CmaParams, init_box: &Bounds, sigma0: f64, seed: u64) -> Result<Self> {
        if init_box.dim() != params.dim {
            return Err(Error::DimensionMismatch {
                expected: params.dim,
                got: init_box.dim(),
            });
        }
        // Re-validate: the fields are public.
        let init_box = Bounds::new(init_box.lower.clone(), init_box.upper.clone())?;
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(Error::InvalidStepSize(sigma0));
        }
        let n = params.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean = DVector::from_iterator(
            n,
            init_box
                .lower
                .iter()
                .zip(&init_box.upper)
                .map(|(&lo, &hi)| rng.random_range(lo..hi)),
        );
        let cov = DMatrix::identity(n, n);
        let eigen = Eigen::of(&cov)?;
        Ok(Self {
            mean,
            sigma: sigma0,
            cov,
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            eigen,
            eigen_fresh: true,
            generation: 0,
            eval_count: 0,
            rng,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn eigen_is_fresh(&self) -> bool {
        self.eigen_fresh
    }

    /// Eigendecomposition of the current covariance, recomputed if stale.
    pub fn eigen(&mut self) -> &Eigen {
        if !self.eigen_fresh {
            self.refresh_eigen();
        }
        &self.eigen
    }

    /// `C^{-1/2}` of the current covariance.
    pub fn inv_sqrt(&mut self) -> DMatrix<f64> {
        self.eigen().inv_sqrt()
    }

    pub fn min_eigenvalue(&mut self) -> f64 {
        self.eigen().min_eigenvalue()
    }

    /// Replace the covariance, re-symmetrizing and flooring its spectrum.
    pub(crate) fn set_covariance(&mut self, cov: DMatrix<f64>) {
        self.cov = symmetrized(&cov);
        self.eigen_fresh = false;
        self.refresh_eigen();
    }

    fn refresh_eigen(&mut self) {
        // `cov` is symmetric by construction, so this cannot fail on a
        // finite matrix.
        let eigen = Eigen::of(&self.cov).expect("covariance is symmetric and finite");
        if eigen.floored {
            self.cov = eigen.reconstruct();
        }
        self.eigen = eigen;
        self.eigen_fresh = true;
    }

    /// Draw `lambda` candidates `x = m + sigma * B * D * z`.
    pub fn sample_population(&mut self, params: &CmaParams) -> Vec<Candidate> {
        let n = self.dim();
        let factor = self.eigen().sampling_factor();
        (0..params.lambda)
            .map(|_| {
                let z = DVector::from_iterator(
                    n,
                    (0..n).map(|_| self.rng.sample::<f64, _>(StandardNormal)),
                );
                let x = &self.mean + (&factor * &z) * self.sigma;
                Candidate {
                    x,
                    z,
                    fitness: None,
                }
            })
            .collect()
    }

    /// Apply one generation's update from candidates sorted ascending by
    /// fitness. Only the first `mu` need to be evaluated.
    pub fn update(&mut self, params: &CmaParams, ranked: &[Candidate]) -> Result<()> {
        let evaluated = ranked
            .iter()
            .take(params.mu)
            .filter(|c| c.fitness.is_some())
            .count();
        if evaluated < params.mu {
            return Err(Error::IncompleteGeneration {
                evaluated,
                required: params.mu,
            });
        }
        let n = self.dim();
        let inv_sqrt = self.inv_sqrt();

        let steps: Vec<DVector<f64>> = ranked[..params.mu]
            .iter()
            .map(|c| (&c.x - &self.mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in params.weights.iter().zip(&steps) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean += &y_w * self.sigma;

        let cs = params.c_sigma;
        self.p_sigma = &self.p_sigma * (1.0 - cs)
            + (&inv_sqrt * &y_w) * (cs * (2.0 - cs) * params.mu_eff).sqrt();
        let ps_norm = self.p_sigma.norm();
        let decay = 1.0 - (1.0 - cs).powi(2 * (self.generation as i32 + 1));
        let h_sigma = ps_norm / decay.sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * params.chi_n;

        let cc = params.c_c;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - cc) + &y_w * (h * (cc * (2.0 - cc) * params.mu_eff).sqrt());

        let c1 = params.c_1;
        let cmu = params.c_mu;
        let keep = 1.0 - c1 - cmu + (1.0 - h) * c1 * cc * (2.0 - cc);
        let mut cov = &self.cov * keep;
        cov.ger(c1, &self.p_c, &self.p_c, 1.0);
        for (w, y) in params.weights.iter().zip(&steps) {
            cov.ger(cmu * w, y, y, 1.0);
        }
        self.set_covariance(cov);

        self.sigma *= ((cs / params.d_sigma) * (ps_norm / params.chi_n - 1.0)).exp();
        self.generation += 1;
        Ok(())
    }
}

/// Start a run: see [`CmaState::new`].
pub fn init_cma(params: &CmaParams, init_box: &Bounds, sigma0: f64, seed: u64) -> Result<CmaState> {
    CmaState::new(params, init_box, sigma0, seed)
}

/// Stable ascending sort by fitness; ties keep sampling order.
pub fn rank(candidates: &mut [Candidate]) {
    candidates.sort_by(|a, b| {
        let fa = a.fitness.unwrap_or(f64::INFINITY);
        let fb = b.fitness.unwrap_or(f64::INFINITY);
        fa.total_cmp(&fb)
    });
}

/// One full generation: sample, evaluate, rank, update.
///
/// True-objective evaluations are counted in `state.eval_count` and appended
/// to `archive` when one is given. Surrogate evaluations leave both
/// untouched. Returns the ranked, evaluated population.
pub fn gen_cma(
    state: &mut CmaState,
    params: &CmaParams,
    objective: &mut dyn Objective,
    archive: Option<&mut Archive>,
) -> Result<Vec<Candidate>> {
    let mut population = state.sample_population(params);
    for cand in &mut population {
        let value = objective.evaluate(cand.x.as_slice());
        if !value.is_finite() {
            return Err(Error::NonFiniteEvaluation {
                x: cand.x.as_slice().to_vec(),
                value,
            });
        }
        cand.fitness = Some(value);
    }
    if objective.kind() == ObjectiveKind::True {
        state.eval_count += population.len();
        if let Some(archive) = archive {
            for cand in &population {
                archive.push(
                    cand.x.as_slice().to_vec(),
                    cand.fitness.unwrap(),
                    state.generation,
                );
            }
        }
    }
    rank(&mut population);
    state.update(params, &population)?;
    Ok(population)
}
