//! Experiment protocols: optimizer speedup, kernel comparison, encoding
//! benefit and fit/predict timing.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functions::{random_rotation, BenchmarkFunction, FunctionKind, Variant};
use crate::cma::{gen_cma, CmaParams, CmaState};
use crate::controller::ranking_error;
use crate::encoding::EncodingTransform;
use crate::error::Result;
use crate::sao::{run_cma_es, run_cma_sao, speedup, Aggregate, RunRecord, RunResult, SaoConfig};
use crate::seed::{derive_seed, label_hash, substream};
use crate::surrogate::{fit_rbf, fit_with_transform, select_training_set, Archive, RbfKernel};

/// Rows plus the metadata needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub study: String,
    pub base_seed: u64,
    /// FNV-1a hash of the study parameters, hex encoded.
    pub config_hash: String,
    pub rows: Vec<T>,
}

impl<T: Serialize> Report<T> {
    pub fn new(study: &str, base_seed: u64, config: &str, rows: Vec<T>) -> Self {
        Self {
            study: study.to_string(),
            base_seed,
            config_hash: format!("{:016x}", label_hash(config)),
            rows,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_csv_rows(&self.rows, writer)
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writeln!(writer)?;
        Ok(())
    }
}

pub fn write_csv_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    CmaEs,
    CmaSao,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CmaEs => "cma-es",
            Algorithm::CmaSao => "cma-sao",
        }
    }

    pub fn run(
        self,
        function: &BenchmarkFunction,
        seed: u64,
        template: &SaoConfig,
    ) -> Result<RunResult> {
        let config = SaoConfig {
            seed,
            ..template.clone()
        };
        let mut objective = function.objective(substream(seed, "noise"));
        match self {
            Algorithm::CmaEs => run_cma_es(
                &mut objective,
                function.dim,
                &function.init_box,
                function.sigma0,
                &config,
            ),
            Algorithm::CmaSao => run_cma_sao(
                &mut objective,
                function.dim,
                &function.init_box,
                function.sigma0,
                &config,
            ),
        }
    }
}

/// Run `trials` seeds of one algorithm on one function. Seeds come from
/// [`derive_seed`], so both algorithms see the same seed set.
pub fn run_trials(
    algo: Algorithm,
    function: &BenchmarkFunction,
    trials: usize,
    base_seed: u64,
    template: &SaoConfig,
) -> Result<Vec<RunResult>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(base_seed, function.kind.name(), function.dim, t);
            algo.run(function, seed, template)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub function: String,
    pub n: usize,
    pub eps: Option<f64>,
    pub algo: String,
    pub mean_evals: f64,
    pub success_rate: f64,
    pub spu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupStudy {
    pub rows: Vec<SpeedupRow>,
    /// Per-run records, `(algorithm, record)`, sorted by function, dimension,
    /// algorithm and trial.
    pub runs: Vec<(String, RunRecord)>,
}

/// Baseline and surrogate-assisted runs on matched seeds for every
/// `(function, dim)`; `spu` is NaN when either side has no success.
pub fn speedup_study(
    functions: &[FunctionKind],
    dims: &[usize],
    trials: usize,
    base_seed: u64,
    template: &SaoConfig,
    variant: Variant,
) -> Result<SpeedupStudy> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &kind in functions {
        for &n in dims {
            let function = BenchmarkFunction::new(kind, n)?.with_variant(variant);
            let base = run_trials(Algorithm::CmaEs, &function, trials, base_seed, template)?;
            let sao = run_trials(Algorithm::CmaSao, &function, trials, base_seed, template)?;
            let agg_base = Aggregate::of(&base);
            let agg_sao = Aggregate::of(&sao);
            for (algo, agg, results) in [
                (Algorithm::CmaEs, agg_base, &base),
                (Algorithm::CmaSao, agg_sao, &sao),
            ] {
                rows.push(SpeedupRow {
                    function: kind.name().to_string(),
                    n,
                    eps: function.noise_eps,
                    algo: algo.name().to_string(),
                    mean_evals: agg.mean_evals,
                    success_rate: agg.success_rate(),
                    spu: speedup(&agg_base, &agg).unwrap_or(f64::NAN),
                });
                runs.extend(
                    results
                        .iter()
                        .map(|r| (algo.name().to_string(), r.record(kind.name(), n))),
                );
            }
        }
    }
    Ok(SpeedupStudy { rows, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfRow {
    pub function: String,
    pub n: usize,
    pub kernel: RbfKernel,
    pub train: usize,
    pub test: usize,
    pub mean_err: f64,
}

/// Training-set size of the kernel comparison: `2(d+1)` for the sphere,
/// `5(d+1)` for Rosenbrock, with ten times as many test points.
pub fn rbf_comparison_sizes(kind: FunctionKind, dim: usize) -> (usize, usize) {
    let train = match kind {
        FunctionKind::Rosenbrock => 5 * (dim + 1),
        _ => 2 * (dim + 1),
    };
    (train, 10 * train)
}

fn uniform_points(
    rng: &mut ChaCha8Rng,
    count: usize,
    dim: usize,
    lo: f64,
    hi: f64,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

/// Ranking error of each kernel on one random draw; same data for all kernels.
fn kernel_errors(kind: FunctionKind, dim: usize, seed: u64) -> Result<Vec<f64>> {
    let f = BenchmarkFunction::new(kind, dim)?;
    let (n_train, n_test) = rbf_comparison_sizes(kind, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labelled = |pts: Vec<Vec<f64>>| -> Result<Vec<(Vec<f64>, f64)>> {
        pts.into_iter()
            .map(|x| Ok((f.value(&x)?, x)))
            .map(|r: Result<_>| r.map(|(y, x)| (x, y)))
            .collect()
    };
    let train = labelled(uniform_points(&mut rng, n_train, dim, -2.0, 2.0))?;
    let test = labelled(uniform_points(&mut rng, n_test, dim, -2.0, 2.0))?;
    let centers: Vec<DVector<f64>> = train
        .iter()
        .map(|(x, _)| DVector::from_column_slice(x))
        .collect();
    let values: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    RbfKernel::ALL
        .iter()
        .map(|&kernel| {
            let model = fit_rbf(&centers, &values, kernel)?;
            ranking_error(&model, &test)
        })
        .collect()
}

/// Mean ranking error of the cubic, thin-plate-spline and linear kernels on
/// uniform data in `[-2, 2]^d` for the sphere and Rosenbrock.
pub fn rbf_comparison_study(dims: &[usize], repeats: usize, base_seed: u64) -> Result<Vec<RbfRow>> {
    let functions = [FunctionKind::Sphere, FunctionKind::Rosenbrock];
    let units: Vec<(FunctionKind, usize, usize)> = functions
        .iter()
        .flat_map(|&k| {
            dims.iter()
                .flat_map(move |&d| (0..repeats).map(move |r| (k, d, r)))
        })
        .collect();
    let errors: Vec<Vec<f64>> = units
        .par_iter()
        .map(|&(k, d, r)| {
            kernel_errors(
                k,
                d,
                derive_seed(base_seed, &format!("rbf-{}", k.name()), d, r),
            )
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &kind in &functions {
        for &d in dims {
            let (train, test) = rbf_comparison_sizes(kind, d);
            for (ki, &kernel) in RbfKernel::ALL.iter().enumerate() {
                let errs: Vec<f64> = units
                    .iter()
                    .zip(&errors)
                    .filter(|((k, dd, _), _)| *k == kind && *dd == d)
                    .map(|(_, e)| e[ki])
                    .collect();
                rows.push(RbfRow {
                    function: kind.name().to_string(),
                    n: d,
                    kernel,
                    train,
                    test,
                    mean_err: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingRow {
    pub repeat: usize,
    pub seed: u64,
    /// Condition number of the learned covariance.
    pub cov_condition: f64,
    pub err_plain: f64,
    pub err_encoded: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x1: f64,
    pub x2: f64,
    pub f: f64,
    pub f_plain: f64,
    pub f_encoded: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingStudyConfig {
    pub repeats: usize,
    /// CMA-ES generations run before the fit, to learn `(m, C)`.
    pub generations: usize,
    pub test_points: usize,
    pub grid_res: usize,
}

impl Default for EncodingStudyConfig {
    fn default() -> Self {
        Self {
            repeats: 20,
            generations: 40,
            test_points: 100,
            grid_res: 51,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingStudy {
    pub rows: Vec<EncodingRow>,
    /// Contour data of the first repeat, `grid_res^2` rows.
    pub grid: Vec<GridRow>,
}

impl EncodingStudy {
    pub fn encoded_wins(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.err_encoded <= r.err_plain)
            .count()
    }
}

struct EncodingCase {
    row: EncodingRow,
    grid: Vec<GridRow>,
}

fn encoding_case(
    repeat: usize,
    seed: u64,
    cfg: &EncodingStudyConfig,
    want_grid: bool,
) -> Result<EncodingCase> {
    let dim = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, "rotation"));
    let function = BenchmarkFunction::new(FunctionKind::Ellipsoid, dim)?
        .with_rotation(random_rotation(dim, &mut rng));
    let params = CmaParams::new(dim)?;
    let mut state = CmaState::new(&params, &function.init_box, function.sigma0, seed)?;
    let mut archive = Archive::new(dim);
    let mut objective = function.objective(0);
    for _ in 0..cfg.generations {
        gen_cma(&mut state, &params, &mut objective, Some(&mut archive))?;
    }

    let training = select_training_set(&archive, dim)?;
    let plain = fit_with_transform(
        &training,
        EncodingTransform::identity(dim),
        RbfKernel::Cubic,
    )?;
    let transform = EncodingTransform {
        mean: state.mean.clone(),
        inv_sqrt: state.inv_sqrt(),
        generation_stamp: state.generation,
    };
    let encoded = fit_with_transform(&training, transform, RbfKernel::Cubic)?;

    let factor = state.eigen().sampling_factor();
    let test = (0..cfg.test_points)
        .map(|_| {
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &state.mean + (&factor * z) * state.sigma;
            let x = x.as_slice().to_vec();
            function.value(&x).map(|y| (x, y))
        })
        .collect::<Result<Vec<_>>>()?;

    let scale_max = state.eigen().scales.max();
    let cov_condition = (scale_max / state.eigen().scales.min()).powi(2);
    let row = EncodingRow {
        repeat,
        seed,
        cov_condition,
        err_plain: ranking_error(&plain, &test)?,
        err_encoded: ranking_error(&encoded, &test)?,
    };

    let mut grid = Vec::new();
    if want_grid && cfg.grid_res > 0 {
        let half = 3.0 * state.sigma * scale_max;
        let res = cfg.grid_res;
        let step = if res > 1 {
            2.0 * half / (res - 1) as f64
        } else {
            0.0
        };
        for i in 0..res {
            for j in 0..res {
                let x = vec![
                    state.mean[0] - half + step * i as f64,
                    state.mean[1] - half + step * j as f64,
                ];
                grid.push(GridRow {
                    x1: x[0],
                    x2: x[1],
                    f: function.value(&x)?,
                    f_plain: plain.predict(&x)?,
                    f_encoded: encoded.predict(&x)?,
                });
            }
        }
    }
    Ok(EncodingCase { row, grid })
}

/// Cubic RBF fits with and without the covariance encoding on a rotated
/// two-dimensional ellipsoid, scored on points drawn from the learned search
/// distribution.
pub fn encoding_benefit_study(cfg: &EncodingStudyConfig, base_seed: u64) -> Result<EncodingStudy> {
    let cases: Vec<EncodingCase> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| encoding_case(r, derive_seed(base_seed, "encoding", 2, r), cfg, r == 0))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(cases.len());
    let mut grid = Vec::new();
    for case in cases {
        if case.row.repeat == 0 {
            grid = case.grid;
        }
        rows.push(case.row);
    }
    Ok(EncodingStudy { rows, grid })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub train: usize,
    pub test: usize,
    pub fit_ms: f64,
    pub predict_ms: f64,
}

/// `floor(100 sqrt(n))`.
pub fn timing_train_size(dim: usize) -> usize {
    (100.0 * (dim as f64).sqrt()).floor() as usize
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Wall-clock cost of fitting a cubic RBF on `floor(100 sqrt(n))` points and
/// predicting `test` points, median over `reps` runs. Runs sequentially.
pub fn timing_study(
    dims: &[usize],
    test: usize,
    reps: usize,
    base_seed: u64,
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for &n in dims {
        let train = timing_train_size(n);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, "timing", n, 0));
        let centers: Vec<DVector<f64>> = (0..train)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let values: Vec<f64> = centers.iter().map(|c| c.norm_squared()).collect();
        let probes = DMatrix::from_fn(test, n, |_, _| rng.random_range(-2.0..2.0));
        let mut fit_ms = Vec::new();
        let mut predict_ms = Vec::new();
        for _ in 0..reps.max(1) {
            let t0 = Instant::now();
            let model = fit_rbf(&centers, &values, RbfKernel::Cubic)?;
            fit_ms.push(t0.elapsed().as_secs_f64() * 1e3);
            let t1 = Instant::now();
            let mut acc = 0.0;
            for row in probes.row_iter() {
                let x: Vec<f64> = row.iter().copied().collect();
                acc += model.predict(&x)?;
            }
            predict_ms.push(t1.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(acc);
        }
        rows.push(TimingRow {
            n,
            train,
            test,
            fit_ms: median(fit_ms),
            predict_ms: median(predict_ms),
        });
    }
    Ok(rows)
}
