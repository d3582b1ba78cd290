//! Test functions with their initialization boxes and initial step sizes.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cma::Bounds;
use crate::error::{Error, Result};
use crate::objective::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    NoisySphere,
    Ellipsoid,
    Schwefel,
    SchwefelQuarter,
    Rosenbrock,
    Ackley,
    Rastrigin,
    Sphere,
    Cigar,
    Bohachevsky,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 10] = [
        FunctionKind::NoisySphere,
        FunctionKind::Ellipsoid,
        FunctionKind::Schwefel,
        FunctionKind::SchwefelQuarter,
        FunctionKind::Rosenbrock,
        FunctionKind::Ackley,
        FunctionKind::Rastrigin,
        FunctionKind::Sphere,
        FunctionKind::Cigar,
        FunctionKind::Bohachevsky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionKind::NoisySphere => "noisy_sphere",
            FunctionKind::Ellipsoid => "ellipsoid",
            FunctionKind::Schwefel => "schwefel",
            FunctionKind::SchwefelQuarter => "schwefel_quarter",
            FunctionKind::Rosenbrock => "rosenbrock",
            FunctionKind::Ackley => "ackley",
            FunctionKind::Rastrigin => "rastrigin",
            FunctionKind::Sphere => "sphere",
            FunctionKind::Cigar => "cigar",
            FunctionKind::Bohachevsky => "bohachevsky",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|k| k.name()).join(", ")
    }

    /// Initialization interval applied to every coordinate.
    pub fn init_interval(self) -> (f64, f64) {
        match self {
            FunctionKind::NoisySphere => (-3.0, 7.0),
            FunctionKind::Ellipsoid => (1.0, 5.0),
            FunctionKind::Schwefel | FunctionKind::SchwefelQuarter => (-10.0, 10.0),
            FunctionKind::Rosenbrock => (-5.0, 5.0),
            FunctionKind::Ackley => (1.0, 30.0),
            FunctionKind::Rastrigin => (1.0, 5.0),
            FunctionKind::Sphere => (-10.0, 10.0),
            FunctionKind::Cigar => (-5.0, 5.0),
            FunctionKind::Bohachevsky => (1.0, 15.0),
        }
    }

    pub fn sigma0(self) -> f64 {
        match self {
            FunctionKind::NoisySphere => 5.0,
            FunctionKind::Ellipsoid => 2.0,
            FunctionKind::Schwefel | FunctionKind::SchwefelQuarter => 10.0,
            FunctionKind::Rosenbrock => 0.5,
            FunctionKind::Ackley => 14.5,
            FunctionKind::Rastrigin => 2.0,
            FunctionKind::Sphere => 10.0,
            FunctionKind::Cigar => 0.5,
            FunctionKind::Bohachevsky => 7.0,
        }
    }

    /// Functions defined on consecutive coordinate pairs.
    pub fn is_chained(self) -> bool {
        matches!(self, FunctionKind::Rosenbrock | FunctionKind::Bohachevsky)
    }

    pub fn is_unimodal(self) -> bool {
        !matches!(
            self,
            FunctionKind::Ackley | FunctionKind::Rastrigin | FunctionKind::Bohachevsky
        )
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::UnknownFunction {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// Which formula set to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Standard forms, each with optimum value zero.
    #[default]
    Standard,
    /// Formulas exactly as tabulated in the source, kept for auditing:
    /// ellipsoid `10^(2i-1)`, doubly summed Schwefel, Rosenbrock with
    /// `(x_i + 1)^2`, Ackley without `+20+e`, Bohachevsky with `+0.07`.
    AsPrinted,
}

/// Noise strength used for the noisy sphere at the tabulated dimensions;
/// other dimensions take the nearest tabulated entry.
pub fn default_noise_eps(dim: usize) -> f64 {
    const TABLE: [(usize, f64); 7] = [
        (2, 0.35),
        (4, 0.25),
        (8, 0.18),
        (16, 0.13),
        (20, 0.11),
        (32, 0.09),
        (40, 0.08),
    ];
    TABLE
        .iter()
        .min_by_key(|(d, _)| d.abs_diff(dim))
        .map(|&(_, e)| e)
        .unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkFunction {
    pub kind: FunctionKind,
    pub dim: usize,
    pub init_box: Bounds,
    pub sigma0: f64,
    pub noise_eps: Option<f64>,
    /// Orthogonal matrix applied to the input before evaluation.
    pub rotation: Option<DMatrix<f64>>,
    pub variant: Variant,
}

impl BenchmarkFunction {
    /// Tabulated init box and step size; noisy sphere gets its default noise.
    pub fn new(kind: FunctionKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if kind.is_chained() && dim < 2 {
            return Err(Error::ChainedDimension {
                function: kind.name().to_string(),
                dim,
            });
        }
        let (lo, hi) = kind.init_interval();
        Ok(Self {
            kind,
            dim,
            init_box: Bounds::cube(dim, lo, hi)?,
            sigma0: kind.sigma0(),
            noise_eps: (kind == FunctionKind::NoisySphere).then(|| default_noise_eps(dim)),
            rotation: None,
            variant: Variant::Standard,
        })
    }

    pub fn with_rotation(mut self, rotation: DMatrix<f64>) -> Self {
        self.rotation = Some(rotation);
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_noise(mut self, eps: Option<f64>) -> Self {
        self.noise_eps = eps;
        self
    }

    /// Noiseless value.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let y = match &self.rotation {
            Some(r) => (r * DVector::from_column_slice(x)).as_slice().to_vec(),
            None => x.to_vec(),
        };
        Ok(raw_value(self.kind, self.variant, &y))
    }

    /// Value with multiplicative log-normal noise when `noise_eps` is set.
    pub fn evaluate<R: Rng + ?Sized>(&self, x: &[f64], noise: Option<&mut R>) -> Result<f64> {
        let v = self.value(x)?;
        Ok(match (self.noise_eps, noise) {
            (Some(eps), Some(rng)) => v * (eps * rng.sample::<f64, _>(StandardNormal)).exp(),
            (Some(_), None) => {
                return Err(Error::InvalidConfig(format!(
                    "{} needs a noise stream",
                    self.kind
                )))
            }
            (None, _) => v,
        })
    }

    /// Objective adapter owning its noise stream.
    pub fn objective(&self, noise_seed: u64) -> BenchmarkObjective<'_> {
        BenchmarkObjective {
            function: self,
            noise: self
                .noise_eps
                .map(|_| ChaCha8Rng::seed_from_u64(noise_seed)),
        }
    }
}

fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn raw_value(kind: FunctionKind, variant: Variant, x: &[f64]) -> f64 {
    let n = x.len();
    let nf = n as f64;
    let printed = variant == Variant::AsPrinted;
    match kind {
        FunctionKind::Sphere | FunctionKind::NoisySphere => sum_sq(x),
        FunctionKind::Ellipsoid => x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let exponent = if printed {
                    2.0 * (i as f64 + 1.0) - 1.0
                } else if n > 1 {
                    6.0 * i as f64 / (nf - 1.0)
                } else {
                    0.0
                };
                10f64.powf(exponent) * v * v
            })
            .sum(),
        FunctionKind::Schwefel => schwefel(x, printed),
        FunctionKind::SchwefelQuarter => schwefel(x, printed).powf(0.25),
        FunctionKind::Rosenbrock => x
            .windows(2)
            .map(|w| {
                let shift = if printed { w[0] + 1.0 } else { w[0] - 1.0 };
                100.0 * (w[0] * w[0] - w[1]).powi(2) + shift * shift
            })
            .sum(),
        FunctionKind::Ackley => {
            let a = -20.0 * (-0.2 * (sum_sq(x) / nf).sqrt()).exp();
            let mean_cos = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / nf;
            if printed {
                a + mean_cos.exp()
            } else {
                a - mean_cos.exp() + 20.0 + E
            }
        }
        FunctionKind::Rastrigin => {
            10.0 * nf
                + x.iter()
                    .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
                    .sum::<f64>()
        }
        FunctionKind::Cigar => x[0] * x[0] + 1e6 * sum_sq(&x[1..]),
        FunctionKind::Bohachevsky => {
            let c = if printed { 0.07 } else { 0.7 };
            x.windows(2)
                .map(|w| {
                    w[0] * w[0] + 2.0 * w[1] * w[1]
                        - 0.3 * (3.0 * PI * w[0]).cos()
                        - 0.4 * (4.0 * PI * w[1]).cos()
                        + c
                })
                .sum()
        }
    }
}

fn schwefel(x: &[f64], printed: bool) -> f64 {
    if printed {
        x.len() as f64 * sum_sq(x)
    } else {
        let mut partial = 0.0;
        x.iter()
            .map(|v| {
                partial += v;
                partial * partial
            })
            .sum()
    }
}

/// A benchmark function bound to a noise stream.
#[derive(Debug, Clone)]
pub struct BenchmarkObjective<'a> {
    pub function: &'a BenchmarkFunction,
    noise: Option<ChaCha8Rng>,
}

impl Objective for BenchmarkObjective<'_> {
    fn evaluate(&mut self, x: &[f64]) -> f64 {
        self.function
            .evaluate(x, self.noise.as_mut())
            .unwrap_or(f64::NAN)
    }

    fn target_value(&self, x: &[f64], observed: f64) -> f64 {
        if self.function.noise_eps.is_some() {
            self.function.value(x).unwrap_or(observed)
        } else {
            observed
        }
    }
}

/// Uniformly distributed orthogonal matrix (QR of a Gaussian matrix with
/// sign-corrected diagonal).
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
