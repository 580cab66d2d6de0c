//! Unrotated BBOB-style continuous functions over the unit hypercube.
//!
//! Inputs `u ∈ [0,1]^d` are mapped affinely onto `z ∈ [-5,5]^d` before the
//! raw function is applied. All functions are minimized.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DOMAIN_LOWER: f64 = -5.0;
pub const DOMAIN_UPPER: f64 = 5.0;
pub const SHIFT_BOUND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContinuousFunction {
    Sphere,
    Ellipsoid,
    Rastrigin,
    Rosenbrock,
    Discus,
    BentCigar,
    SharpRidge,
    DifferentPowers,
    LinearSlope,
}

impl ContinuousFunction {
    pub const ALL: [ContinuousFunction; 9] = [
        ContinuousFunction::Sphere,
        ContinuousFunction::Ellipsoid,
        ContinuousFunction::Rastrigin,
        ContinuousFunction::Rosenbrock,
        ContinuousFunction::Discus,
        ContinuousFunction::BentCigar,
        ContinuousFunction::SharpRidge,
        ContinuousFunction::DifferentPowers,
        ContinuousFunction::LinearSlope,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContinuousFunction::Sphere => "sphere",
            ContinuousFunction::Ellipsoid => "ellipsoid",
            ContinuousFunction::Rastrigin => "rastrigin",
            ContinuousFunction::Rosenbrock => "rosenbrock",
            ContinuousFunction::Discus => "discus",
            ContinuousFunction::BentCigar => "bentcigar",
            ContinuousFunction::SharpRidge => "sharpridge",
            ContinuousFunction::DifferentPowers => "differentpowers",
            ContinuousFunction::LinearSlope => "linearslope",
        }
    }

    /// Location of the global minimum in `z` coordinates (unshifted).
    pub fn optimum_z(self, dimensions: usize) -> Vec<f64> {
        let coord = match self {
            ContinuousFunction::Rosenbrock => 1.0,
            ContinuousFunction::LinearSlope => DOMAIN_UPPER,
            _ => 0.0,
        };
        vec![coord; dimensions]
    }

    /// Raw function value at a point already in `z` coordinates.
    pub fn eval_z(self, z: &[f64]) -> f64 {
        let d = z.len();
        // exponent ramp (i-1)/(d-1) for 0-based i
        let ramp = |i: usize| i as f64 / (d - 1) as f64;
        match self {
            ContinuousFunction::Sphere => z.iter().map(|x| x * x).sum(),
            ContinuousFunction::Ellipsoid => z
                .iter()
                .enumerate()
                .map(|(i, x)| 10f64.powf(6.0 * ramp(i)) * x * x)
                .sum(),
            ContinuousFunction::Rastrigin => {
                let cos_sum: f64 = z.iter().map(|x| (2.0 * PI * x).cos()).sum();
                let sq_sum: f64 = z.iter().map(|x| x * x).sum();
                10.0 * (d as f64 - cos_sum) + sq_sum
            }
            ContinuousFunction::Rosenbrock => z
                .windows(2)
                .map(|w| {
                    let a = w[0] * w[0] - w[1];
                    let b = w[0] - 1.0;
                    100.0 * a * a + b * b
                })
                .sum(),
            ContinuousFunction::Discus => {
                1e6 * z[0] * z[0] + z[1..].iter().map(|x| x * x).sum::<f64>()
            }
            ContinuousFunction::BentCigar => {
                z[0] * z[0] + 1e6 * z[1..].iter().map(|x| x * x).sum::<f64>()
            }
            ContinuousFunction::SharpRidge => {
                z[0] * z[0] + 100.0 * z[1..].iter().map(|x| x * x).sum::<f64>().sqrt()
            }
            ContinuousFunction::DifferentPowers => z
                .iter()
                .enumerate()
                .map(|(i, x)| x.abs().powf(2.0 + 4.0 * ramp(i)))
                .sum::<f64>()
                .sqrt(),
            ContinuousFunction::LinearSlope => z
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let s = 10f64.powf(ramp(i));
                    DOMAIN_UPPER * s - s * x
                })
                .sum(),
        }
    }
}

impl fmt::Display for ContinuousFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContinuousFunction {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| SpecError::UnknownFunction(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("unknown continuous function `{0}`")]
    UnknownFunction(String),
    #[error("continuous functions need at least 2 dimensions, got {0}")]
    TooFewDimensions(usize),
    #[error("{0} has its optimum pinned to the domain corner and cannot be shifted")]
    ShiftUnsupported(ContinuousFunction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSpec {
    function: ContinuousFunction,
    dimensions: usize,
    shift: Option<Vec<f64>>,
}

impl ContinuousSpec {
    pub fn new(function: ContinuousFunction, dimensions: usize) -> Result<Self, SpecError> {
        if dimensions < 2 {
            return Err(SpecError::TooFewDimensions(dimensions));
        }
        Ok(Self {
            function,
            dimensions,
            shift: None,
        })
    }

    /// Moves the optimum by a vector drawn uniformly from `[-4,4]^d` with a
    /// seeded generator.
    pub fn with_seeded_shift(mut self, seed: u64) -> Result<Self, SpecError> {
        if self.function == ContinuousFunction::LinearSlope {
            return Err(SpecError::ShiftUnsupported(self.function));
        }
        self.shift = Some(seeded_shift(seed, self.dimensions));
        Ok(self)
    }

    pub fn function(&self) -> ContinuousFunction {
        self.function
    }

    pub fn dimensions(&self) -> usize {
        self.dimensions
    }

    pub fn shift(&self) -> Option<&[f64]> {
        self.shift.as_deref()
    }

    /// Unit-cube point at which the minimum is attained.
    pub fn optimum_u(&self) -> Vec<f64> {
        let mut z = self.function.optimum_z(self.dimensions);
        if let Some(shift) = &self.shift {
            z.iter_mut().zip(shift).for_each(|(z, s)| *z += s);
        }
        z.into_iter()
            .map(|z| (z - DOMAIN_LOWER) / (DOMAIN_UPPER - DOMAIN_LOWER))
            .collect()
    }

    pub fn evaluate(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dimensions);
        let mut z = map_unit_to_domain(u);
        if let Some(shift) = &self.shift {
            z.iter_mut().zip(shift).for_each(|(z, s)| *z -= s);
        }
        let value = self.function.eval_z(&z);
        assert!(value.is_finite(), "{} produced {value}", self.function);
        value
    }
}

pub fn seeded_shift(seed: u64, dimensions: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dimensions)
        .map(|_| rng.random_range(-SHIFT_BOUND..=SHIFT_BOUND))
        .collect()
}

/// `z_i = -5 + 10 u_i`.
pub fn map_unit_to_domain(u: &[f64]) -> Vec<f64> {
    u.iter()
        .map(|&x| DOMAIN_LOWER + (DOMAIN_UPPER - DOMAIN_LOWER) * x)
        .collect()
}
