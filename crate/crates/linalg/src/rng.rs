//! Reproducible random streams.
//!
//! The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), seeded
//! through `SeedableRng::seed_from_u64`. Independent substreams use the
//! ChaCha stream counter, so shard `k` of seed `s` is fully determined by
//! `(s, k)`. Normals come from `rand_distr::StandardNormal` (ziggurat).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::Matrix;

/// Distribution of i.i.d. input tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputDist {
    /// Standard normal entries.
    Gaussian,
    /// Uniform over `{-1, +1}`.
    Boolean,
    /// Uniform on `[0, 1)`.
    Uniform,
}

impl std::str::FromStr for InputDist {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "boolean" => Ok(Self::Boolean),
            "uniform" => Ok(Self::Uniform),
            other => Err(format!("unknown distribution `{other}` (gaussian|boolean|uniform)")),
        }
    }
}

/// Single-owner seeded stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream number `k` derived from the same seed.
    pub fn substream(seed: u64, k: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(k);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn sign(&mut self) -> f64 {
        if self.inner.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn draw(&mut self, dist: InputDist) -> f64 {
        match dist {
            InputDist::Gaussian => self.gaussian(),
            InputDist::Boolean => self.sign(),
            InputDist::Uniform => self.uniform(),
        }
    }

    pub fn sample(&mut self, dist: InputDist, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.draw(dist))
    }

    /// Point drawn uniformly from the unit sphere in `dim` dimensions.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.gaussian()).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

/// `rows × cols` matrix of i.i.d. standard normals.
///
/// # Panics
/// If a dimension is zero.
pub fn gaussian_sample(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    assert!(rows > 0 && cols > 0, "dimensions must be positive");
    rng.sample(InputDist::Gaussian, rows, cols)
}

/// `rows × cols` matrix of i.i.d. uniform signs.
///
/// # Panics
/// If a dimension is zero.
pub fn boolean_sample(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    assert!(rows > 0 && cols > 0, "dimensions must be positive");
    rng.sample(InputDist::Boolean, rows, cols)
}

/// `rows × cols` matrix of i.i.d. `U[0,1)` entries.
///
/// # Panics
/// If a dimension is zero.
pub fn uniform_sample(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    assert!(rows > 0 && cols > 0, "dimensions must be positive");
    rng.sample(InputDist::Uniform, rows, cols)
}
