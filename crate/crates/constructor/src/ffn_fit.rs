//! Random-feature two-layer ReLU fits of basis functions.

use indhead_linalg::{lstsq_multi, ridge_lstsq, Matrix, SeededRng};
use indhead_transformer::FfnParams;
use serde::{Deserialize, Serialize};

use crate::kernel::radical_inverse;
use crate::{ConstructError, Result};

/// Axis-aligned box `Π_j [lo_j, hi_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn sample(&self, rng: &mut SeededRng) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| rng.uniform_in(a, b)).collect()
    }

    /// Range of `w·u` over the box.
    fn projection_range(&self, w: &[f64]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for ((&a, &b), &wj) in self.lo.iter().zip(&self.hi).zip(w) {
            lo += (wj * a).min(wj * b);
            hi += (wj * a).max(wj * b);
        }
        (lo, hi)
    }
}

/// Scalar network `u ↦ Σ_m a_m relu(b_m·u + c_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFit {
    /// `width × dim`.
    pub inner: Matrix,
    pub bias: Vec<f64>,
    pub outer: Vec<f64>,
    pub heldout_max_error: f64,
    /// Set when the least-squares solve fell back to ridge regularization.
    pub ridge_fallback: bool,
}

impl BasisFit {
    pub fn width(&self) -> usize {
        self.outer.len()
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        (0..self.width())
            .map(|m| {
                let pre: f64 = self.inner.row(m).iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + self.bias[m];
                self.outer[m] * pre.max(0.0)
            })
            .sum()
    }

    /// Residual FFN block on `D = dim + 1` coordinates that writes the fitted
    /// value into the last coordinate.
    pub fn ffn_params(&self) -> FfnParams {
        let dim = self.inner.cols();
        let mut inner = Matrix::zeros(self.width(), dim + 1);
        inner.set_block(0, 0, &self.inner);
        let mut outer = Matrix::zeros(dim + 1, self.width());
        for (m, &a) in self.outer.iter().enumerate() {
            outer[(dim, m)] = a;
        }
        FfnParams { inner, bias: self.bias.clone(), outer }
    }
}

/// Inner weights for `width` features.
///
/// The first two features are an always-active pair `relu(±w·u + c)` along one
/// random direction, so affine functions along it are representable exactly;
/// the rest have unit-sphere directions and kinks inside the box's projection
/// range along that direction. Kink offsets follow a randomly shifted van der
/// Corput sequence: uniformly distributed like independent draws, but without
/// the `O(log m / m)` gaps that limit the fit. Features are drawn sequentially,
/// so a wider fit contains every feature of a narrower one.
fn features(domain: &DomainBox, width: usize, rng: &mut SeededRng) -> (Matrix, Vec<f64>) {
    let dim = domain.dim();
    let mut inner = Matrix::zeros(width, dim);
    let mut bias = Vec::with_capacity(width);
    let w0 = rng.unit_vector(dim);
    let (lo0, hi0) = domain.projection_range(&w0);
    let shift = rng.uniform();
    for m in 0..width {
        let (w, c) = match m {
            0 => (w0.clone(), -lo0),
            1 => (w0.iter().map(|x| -x).collect(), hi0),
            _ => {
                let w = rng.unit_vector(dim);
                let (lo, hi) = domain.projection_range(&w);
                let c = -(lo + (radical_inverse(m - 1) + shift).fract() * (hi - lo));
                (w, c)
            }
        };
        inner.row_mut(m).copy_from_slice(&w);
        bias.push(c);
    }
    (inner, bias)
}

fn design(inner: &Matrix, bias: &[f64], pts: &[Vec<f64>]) -> Matrix {
    Matrix::from_fn(pts.len(), inner.rows(), |r, m| {
        let pre: f64 = inner.row(m).iter().zip(&pts[r]).map(|(a, b)| a * b).sum::<f64>() + bias[m];
        pre.max(0.0)
    })
}

/// Fits `basis` on `domain` with `width` random ReLU features and least-squares
/// outer weights. Feature, training and held-out points use independent
/// substreams of `seed`.
pub fn fit_basis_ffn(
    basis: &dyn Fn(&[f64]) -> f64,
    width: usize,
    domain: &DomainBox,
    n_train: usize,
    seed: u64,
) -> Result<BasisFit> {
    if width < 2 {
        return Err(ConstructError::Invalid(format!("width {width} must be at least 2")));
    }
    if domain.dim() == 0 || domain.lo.len() != domain.hi.len() {
        return Err(ConstructError::Invalid("malformed domain box".into()));
    }
    let (inner, bias) = features(domain, width, &mut SeededRng::substream(seed, 1));
    let mut train_rng = SeededRng::substream(seed, 2);
    let pts: Vec<Vec<f64>> = (0..n_train.max(width + 1)).map(|_| domain.sample(&mut train_rng)).collect();
    let y = Matrix::column_vector(&pts.iter().map(|p| basis(p)).collect::<Vec<_>>());
    let a = design(&inner, &bias, &pts);
    let (coef, report) = lstsq_multi(&a, &y, 1e-13)?;
    let (outer, ridge_fallback) = if report.rank < width {
        let (c, _) = ridge_lstsq(&a, &y, 1e-10)?;
        (c.column(0), true)
    } else {
        (coef.column(0), false)
    };
    let mut fit = BasisFit { inner, bias, outer, heldout_max_error: 0.0, ridge_fallback };
    let mut test_rng = SeededRng::substream(seed, 3);
    fit.heldout_max_error = (0..2000)
        .map(|_| {
            let p = domain.sample(&mut test_rng);
            (fit.eval(&p) - basis(&p)).abs()
        })
        .fold(0.0, f64::max);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_is_exact_with_two_units() {
        let dom = DomainBox::cube(1, -2.0, 2.0);
        let f = fit_basis_ffn(&|u: &[f64]| 0.7 * u[0] - 0.3, 2, &dom, 50, 5).unwrap();
        assert!(f.heldout_max_error < 1e-8, "{}", f.heldout_max_error);
    }

    #[test]
    fn ffn_block_writes_value() {
        let dom = DomainBox::cube(1, 0.0, 1.0);
        let f = fit_basis_ffn(&|u: &[f64]| u[0] * u[0], 16, &dom, 200, 1).unwrap();
        let block = f.ffn_params();
        let z = Matrix::from_rows(&[vec![0.25, 0.5], vec![0.0, 0.0]]);
        let out = indhead_transformer::ffn_forward(&z, &block).unwrap();
        assert!((out[(1, 1)] - f.eval(&[0.5])).abs() < 1e-14);
        assert_eq!(out[(0, 0)], 0.25);
    }

    #[test]
    fn too_narrow_rejected() {
        assert!(fit_basis_ffn(&|_: &[f64]| 0.0, 1, &DomainBox::cube(1, 0.0, 1.0), 10, 0).is_err());
    }
}
