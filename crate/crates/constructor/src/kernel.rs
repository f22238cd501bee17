//! Sum-of-exponentials fits of the lag indicator `t ↦ 1{t = i}` on `t ≥ 1`.
//!
//! The model is `φ(t) = Σ_k α_k e^{−β_k (t−1)}`. Rates come from a grid and
//! the weights from linear least squares on `t = 1..T_max`; the reported ℓ₁
//! error adds the analytic tail beyond the horizon.

use indhead_linalg::{lstsq, Matrix};
use serde::{Deserialize, Serialize};

use crate::{ConstructError, Result};

/// Where the exponential rates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BetaGrid {
    /// Log-spaced on `[c/T_max, c·ln T_max]`, enumerated in nested
    /// (van der Corput) order starting from the fastest rate: the first `H`
    /// rates for `H = 2^k` form an evenly log-spaced lattice, and the first
    /// `H` rates are always a subset of the first `H + 1`.
    LogSpaced { c: f64 },
    /// Caller-chosen rates; `H_i` must equal the list length.
    Explicit(Vec<f64>),
}

impl Default for BetaGrid {
    fn default() -> Self {
        BetaGrid::LogSpaced { c: 3.0 }
    }
}

/// Fitted memory kernel for one lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFit {
    pub lag: usize,
    /// `(α_k, β_k)` pairs.
    pub terms: Vec<(f64, f64)>,
    pub ell1_error: f64,
    pub t_max: usize,
}

impl KernelFit {
    pub fn heads(&self) -> usize {
        self.terms.len()
    }

    /// `φ(t)` for `t ≥ 1`.
    pub fn eval(&self, t: usize) -> f64 {
        kernel_value(&self.terms, t)
    }

    /// `Σ_k |α_k| Z(β_k)`: the total value weight of the heads, which sets the
    /// floating-point error floor of the summed head outputs.
    pub fn weight_mass(&self) -> f64 {
        weight_mass(&self.terms)
    }
}

fn weight_mass(terms: &[(f64, f64)]) -> f64 {
    terms.iter().map(|&(a, b)| a.abs() * partition(b)).sum()
}

fn kernel_value(terms: &[(f64, f64)], t: usize) -> f64 {
    let gap = (t - 1) as f64;
    terms.iter().map(|&(a, b)| a * (-b * gap).exp()).sum()
}

/// `1 / (1 − e^{−β}) = Σ_{j≥0} e^{−βj}`, the full geometric partition function.
pub fn partition(beta: f64) -> f64 {
    1.0 / -(-beta).exp_m1()
}

/// `Σ_{t=1}^{T} |1{t=i} − φ(t)| + Σ_k |α_k| e^{−β_k T}/(1 − e^{−β_k})`.
pub fn ell1_error(lag: usize, terms: &[(f64, f64)], t_max: usize) -> f64 {
    let body: f64 = (1..=t_max)
        .map(|t| ((t == lag) as u8 as f64 - kernel_value(terms, t)).abs())
        .sum();
    let tail: f64 = terms.iter().map(|&(a, b)| a.abs() * (-b * t_max as f64).exp() * partition(b)).sum();
    body + tail
}

/// Base-2 van der Corput point `j`.
pub(crate) fn radical_inverse(mut j: usize) -> f64 {
    let (mut x, mut f) = (0.0, 0.5);
    while j > 0 {
        x += f * (j & 1) as f64;
        j >>= 1;
        f *= 0.5;
    }
    x
}

/// The first `h` rates of a grid.
pub fn grid_rates(grid: &BetaGrid, h: usize, t_max: usize) -> Result<Vec<f64>> {
    let rates = match grid {
        BetaGrid::LogSpaced { c } => {
            if !(*c > 0.0) {
                return Err(ConstructError::Invalid(format!("grid scale {c} must be positive")));
            }
            let lo = c / t_max as f64;
            let hi = c * (t_max as f64).ln();
            (0..h).map(|j| hi * (lo / hi).powf(radical_inverse(j))).collect()
        }
        BetaGrid::Explicit(b) => {
            if b.len() != h {
                return Err(ConstructError::Invalid(format!("{} explicit rates for H_i = {h}", b.len())));
            }
            b.clone()
        }
    };
    if rates.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(ConstructError::Invalid("rates must be positive and finite".into()));
    }
    let mut sorted = rates.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(ConstructError::Invalid("duplicate rates in grid".into()));
    }
    Ok(rates)
}

/// Least-squares sum-of-exponentials fit of the indicator at lag `i`.
///
/// Least squares on the first `j` grid rates is solved for every `j ≤ H_i`,
/// and the fit with the smallest ℓ₁ error is kept, with zero weight on the
/// unused rates. Because the grid is nested, the reported error is then
/// nonincreasing in `H_i`; plain least squares only guarantees that for the
/// ℓ₂ error.
pub fn fit_indicator_kernel(lag: usize, h: usize, t_max: usize, grid: &BetaGrid) -> Result<KernelFit> {
    if lag == 0 || h == 0 {
        return Err(ConstructError::Invalid("lag and H_i must be at least 1".into()));
    }
    if t_max < (4 * lag).max(64) {
        return Err(ConstructError::Invalid(format!("horizon {t_max} below max(4i, 64) = {}", (4 * lag).max(64))));
    }
    let betas = grid_rates(grid, h, t_max)?;
    let y: Vec<f64> = (1..=t_max).map(|t| (t == lag) as u8 as f64).collect();
    let mut best: Option<KernelFit> = None;
    for j in 1..=h {
        let a = Matrix::from_fn(t_max, j, |r, k| (-betas[k] * r as f64).exp());
        let (mut alphas, _) = lstsq(&a, &y, 1e-15)?;
        alphas.resize(h, 0.0);
        let terms: Vec<(f64, f64)> = alphas.into_iter().zip(betas.iter().copied()).collect();
        let err = ell1_error(lag, &terms, t_max);
        if best.as_ref().map_or(true, |b| err < b.ell1_error) {
            best = Some(KernelFit { lag, terms, ell1_error: err, t_max });
        }
    }
    Ok(best.expect("h ≥ 1"))
}

/// Splits `h` heads over lags `1..n−1` proportionally to `e^{0.01 i}`
/// (largest remainder, at least one head per lag).
pub fn allocate_heads(n: usize, h: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(ConstructError::Invalid(format!("n = {n} must be at least 2")));
    }
    let lags = n - 1;
    if h < lags {
        return Err(ConstructError::TooFewHeads { n, h });
    }
    let w: Vec<f64> = (1..=lags).map(|i| (0.01 * i as f64).exp()).collect();
    let total: f64 = w.iter().sum();
    let quota: Vec<f64> = w.iter().map(|x| h as f64 * x / total).collect();
    let mut alloc: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..lags).collect();
    // Largest fractional part first; ties go to the larger lag (heavier weight).
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quota[a] - quota[a].floor(), quota[b] - quota[b].floor());
        fb.total_cmp(&fa).then(b.cmp(&a))
    });
    let assigned: usize = alloc.iter().sum();
    for &i in order.iter().cycle().take(h - assigned) {
        alloc[i] += 1;
    }
    while let Some(z) = alloc.iter().position(|&x| x == 0) {
        let donor = (0..lags).max_by_key(|&i| (alloc[i], i)).expect("non-empty");
        alloc[donor] -= 1;
        alloc[z] += 1;
    }
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_term_geometric_error() {
        // α = 1 at β = 4: the residual is the geometric tail e^{-4}/(1 − e^{-4}).
        let e = ell1_error(1, &[(1.0, 4.0)], 64);
        assert_abs_diff_eq!(e, (-4.0f64).exp() / (1.0 - (-4.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(e, 0.01866, epsilon = 5e-6);
    }

    #[test]
    fn single_term_fit_tends_to_unit_weight() {
        let mut prev = f64::INFINITY;
        for b in [2.0, 4.0, 8.0, 16.0] {
            let f = fit_indicator_kernel(1, 1, 64, &BetaGrid::Explicit(vec![b])).unwrap();
            let (a, _) = f.terms[0];
            // Least squares gives α = 1 − e^{−2β} exactly.
            assert_abs_diff_eq!(a, 1.0 - (-2.0 * b).exp(), epsilon = 1e-12);
            assert!(f.ell1_error < prev);
            prev = f.ell1_error;
        }
    }

    #[test]
    fn nested_grid() {
        let g = BetaGrid::default();
        let a = grid_rates(&g, 4, 256).unwrap();
        let b = grid_rates(&g, 9, 256).unwrap();
        assert_eq!(a[..], b[..4]);
        let hi = 3.0 * 256f64.ln();
        assert_abs_diff_eq!(a[0], hi, epsilon = 1e-12);
        // Evenly log-spaced for H = 4.
        let mut s = a.clone();
        s.sort_by(f64::total_cmp);
        let r: Vec<f64> = s.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        assert!(r.windows(2).all(|p| (p[0] - p[1]).abs() < 1e-12));
    }

    #[test]
    fn duplicate_or_bad_rates_rejected() {
        assert!(grid_rates(&BetaGrid::Explicit(vec![1.0, 1.0]), 2, 64).is_err());
        assert!(grid_rates(&BetaGrid::Explicit(vec![1.0, -1.0]), 2, 64).is_err());
        assert!(fit_indicator_kernel(3, 2, 32, &BetaGrid::default()).is_err());
    }

    #[test]
    fn partition_is_positive_and_finite() {
        for b in [1e-6, 0.01, 1.0, 30.0, 700.0] {
            let z = partition(b);
            assert!(z.is_finite() && z >= 1.0);
        }
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_heads(3, 2).unwrap(), vec![1, 1]);
        assert_eq!(allocate_heads(5, 40).unwrap(), vec![10, 10, 10, 10]);
        assert_eq!(allocate_heads(4, 8).unwrap(), vec![2, 3, 3]);
        assert!(matches!(allocate_heads(4, 2), Err(ConstructError::TooFewHeads { .. })));
        for n in 2..12 {
            for h in n - 1..60 {
                let a = allocate_heads(n, h).unwrap();
                assert_eq!(a.iter().sum::<usize>(), h);
                assert!(a.iter().all(|&x| x >= 1));
            }
        }
    }
}
