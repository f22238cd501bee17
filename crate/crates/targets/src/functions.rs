use std::fmt;
use std::sync::Arc;

use indhead_linalg::{softmax, Matrix};

use crate::{Result, TargetError};

type SimFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// Similarity `g(query_patch, key_patch)` between two equal-length patches.
#[derive(Clone)]
pub struct SimilarityFn {
    label: String,
    f: Arc<SimFn>,
}

impl SimilarityFn {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    /// `g(u, v) = uᵀ W v`.
    pub fn bilinear(w: Matrix) -> Self {
        Self::new("bilinear", move |u, v| {
            let wv = w.matvec(v).expect("patch length matches W");
            u.iter().zip(&wv).map(|(a, b)| a * b).sum()
        })
    }

    /// `g ≡ c`.
    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant {c}"), move |_, _| c)
    }

    pub fn eval(&self, query: &[f64], key: &[f64]) -> f64 {
        (self.f)(query, key)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for SimilarityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimilarityFn").field("label", &self.label).finish_non_exhaustive()
    }
}

/// The target families.
#[derive(Debug, Clone)]
pub enum InductionTarget {
    Ih2 { w_star: Matrix },
    Ihn { n: usize, w_star: Matrix },
    Gihn { n: usize, g: SimilarityFn },
    /// `x_{L−2}`.
    FourGram,
    /// Scalar tokens; output `(α★/(1+α★)·x_{L−2}, IH₂ part / (1+α★))`.
    Mixed { alpha: f64, w_star: f64 },
}

impl InductionTarget {
    pub fn eval(&self, seq: &Matrix) -> Result<Vec<f64>> {
        match self {
            Self::Ih2 { w_star } => eval_ih2(seq, w_star),
            Self::Ihn { n, w_star } => eval_ihn(seq, *n, w_star),
            Self::Gihn { n, g } => eval_gihn(seq, *n, g),
            Self::FourGram => eval_four_gram(seq),
            Self::Mixed { alpha, w_star } => eval_mixed(seq, *alpha, *w_star),
        }
    }

    /// Shortest sequence the target is defined on.
    pub fn min_len(&self) -> usize {
        match self {
            Self::Ih2 { .. } => 3,
            Self::Ihn { n, .. } | Self::Gihn { n, .. } => n + 1,
            Self::FourGram => 2,
            Self::Mixed { .. } => 4,
        }
    }
}

/// `X_{from:to}` (1-based, inclusive) stacked oldest token first.
pub fn patch(seq: &Matrix, from: usize, to: usize) -> Vec<f64> {
    (from..=to).flat_map(|t| seq.row(t - 1).iter().copied()).collect()
}

fn check_n(n: usize) -> Result<()> {
    if (2..=100).contains(&n) {
        Ok(())
    } else {
        Err(TargetError::PatternLength(n))
    }
}

fn check_len(seq: &Matrix, min: usize) -> Result<()> {
    if seq.rows() < min {
        return Err(TargetError::TooShort { len: seq.rows(), min });
    }
    Ok(())
}

/// Attention weights of the generalized head over `s = n..L−1` (index 0 is `s = n`).
pub fn ih_weights(seq: &Matrix, n: usize, g: impl Fn(&[f64], &[f64]) -> f64) -> Result<Vec<f64>> {
    check_n(n)?;
    check_len(seq, n + 1)?;
    let len = seq.rows();
    let query = patch(seq, len - n + 2, len);
    let logits: Vec<f64> = (n..len).map(|s| g(&query, &patch(seq, s - n + 1, s - 1))).collect();
    Ok(softmax(&logits).map_err(|e| TargetError::Model(e.to_string()))?)
}

fn mix_tokens(seq: &Matrix, n: usize, weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; seq.cols()];
    for (w, s) in weights.iter().zip(n..seq.rows()) {
        for (o, x) in out.iter_mut().zip(seq.row(s - 1)) {
            *o += w * x;
        }
    }
    out
}

fn bilinear_weights(seq: &Matrix, n: usize, w_star: &Matrix) -> Result<Vec<f64>> {
    let p = (n - 1) * seq.cols();
    if w_star.shape() != (p, p) {
        return Err(TargetError::Shape(format!("W★ is {:?}, expected ({p}, {p})", w_star.shape())));
    }
    ih_weights(seq, n, |u, v| {
        let wv = w_star.matvec(v).expect("checked");
        u.iter().zip(&wv).map(|(a, b)| a * b).sum()
    })
}

/// `Σ_{s=2}^{L−1} x_s · softmax_ν(x_Lᵀ W★ x_{ν−1})_s`.
pub fn eval_ih2(seq: &Matrix, w_star: &Matrix) -> Result<Vec<f64>> {
    eval_ihn(seq, 2, w_star)
}

/// Dot-product in-context n-gram with `W★` of size `(n−1)d × (n−1)d`.
pub fn eval_ihn(seq: &Matrix, n: usize, w_star: &Matrix) -> Result<Vec<f64>> {
    check_n(n)?;
    check_len(seq, n + 1)?;
    let w = bilinear_weights(seq, n, w_star)?;
    Ok(mix_tokens(seq, n, &w))
}

/// In-context n-gram with a generic similarity `g(query, key)`.
pub fn eval_gihn(seq: &Matrix, n: usize, g: &SimilarityFn) -> Result<Vec<f64>> {
    let w = ih_weights(seq, n, |u, v| g.eval(u, v))?;
    Ok(mix_tokens(seq, n, &w))
}

/// `x_{L−2}`.
pub fn eval_four_gram(seq: &Matrix) -> Result<Vec<f64>> {
    check_len(seq, 3)?;
    Ok(seq.row(seq.rows() - 3).to_vec())
}

/// Mixed 4-gram / induction-head target on scalar tokens.
pub fn eval_mixed(seq: &Matrix, alpha: f64, w_star: f64) -> Result<Vec<f64>> {
    if seq.cols() != 1 {
        return Err(TargetError::Shape(format!("mixed target needs d = 1, got d = {}", seq.cols())));
    }
    check_len(seq, 4)?;
    let four = eval_four_gram(seq)?[0];
    let ih = eval_ih2(seq, &Matrix::from_rows(&[vec![w_star * w_star]]))?[0];
    Ok(vec![alpha / (1.0 + alpha) * four, ih / (1.0 + alpha)])
}
