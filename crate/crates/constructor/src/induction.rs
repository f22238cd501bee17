//! Explicit two-layer weights for the dot-product induction heads.
//!
//! Hidden tokens after layer 1 have `n` blocks of width `d`, newest first:
//! `z_s ≈ (x_s, x_{s−1}, …, x_{s−n+1})`. Block 1 is carried by the residual;
//! block `i+1` is written by the heads serving lag `i`.

use indhead_linalg::Matrix;
use indhead_transformer::{hidden_states, HeadParams, LayerParams, TransformerParams};

use crate::kernel::{partition, KernelFit};
use crate::{ConstructError, Result};

/// `D × d` embedding placing the token in block 1.
pub(crate) fn block_embedding(dim: usize, d: usize) -> Matrix {
    let mut w = Matrix::zeros(dim, d);
    w.set_block(0, 0, &Matrix::identity(d));
    w
}

/// `D × D` matrix copying block `from` into block `to` (1-based blocks of width `d`).
pub(crate) fn block_copy(dim: usize, d: usize, from: usize, to: usize) -> Matrix {
    let mut m = Matrix::zeros(dim, dim);
    m.set_block((to - 1) * d, (from - 1) * d, &Matrix::identity(d));
    m
}

/// `(n−1)d × D` selector stacking the listed blocks in order.
pub(crate) fn block_selector(dim: usize, d: usize, blocks: &[usize]) -> Matrix {
    let mut m = Matrix::zeros(blocks.len() * d, dim);
    for (r, &b) in blocks.iter().enumerate() {
        m.set_block(r * d, (b - 1) * d, &Matrix::identity(d));
    }
    m
}

/// Blocks holding the query patch `X_{L−n+2:L}`, oldest first: `n−1, …, 1`.
pub fn query_blocks(n: usize) -> Vec<usize> {
    (1..n).rev().collect()
}

/// Blocks holding the key patch `X_{s−n+1:s−1}`, oldest first: `n, …, 2`.
pub fn key_blocks(n: usize) -> Vec<usize> {
    (2..=n).rev().collect()
}

pub(crate) fn readout(d: usize, dim: usize) -> Matrix {
    block_embedding(dim, d).transpose()
}

/// Second-layer head: logits `q_Lᵀ k_s`, value = block 1, keys `s ≥ n` only.
pub(crate) fn retrieval_layer(dim: usize, d: usize, n: usize, w_q: Matrix, w_k: Matrix) -> LayerParams {
    LayerParams {
        heads: vec![HeadParams {
            w_q,
            w_k,
            w_v: block_copy(dim, d, 1, 1),
            rpe_slope: Some(0.0),
            min_key: Some(n),
        }],
        w_o: Matrix::identity(dim),
        use_residual: false,
        ffn: None,
    }
}

/// Single-head two-layer network for `IH₂(W★)`.
///
/// Layer 1 is a positional head of slope `p1` copying the previous token into
/// block 2; layer 2 matches `x_L` against `W★ x_{s−1}` and returns `x_s`.
///
/// ```
/// use indhead_constructor::build_ih2;
/// use indhead_linalg::Matrix;
/// use indhead_transformer::forward_last;
///
/// let net = build_ih2(&Matrix::identity(1), 6.0).unwrap();
/// let x = Matrix::column_vector(&[0.3, -0.8, 0.5]);
/// assert_eq!(forward_last(&x, &net).unwrap(), vec![-0.8]);
/// ```
pub fn build_ih2(w_star: &Matrix, p1: f64) -> Result<TransformerParams> {
    let d = w_star.rows();
    if w_star.cols() != d || d == 0 {
        return Err(ConstructError::Invalid(format!("W★ must be square, got {:?}", w_star.shape())));
    }
    if !(p1 > 0.0 && p1.is_finite()) {
        return Err(ConstructError::Invalid(format!("p1 = {p1} must be positive")));
    }
    let dim = 2 * d;
    let layer1 = LayerParams {
        heads: vec![HeadParams::positional(block_copy(dim, d, 1, 2), p1)],
        w_o: Matrix::identity(dim),
        use_residual: true,
        ffn: None,
    };
    // W_Q = [[0,0],[I,0]], W_K = [[0,0],[0,W★]].
    let w_q = block_copy(dim, d, 1, 2);
    let mut w_k = Matrix::zeros(dim, dim);
    w_k.set_block(d, d, w_star);
    Ok(TransformerParams {
        w_e: block_embedding(dim, d),
        b_e: vec![0.0; dim],
        layers: vec![layer1, retrieval_layer(dim, d, 2, w_q, w_k)],
        readout: Some(readout(d, dim)),
    })
}

/// First layer shared by the `IHₙ` and `GIHₙ` builders: one positional head per
/// kernel term, `W_V = α·Z(β)·S_i`, with `Z` the full geometric partition function.
pub(crate) fn lag_layer(dim: usize, d: usize, n: usize, fits: &[KernelFit]) -> Result<LayerParams> {
    if fits.len() != n - 1 {
        return Err(ConstructError::Invalid(format!("{} kernel fits for n − 1 = {} lags", fits.len(), n - 1)));
    }
    let mut heads = Vec::new();
    for (i, fit) in fits.iter().enumerate() {
        if fit.lag != i + 1 {
            return Err(ConstructError::Invalid(format!("fit {} targets lag {}, expected {}", i, fit.lag, i + 1)));
        }
        let shift = block_copy(dim, d, 1, i + 2);
        for &(alpha, beta) in &fit.terms {
            heads.push(HeadParams::positional(shift.scale(alpha * partition(beta)), beta));
        }
    }
    Ok(LayerParams { heads, w_o: Matrix::identity(dim), use_residual: true, ffn: None })
}

/// `H`-head two-layer network for `IHₙ(W★)`; `fits[i−1]` serves lag `i`.
pub fn build_ihn(n: usize, w_star: &Matrix, h: usize, fits: &[KernelFit]) -> Result<TransformerParams> {
    if n < 2 {
        return Err(ConstructError::Invalid(format!("n = {n} must be at least 2")));
    }
    if h < n - 1 {
        return Err(ConstructError::TooFewHeads { n, h });
    }
    let p = w_star.rows();
    if w_star.cols() != p || p % (n - 1) != 0 || p == 0 {
        return Err(ConstructError::Invalid(format!("W★ {:?} is not (n−1)d square", w_star.shape())));
    }
    let d = p / (n - 1);
    let total: usize = fits.iter().map(KernelFit::heads).sum();
    if total != h {
        return Err(ConstructError::Invalid(format!("kernel fits use {total} heads, H = {h}")));
    }
    let dim = n * d;
    let layer1 = lag_layer(dim, d, n, fits)?;
    let mut w_q = Matrix::zeros(dim, dim);
    w_q.set_block(0, 0, &block_selector(dim, d, &query_blocks(n)));
    let mut w_k = Matrix::zeros(dim, dim);
    w_k.set_block(0, 0, &w_star.matmul(&block_selector(dim, d, &key_blocks(n)))?);
    Ok(TransformerParams {
        w_e: block_embedding(dim, d),
        b_e: vec![0.0; dim],
        layers: vec![layer1, retrieval_layer(dim, d, n, w_q, w_k)],
        readout: Some(readout(d, dim)),
    })
}

/// `max_{s ≥ n} max_i ‖block_{i+1}(z_s) − x_{s−i}‖∞` after layer 1.
pub fn layer1_patch_error(params: &TransformerParams, n: usize, seq: &Matrix) -> Result<f64> {
    let d = seq.cols();
    let z = hidden_states(seq, params, 1)?;
    let mut worst = 0.0f64;
    for s in n..=seq.rows() {
        for lag in 0..n {
            for j in 0..d {
                worst = worst.max((z[(lag * d + j, s - 1)] - seq[(s - 1 - lag, j)]).abs());
            }
        }
    }
    Ok(worst)
}
