use indhead_linalg::{softmax, Matrix, MASKED};

use crate::{FfnParams, HeadParams, LayerParams, Result, TransformerError, TransformerParams};

/// Alibi logits for sequence length `L`, indexed `(key τ, query s)`.
///
/// Entry `(τ, s)` (1-based) is `−slope·(s − τ − 1)` for `τ < s` and
/// [`MASKED`] otherwise.
///
/// ```
/// use indhead_transformer::rpe_matrix;
/// let r = rpe_matrix(1.0, 3);
/// assert_eq!(r[(0, 2)], -1.0); // τ = 1, s = 3
/// assert_eq!(r[(1, 2)], 0.0); // τ = 2, s = 3
/// assert!(r[(2, 2)].is_infinite()); // a token never sees itself
/// ```
///
/// # Panics
/// If `L < 2`.
pub fn rpe_matrix(slope: f64, len: usize) -> Matrix {
    assert!(len >= 2, "sequence length must be at least 2");
    attention_bias(Some(slope), len, None)
}

/// Full additive bias of a head: Alibi term (or zero) plus the causal mask and
/// the optional `min_key` cut-off.
pub fn attention_bias(slope: Option<f64>, len: usize, min_key: Option<usize>) -> Matrix {
    let lo = min_key.unwrap_or(1);
    Matrix::from_fn(len, len, |i, j| {
        let (tau, s) = (i + 1, j + 1);
        if tau < s && tau >= lo {
            bias(slope, j - i - 1)
        } else {
            MASKED
        }
    })
}

#[inline]
fn bias(slope: Option<f64>, gap: usize) -> f64 {
    match slope {
        // 0·gap is 0 even for the zero slope, so no special case is needed.
        Some(p) => -p * gap as f64,
        None => 0.0,
    }
}

/// Output of one head together with the positions whose context was empty.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub out: Matrix,
    /// 1-based query positions that had no visible key; their columns are zero.
    pub empty_columns: Vec<usize>,
}

/// `(W_V Z) · column_softmax(⟨W_Q Z, W_K Z⟩ + R)` for a single head.
pub fn head_forward(z: &Matrix, head: &HeadParams) -> Result<HeadOutput> {
    check_head(z, head)?;
    let queries: Vec<usize> = (0..z.cols()).collect();
    let tokens = z.transpose();
    let (out_t, empty) = attend(&tokens, head, &queries);
    Ok(HeadOutput { out: out_t.transpose(), empty_columns: empty })
}

fn check_head(z: &Matrix, head: &HeadParams) -> Result<()> {
    if head.dim() != z.rows() || head.w_q.shape() != (z.rows(), z.rows()) || head.w_k.shape() != head.w_q.shape() {
        return Err(TransformerError::Shape(format!(
            "head of width {} applied to hidden states with {} rows",
            head.dim(),
            z.rows()
        )));
    }
    Ok(())
}

/// Applies a `D × D` matrix to every token row of `tokens` (`L × D`).
fn map_tokens(w: &Matrix, tokens: &Matrix) -> Matrix {
    tokens.matmul(&w.transpose()).expect("shapes checked by caller")
}

/// Core attention on token-major storage. Returns `|queries| × D` rows.
fn attend(tokens: &Matrix, head: &HeadParams, queries: &[usize]) -> (Matrix, Vec<usize>) {
    let dim = tokens.cols();
    let values = map_tokens(&head.w_v, tokens);
    let content = head.uses_content().then(|| (map_tokens(&head.w_q, tokens), map_tokens(&head.w_k, tokens)));
    let lo = head.min_key.unwrap_or(1) - 1;
    let mut out = Matrix::zeros(queries.len(), dim);
    let mut empty = Vec::new();
    let mut logits = Vec::new();
    for (r, &j) in queries.iter().enumerate() {
        if j <= lo {
            empty.push(j + 1);
            continue;
        }
        logits.clear();
        for i in lo..j {
            let mut x = bias(head.rpe_slope, j - i - 1);
            if let Some((q, k)) = &content {
                x += q.row(j).iter().zip(k.row(i)).map(|(a, b)| a * b).sum::<f64>();
            }
            logits.push(x);
        }
        let weights = softmax(&logits).expect("non-empty finite context");
        let row = out.row_mut(r);
        for (w, i) in weights.iter().zip(lo..j) {
            for (o, v) in row.iter_mut().zip(values.row(i)) {
                *o += w * v;
            }
        }
    }
    (out, empty)
}

/// Token-wise `z + A·relu(B z + c)` on token-major storage.
fn ffn_tokens(tokens: &mut Matrix, ffn: &FfnParams) {
    let width = ffn.width();
    let mut hidden = vec![0.0; width];
    for t in 0..tokens.rows() {
        let z = tokens.row(t).to_vec();
        for (m, h) in hidden.iter_mut().enumerate() {
            let pre: f64 = ffn.inner.row(m).iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + ffn.bias[m];
            *h = pre.max(0.0);
        }
        let row = tokens.row_mut(t);
        for (k, o) in row.iter_mut().enumerate() {
            *o += ffn.outer.row(k).iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Applies an FFN block (with its residual) to each column of `z`.
pub fn ffn_forward(z: &Matrix, ffn: &FfnParams) -> Result<Matrix> {
    if ffn.inner.cols() != z.rows() {
        return Err(TransformerError::Shape(format!("FFN expects D={}, got {}", ffn.inner.cols(), z.rows())));
    }
    let mut t = z.transpose();
    ffn_tokens(&mut t, ffn);
    Ok(t.transpose())
}

/// Runs one layer on the query columns `queries` (0-based) of token-major
/// input. Returns `|queries| × D`.
fn layer_tokens(tokens: &Matrix, layer: &LayerParams, queries: &[usize]) -> Matrix {
    let dim = tokens.cols();
    let mut summed = Matrix::zeros(queries.len(), dim);
    for head in &layer.heads {
        let (o, _) = attend(tokens, head, queries);
        summed.add_assign(&o).expect("same shape");
    }
    let mut out = map_tokens(&layer.w_o, &summed);
    if layer.use_residual {
        for (r, &j) in queries.iter().enumerate() {
            for (o, z) in out.row_mut(r).iter_mut().zip(tokens.row(j)) {
                *o += z;
            }
        }
    }
    if let Some(ffn) = &layer.ffn {
        ffn_tokens(&mut out, ffn);
    }
    out
}

fn check_layer(z: &Matrix, layer: &LayerParams) -> Result<()> {
    for h in &layer.heads {
        check_head(z, h)?;
    }
    if layer.w_o.shape() != (z.rows(), z.rows()) {
        return Err(TransformerError::Shape(format!("W_O is {:?} for D={}", layer.w_o.shape(), z.rows())));
    }
    if let Some(f) = &layer.ffn {
        if f.inner.cols() != z.rows() || f.outer.rows() != z.rows() {
            return Err(TransformerError::Shape("FFN does not match D".into()));
        }
    }
    Ok(())
}

/// Sum of heads, `W_O`, optional residual, then the optional FFN block.
pub fn layer_forward(z: &Matrix, layer: &LayerParams) -> Result<Matrix> {
    check_layer(z, layer)?;
    let queries: Vec<usize> = (0..z.cols()).collect();
    Ok(layer_tokens(&z.transpose(), layer, &queries).transpose())
}

/// `W_E X + b_E 1ᵀ` for a token sequence `X` stored as `L × d`.
pub fn embed(seq: &Matrix, params: &TransformerParams) -> Result<Matrix> {
    if seq.cols() != params.token_dim() {
        return Err(TransformerError::Shape(format!(
            "sequence tokens have dimension {}, network expects {}",
            seq.cols(),
            params.token_dim()
        )));
    }
    if seq.rows() == 0 {
        return Err(TransformerError::Shape("empty sequence".into()));
    }
    let mut z = params.w_e.matmul(&seq.transpose())?;
    for i in 0..z.rows() {
        for v in z.row_mut(i) {
            *v += params.b_e[i];
        }
    }
    Ok(z)
}

/// Hidden states (`D × L`) after the first `depth` layers.
pub fn hidden_states(seq: &Matrix, params: &TransformerParams, depth: usize) -> Result<Matrix> {
    if depth > params.layers.len() {
        return Err(TransformerError::Invalid(format!("network has only {} layers", params.layers.len())));
    }
    let mut z = embed(seq, params)?;
    for layer in &params.layers[..depth] {
        z = layer_forward(&z, layer)?;
    }
    Ok(z)
}

/// Output of the network at the last position, after the readout.
///
/// Only the final column of the last layer is computed.
pub fn forward_last(seq: &Matrix, params: &TransformerParams) -> Result<Vec<f64>> {
    let z = embed(seq, params)?;
    let len = z.cols();
    let mut tokens = z.transpose();
    let n = params.layers.len();
    for (k, layer) in params.layers.iter().enumerate() {
        check_layer(&tokens.transpose(), layer)?;
        let queries: Vec<usize> = if k + 1 == n { vec![len - 1] } else { (0..len).collect() };
        tokens = layer_tokens(&tokens, layer, &queries);
    }
    let last = tokens.row(tokens.rows() - 1).to_vec();
    match &params.readout {
        Some(r) => Ok(r.matvec(&last)?),
        None => Ok(last),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use indhead_linalg::column_softmax;

    fn head(d: usize, w_v: Matrix, slope: Option<f64>) -> HeadParams {
        HeadParams { w_q: Matrix::zeros(d, d), w_k: Matrix::zeros(d, d), w_v, rpe_slope: slope, min_key: None }
    }

    #[test]
    fn rpe_zero_slope() {
        let r = rpe_matrix(0.0, 3);
        assert_eq!(r[(0, 2)], 0.0);
        assert_eq!(r[(1, 2)], 0.0);
        assert_eq!(r[(2, 2)], MASKED);
        assert_eq!(r[(0, 1)], 0.0);
        assert_eq!(r[(1, 1)], MASKED);
    }

    #[test]
    fn rpe_unit_slope_offsets() {
        let r = rpe_matrix(1.0, 3);
        assert_eq!(r[(0, 2)], -1.0);
        assert_eq!(r[(1, 2)], 0.0);
    }

    #[test]
    fn two_tokens_steep_slope_attend_to_first() {
        let r = rpe_matrix(5.0, 2);
        let a = column_softmax(&r.block(0, 1, 2, 1)).unwrap();
        assert_eq!(a.entries(), &[1.0, 0.0]);
    }

    #[test]
    fn steep_slope_copies_previous_token() {
        let z = Matrix::from_rows(&[vec![1.0, -2.0, 3.0, 0.5], vec![0.0, 1.0, 1.0, -1.0]]);
        let out = head_forward(&z, &head(2, Matrix::identity(2), Some(60.0))).unwrap();
        for s in 1..4 {
            for i in 0..2 {
                assert_abs_diff_eq!(out.out[(i, s)], z[(i, s - 1)], epsilon = 1e-12);
            }
        }
        assert_eq!(out.empty_columns, vec![1]);
        assert_eq!(out.out.column(0), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_value_matrix_annihilates() {
        let z = Matrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64);
        let out = head_forward(&z, &head(3, Matrix::zeros(3, 3), Some(1.0))).unwrap();
        assert!(out.out.is_zero());
    }

    #[test]
    fn single_key_context() {
        let z = Matrix::from_rows(&[vec![0.3, 9.0], vec![-1.2, 4.0]]);
        let mut h = head(2, Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 1.0]]), Some(3.0));
        h.w_q = Matrix::from_rows(&[vec![5.0, 1.0], vec![0.0, 2.0]]);
        h.w_k = Matrix::identity(2);
        let out = head_forward(&z, &h).unwrap();
        assert_abs_diff_eq!(out.out[(0, 1)], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(out.out[(1, 1)], 0.3 - 1.2, epsilon = 1e-15);
    }

    #[test]
    fn matches_dense_definition() {
        // Reference: build the full logit matrix and call column_softmax.
        let z = Matrix::from_fn(3, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6);
        let h = HeadParams {
            w_q: Matrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.4),
            w_k: Matrix::from_fn(3, 3, |i, j| 0.2 * (i + j) as f64),
            w_v: Matrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.1 }),
            rpe_slope: Some(0.7),
            min_key: None,
        };
        let got = head_forward(&z, &h).unwrap().out;
        let q = h.w_q.matmul(&z).unwrap();
        let k = h.w_k.matmul(&z).unwrap();
        let logits = k.transpose().matmul(&q).unwrap().add(&rpe_matrix(0.7, 6)).unwrap();
        let tail = column_softmax(&logits.block(0, 1, 6, 5)).unwrap();
        let want = h.w_v.matmul(&z).unwrap().matmul(&tail).unwrap();
        for i in 0..3 {
            for s in 1..6 {
                assert_abs_diff_eq!(got[(i, s)], want[(i, s - 1)], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn min_key_masks_early_keys() {
        let z = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let mut h = head(1, Matrix::identity(1), Some(0.0));
        h.min_key = Some(2);
        let out = head_forward(&z, &h).unwrap();
        assert_eq!(out.empty_columns, vec![1, 2]);
        assert_abs_diff_eq!(out.out[(0, 2)], 2.0);
        assert_abs_diff_eq!(out.out[(0, 3)], 2.5);
        let b = attention_bias(Some(0.0), 4, Some(2));
        assert_eq!(b[(0, 3)], MASKED);
        assert_eq!(b[(1, 3)], 0.0);
    }

    #[test]
    fn relu_pair_is_identity() {
        let ffn = FfnParams {
            inner: Matrix::from_rows(&[vec![1.0], vec![-1.0]]),
            bias: vec![0.0, 0.0],
            outer: Matrix::from_rows(&[vec![1.0, -1.0]]),
        };
        let z = Matrix::from_rows(&[vec![-2.0, 0.0, 3.5]]);
        // z + (relu(z) − relu(−z)) = 2z.
        let out = ffn_forward(&z, &ffn).unwrap();
        assert_eq!(out.entries(), &[-4.0, 0.0, 7.0]);
    }

    #[test]
    fn forward_last_agrees_with_full_layers() {
        let d = 2;
        let layer = LayerParams {
            heads: vec![head(d, Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]), Some(2.0))],
            w_o: Matrix::identity(d),
            use_residual: true,
            ffn: None,
        };
        let mut l2 = layer.clone();
        l2.heads[0].w_q = Matrix::identity(d);
        l2.heads[0].w_k = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 2.0]]);
        l2.use_residual = false;
        let net = TransformerParams {
            w_e: Matrix::identity(d),
            b_e: vec![0.1, -0.1],
            layers: vec![layer, l2],
            readout: Some(Matrix::from_rows(&[vec![1.0, 0.0]])),
        };
        let seq = Matrix::from_fn(7, d, |i, j| ((i + 2 * j) % 3) as f64 - 1.0);
        let full = hidden_states(&seq, &net, 2).unwrap();
        let last = forward_last(&seq, &net).unwrap();
        assert_abs_diff_eq!(last[0], full[(0, 6)], epsilon = 1e-14);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = TransformerParams::identity(3);
        assert!(matches!(forward_last(&Matrix::zeros(4, 2), &net), Err(TransformerError::Shape(_))));
        let z = Matrix::zeros(2, 3);
        assert!(head_forward(&z, &head(3, Matrix::identity(3), None)).is_err());
    }
}
