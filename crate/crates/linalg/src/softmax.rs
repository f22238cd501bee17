use crate::{LinalgError, Matrix, Result};

/// Logit value marking a position outside the attention context.
///
/// Masked entries are never exponentiated; they map to an exact `0.0`.
pub const MASKED: f64 = f64::NEG_INFINITY;

#[inline]
fn is_masked(x: f64) -> bool {
    x == MASKED
}

/// Softmax of a single logit vector with masked entries skipped.
///
/// Fails with [`LinalgError::EmptyColumn`] (column 0) when every entry is
/// masked.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out, 0)?;
    Ok(out)
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64], col: usize) -> Result<()> {
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for &x in logits {
        if is_masked(x) {
            continue;
        }
        if !x.is_finite() {
            return Err(LinalgError::NonFinite(format!("logit {x} in column {col}")));
        }
        any = true;
        max = max.max(x);
    }
    if !any {
        return Err(LinalgError::EmptyColumn { col });
    }
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = if is_masked(x) { 0.0 } else { (x - max).exp() };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Normalizes each column of `logits` into a probability vector.
///
/// The column maximum is subtracted before exponentiation, so adding a
/// constant to a column leaves the result unchanged.
pub fn column_softmax(logits: &Matrix) -> Result<Matrix> {
    let (rows, cols) = logits.shape();
    let t = logits.transpose();
    let mut out_t = Matrix::zeros(cols, rows);
    for j in 0..cols {
        softmax_into(t.row(j), out_t.row_mut(j), j)?;
    }
    Ok(out_t.transpose())
}
