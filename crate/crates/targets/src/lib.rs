//! Reference induction-head targets and the sampled approximation metric.
//!
//! A token sequence is an `L × d` [`Matrix`](indhead_linalg::Matrix) whose row
//! `s − 1` is token `x_s`. Patches `X_{a:b}` stack tokens oldest first.
//!
//! ```
//! use indhead_linalg::Matrix;
//! use indhead_targets::eval_ih2;
//!
//! // d = 1, X = (1, 2, 1, 1), W★ = 1: logits over ν ∈ {2, 3} are (1, 2).
//! let x = Matrix::column_vector(&[1.0, 2.0, 1.0, 1.0]);
//! let y = eval_ih2(&x, &Matrix::identity(1)).unwrap();
//! let e = std::f64::consts::E;
//! assert!((y[0] - (2.0 * e + e * e) / (e + e * e)).abs() < 1e-12);
//! ```

mod error;
mod functions;
mod metric;

pub use error::TargetError;
pub use functions::{
    eval_four_gram, eval_gihn, eval_ih2, eval_ihn, eval_mixed, ih_weights, patch, InductionTarget, SimilarityFn,
};
pub use metric::{
    approx_error, approx_error_on, sample_sequences, sample_errors, ErrorEstimate, ErrorNorm, Predictor,
};

pub type Result<T> = std::result::Result<T, TargetError>;
