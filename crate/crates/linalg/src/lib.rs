//! Small dense real linear algebra shared by the rest of the workspace.
//!
//! Everything here is double precision and row-major. The crate provides
//! four pieces:
//!
//! * [`Matrix`], a plain value type with the handful of products we need;
//! * [`column_softmax`], with a dedicated [`MASKED`] sentinel;
//! * least-squares helpers ([`lstsq`], [`ridge_lstsq`]), delegating to `nalgebra`;
//! * [`SeededRng`], a reproducible sampling stream (ChaCha8).
//!
//! ```
//! use indhead_linalg::{column_softmax, Matrix, MASKED};
//!
//! let logits = Matrix::from_rows(&[vec![1.0, 3.0], vec![0.0, MASKED]]);
//! let attn = column_softmax(&logits).unwrap();
//! assert!((attn[(0, 0)] - 0.7310585786300049).abs() < 1e-15);
//! assert_eq!(attn[(1, 1)], 0.0);
//! ```

mod error;
mod matrix;
mod rng;
mod softmax;
mod solve;

pub use error::LinalgError;
pub use matrix::Matrix;
pub use rng::{boolean_sample, gaussian_sample, uniform_sample, InputDist, SeededRng};
pub use softmax::{column_softmax, softmax, MASKED};
pub use solve::{lstsq, lstsq_multi, ridge_lstsq, LstsqReport};

pub type Result<T> = std::result::Result<T, LinalgError>;
