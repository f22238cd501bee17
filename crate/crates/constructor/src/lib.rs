//! Compiles induction-head targets into explicit transformer weights.
//!
//! * [`build_ih2`] — two layers, one head each, error `O(e^{−p1})`;
//! * [`build_ihn`] — `H` positional heads whose summed memory kernels
//!   approximate the lag indicators, fitted by [`fit_indicator_kernel`];
//! * [`build_gihn`] — adds an FFN producing POD features of both patches.
//!
//! ```
//! use indhead_constructor::{allocate_heads, build_ihn, fit_indicator_kernel, BetaGrid};
//! use indhead_linalg::Matrix;
//!
//! let (n, h) = (3, 8);
//! let fits: Vec<_> = allocate_heads(n, h)
//!     .unwrap()
//!     .into_iter()
//!     .enumerate()
//!     .map(|(i, hi)| fit_indicator_kernel(i + 1, hi, 64, &BetaGrid::default()).unwrap())
//!     .collect();
//! let net = build_ihn(n, &Matrix::identity(2), h, &fits).unwrap();
//! assert_eq!(net.model_dim(), 3);
//! ```

mod error;
mod ffn_fit;
mod gihn;
mod induction;
mod kernel;
mod pod;

pub use error::ConstructError;
pub use ffn_fit::{fit_basis_ffn, BasisFit, DomainBox};
pub use gihn::{build_gihn, decompose_error, fit_pod_bases, pod_on_layer1, BasisNets, ErrorDecomposition};
pub use induction::{build_ih2, build_ihn, key_blocks, layer1_patch_error, query_blocks};
pub use kernel::{allocate_heads, ell1_error, fit_indicator_kernel, grid_rates, partition, BetaGrid, KernelFit};
pub use pod::{choose_k, choose_k_with, cosine_basis, multi_indices, pod_truncate, Basis, PodSpec};

pub type Result<T> = std::result::Result<T, ConstructError>;

/// Kernel fits for lags `1..n−1` with heads split by [`allocate_heads`].
pub fn fit_all_lags(n: usize, h: usize, t_max: usize, grid: &BetaGrid) -> Result<Vec<KernelFit>> {
    allocate_heads(n, h)?
        .into_iter()
        .enumerate()
        .map(|(i, hi)| fit_indicator_kernel(i + 1, hi, t_max, grid))
        .collect()
}
