//! Forward pass of a small multi-head transformer with Alibi-style relative
//! position bias.
//!
//! Conventions, fixed once for the whole workspace:
//!
//! * hidden states are `D × L` matrices whose column `s` is token `s`;
//! * attention logits are indexed `(key τ, query s)` and normalized over keys
//!   with [`column_softmax`](indhead_linalg::column_softmax);
//! * a query attends only to *strictly earlier* keys `τ < s`, and the bias of a
//!   head with slope `p` is `−p·(s − τ − 1)`, so the nearest key has bias zero;
//! * head outputs are summed and then projected once by `W_O`.
//!
//! ```
//! use indhead_linalg::Matrix;
//! use indhead_transformer::{forward_last, TransformerParams};
//!
//! // Zero layers and an identity embedding return the last token unchanged.
//! let net = TransformerParams::identity(2);
//! let seq = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
//! assert_eq!(forward_last(&seq, &net).unwrap(), vec![5.0, 6.0]);
//! ```

mod error;
mod forward;
mod params;

pub use error::TransformerError;
pub use forward::{
    attention_bias, embed, ffn_forward, forward_last, head_forward, hidden_states, layer_forward,
    rpe_matrix, HeadOutput,
};
pub use params::{FfnParams, HeadParams, LayerParams, TransformerParams};

pub type Result<T> = std::result::Result<T, TransformerError>;
