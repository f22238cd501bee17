use indhead_linalg::Matrix;
use serde::{Deserialize, Serialize};

use crate::{Result, TransformerError};

/// One attention head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    /// Alibi slope `p ≥ 0`; `None` means dot-product logits only.
    pub rpe_slope: Option<f64>,
    /// First (1-based) key position the head may attend to. Keys before it are
    /// masked. `None` is the same as `Some(1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_key: Option<usize>,
}

impl HeadParams {
    /// Head with `W_Q = W_K = 0`: its attention pattern is set by the slope alone.
    pub fn positional(w_v: Matrix, slope: f64) -> Self {
        let d = w_v.rows();
        Self { w_q: Matrix::zeros(d, d), w_k: Matrix::zeros(d, d), w_v, rpe_slope: Some(slope), min_key: None }
    }

    pub fn dim(&self) -> usize {
        self.w_v.rows()
    }

    pub(crate) fn uses_content(&self) -> bool {
        !(self.w_q.is_zero() || self.w_k.is_zero())
    }

    fn validate(&self, d: usize) -> Result<()> {
        for (name, m) in [("W_Q", &self.w_q), ("W_K", &self.w_k), ("W_V", &self.w_v)] {
            if m.shape() != (d, d) {
                return Err(TransformerError::Shape(format!("{name} is {:?}, expected ({d}, {d})", m.shape())));
            }
            if !m.all_finite() {
                return Err(TransformerError::Invalid(format!("{name} has non-finite entries")));
            }
        }
        if let Some(p) = self.rpe_slope {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(TransformerError::Invalid(format!("rpe slope {p} must be finite and nonnegative")));
            }
        }
        if self.min_key == Some(0) {
            return Err(TransformerError::Invalid("min_key is 1-based".into()));
        }
        Ok(())
    }
}

/// Token-wise two-layer ReLU block `z ↦ z + A·relu(B z + c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnParams {
    /// `B`, width × D.
    pub inner: Matrix,
    /// `c`, length width.
    pub bias: Vec<f64>,
    /// `A`, D × width.
    pub outer: Matrix,
}

impl FfnParams {
    pub fn width(&self) -> usize {
        self.inner.rows()
    }

    fn validate(&self, d: usize) -> Result<()> {
        let m = self.width();
        if m == 0 {
            return Err(TransformerError::Invalid("FFN width must be at least 1".into()));
        }
        if self.inner.cols() != d || self.bias.len() != m || self.outer.shape() != (d, m) {
            return Err(TransformerError::Shape(format!(
                "FFN shapes inner {:?}, bias {}, outer {:?} do not chain for D={d}",
                self.inner.shape(),
                self.bias.len(),
                self.outer.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    pub w_o: Matrix,
    pub use_residual: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffn: Option<FfnParams>,
}

impl LayerParams {
    fn validate(&self, d: usize) -> Result<()> {
        for h in &self.heads {
            h.validate(d)?;
        }
        if self.w_o.shape() != (d, d) {
            return Err(TransformerError::Shape(format!("W_O is {:?}, expected ({d}, {d})", self.w_o.shape())));
        }
        if let Some(f) = &self.ffn {
            f.validate(d)?;
        }
        Ok(())
    }
}

/// Embedding, layers and optional readout.
///
/// The JSON form records `token_dim` and `model_dim` next to the weights and is
/// validated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct TransformerParams {
    /// `D × d`.
    pub w_e: Matrix,
    /// Length `D`.
    pub b_e: Vec<f64>,
    pub layers: Vec<LayerParams>,
    /// `d × D`; when absent the output is the full hidden token.
    pub readout: Option<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    token_dim: usize,
    model_dim: usize,
    w_e: Matrix,
    b_e: Vec<f64>,
    layers: Vec<LayerParams>,
    readout: Option<Matrix>,
}

impl From<TransformerParams> for ParamsDoc {
    fn from(p: TransformerParams) -> Self {
        ParamsDoc {
            token_dim: p.token_dim(),
            model_dim: p.model_dim(),
            w_e: p.w_e,
            b_e: p.b_e,
            layers: p.layers,
            readout: p.readout,
        }
    }
}

impl TryFrom<ParamsDoc> for TransformerParams {
    type Error = TransformerError;

    fn try_from(doc: ParamsDoc) -> Result<Self> {
        let p = TransformerParams { w_e: doc.w_e, b_e: doc.b_e, layers: doc.layers, readout: doc.readout };
        p.validate()?;
        if p.token_dim() != doc.token_dim || p.model_dim() != doc.model_dim {
            return Err(TransformerError::Shape(format!(
                "declared d={}, D={} but weights give d={}, D={}",
                doc.token_dim,
                doc.model_dim,
                p.token_dim(),
                p.model_dim()
            )));
        }
        Ok(p)
    }
}

impl TransformerParams {
    /// No layers, identity embedding.
    pub fn identity(d: usize) -> Self {
        Self { w_e: Matrix::identity(d), b_e: vec![0.0; d], layers: Vec::new(), readout: None }
    }

    /// Token dimension `d`.
    pub fn token_dim(&self) -> usize {
        self.w_e.cols()
    }

    /// Hidden dimension `D`.
    pub fn model_dim(&self) -> usize {
        self.w_e.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.readout.as_ref().map_or(self.model_dim(), Matrix::rows)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model_dim();
        if self.b_e.len() != d {
            return Err(TransformerError::Shape(format!("b_E has length {}, expected {d}", self.b_e.len())));
        }
        for l in &self.layers {
            l.validate(d)?;
        }
        if let Some(r) = &self.readout {
            if r.cols() != d {
                return Err(TransformerError::Shape(format!("readout is {:?}, needs {d} columns", r.shape())));
            }
        }
        Ok(())
    }
}
