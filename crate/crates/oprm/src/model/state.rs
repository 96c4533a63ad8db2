use super::params::ModelConfig;
use ndarray::Array2;

/// Recurrent state of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    /// S6 state, d x d_state.
    pub h: Array2<f64>,
    /// Last k-1 pre-convolution inputs, d x (k-1), oldest column first.
    pub conv_buf: Array2<f64>,
}

/// Full streaming state: one [`LayerState`] per block plus the number of
/// tokens consumed so far. Fixed size regardless of context length.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub layers: Vec<LayerState>,
    pub position: usize,
}

impl HiddenState {
    /// Zero-initialized state (empty history).
    pub fn new(cfg: &ModelConfig) -> Self {
        let layers = (0..cfg.n_layers)
            .map(|_| LayerState {
                h: Array2::zeros((cfg.d, cfg.d_state)),
                conv_buf: Array2::zeros((cfg.d, cfg.conv_k - 1)),
            })
            .collect();
        HiddenState { layers, position: 0 }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.h.iter().all(|x| x.is_finite()) && l.conv_buf.iter().all(|x| x.is_finite()))
    }

    /// Bytes held by one state (the decode-phase working set).
    pub fn size_bytes(&self) -> usize {
        self.layers
            .iter()
            .map(|l| (l.h.len() + l.conv_buf.len()) * std::mem::size_of::<f64>())
            .sum()
    }
}
