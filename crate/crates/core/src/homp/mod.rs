//! Higher-order message passing over combinatorial complexes: the generic
//! layer, the GIN-style specialization used by the model, rank-aware
//! pooling, positional encodings and model assembly.

mod batch;
mod layer;
mod model;
mod pe;
mod readout;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{ComplexError, NeighborhoodSpec, DEFAULT_NEIGHBORHOODS};
use crate::tensor::TensorError;

pub use batch::{class_index, CellBatch, GlycanCells, CLASS_COUNTS, N_RANKS};
pub use layer::{gifflar_layer, homp_layer, Activation, Aggregator, MessageFn, PairList, ThetaKey, Update};
pub use model::{build_model, glycan_sign_seed, positional_encoding, write_embeddings_tsv, ForwardOutput, Model};
pub use pe::{lap_pe, rw_pe};
pub use readout::{readout, ReadoutParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HompError {
    #[error("no message function for neighborhood {0}")]
    MissingTheta(String),
    #[error("non-finite state after layer {layer} at rank {rank}")]
    NonFiniteState { layer: usize, rank: usize },
    #[error("complex has no cells")]
    EmptyComplex,
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    GlobalMean,
    LocalMean,
    WeightedLocalMean,
    GlobalAttention,
    LocalAttention,
    WeightedLocalAttention,
}

impl PoolingMode {
    pub const ALL: [PoolingMode; 6] = [
        PoolingMode::GlobalMean,
        PoolingMode::LocalMean,
        PoolingMode::WeightedLocalMean,
        PoolingMode::GlobalAttention,
        PoolingMode::LocalAttention,
        PoolingMode::WeightedLocalAttention,
    ];

    pub fn is_weighted(self) -> bool {
        matches!(self, PoolingMode::WeightedLocalMean | PoolingMode::WeightedLocalAttention)
    }

    pub fn is_attention(self) -> bool {
        matches!(
            self,
            PoolingMode::GlobalAttention | PoolingMode::LocalAttention | PoolingMode::WeightedLocalAttention
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PositionalEncoding {
    None,
    RandomWalk { k: usize },
    Laplacian { k: usize },
    Both { k: usize },
}

impl PositionalEncoding {
    /// Columns appended to atom inputs.
    pub fn dim(self) -> usize {
        match self {
            PositionalEncoding::None => 0,
            PositionalEncoding::RandomWalk { k } | PositionalEncoding::Laplacian { k } => k,
            PositionalEncoding::Both { k } => 2 * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Head {
    Classification { n_out: usize, multilabel: bool },
    Regression,
}

impl Head {
    pub fn n_out(self) -> usize {
        match self {
            Head::Classification { n_out, .. } => n_out,
            Head::Regression => 1,
        }
    }
}

fn default_neighborhoods() -> Vec<NeighborhoodSpec> {
    DEFAULT_NEIGHBORHOODS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    #[serde(default = "default_neighborhoods")]
    pub neighborhoods: Vec<NeighborhoodSpec>,
    pub epsilon: f64,
    pub learn_epsilon: bool,
    pub pooling: PoolingMode,
    pub pe: PositionalEncoding,
    pub head: Head,
    pub dropout: f64,
    /// Width of per-graph features appended after pooling.
    pub extra_dim: usize,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 8,
            input_dim: 128,
            hidden_dim: 1024,
            neighborhoods: default_neighborhoods(),
            epsilon: 0.0,
            learn_epsilon: false,
            pooling: PoolingMode::GlobalMean,
            pe: PositionalEncoding::None,
            head: Head::Classification {
                n_out: 1,
                multilabel: false,
            },
            dropout: 0.2,
            extra_dim: 0,
            bn_momentum: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), HompError> {
        let fail = |m: &str| Err(HompError::Config(m.to_string()));
        if self.layers < 1 {
            return fail("layers must be at least 1");
        }
        if self.input_dim < 1 || self.hidden_dim < 1 {
            return fail("dimensions must be at least 1");
        }
        if self.head.n_out() < 1 {
            return fail("head needs at least one output");
        }
        match self.pe {
            PositionalEncoding::RandomWalk { k } | PositionalEncoding::Laplacian { k } | PositionalEncoding::Both { k }
                if k < 1 =>
            {
                return fail("positional encoding needs k >= 1");
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return fail("batch-norm momentum must lie in [0, 1]");
        }
        if !self.epsilon.is_finite() {
            return fail("epsilon must be finite");
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.neighborhoods {
            s.validate()?;
            if s.rank >= N_RANKS || s.source_rank() >= N_RANKS {
                return Err(HompError::Config(format!("neighborhood {s} exceeds rank 2")));
            }
            if !seen.insert(*s) {
                return Err(HompError::Config(format!("duplicate neighborhood {s}")));
            }
        }
        Ok(())
    }
}
