//! Neural implementation of co-representation diffusion: permutation
//! equivariant diffusion operators (UNB, ISAB), GD-form and ADMM-form layer
//! stacks, the classification head, losses and the Adam optimizer.

pub mod adam;
pub mod losses;
pub mod model;
pub mod ops;
pub mod params;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;

pub use adam::Adam;
pub use model::ConhdModel;
pub use params::ParameterStore;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter {0:?} already exists")]
    DuplicateParam(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("missing carried state: {0}")]
    MissingState(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Unb,
    Isab,
}

/// Which layer recurrence the stack follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodForm {
    Gd,
    Admm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub operator: OperatorKind,
    /// Co-representation dimension.
    pub d: usize,
    /// Layer count L.
    pub layers: usize,
    pub share_weights: bool,
    pub method: MethodForm,
    /// When false, the within-edge operator output is mean-ablated to an
    /// invariant single-output function.
    pub phi_equivariant: bool,
    /// Node-side counterpart of `phi_equivariant`.
    pub varphi_equivariant: bool,
    /// ISAB inducing point count k.
    pub inducing_points: usize,
    pub heads: usize,
    /// Linear layers per operator MLP.
    pub mlp_depth: usize,
    pub dropout_rate: f64,
    /// Incident edges sampled per node when building training batches.
    pub neighbor_sample: usize,
    /// Append each node's normalized degree rank to its features before the
    /// input projection.
    pub degree_rank_feature: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            operator: OperatorKind::Unb,
            d: 128,
            layers: 2,
            share_weights: true,
            method: MethodForm::Gd,
            phi_equivariant: true,
            varphi_equivariant: true,
            inducing_points: 4,
            heads: 4,
            mlp_depth: 2,
            dropout_rate: 0.7,
            neighbor_sample: 40,
            degree_rank_feature: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d == 0 || self.layers == 0 || self.inducing_points == 0 || self.mlp_depth == 0 {
            return Err(ModelError::InvalidConfig(
                "d, layers, inducing_points and mlp_depth must be >= 1".into(),
            ));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "heads must divide d, got d={} heads={}",
                self.d, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Forward mode: training applies seeded dropout, evaluation is
/// deterministic.
pub enum Phase<'r> {
    Train { rng: &'r mut ChaCha12Rng },
    Eval,
}
