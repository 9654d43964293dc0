//! Co-representation hypergraph diffusion.
//!
//! This crate learns a vector per node-edge pair (a co-representation) rather
//! than per node or per edge. It contains:
//!
//! - [`hypergraph`]: incidence structures, dense pair indexing, text I/O and
//!   seeded random generation;
//! - [`regularizers`]: structural regularizers (CE / TV2 / LEC2), their
//!   gradients and proximity operators, plus a brute-force prox oracle;
//! - [`diffusion`]: the classical diffusion solvers (gradient descent and
//!   ADMM over co-representations) and the semi-synthetic label generator;
//! - [`autodiff`]: a minimal reverse-mode tape over `ndarray` matrices;
//! - [`neural`]: the neural diffusion operators (UNB, ISAB), GD-form and
//!   ADMM-form layer stacks, losses and the Adam optimizer;
//! - [`encpipe`]: edge-dependent node classification datasets, mini-batch
//!   neighbor sampling, training, evaluation and metrics;
//! - [`cli`]: the `conhd` command-line interface.

pub mod autodiff;
pub mod bench;
pub mod check;
pub mod checkpoint;
pub mod cli;
pub mod diffusion;
pub mod encpipe;
pub mod hypergraph;
pub mod neural;
pub mod regularizers;
pub mod seed;
