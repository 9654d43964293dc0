//! The layer stacks: an input projection, L diffusion layers (GD-form or
//! ADMM-form), and a row-wise prediction head.
//!
//! GD-form layer:
//! ```text
//! M  = phi(H_e)            per edge
//! M' = varphi(H_v)         per node
//! h  = psi([h, m, m', h0]) per pair
//! ```
//!
//! ADMM-form layer (M, M' carried across layers, initialized to H0):
//! ```text
//! M  = phi(2 H_e - M_e) + M_e - H_e
//! M' = varphi(2 H_v - M'_v) + M'_v - H_v
//! h  = psi([m, m', h0])
//! ```
//!
//! psi is a single linear layer (with bias) on the concatenation.

use std::rc::Rc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::autodiff::{Tape, Var};
use crate::hypergraph::{Hypergraph, PairIndex};
use crate::neural::ops::{diffusion_operator, mean_ablate_grouped, mlp, Grouping};
use crate::neural::params::ParameterStore;
use crate::neural::{MethodForm, ModelConfig, ModelError, OperatorKind, Phase};
use crate::seed;

pub fn init_xavier(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
}

fn insert_mlp_params(
    store: &mut ParameterStore,
    prefix: &str,
    widths: &[usize],
    rng: &mut ChaCha12Rng,
) -> Result<(), ModelError> {
    for i in 0..widths.len() - 1 {
        store.insert(&format!("{prefix}.w{i}"), init_xavier(widths[i], widths[i + 1], rng))?;
        store.insert(&format!("{prefix}.b{i}"), Array2::zeros((1, widths[i + 1])))?;
    }
    Ok(())
}

fn mlp_widths(input: usize, hidden: usize, output: usize, depth: usize) -> Vec<usize> {
    let mut widths = vec![input];
    widths.extend(std::iter::repeat(hidden).take(depth.saturating_sub(1)));
    widths.push(output);
    widths
}

fn insert_mab_params(
    store: &mut ParameterStore,
    cfg: &ModelConfig,
    prefix: &str,
    rng: &mut ChaCha12Rng,
) -> Result<(), ModelError> {
    let d = cfg.d;
    let dh = d / cfg.heads;
    for i in 0..cfg.heads {
        store.insert(&format!("{prefix}.wq{i}"), init_xavier(d, dh, rng))?;
        store.insert(&format!("{prefix}.wk{i}"), init_xavier(d, dh, rng))?;
        store.insert(&format!("{prefix}.wv{i}"), init_xavier(d, dh, rng))?;
    }
    store.insert(&format!("{prefix}.wo"), init_xavier(d, d, rng))?;
    store.insert(&format!("{prefix}.ln1.g"), Array2::ones((1, d)))?;
    store.insert(&format!("{prefix}.ln1.b"), Array2::zeros((1, d)))?;
    store.insert(&format!("{prefix}.rff.w"), init_xavier(d, d, rng))?;
    store.insert(&format!("{prefix}.rff.b"), Array2::zeros((1, d)))?;
    store.insert(&format!("{prefix}.ln2.g"), Array2::ones((1, d)))?;
    store.insert(&format!("{prefix}.ln2.b"), Array2::zeros((1, d)))?;
    Ok(())
}

/// Parameters of one diffusion operator under `prefix`.
pub fn insert_operator_params(
    store: &mut ParameterStore,
    cfg: &ModelConfig,
    prefix: &str,
    rng: &mut ChaCha12Rng,
) -> Result<(), ModelError> {
    let d = cfg.d;
    match cfg.operator {
        OperatorKind::Unb => {
            insert_mlp_params(
                store,
                &format!("{prefix}.pool"),
                &mlp_widths(d, d, d, cfg.mlp_depth),
                rng,
            )?;
            insert_mlp_params(
                store,
                &format!("{prefix}.out"),
                &mlp_widths(2 * d, d, d, cfg.mlp_depth),
                rng,
            )?;
        }
        OperatorKind::Isab => {
            store.insert(&format!("{prefix}.ind"), init_xavier(cfg.inducing_points, d, rng))?;
            insert_mab_params(store, cfg, &format!("{prefix}.mab1"), rng)?;
            insert_mab_params(store, cfg, &format!("{prefix}.mab2"), rng)?;
        }
    }
    Ok(())
}

/// Append one column holding each node's degree rank normalized to [0, 1]
/// (ties broken by node id).
fn append_degree_rank(h: &Hypergraph, x0: &ArrayView2<f64>) -> Array2<f64> {
    let n = h.node_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (h.node_degree(v), v));
    let mut rank = vec![0.0; n];
    for (i, &v) in order.iter().enumerate() {
        rank[v] = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    }
    let mut out = Array2::zeros((n, x0.ncols() + 1));
    for v in 0..n {
        for c in 0..x0.ncols() {
            out[[v, c]] = x0[[v, c]];
        }
        out[[v, x0.ncols()]] = rank[v];
    }
    out
}

fn layer_prefixes(cfg: &ModelConfig) -> Vec<String> {
    if cfg.share_weights {
        vec!["shared".to_string()]
    } else {
        (0..cfg.layers).map(|l| format!("layer{l}")).collect()
    }
}

/// A CoNHD model: configuration, feature/output widths, and every
/// trainable tensor.
#[derive(Debug, Clone)]
pub struct ConhdModel {
    pub config: ModelConfig,
    pub feature_width: usize,
    pub output_width: usize,
    pub params: ParameterStore,
}

impl ConhdModel {
    /// Build and initialize a model. `output_width` is the class count for
    /// classification or the regression dimension.
    pub fn new(
        config: ModelConfig,
        feature_width: usize,
        output_width: usize,
        init_seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if feature_width == 0 || output_width == 0 {
            return Err(ModelError::InvalidConfig(
                "feature_width and output_width must be >= 1".into(),
            ));
        }
        let mut rng = seed::rng_for(init_seed, "model-init");
        let mut params = ParameterStore::new();
        let d = config.d;
        let input_width = feature_width + usize::from(config.degree_rank_feature);
        params.insert("input.w", init_xavier(input_width, d, &mut rng))?;
        params.insert("input.b", Array2::zeros((1, d)))?;
        let psi_in = match config.method {
            MethodForm::Gd => 4 * d,
            MethodForm::Admm => 3 * d,
        };
        for prefix in layer_prefixes(&config) {
            insert_operator_params(&mut params, &config, &format!("{prefix}.phi"), &mut rng)?;
            insert_operator_params(&mut params, &config, &format!("{prefix}.varphi"), &mut rng)?;
            params.insert(&format!("{prefix}.psi.w"), init_xavier(psi_in, d, &mut rng))?;
            params.insert(&format!("{prefix}.psi.b"), Array2::zeros((1, d)))?;
        }
        params.insert("head.w0", init_xavier(d, d, &mut rng))?;
        params.insert("head.b0", Array2::zeros((1, d)))?;
        params.insert("head.w1", init_xavier(d, output_width, &mut rng))?;
        params.insert("head.b1", Array2::zeros((1, output_width)))?;
        Ok(Self { config, feature_width, output_width, params })
    }

    fn prefix_for_layer(&self, l: usize) -> String {
        if self.config.share_weights {
            "shared".to_string()
        } else {
            format!("layer{l}")
        }
    }

    /// Forward pass over a whole hypergraph; returns the tape and the P x d
    /// embedding node on it.
    pub fn forward(
        &self,
        h: &Hypergraph,
        idx: &PairIndex,
        x0: &ArrayView2<f64>,
        phase: &mut Phase,
    ) -> Result<(Tape, Var), ModelError> {
        self.config.validate()?;
        if x0.nrows() != h.node_count() || x0.ncols() != self.feature_width {
            return Err(ModelError::Shape(format!(
                "features are {:?}, expected {} x {}",
                x0.dim(),
                h.node_count(),
                self.feature_width
            )));
        }
        let p = idx.pair_count();
        let pair_nodes: Vec<usize> = (0..p).map(|q| idx.node_of(q)).collect();
        let edge_grouping = Grouping::new(idx.edge_slices(), p)?;
        let node_grouping = Grouping::new(idx.node_slices(), p)?;

        let mut tape = Tape::new();
        let x = if self.config.degree_rank_feature {
            tape.leaf(append_degree_rank(h, x0))
        } else {
            tape.leaf(x0.to_owned())
        };
        let win = tape.param(&self.params, "input.w")?;
        let bin = tape.param(&self.params, "input.b")?;
        let projected = tape.matmul(x, win)?;
        let node_h0 = tape.add_row(projected, bin)?;
        let h0 = tape.gather_rows(node_h0, Rc::new(pair_nodes))?;

        let mut cur = h0;
        let mut carried: Option<(Var, Var)> = match self.config.method {
            MethodForm::Gd => None,
            MethodForm::Admm => Some((h0, h0)),
        };
        for l in 0..self.config.layers {
            let prefix = self.prefix_for_layer(l);
            match self.config.method {
                MethodForm::Gd => {
                    cur = self.gd_layer(
                        &mut tape,
                        &prefix,
                        cur,
                        h0,
                        &edge_grouping,
                        &node_grouping,
                        phase,
                    )?;
                }
                MethodForm::Admm => {
                    let (m, m2) = carried.ok_or_else(|| {
                        ModelError::MissingState("ADMM layer needs carried diffusion info".into())
                    })?;
                    let (next, nm, nm2) = self.admm_layer(
                        &mut tape,
                        &prefix,
                        cur,
                        m,
                        m2,
                        h0,
                        &edge_grouping,
                        &node_grouping,
                        phase,
                    )?;
                    cur = next;
                    carried = Some((nm, nm2));
                }
            }
        }
        Ok((tape, cur))
    }

    #[allow(clippy::too_many_arguments)]
    fn gd_layer(
        &self,
        tape: &mut Tape,
        prefix: &str,
        h: Var,
        h0: Var,
        edge_grouping: &Grouping,
        node_grouping: &Grouping,
        phase: &mut Phase,
    ) -> Result<Var, ModelError> {
        let cfg = &self.config;
        let mut m = diffusion_operator(
            tape,
            &self.params,
            cfg,
            &format!("{prefix}.phi"),
            h,
            edge_grouping,
            phase,
        )?;
        if !cfg.phi_equivariant {
            m = mean_ablate_grouped(tape, m, edge_grouping)?;
        }
        let mut m2 = diffusion_operator(
            tape,
            &self.params,
            cfg,
            &format!("{prefix}.varphi"),
            h,
            node_grouping,
            phase,
        )?;
        if !cfg.varphi_equivariant {
            m2 = mean_ablate_grouped(tape, m2, node_grouping)?;
        }
        let cat = tape.concat_cols(&[h, m, m2, h0])?;
        self.psi(tape, prefix, cat)
    }

    #[allow(clippy::too_many_arguments)]
    fn admm_layer(
        &self,
        tape: &mut Tape,
        prefix: &str,
        h: Var,
        m: Var,
        m2: Var,
        h0: Var,
        edge_grouping: &Grouping,
        node_grouping: &Grouping,
        phase: &mut Phase,
    ) -> Result<(Var, Var, Var), ModelError> {
        let cfg = &self.config;
        let two_h = tape.scale(h, 2.0);

        let arg_e = tape.sub(two_h, m)?;
        let mut phi_out = diffusion_operator(
            tape,
            &self.params,
            cfg,
            &format!("{prefix}.phi"),
            arg_e,
            edge_grouping,
            phase,
        )?;
        if !cfg.phi_equivariant {
            phi_out = mean_ablate_grouped(tape, phi_out, edge_grouping)?;
        }
        let m_minus_h = tape.sub(m, h)?;
        let m_next = tape.add(phi_out, m_minus_h)?;

        let arg_v = tape.sub(two_h, m2)?;
        let mut varphi_out = diffusion_operator(
            tape,
            &self.params,
            cfg,
            &format!("{prefix}.varphi"),
            arg_v,
            node_grouping,
            phase,
        )?;
        if !cfg.varphi_equivariant {
            varphi_out = mean_ablate_grouped(tape, varphi_out, node_grouping)?;
        }
        let m2_minus_h = tape.sub(m2, h)?;
        let m2_next = tape.add(varphi_out, m2_minus_h)?;

        let cat = tape.concat_cols(&[m_next, m2_next, h0])?;
        let h_next = self.psi(tape, prefix, cat)?;
        Ok((h_next, m_next, m2_next))
    }

    fn psi(&self, tape: &mut Tape, prefix: &str, cat: Var) -> Result<Var, ModelError> {
        let w = tape.param(&self.params, &format!("{prefix}.psi.w"))?;
        let b = tape.param(&self.params, &format!("{prefix}.psi.b"))?;
        let lin = tape.matmul(cat, w)?;
        Ok(tape.add_row(lin, b)?)
    }

    /// Row-wise prediction head on the embeddings.
    pub fn head(&self, tape: &mut Tape, embeddings: Var) -> Result<Var, ModelError> {
        mlp(tape, &self.params, "head", embeddings, 2, 0.0, &mut Phase::Eval)
    }

    /// Convenience: deterministic embeddings for a whole hypergraph.
    pub fn embeddings(
        &self,
        h: &Hypergraph,
        idx: &PairIndex,
        x0: &ArrayView2<f64>,
    ) -> Result<Array2<f64>, ModelError> {
        let (tape, emb) = self.forward(h, idx, x0, &mut Phase::Eval)?;
        Ok(tape.value(emb).clone())
    }

    /// Convenience: deterministic head outputs (logits or regression
    /// values) for a whole hypergraph.
    pub fn predict(
        &self,
        h: &Hypergraph,
        idx: &PairIndex,
        x0: &ArrayView2<f64>,
    ) -> Result<Array2<f64>, ModelError> {
        let (mut tape, emb) = self.forward(h, idx, x0, &mut Phase::Eval)?;
        let out = self.head(&mut tape, emb)?;
        Ok(tape.value(out).clone())
    }
}
