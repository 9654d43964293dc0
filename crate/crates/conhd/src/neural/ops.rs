//! Differentiable building blocks: MLPs, the unweighted-pooling equivariant
//! block (UNB), induced set attention (ISAB), and the mean-aggregation
//! ablation.
//!
//! Operators act on a pair-major matrix whose rows are grouped into stacks
//! (per edge or per node) described by a [`Grouping`]. UNB runs as one
//! fused chain of segment operations; ISAB loops over the groups because
//! attention mixes rows within a stack.

use std::rc::Rc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::autodiff::{Tape, Var};
use crate::neural::params::ParameterStore;
use crate::neural::{ModelConfig, ModelError, Phase};

/// Row grouping for one interaction side: segment ids per row plus the
/// explicit row lists per group (empty groups allowed and skipped).
#[derive(Debug, Clone)]
pub struct Grouping {
    pub segments: Rc<Vec<usize>>,
    pub n_segments: usize,
    pub groups: Vec<Rc<Vec<usize>>>,
    /// Position of each row in the group-major flattening.
    pub inverse: Rc<Vec<usize>>,
    /// 1 / |group| per segment (0 for empty groups).
    pub recip_sizes: Rc<Vec<f64>>,
}

impl Grouping {
    /// Build from explicit per-group row lists, which must partition
    /// `0..n_rows`.
    pub fn new(groups: &[Vec<usize>], n_rows: usize) -> Result<Self, ModelError> {
        let mut segments = vec![usize::MAX; n_rows];
        let mut inverse = vec![usize::MAX; n_rows];
        let mut pos = 0;
        for (g, rows) in groups.iter().enumerate() {
            for &r in rows {
                if r >= n_rows || segments[r] != usize::MAX {
                    return Err(ModelError::Shape(format!(
                        "groups must partition 0..{n_rows}; row {r} repeated or out of range"
                    )));
                }
                segments[r] = g;
                inverse[r] = pos;
                pos += 1;
            }
        }
        if pos != n_rows {
            return Err(ModelError::Shape(format!(
                "groups cover {pos} of {n_rows} rows"
            )));
        }
        let recip_sizes = groups
            .iter()
            .map(|rows| if rows.is_empty() { 0.0 } else { 1.0 / rows.len() as f64 })
            .collect();
        Ok(Self {
            segments: Rc::new(segments),
            n_segments: groups.len(),
            groups: groups.iter().map(|g| Rc::new(g.clone())).collect(),
            inverse: Rc::new(inverse),
            recip_sizes: Rc::new(recip_sizes),
        })
    }

    /// Single group covering all rows.
    pub fn whole(n_rows: usize) -> Self {
        Self::new(&[(0..n_rows).collect()], n_rows).expect("trivial partition")
    }
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha12Rng) -> Array2<f64> {
    let keep = 1.0 - rate;
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            1.0 / keep
        }
    })
}

/// Row-wise MLP: `depth` linear layers with ReLU between them (the last
/// layer stays linear). Dropout follows each activation in train mode.
pub fn mlp(
    tape: &mut Tape,
    store: &ParameterStore,
    prefix: &str,
    x: Var,
    depth: usize,
    dropout_rate: f64,
    phase: &mut Phase,
) -> Result<Var, ModelError> {
    let mut cur = x;
    for i in 0..depth {
        let w = tape.param(store, &format!("{prefix}.w{i}"))?;
        let b = tape.param(store, &format!("{prefix}.b{i}"))?;
        let lin = tape.matmul(cur, w)?;
        cur = tape.add_row(lin, b)?;
        if i + 1 < depth {
            cur = tape.relu(cur);
            if let Phase::Train { rng } = phase {
                if dropout_rate > 0.0 {
                    let (r, c) = tape.value(cur).dim();
                    let mask = tape.leaf(dropout_mask(r, c, dropout_rate, rng));
                    cur = tape.mul(cur, mask)?;
                }
            }
        }
    }
    Ok(cur)
}

/// Standalone MLP evaluation on a plain matrix (deterministic in eval mode,
/// seeded dropout in train mode).
pub fn mlp_forward(
    store: &ParameterStore,
    prefix: &str,
    depth: usize,
    x: &ArrayView2<f64>,
    dropout_rate: f64,
    phase: &mut Phase,
) -> Result<Array2<f64>, ModelError> {
    let mut tape = Tape::new();
    let input = tape.leaf(x.to_owned());
    let out = mlp(&mut tape, store, prefix, input, depth, dropout_rate, phase)?;
    Ok(tape.value(out).clone())
}

/// Unweighted block: `out_i = MLP2([x_i, sum_j MLP1(x_j)])` with the sum
/// running over the row's group.
pub fn unb(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    prefix: &str,
    x: Var,
    grouping: &Grouping,
    phase: &mut Phase,
) -> Result<Var, ModelError> {
    let pooled_in = mlp(
        tape,
        store,
        &format!("{prefix}.pool"),
        x,
        cfg.mlp_depth,
        cfg.dropout_rate,
        phase,
    )?;
    let sums = tape.segment_sum(pooled_in, grouping.segments.clone(), grouping.n_segments)?;
    let per_row = tape.gather_rows(sums, grouping.segments.clone())?;
    let cat = tape.concat_cols(&[x, per_row])?;
    mlp(
        tape,
        store,
        &format!("{prefix}.out"),
        cat,
        cfg.mlp_depth,
        cfg.dropout_rate,
        phase,
    )
}

fn layer_norm(
    tape: &mut Tape,
    store: &ParameterStore,
    prefix: &str,
    x: Var,
) -> Result<Var, ModelError> {
    let normed = tape.normalize_rows(x, 1e-5);
    let g = tape.param(store, &format!("{prefix}.g"))?;
    let b = tape.param(store, &format!("{prefix}.b"))?;
    let scaled = tape.mul_row(normed, g)?;
    Ok(tape.add_row(scaled, b)?)
}

/// Multihead attention block `MAB(Q, K) = LN(M + rFF(M))` with
/// `M = LN(Q + Multihead(Q, K, K))`.
fn mab(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    prefix: &str,
    q: Var,
    k: Var,
) -> Result<Var, ModelError> {
    let dh = cfg.d / cfg.heads;
    let mut head_outs = Vec::with_capacity(cfg.heads);
    for i in 0..cfg.heads {
        let wq = tape.param(store, &format!("{prefix}.wq{i}"))?;
        let wk = tape.param(store, &format!("{prefix}.wk{i}"))?;
        let wv = tape.param(store, &format!("{prefix}.wv{i}"))?;
        let qi = tape.matmul(q, wq)?;
        let ki = tape.matmul(k, wk)?;
        let vi = tape.matmul(k, wv)?;
        let kt = tape.transpose(ki);
        let raw = tape.matmul(qi, kt)?;
        let scores = tape.scale(raw, 1.0 / (dh as f64).sqrt());
        let att = tape.softmax_rows(scores);
        head_outs.push(tape.matmul(att, vi)?);
    }
    let cat = tape.concat_cols(&head_outs)?;
    let wo = tape.param(store, &format!("{prefix}.wo"))?;
    let o = tape.matmul(cat, wo)?;
    let m_pre = tape.add(q, o)?;
    let m = layer_norm(tape, store, &format!("{prefix}.ln1"), m_pre)?;

    let fw = tape.param(store, &format!("{prefix}.rff.w"))?;
    let fb = tape.param(store, &format!("{prefix}.rff.b"))?;
    let lin = tape.matmul(m, fw)?;
    let lin = tape.add_row(lin, fb)?;
    let ff = tape.relu(lin);
    let out_pre = tape.add(m, ff)?;
    layer_norm(tape, store, &format!("{prefix}.ln2"), out_pre)
}

/// Induced set attention block per group:
/// `ISAB(S) = MAB(S, MAB(I, S))` with trainable inducing points `I`.
pub fn isab(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    prefix: &str,
    x: Var,
    grouping: &Grouping,
) -> Result<Var, ModelError> {
    let inducing = tape.param(store, &format!("{prefix}.ind"))?;
    let mut outs = Vec::with_capacity(grouping.groups.len());
    for rows in &grouping.groups {
        if rows.is_empty() {
            continue;
        }
        let s = tape.gather_rows(x, rows.clone())?;
        let inner = mab(tape, store, cfg, &format!("{prefix}.mab1"), inducing, s)?;
        let out = mab(tape, store, cfg, &format!("{prefix}.mab2"), s, inner)?;
        outs.push(out);
    }
    let conc = tape.concat_rows(&outs)?;
    Ok(tape.gather_rows(conc, grouping.inverse.clone())?)
}

/// Dispatch on the configured operator.
pub fn diffusion_operator(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    prefix: &str,
    x: Var,
    grouping: &Grouping,
    phase: &mut Phase,
) -> Result<Var, ModelError> {
    match cfg.operator {
        crate::neural::OperatorKind::Unb => unb(tape, store, cfg, prefix, x, grouping, phase),
        crate::neural::OperatorKind::Isab => isab(tape, store, cfg, prefix, x, grouping),
    }
}

/// Replace every row of a stack by the column-mean row.
pub fn mean_ablate(stack: &ArrayView2<f64>) -> Array2<f64> {
    let mean = stack.mean_axis(Axis(0)).expect("rows >= 1");
    let mut out = stack.to_owned();
    for mut row in out.rows_mut() {
        row.assign(&mean);
    }
    out
}

/// Graph version of [`mean_ablate`] applied group-wise: every row receives
/// its group's mean, making the operator output invariant within the group.
pub fn mean_ablate_grouped(
    tape: &mut Tape,
    x: Var,
    grouping: &Grouping,
) -> Result<Var, ModelError> {
    let sums = tape.segment_sum(x, grouping.segments.clone(), grouping.n_segments)?;
    let means = tape.scale_rows(sums, grouping.recip_sizes.clone())?;
    Ok(tape.gather_rows(means, grouping.segments.clone())?)
}
