//! Classical co-representation diffusion.
//!
//! One vector h_{v,e} is attached to every node-edge pair. The solvers
//! minimize
//!
//! ```text
//! sum_pairs 1/2 ||h_{v,e} - a_{v,e}||^2
//!     + lambda * sum_e Omega_e(H_e) + gamma * sum_v Omega_v(H_v)
//! ```
//!
//! by gradient descent (differentiable regularizers, i.e. CE) or by ADMM
//! with per-edge auxiliaries U and per-node auxiliaries Z:
//!
//! ```text
//! U' = Prox_{lambda Omega_e / rho}(2 H_e - U_e) + U_e - H_e
//! Z' = Prox_{gamma Omega_v / rho}(2 H_v - Z_v) + Z_v - H_v
//! h' = prox of the anchor term at 1/2 ([U']_v + [Z']_e), scale 1/(2 rho)
//! ```
//!
//! All three sub-updates read the pre-update H. When one side's weight is
//! zero that auxiliary is not allocated; the h-update then uses the single
//! remaining stack entry with prox scale 1/rho.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::hypergraph::{Hypergraph, PairIndex};
use crate::regularizers::{
    ce_gradient, reg_prox, reg_value, squared_loss_prox, RegError, RegularizerKind,
};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{kind:?} has no gradient; gradient descent supports CE only")]
    UnsupportedCombination { kind: RegularizerKind },
    #[error("ADMM state is missing its auxiliary variables")]
    MissingAuxiliaries,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Reg(#[from] RegError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gd,
    Admm,
}

#[derive(Debug, Clone)]
pub struct DiffusionConfig {
    pub method: Method,
    /// GD step size.
    pub alpha: f64,
    /// ADMM scale factor.
    pub rho: f64,
    /// Edge regularizer weight.
    pub lambda: f64,
    /// Node regularizer weight.
    pub gamma: f64,
    pub edge_reg: RegularizerKind,
    pub node_reg: RegularizerKind,
    /// Number of steps T.
    pub steps: usize,
    pub seed: u64,
    pub prox_tol: f64,
    pub prox_max_iter: usize,
    /// Record an H snapshot every this many steps (first and last are always
    /// recorded).
    pub snapshot_stride: Option<usize>,
}

impl DiffusionConfig {
    pub fn gd(
        edge_reg: RegularizerKind,
        node_reg: RegularizerKind,
        alpha: f64,
        lambda: f64,
        gamma: f64,
        steps: usize,
    ) -> Self {
        Self {
            method: Method::Gd,
            alpha,
            rho: 1.0,
            lambda,
            gamma,
            edge_reg,
            node_reg,
            steps,
            seed: 0,
            prox_tol: 1e-8,
            prox_max_iter: 2000,
            snapshot_stride: None,
        }
    }

    pub fn admm(
        edge_reg: RegularizerKind,
        node_reg: RegularizerKind,
        rho: f64,
        lambda: f64,
        gamma: f64,
        steps: usize,
    ) -> Self {
        Self {
            method: Method::Admm,
            alpha: 0.0,
            rho,
            lambda,
            gamma,
            edge_reg,
            node_reg,
            steps,
            seed: 0,
            prox_tol: 1e-8,
            prox_max_iter: 2000,
            snapshot_stride: None,
        }
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.lambda < 0.0 || self.gamma < 0.0 {
            return Err(DiffusionError::InvalidConfig(
                "regularizer weights must be non-negative".into(),
            ));
        }
        match self.method {
            Method::Gd if !(self.alpha > 0.0) => Err(DiffusionError::InvalidConfig(format!(
                "GD needs alpha > 0, got {}",
                self.alpha
            ))),
            Method::Admm if !(self.rho > 0.0) => Err(DiffusionError::InvalidConfig(format!(
                "ADMM needs rho > 0, got {}",
                self.rho
            ))),
            Method::Admm if self.lambda == 0.0 && self.gamma == 0.0 => {
                Err(DiffusionError::InvalidConfig(
                    "ADMM needs at least one regularizer weight > 0".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Co-representation matrix H (one row per pair), its anchors A, and the
/// ADMM auxiliary stacks when present.
#[derive(Debug, Clone)]
pub struct CoRepState {
    pub h: Array2<f64>,
    pub a: Array2<f64>,
    pub u: Option<Array2<f64>>,
    pub z: Option<Array2<f64>>,
    pub step: usize,
}

impl CoRepState {
    /// Initial state: H^0 = A, with U^0 and Z^0 copied from H^0 for the
    /// ADMM sides that are active.
    pub fn init(
        idx: &PairIndex,
        anchors: &ArrayView2<f64>,
        cfg: &DiffusionConfig,
    ) -> Result<Self, DiffusionError> {
        if anchors.nrows() != idx.pair_count() {
            return Err(DiffusionError::ShapeMismatch(format!(
                "anchors have {} rows, pair index has {}",
                anchors.nrows(),
                idx.pair_count()
            )));
        }
        let h = anchors.to_owned();
        let (u, z) = match cfg.method {
            Method::Gd => (None, None),
            Method::Admm => (
                (cfg.lambda > 0.0).then(|| h.clone()),
                (cfg.gamma > 0.0).then(|| h.clone()),
            ),
        };
        Ok(Self { h, a: anchors.to_owned(), u, z, step: 0 })
    }
}

pub(crate) fn gather_rows(m: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((ids.len(), m.ncols()));
    for (r, &id) in ids.iter().enumerate() {
        out.row_mut(r).assign(&m.row(id));
    }
    out
}

fn scatter_rows(target: &mut Array2<f64>, ids: &[usize], src: &Array2<f64>) {
    for (r, &id) in ids.iter().enumerate() {
        target.row_mut(id).assign(&src.row(r));
    }
}

fn scatter_add_rows(target: &mut Array2<f64>, ids: &[usize], src: &Array2<f64>, scale: f64) {
    for (r, &id) in ids.iter().enumerate() {
        let mut row = target.row_mut(id);
        row.scaled_add(scale, &src.row(r));
    }
}

fn check_shapes(state: &CoRepState, idx: &PairIndex) -> Result<(), DiffusionError> {
    if state.h.nrows() != idx.pair_count() || state.a.dim() != state.h.dim() {
        return Err(DiffusionError::ShapeMismatch(format!(
            "H is {:?}, A is {:?}, pair count is {}",
            state.h.dim(),
            state.a.dim(),
            idx.pair_count()
        )));
    }
    Ok(())
}

/// Value of the diffusion objective at the current state.
pub fn objective(
    state: &CoRepState,
    h: &Hypergraph,
    idx: &PairIndex,
    cfg: &DiffusionConfig,
) -> Result<f64, DiffusionError> {
    check_shapes(state, idx)?;
    let mut total = 0.5
        * state
            .h
            .iter()
            .zip(state.a.iter())
            .map(|(x, a)| (x - a) * (x - a))
            .sum::<f64>();
    if cfg.lambda > 0.0 {
        for e in 0..h.edge_count() {
            let stack = gather_rows(&state.h, idx.edge_slice(e));
            total += cfg.lambda * reg_value(cfg.edge_reg, &stack.view())?;
        }
    }
    if cfg.gamma > 0.0 {
        for v in 0..h.node_count() {
            if h.node_degree(v) == 0 {
                continue;
            }
            let stack = gather_rows(&state.h, idx.node_slice(v));
            total += cfg.gamma * reg_value(cfg.node_reg, &stack.view())?;
        }
    }
    Ok(total)
}

/// One gradient-descent step of the diffusion objective.
pub fn gd_step(
    state: &CoRepState,
    h: &Hypergraph,
    idx: &PairIndex,
    cfg: &DiffusionConfig,
) -> Result<CoRepState, DiffusionError> {
    check_shapes(state, idx)?;
    if cfg.lambda > 0.0 && cfg.edge_reg != RegularizerKind::Ce {
        return Err(DiffusionError::UnsupportedCombination { kind: cfg.edge_reg });
    }
    if cfg.gamma > 0.0 && cfg.node_reg != RegularizerKind::Ce {
        return Err(DiffusionError::UnsupportedCombination { kind: cfg.node_reg });
    }
    let mut grad = &state.h - &state.a;
    if cfg.lambda > 0.0 {
        for e in 0..h.edge_count() {
            let slice = idx.edge_slice(e);
            let g = ce_gradient(&gather_rows(&state.h, slice).view())?;
            scatter_add_rows(&mut grad, slice, &g, cfg.lambda);
        }
    }
    if cfg.gamma > 0.0 {
        for v in 0..h.node_count() {
            let slice = idx.node_slice(v);
            if slice.is_empty() {
                continue;
            }
            let g = ce_gradient(&gather_rows(&state.h, slice).view())?;
            scatter_add_rows(&mut grad, slice, &g, cfg.gamma);
        }
    }
    let mut next = state.clone();
    next.h.scaled_add(-cfg.alpha, &grad);
    next.step += 1;
    Ok(next)
}

/// Primal residuals of one ADMM step (Frobenius norms of the constraint
/// violations after the step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmResiduals {
    pub edge: f64,
    pub node: f64,
}

/// One ADMM step; see the module docs for the update rules.
pub fn admm_step(
    state: &CoRepState,
    h: &Hypergraph,
    idx: &PairIndex,
    cfg: &DiffusionConfig,
) -> Result<CoRepState, DiffusionError> {
    admm_step_with_residuals(state, h, idx, cfg).map(|(s, _)| s)
}

pub fn admm_step_with_residuals(
    state: &CoRepState,
    h: &Hypergraph,
    idx: &PairIndex,
    cfg: &DiffusionConfig,
) -> Result<(CoRepState, AdmmResiduals), DiffusionError> {
    check_shapes(state, idx)?;
    cfg.validate()?;
    let p = idx.pair_count();
    let d = state.h.ncols();

    // Per-edge auxiliary update; prox outputs are kept for the residuals.
    let mut u_next: Option<Array2<f64>> = None;
    let mut edge_prox_out: Option<Array2<f64>> = None;
    if cfg.lambda > 0.0 {
        let u = state.u.as_ref().ok_or(DiffusionError::MissingAuxiliaries)?;
        let mut next = Array2::zeros((p, d));
        let mut prox_out = Array2::zeros((p, d));
        for e in 0..h.edge_count() {
            let slice = idx.edge_slice(e);
            let h_e = gather_rows(&state.h, slice);
            let u_e = gather_rows(u, slice);
            let arg = &h_e * 2.0 - &u_e;
            let proxed = reg_prox(
                cfg.edge_reg,
                &arg.view(),
                cfg.lambda / cfg.rho,
                cfg.prox_tol,
                cfg.prox_max_iter,
            )?;
            let updated = &proxed + &u_e - &h_e;
            scatter_rows(&mut next, slice, &updated);
            scatter_rows(&mut prox_out, slice, &proxed);
        }
        u_next = Some(next);
        edge_prox_out = Some(prox_out);
    }

    let mut z_next: Option<Array2<f64>> = None;
    let mut node_prox_out: Option<Array2<f64>> = None;
    if cfg.gamma > 0.0 {
        let z = state.z.as_ref().ok_or(DiffusionError::MissingAuxiliaries)?;
        let mut next = Array2::zeros((p, d));
        let mut prox_out = Array2::zeros((p, d));
        for v in 0..h.node_count() {
            let slice = idx.node_slice(v);
            if slice.is_empty() {
                continue;
            }
            let h_v = gather_rows(&state.h, slice);
            let z_v = gather_rows(z, slice);
            let arg = &h_v * 2.0 - &z_v;
            let proxed = reg_prox(
                cfg.node_reg,
                &arg.view(),
                cfg.gamma / cfg.rho,
                cfg.prox_tol,
                cfg.prox_max_iter,
            )?;
            let updated = &proxed + &z_v - &h_v;
            scatter_rows(&mut next, slice, &updated);
            scatter_rows(&mut prox_out, slice, &proxed);
        }
        z_next = Some(next);
        node_prox_out = Some(prox_out);
    }

    // Co-representation update from the post-update auxiliaries.
    let (input, scale): (Array2<f64>, f64) = match (&u_next, &z_next) {
        (Some(u), Some(z)) => ((u + z) * 0.5, 1.0 / (2.0 * cfg.rho)),
        (Some(u), None) => (u.clone(), 1.0 / cfg.rho),
        (None, Some(z)) => (z.clone(), 1.0 / cfg.rho),
        (None, None) => unreachable!("validate() requires an active side"),
    };
    let mut h_next = Array2::zeros((p, d));
    for pid in 0..p {
        let row = squared_loss_prox(&input.row(pid), &state.a.row(pid), scale)?;
        h_next.row_mut(pid).assign(&row);
    }

    let frob = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let residuals = AdmmResiduals {
        edge: edge_prox_out.as_ref().map_or(0.0, |a| frob(&(a - &h_next))),
        node: node_prox_out.as_ref().map_or(0.0, |a| frob(&(a - &h_next))),
    };
    let next = CoRepState {
        h: h_next,
        a: state.a.clone(),
        u: u_next,
        z: z_next,
        step: state.step + 1,
    };
    Ok((next, residuals))
}

/// Objective values (GD, one per state incl. the initialization) or primal
/// residuals (ADMM, one per step), plus H snapshots at the configured
/// stride. The first and final states are always snapshotted.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub objectives: Vec<f64>,
    pub residuals: Vec<AdmmResiduals>,
    pub snapshots: Vec<(usize, Array2<f64>)>,
    pub final_state: CoRepState,
}

/// Run T steps of the configured method from H^0 = A.
pub fn run_diffusion(
    h: &Hypergraph,
    idx: &PairIndex,
    anchors: &ArrayView2<f64>,
    cfg: &DiffusionConfig,
) -> Result<Trajectory, DiffusionError> {
    cfg.validate()?;
    let mut state = CoRepState::init(idx, anchors, cfg)?;
    let mut objectives = Vec::new();
    let mut residuals = Vec::new();
    let mut snapshots = vec![(0, state.h.clone())];
    if cfg.method == Method::Gd {
        objectives.push(objective(&state, h, idx, cfg)?);
    }
    for t in 1..=cfg.steps {
        state = match cfg.method {
            Method::Gd => {
                let next = gd_step(&state, h, idx, cfg)?;
                objectives.push(objective(&next, h, idx, cfg)?);
                next
            }
            Method::Admm => {
                let (next, r) = admm_step_with_residuals(&state, h, idx, cfg)?;
                residuals.push(r);
                next
            }
        };
        let at_stride = cfg.snapshot_stride.is_some_and(|s| s > 0 && t % s == 0);
        if at_stride && t != cfg.steps {
            snapshots.push((t, state.h.clone()));
        }
    }
    if cfg.steps > 0 {
        snapshots.push((cfg.steps, state.h.clone()));
    }
    Ok(Trajectory { objectives, residuals, snapshots, final_state: state })
}

/// Node-representation diffusion: one vector per node, CE edge regularizer,
/// solved by gradient descent. The anchor term carries a node-degree weight
/// (one quadratic per incident pair), so its optimum coincides with the
/// co-representation optimum in the limit where all co-representations of a
/// node are forced to agree.
pub fn node_rep_diffusion(
    h: &Hypergraph,
    x0: &ArrayView2<f64>,
    cfg: &DiffusionConfig,
) -> Result<Array2<f64>, DiffusionError> {
    if x0.nrows() != h.node_count() {
        return Err(DiffusionError::ShapeMismatch(format!(
            "features have {} rows, hypergraph has {} nodes",
            x0.nrows(),
            h.node_count()
        )));
    }
    if cfg.lambda > 0.0 && cfg.edge_reg != RegularizerKind::Ce {
        return Err(DiffusionError::UnsupportedCombination { kind: cfg.edge_reg });
    }
    if !(cfg.alpha > 0.0) {
        return Err(DiffusionError::InvalidConfig("alpha must be positive".into()));
    }
    let mut x = x0.to_owned();
    for _ in 0..cfg.steps {
        let mut grad = Array2::zeros(x.dim());
        for v in 0..h.node_count() {
            let w = h.node_degree(v) as f64;
            let delta = (&x.row(v) - &x0.row(v)) * w;
            grad.row_mut(v).assign(&delta);
        }
        if cfg.lambda > 0.0 {
            for e in 0..h.edge_count() {
                let slice = h.members(e);
                let g = ce_gradient(&gather_rows(&x, slice).view())?;
                scatter_add_rows(&mut grad, slice, &g, cfg.lambda);
            }
        }
        x.scaled_add(-cfg.alpha, &grad);
    }
    Ok(x)
}

/// Direct solution of the CE stationarity system
/// `(I + 4 lambda (D_e - J_e) + 4 gamma (D_v - J_v)) H = A`,
/// used as an independent oracle for solver-agreement checks.
pub fn ce_stationary_solution(
    h: &Hypergraph,
    idx: &PairIndex,
    anchors: &ArrayView2<f64>,
    lambda: f64,
    gamma: f64,
) -> Result<Array2<f64>, DiffusionError> {
    let p = idx.pair_count();
    if anchors.nrows() != p {
        return Err(DiffusionError::ShapeMismatch(format!(
            "anchors have {} rows, pair index has {p}",
            anchors.nrows()
        )));
    }
    let mut m = Array2::<f64>::eye(p);
    let mut add_block = |slice: &[usize], weight: f64| {
        let n = slice.len() as f64;
        for &pi in slice {
            m[[pi, pi]] += 4.0 * weight * (n - 1.0);
            for &pj in slice {
                if pi != pj {
                    m[[pi, pj]] -= 4.0 * weight;
                }
            }
        }
    };
    if lambda > 0.0 {
        for e in 0..h.edge_count() {
            add_block(idx.edge_slice(e), lambda);
        }
    }
    if gamma > 0.0 {
        for v in 0..h.node_count() {
            add_block(idx.node_slice(v), gamma);
        }
    }
    solve_dense(m, anchors.to_owned())
        .ok_or_else(|| DiffusionError::InvalidConfig("singular stationarity system".into()))
}

// Gaussian elimination with partial pivoting; the systems here are tiny,
// symmetric positive definite test oracles.
fn solve_dense(mut a: Array2<f64>, mut b: Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[pivot, col]].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap([pivot, k], [col, k]);
            }
            for k in 0..b.ncols() {
                b.swap([pivot, k], [col, k]);
            }
        }
        for row in (col + 1)..n {
            let f = a[[row, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            for k in 0..b.ncols() {
                b[[row, k]] -= f * b[[col, k]];
            }
        }
    }
    for col in (0..n).rev() {
        for k in 0..b.ncols() {
            let mut s = b[[col, k]];
            for j in (col + 1)..n {
                s -= a[[col, j]] * b[[j, k]];
            }
            b[[col, k]] = s / a[[col, col]];
        }
    }
    Some(b)
}

/// One semi-synthetic diffusion sample: 1-d node features, the broadcast
/// initialization H^(0), and the two-step diffusion output H^(2).
#[derive(Debug, Clone)]
pub struct SemiSample {
    pub features: Array1<f64>,
    pub h0: Array2<f64>,
    pub h2: Array2<f64>,
}

/// Solver settings used to generate semi-synthetic targets for `kind`:
/// GD with step size 0.06 for CE, ADMM with scale 0.07 for TV2 and 0.5 for
/// LEC2, two steps, unit weights on both sides.
pub fn semisynthetic_config(kind: RegularizerKind) -> DiffusionConfig {
    match kind {
        RegularizerKind::Ce => DiffusionConfig::gd(kind, kind, 0.06, 1.0, 1.0, 2),
        RegularizerKind::Tv2 => DiffusionConfig::admm(kind, kind, 0.07, 1.0, 1.0, 2),
        RegularizerKind::Lec2 => DiffusionConfig::admm(kind, kind, 0.5, 1.0, 1.0, 2),
    }
}

/// Generate `samples` (H^(0), H^(2)) pairs on a fixed hypergraph. Per
/// sample, node features are drawn from Normal(0, sigma) with sigma uniform
/// on [1, 10]; reproducible for a fixed seed.
pub fn generate_semisynthetic(
    h: &Hypergraph,
    idx: &PairIndex,
    kind: RegularizerKind,
    samples: usize,
    seed: u64,
) -> Result<Vec<SemiSample>, DiffusionError> {
    let cfg = semisynthetic_config(kind);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let sigma: f64 = rng.random_range(1.0..10.0);
        let normal =
            Normal::new(0.0, sigma).map_err(|e| DiffusionError::InvalidConfig(e.to_string()))?;
        let features = Array1::from_shape_fn(h.node_count(), |_| normal.sample(&mut rng));
        let mut h0 = Array2::zeros((idx.pair_count(), 1));
        for p in 0..idx.pair_count() {
            h0[[p, 0]] = features[idx.node_of(p)];
        }
        let traj = run_diffusion(h, idx, &h0.view(), &cfg)?;
        out.push(SemiSample { features, h0, h2: traj.final_state.h });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{build_pair_index, random_hypergraph, DegreeLaw, Hypergraph};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Axis};

    fn single_edge() -> (Hypergraph, PairIndex) {
        let h = Hypergraph::new(2, vec![vec![0, 1]]).unwrap();
        let idx = build_pair_index(&h);
        (h, idx)
    }

    fn random_instance(seed: u64, d: usize) -> (Hypergraph, PairIndex, Array2<f64>) {
        let h = random_hypergraph(10, 8, DegreeLaw::Uniform { lo: 2, hi: 4 }, seed).unwrap();
        let idx = build_pair_index(&h);
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabcd);
        let a = Array2::from_shape_fn((idx.pair_count(), d), |_| rng.random::<f64>() * 2.0 - 1.0);
        (h, idx, a)
    }

    #[test]
    fn objective_examples() {
        let (h, idx) = single_edge();
        let cfg = DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.1, 1.0, 1.0, 1);

        // H = A with constant stacks: every term vanishes.
        let a = array![[0.5], [0.5]];
        let state = CoRepState::init(&idx, &a.view(), &cfg).unwrap();
        assert_eq!(objective(&state, &h, &idx, &cfg).unwrap(), 0.0);

        // Single edge {0,1}, H = A = [1, 0]: only the edge CE term remains.
        let a = array![[1.0], [0.0]];
        let state = CoRepState::init(&idx, &a.view(), &cfg).unwrap();
        assert_eq!(objective(&state, &h, &idx, &cfg).unwrap(), 2.0);

        // lambda = gamma = 0 reduces to the anchor distance.
        let cfg0 = DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.1, 0.0, 0.0, 1);
        let mut state = CoRepState::init(&idx, &a.view(), &cfg0).unwrap();
        state.h = array![[2.0], [1.0]];
        assert_abs_diff_eq!(objective(&state, &h, &idx, &cfg0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gd_step_examples() {
        let (h, idx) = single_edge();
        let cfg = DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.1, 1.0, 0.0, 1);

        let a = array![[0.3], [0.3]];
        let state = CoRepState::init(&idx, &a.view(), &cfg).unwrap();
        let next = gd_step(&state, &h, &idx, &cfg).unwrap();
        assert_eq!(next.h, state.h);

        let a = array![[1.0], [0.0]];
        let state = CoRepState::init(&idx, &a.view(), &cfg).unwrap();
        let next = gd_step(&state, &h, &idx, &cfg).unwrap();
        assert_abs_diff_eq!(next.h[[0, 0]], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(next.h[[1, 0]], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn gd_rejects_nonsmooth_regularizers() {
        let (h, idx) = single_edge();
        let cfg = DiffusionConfig::gd(RegularizerKind::Tv2, RegularizerKind::Ce, 0.1, 1.0, 0.0, 1);
        let a = array![[1.0], [0.0]];
        let state = CoRepState::init(&idx, &a.view(), &cfg).unwrap();
        assert!(matches!(
            gd_step(&state, &h, &idx, &cfg),
            Err(DiffusionError::UnsupportedCombination { .. })
        ));
    }

    #[test]
    fn gd_objective_monotone_on_random_instances() {
        for seed in 0..20 {
            let (h, idx, a) = random_instance(seed, 2);
            let cfg =
                DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.01, 1.0, 1.0, 50);
            let traj = run_diffusion(&h, &idx, &a.view(), &cfg).unwrap();
            for w in traj.objectives.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "objective rose: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn admm_fixed_point_and_first_step() {
        let (h, idx) = single_edge();
        let cfg = DiffusionConfig::admm(RegularizerKind::Ce, RegularizerKind::Ce, 1.0, 1.0, 1.0, 1);

        let a = array![[0.7], [0.7]];
        let state = CoRepState::init(&idx, &a.view(), &cfg).unwrap();
        let next = admm_step(&state, &h, &idx, &cfg).unwrap();
        for (x, y) in next.h.iter().zip(state.h.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }

        // Single edge, lambda = 1, rho = 1, H0 = U0 = [1, 0]:
        // U1 = ce_prox([1, 0], 1) = [5/9, 4/9].
        let cfg_edge =
            DiffusionConfig::admm(RegularizerKind::Ce, RegularizerKind::Ce, 1.0, 1.0, 0.0, 1);
        let a = array![[1.0], [0.0]];
        let state = CoRepState::init(&idx, &a.view(), &cfg_edge).unwrap();
        let next = admm_step(&state, &h, &idx, &cfg_edge).unwrap();
        let u = next.u.as_ref().unwrap();
        assert_abs_diff_eq!(u[[0, 0]], 5.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u[[1, 0]], 4.0 / 9.0, epsilon = 1e-12);
        assert!(next.z.is_none());
    }

    #[test]
    fn admm_missing_auxiliaries_is_an_error() {
        let (h, idx) = single_edge();
        let cfg = DiffusionConfig::admm(RegularizerKind::Ce, RegularizerKind::Ce, 1.0, 1.0, 1.0, 1);
        let a = array![[1.0], [0.0]];
        let mut state = CoRepState::init(&idx, &a.view(), &cfg).unwrap();
        state.u = None;
        assert!(matches!(
            admm_step(&state, &h, &idx, &cfg),
            Err(DiffusionError::MissingAuxiliaries)
        ));
    }

    #[test]
    fn solvers_agree_with_direct_solution() {
        let (h, idx, a) = random_instance(42, 1);
        let direct = ce_stationary_solution(&h, &idx, &a.view(), 1.0, 1.0).unwrap();

        let gd_cfg =
            DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.005, 1.0, 1.0, 5000);
        let gd = run_diffusion(&h, &idx, &a.view(), &gd_cfg).unwrap().final_state.h;

        let admm_cfg =
            DiffusionConfig::admm(RegularizerKind::Ce, RegularizerKind::Ce, 1.0, 1.0, 1.0, 500);
        let admm = run_diffusion(&h, &idx, &a.view(), &admm_cfg).unwrap().final_state.h;

        for ((g, m), d) in gd.iter().zip(admm.iter()).zip(direct.iter()) {
            assert!((g - d).abs() < 1e-4, "gd {g} vs direct {d}");
            assert!((m - d).abs() < 1e-4, "admm {m} vs direct {d}");
            assert!((g - m).abs() < 1e-3, "gd {g} vs admm {m}");
        }
    }

    #[test]
    fn trajectory_contract() {
        let (h, idx, a) = random_instance(3, 1);
        let mut cfg =
            DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.01, 1.0, 0.5, 0);
        let traj = run_diffusion(&h, &idx, &a.view(), &cfg).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.objectives.len(), 1);
        assert_eq!(traj.final_state.h, a);

        cfg.steps = 10;
        cfg.snapshot_stride = Some(5);
        let t1 = run_diffusion(&h, &idx, &a.view(), &cfg).unwrap();
        let t2 = run_diffusion(&h, &idx, &a.view(), &cfg).unwrap();
        assert_eq!(t1.final_state.h, t2.final_state.h);
        assert_eq!(t1.objectives, t2.objectives);
        let steps: Vec<usize> = t1.snapshots.iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![0, 5, 10]);
    }

    #[test]
    fn admm_records_residuals() {
        let (h, idx, a) = random_instance(9, 1);
        let cfg =
            DiffusionConfig::admm(RegularizerKind::Tv2, RegularizerKind::Tv2, 0.5, 1.0, 1.0, 5);
        let traj = run_diffusion(&h, &idx, &a.view(), &cfg).unwrap();
        assert_eq!(traj.residuals.len(), 5);
        assert!(traj.objectives.is_empty());
        // Residuals shrink toward consensus.
        assert!(traj.residuals[4].edge < traj.residuals[0].edge);
    }

    #[test]
    fn node_rep_diffusion_examples() {
        let h = Hypergraph::new(2, vec![vec![0, 1]]).unwrap();
        let x0 = array![[1.0], [0.0]];

        let cfg =
            DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.05, 0.0, 0.0, 100);
        let x = node_rep_diffusion(&h, &x0.view(), &cfg).unwrap();
        assert_eq!(x, x0);

        let cfg =
            DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.02, 1.0, 0.0, 4000);
        let x = node_rep_diffusion(&h, &x0.view(), &cfg).unwrap();
        // Stationarity: (x0 - 1) + 4 (x0 - x1) = 0 and symmetric, so
        // x = (5/9, 4/9); the mean stays at 0.5.
        assert_abs_diff_eq!(x[[0, 0]], 5.0 / 9.0, epsilon = 1e-6);
        assert_abs_diff_eq!(x[[1, 0]], 4.0 / 9.0, epsilon = 1e-6);
        assert_abs_diff_eq!(x.mean_axis(Axis(0)).unwrap()[0], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn semisynthetic_constant_features_are_fixed_points() {
        let h = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let idx = build_pair_index(&h);
        for kind in [RegularizerKind::Ce, RegularizerKind::Tv2, RegularizerKind::Lec2] {
            let cfg = semisynthetic_config(kind);
            let mut h0 = Array2::zeros((idx.pair_count(), 1));
            h0.fill(1.25);
            let traj = run_diffusion(&h, &idx, &h0.view(), &cfg).unwrap();
            for (a, b) in traj.final_state.h.iter().zip(h0.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn semisynthetic_generation_is_deterministic() {
        let h = random_hypergraph(12, 10, DegreeLaw::Uniform { lo: 2, hi: 4 }, 5).unwrap();
        let idx = build_pair_index(&h);
        for kind in [RegularizerKind::Ce, RegularizerKind::Tv2, RegularizerKind::Lec2] {
            let a = generate_semisynthetic(&h, &idx, kind, 3, 99).unwrap();
            let b = generate_semisynthetic(&h, &idx, kind, 3, 99).unwrap();
            assert_eq!(a.len(), 3);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.h0, y.h0);
                assert_eq!(x.h2, y.h2);
            }
            // Two diffusion steps actually move the representations.
            assert!(a[0].h0 != a[0].h2);
        }
    }

    #[test]
    fn relabeling_permutes_trajectories() {
        // Reverse node and edge ids on a small instance; trajectories must
        // commute with the relabeling.
        let members = vec![vec![0, 1, 2], vec![2, 3], vec![0, 3]];
        let h = Hypergraph::new(4, members.clone()).unwrap();
        let idx = build_pair_index(&h);
        let node_perm = [3, 2, 1, 0];
        let perm_members: Vec<Vec<usize>> = members
            .iter()
            .rev()
            .map(|edge| edge.iter().map(|&v| node_perm[v]).collect())
            .collect();
        let hp = Hypergraph::new(4, perm_members).unwrap();
        let idxp = build_pair_index(&hp);
        let edge_perm = [2usize, 1, 0];

        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let a = Array2::from_shape_fn((idx.pair_count(), 2), |_| rng.random::<f64>());
        let mut ap = Array2::zeros(a.dim());
        for p in 0..idx.pair_count() {
            let (v, e) = (idx.node_of(p), idx.edge_of(p));
            let pp = idxp.pair_id(node_perm[v], edge_perm[e]).unwrap();
            ap.row_mut(pp).assign(&a.row(p));
        }

        for cfg in [
            DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.01, 1.0, 0.5, 20),
            DiffusionConfig::admm(RegularizerKind::Tv2, RegularizerKind::Lec2, 0.8, 1.0, 0.5, 20),
        ] {
            let t = run_diffusion(&h, &idx, &a.view(), &cfg).unwrap().final_state.h;
            let tp = run_diffusion(&hp, &idxp, &ap.view(), &cfg).unwrap().final_state.h;
            for p in 0..idx.pair_count() {
                let (v, e) = (idx.node_of(p), idx.edge_of(p));
                let pp = idxp.pair_id(node_perm[v], edge_perm[e]).unwrap();
                for c in 0..2 {
                    assert!(
                        (t[[p, c]] - tp[[pp, c]]).abs() <= 1e-10,
                        "pair {p} col {c}: {} vs {}",
                        t[[p, c]],
                        tp[[pp, c]]
                    );
                }
            }
        }
    }
}
