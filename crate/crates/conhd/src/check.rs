//! Executable verification suites: equivariance, prox-oracle agreement,
//! solver agreement against the direct stationarity solution, the penalty
//! sweep linking co-representation and node-representation diffusion, and
//! finite-difference gradient checks. Shared by the `check` CLI command and
//! the acceptance tests.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::diffusion::{
    admm_step, ce_stationary_solution, gd_step, node_rep_diffusion, run_diffusion, CoRepState,
    DiffusionConfig,
};
use crate::hypergraph::{build_pair_index, random_hypergraph, DegreeLaw, Hypergraph, PairIndex};
use crate::neural::losses::cross_entropy_loss;
use crate::neural::ops::Grouping;
use crate::neural::{ConhdModel, MethodForm, ModelConfig, OperatorKind, Phase};
use crate::regularizers::{
    ce_gradient, ce_prox, ce_value, prox_iterative, prox_objective, prox_oracle, RegularizerKind,
};
use crate::seed;

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl CheckItem {
    fn new(name: &str, max_deviation: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), passed: max_deviation <= tolerance, max_deviation, tolerance }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
    pub passed: bool,
}

fn random_perm(n: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    perm
}

fn permute_rows(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(m.dim());
    for (from, &to) in perm.iter().enumerate() {
        out.row_mut(to).assign(&m.row(from));
    }
    out
}

/// Relabel nodes by `node_perm` and edges by `edge_perm`
/// (`node_perm[v]` is the new id of old node `v`).
fn relabel(h: &Hypergraph, node_perm: &[usize], edge_perm: &[usize]) -> Hypergraph {
    let mut members = vec![Vec::new(); h.edge_count()];
    for e in 0..h.edge_count() {
        members[edge_perm[e]] = h.members(e).iter().map(|&v| node_perm[v]).collect();
    }
    Hypergraph::new(h.node_count(), members).expect("relabeling preserves validity")
}

/// Move a pair-major matrix into the relabeled index.
fn permute_pairs(
    idx: &PairIndex,
    idxp: &PairIndex,
    node_perm: &[usize],
    edge_perm: &[usize],
    m: &Array2<f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros(m.dim());
    for p in 0..idx.pair_count() {
        let (v, e) = (idx.node_of(p), idx.edge_of(p));
        let pp = idxp
            .pair_id(node_perm[v], edge_perm[e])
            .expect("relabeled pair exists");
        out.row_mut(pp).assign(&m.row(p));
    }
    out
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Stack-level operator equivariance: `op(pi . X) = pi . op(X)`.
pub fn check_operator_equivariance(
    operator: OperatorKind,
    perms: usize,
    seed_value: u64,
) -> CheckItem {
    let cfg = ModelConfig {
        operator,
        d: 8,
        layers: 1,
        heads: 2,
        inducing_points: 4,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let mut store = crate::neural::ParameterStore::new();
    let mut rng = seed::rng_for(seed_value, "op-equivariance-params");
    crate::neural::model::insert_operator_params(&mut store, &cfg, "op", &mut rng).unwrap();

    let apply = |x: &Array2<f64>| -> Array2<f64> {
        let grouping = Grouping::whole(x.nrows());
        let mut tape = crate::autodiff::Tape::new();
        let xv = tape.leaf(x.clone());
        let out = crate::neural::ops::diffusion_operator(
            &mut tape,
            &store,
            &cfg,
            "op",
            xv,
            &grouping,
            &mut Phase::Eval,
        )
        .unwrap();
        tape.value(out).clone()
    };

    let mut data_rng = seed::rng_for(seed_value, "op-equivariance-data");
    let mut max_dev: f64 = 0.0;
    for _ in 0..perms {
        let rows = data_rng.random_range(2..=7);
        let x = Array2::from_shape_fn((rows, cfg.d), |_| data_rng.random::<f64>() * 2.0 - 1.0);
        let base = apply(&x);
        let perm = random_perm(rows, &mut data_rng);
        let permuted = apply(&permute_rows(&x, &perm));
        max_dev = max_dev.max(max_abs_diff(&permuted, &permute_rows(&base, &perm)));
    }
    let name = match operator {
        OperatorKind::Unb => "equivariance-unb",
        OperatorKind::Isab => "equivariance-isab",
    };
    CheckItem::new(name, max_dev, 1e-10)
}

/// Full-layer equivariance under hypergraph relabeling.
pub fn check_layer_equivariance(
    operator: OperatorKind,
    method: MethodForm,
    perms: usize,
    seed_value: u64,
) -> CheckItem {
    let cfg = ModelConfig {
        operator,
        method,
        d: 6,
        layers: 1,
        heads: 2,
        inducing_points: 3,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let h = random_hypergraph(7, 6, DegreeLaw::Uniform { lo: 2, hi: 4 }, seed_value).unwrap();
    let idx = build_pair_index(&h);
    let model = ConhdModel::new(cfg, 2, 2, seed::derive(seed_value, "layer-model")).unwrap();
    let mut rng = seed::rng_for(seed_value, "layer-data");
    let x0 = Array2::from_shape_fn((h.node_count(), 2), |_| rng.random::<f64>() * 2.0 - 1.0);
    let base = model.embeddings(&h, &idx, &x0.view()).unwrap();

    let mut max_dev: f64 = 0.0;
    for _ in 0..perms {
        let node_perm = random_perm(h.node_count(), &mut rng);
        let edge_perm = random_perm(h.edge_count(), &mut rng);
        let hp = relabel(&h, &node_perm, &edge_perm);
        let idxp = build_pair_index(&hp);
        let x0p = permute_rows(&x0, &node_perm);
        let out = model.embeddings(&hp, &idxp, &x0p.view()).unwrap();
        let expected = permute_pairs(&idx, &idxp, &node_perm, &edge_perm, &base);
        max_dev = max_dev.max(max_abs_diff(&out, &expected));
    }
    let name = format!(
        "equivariance-layer-{}-{}",
        match operator {
            OperatorKind::Unb => "unb",
            OperatorKind::Isab => "isab",
        },
        match method {
            MethodForm::Gd => "gd",
            MethodForm::Admm => "admm",
        }
    );
    CheckItem::new(&name, max_dev, 1e-10)
}

/// Classical diffusion step equivariance under hypergraph relabeling.
pub fn check_classical_equivariance(perms: usize, seed_value: u64) -> CheckItem {
    let h = random_hypergraph(8, 7, DegreeLaw::Uniform { lo: 2, hi: 4 }, seed_value).unwrap();
    let idx = build_pair_index(&h);
    let mut rng = seed::rng_for(seed_value, "classical-equivariance");
    let anchors = Array2::from_shape_fn((idx.pair_count(), 2), |_| rng.random::<f64>() * 2.0 - 1.0);

    let gd_cfg = DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.01, 1.0, 0.5, 1);
    let admm_cfg =
        DiffusionConfig::admm(RegularizerKind::Tv2, RegularizerKind::Lec2, 0.9, 1.0, 0.5, 1);

    let step_outputs = |h: &Hypergraph, idx: &PairIndex, a: &Array2<f64>| {
        let state = CoRepState::init(idx, &a.view(), &gd_cfg).unwrap();
        let gd = gd_step(&state, h, idx, &gd_cfg).unwrap().h;
        let state = CoRepState::init(idx, &a.view(), &admm_cfg).unwrap();
        let admm = admm_step(&state, h, idx, &admm_cfg).unwrap().h;
        (gd, admm)
    };
    let (base_gd, base_admm) = step_outputs(&h, &idx, &anchors);

    let mut max_dev: f64 = 0.0;
    for _ in 0..perms {
        let node_perm = random_perm(h.node_count(), &mut rng);
        let edge_perm = random_perm(h.edge_count(), &mut rng);
        let hp = relabel(&h, &node_perm, &edge_perm);
        let idxp = build_pair_index(&hp);
        let ap = permute_pairs(&idx, &idxp, &node_perm, &edge_perm, &anchors);
        let (gd, admm) = step_outputs(&hp, &idxp, &ap);
        let exp_gd = permute_pairs(&idx, &idxp, &node_perm, &edge_perm, &base_gd);
        let exp_admm = permute_pairs(&idx, &idxp, &node_perm, &edge_perm, &base_admm);
        max_dev = max_dev.max(max_abs_diff(&gd, &exp_gd)).max(max_abs_diff(&admm, &exp_admm));
    }
    CheckItem::new("equivariance-classical-steps", max_dev, 1e-10)
}

fn random_ce_instance(
    seed_value: u64,
    d: usize,
) -> (Hypergraph, PairIndex, Array2<f64>) {
    let h = random_hypergraph(10, 8, DegreeLaw::Uniform { lo: 2, hi: 4 }, seed_value).unwrap();
    let idx = build_pair_index(&h);
    let mut rng = seed::rng_for(seed_value, "instance-anchors");
    let a = Array2::from_shape_fn((idx.pair_count(), d), |_| rng.random::<f64>() * 2.0 - 1.0);
    (h, idx, a)
}

/// GD objective monotonicity with step size 0.01 (slack 1e-10).
pub fn check_gd_monotonicity(instances: usize, steps: usize, seed_value: u64) -> CheckItem {
    let mut max_rise: f64 = 0.0;
    for i in 0..instances {
        let (h, idx, a) = random_ce_instance(seed::derive(seed_value, &format!("mono-{i}")), 1);
        let cfg =
            DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.01, 1.0, 1.0, steps);
        let traj = run_diffusion(&h, &idx, &a.view(), &cfg).unwrap();
        for w in traj.objectives.windows(2) {
            max_rise = max_rise.max(w[1] - w[0]);
        }
    }
    CheckItem::new("gd-objective-monotone", max_rise.max(0.0), 1e-10)
}

/// Closed-form CE prox against the brute-force oracle.
pub fn check_ce_prox_oracle(instances: usize, seed_value: u64) -> CheckItem {
    let mut rng = seed::rng_for(seed_value, "ce-prox-oracle");
    let mut max_dev: f64 = 0.0;
    for i in 0..instances {
        let rows = rng.random_range(2..=5);
        let y = Array2::from_shape_fn((rows, 1), |_| rng.random::<f64>() * 4.0 - 2.0);
        let s = [0.1, 1.0, 10.0][i % 3];
        let closed = ce_prox(&y.view(), s).unwrap();
        let oracle = prox_oracle(RegularizerKind::Ce, &y.view(), s).unwrap();
        max_dev = max_dev.max(max_abs_diff(&closed, &oracle));
    }
    CheckItem::new("ce-prox-vs-oracle", max_dev, 1e-4)
}

/// Iterative TV2/LEC2 prox objective versus the oracle's objective.
pub fn check_prox_iterative_oracle(instances: usize, seed_value: u64) -> CheckItem {
    let mut rng = seed::rng_for(seed_value, "iter-prox-oracle");
    let mut max_gap: f64 = 0.0;
    for i in 0..instances {
        let rows = rng.random_range(2..=5);
        let y = Array2::from_shape_fn((rows, 1), |_| rng.random::<f64>() * 4.0 - 2.0);
        let s = [0.1, 1.0, 10.0][i % 3];
        for kind in [RegularizerKind::Tv2, RegularizerKind::Lec2] {
            let x = prox_iterative(kind, &y.view(), s, 1e-10, 2000).unwrap();
            let oracle = prox_oracle(kind, &y.view(), s).unwrap();
            let fx = prox_objective(kind, &x.view(), &y.view(), s).unwrap();
            let fo = prox_objective(kind, &oracle.view(), &y.view(), s).unwrap();
            max_gap = max_gap.max(fx - fo);
        }
    }
    CheckItem::new("prox-iterative-vs-oracle", max_gap.max(0.0), 1e-6)
}

/// GD and ADMM agreement with each other and with the direct stationarity
/// solution on CE instances.
pub fn check_solver_agreement(instances: usize, seed_value: u64) -> (CheckItem, CheckItem) {
    let mut cross_dev: f64 = 0.0;
    let mut direct_dev: f64 = 0.0;
    for i in 0..instances {
        let (h, idx, a) = random_ce_instance(seed::derive(seed_value, &format!("agree-{i}")), 1);
        let direct = ce_stationary_solution(&h, &idx, &a.view(), 1.0, 1.0).unwrap();
        let gd_cfg =
            DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.005, 1.0, 1.0, 5000);
        let gd = run_diffusion(&h, &idx, &a.view(), &gd_cfg).unwrap().final_state.h;
        let admm_cfg =
            DiffusionConfig::admm(RegularizerKind::Ce, RegularizerKind::Ce, 1.0, 1.0, 1.0, 500);
        let admm = run_diffusion(&h, &idx, &a.view(), &admm_cfg).unwrap().final_state.h;
        cross_dev = cross_dev.max(max_abs_diff(&gd, &admm));
        direct_dev = direct_dev.max(max_abs_diff(&gd, &direct)).max(max_abs_diff(&admm, &direct));
    }
    (
        CheckItem::new("solver-agreement-gd-admm", cross_dev, 1e-3),
        CheckItem::new("solver-agreement-vs-direct", direct_dev, 1e-4),
    )
}

/// Penalty sweep: within-node co-representation spread shrinks as the node
/// weight grows, and at gamma = 1e4 per-node means match the
/// node-representation special case.
pub fn check_prop2(instances: usize, seed_value: u64) -> (CheckItem, CheckItem) {
    let gammas = [1e2, 1e3, 1e4];
    let mut max_spread_rise: f64 = 0.0;
    let mut max_mean_dev: f64 = 0.0;
    for i in 0..instances {
        let inst_seed = seed::derive(seed_value, &format!("prop2-{i}"));
        let h = random_hypergraph(8, 7, DegreeLaw::Uniform { lo: 2, hi: 4 }, inst_seed).unwrap();
        let idx = build_pair_index(&h);
        let mut rng = seed::rng_for(inst_seed, "prop2-features");
        let x0 = Array2::from_shape_fn((h.node_count(), 1), |_| rng.random::<f64>() * 2.0 - 1.0);
        let mut anchors = Array2::zeros((idx.pair_count(), 1));
        for p in 0..idx.pair_count() {
            anchors[[p, 0]] = x0[[idx.node_of(p), 0]];
        }

        let spread_of = |m: &Array2<f64>| -> f64 {
            let mut worst: f64 = 0.0;
            for v in 0..h.node_count() {
                let slice = idx.node_slice(v);
                for (ai, &pa) in slice.iter().enumerate() {
                    for &pb in &slice[ai + 1..] {
                        let dist: f64 = m
                            .row(pa)
                            .iter()
                            .zip(m.row(pb).iter())
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum::<f64>()
                            .sqrt();
                        worst = worst.max(dist);
                    }
                }
            }
            worst
        };

        let mut spreads = Vec::new();
        let mut final_h = None;
        for &gamma in &gammas {
            let sol = ce_stationary_solution(&h, &idx, &anchors.view(), 1.0, gamma).unwrap();
            spreads.push(spread_of(&sol));
            final_h = Some(sol);
        }
        for w in spreads.windows(2) {
            max_spread_rise = max_spread_rise.max(w[1] - w[0]);
        }

        let node_cfg =
            DiffusionConfig::gd(RegularizerKind::Ce, RegularizerKind::Ce, 0.005, 1.0, 0.0, 20000);
        let x_star = node_rep_diffusion(&h, &x0.view(), &node_cfg).unwrap();
        let sol = final_h.expect("three gammas");
        for v in 0..h.node_count() {
            let slice = idx.node_slice(v);
            if slice.is_empty() {
                continue;
            }
            let mean: f64 =
                slice.iter().map(|&p| sol[[p, 0]]).sum::<f64>() / slice.len() as f64;
            max_mean_dev = max_mean_dev.max((mean - x_star[[v, 0]]).abs());
        }
    }
    (
        CheckItem::new("penalty-sweep-spread-monotone", max_spread_rise.max(0.0), 1e-10),
        CheckItem::new("penalty-sweep-node-rep-agreement", max_mean_dev, 1e-2),
    )
}

/// Finite-difference check of a CE gradient implementation (injectable so
/// tests can verify that a broken gradient is caught).
pub fn check_ce_gradient_fd_with(
    grad_fn: impl Fn(&ArrayView2<f64>) -> Array2<f64>,
    instances: usize,
    seed_value: u64,
) -> CheckItem {
    let mut rng = seed::rng_for(seed_value, "ce-grad-fd");
    let step = 1e-6;
    let mut max_rel: f64 = 0.0;
    for _ in 0..instances {
        let rows = rng.random_range(1..=3);
        let cols = rng.random_range(1..=3);
        let s = Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 2.0 - 1.0);
        let g = grad_fn(&s.view());
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = s.clone();
                plus[[r, c]] += step;
                let mut minus = s.clone();
                minus[[r, c]] -= step;
                let fd = (ce_value(&plus.view()).unwrap() - ce_value(&minus.view()).unwrap())
                    / (2.0 * step);
                let denom = g[[r, c]].abs().max(fd.abs()).max(1.0);
                max_rel = max_rel.max((g[[r, c]] - fd).abs() / denom);
            }
        }
    }
    CheckItem::new("ce-gradient-finite-difference", max_rel, 1e-6)
}

pub fn check_ce_gradient_fd(instances: usize, seed_value: u64) -> CheckItem {
    check_ce_gradient_fd_with(|s| ce_gradient(s).unwrap(), instances, seed_value)
}

fn five_edge_hypergraph() -> Hypergraph {
    Hypergraph::new(
        6,
        vec![vec![0, 1, 2], vec![1, 3], vec![2, 3, 4], vec![4, 5], vec![0, 5]],
    )
    .unwrap()
}

fn model_loss(
    model: &ConhdModel,
    h: &Hypergraph,
    idx: &PairIndex,
    x0: &ArrayView2<f64>,
    labels: &[usize],
) -> f64 {
    let (mut tape, emb) = model.forward(h, idx, x0, &mut Phase::Eval).unwrap();
    let logits = model.head(&mut tape, emb).unwrap();
    let loss = cross_entropy_loss(&mut tape, logits, labels).unwrap();
    tape.value(loss)[[0, 0]]
}

/// Central finite-difference verification of every parameter of a model on
/// a 5-edge hypergraph (step 1e-5, relative error tolerance 1e-4).
pub fn check_model_gradients(
    operator: OperatorKind,
    layers: usize,
    seed_value: u64,
) -> CheckItem {
    let cfg = ModelConfig {
        operator,
        layers,
        share_weights: false,
        d: 6,
        heads: 2,
        inducing_points: 2,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let h = five_edge_hypergraph();
    let idx = build_pair_index(&h);
    let model = ConhdModel::new(cfg, 2, 3, seed::derive(seed_value, "grad-model")).unwrap();
    let mut rng = seed::rng_for(seed_value, "grad-data");
    let x0 = Array2::from_shape_fn((h.node_count(), 2), |_| rng.random::<f64>() * 2.0 - 1.0);
    let labels: Vec<usize> = (0..idx.pair_count()).map(|_| rng.random_range(0..3)).collect();

    let (mut tape, emb) = model.forward(&h, &idx, &x0.view(), &mut Phase::Eval).unwrap();
    let logits = model.head(&mut tape, emb).unwrap();
    let loss = cross_entropy_loss(&mut tape, logits, &labels).unwrap();
    let grads = tape.backward(loss).unwrap();

    let step = 1e-5;
    let mut max_rel: f64 = 0.0;
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in &names {
        let shape = model.params.value(name).unwrap().dim();
        let analytic = grads.by_param.get(name);
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = model.params.value(name).unwrap()[[r, c]];
                let mut probe = model.clone();
                probe.params.set_entry(name, r, c, orig + step).unwrap();
                let up = model_loss(&probe, &h, &idx, &x0.view(), &labels);
                probe.params.set_entry(name, r, c, orig - step).unwrap();
                let down = model_loss(&probe, &h, &idx, &x0.view(), &labels);
                let fd = (up - down) / (2.0 * step);
                let an = analytic.map_or(0.0, |g| g[[r, c]]);
                let denom = an.abs().max(fd.abs()).max(1.0);
                max_rel = max_rel.max((an - fd).abs() / denom);
            }
        }
    }
    let name = format!(
        "model-gradients-{}-{layers}layer",
        match operator {
            OperatorKind::Unb => "unb",
            OperatorKind::Isab => "isab",
        }
    );
    CheckItem::new(&name, max_rel, 1e-4)
}

/// Run every suite at report scale (smaller instance counts than the
/// acceptance tests, same tolerances).
pub fn run_all(seed_value: u64) -> CheckReport {
    let mut items = vec![
        check_operator_equivariance(OperatorKind::Unb, 25, seed::derive(seed_value, "c1")),
        check_operator_equivariance(OperatorKind::Isab, 25, seed::derive(seed_value, "c2")),
        check_layer_equivariance(OperatorKind::Unb, MethodForm::Gd, 10, seed::derive(seed_value, "c3")),
        check_layer_equivariance(OperatorKind::Unb, MethodForm::Admm, 10, seed::derive(seed_value, "c4")),
        check_layer_equivariance(OperatorKind::Isab, MethodForm::Gd, 10, seed::derive(seed_value, "c5")),
        check_layer_equivariance(OperatorKind::Isab, MethodForm::Admm, 10, seed::derive(seed_value, "c6")),
        check_classical_equivariance(25, seed::derive(seed_value, "c7")),
        check_gd_monotonicity(20, 50, seed::derive(seed_value, "c8")),
        check_ce_prox_oracle(30, seed::derive(seed_value, "c9")),
        check_prox_iterative_oracle(30, seed::derive(seed_value, "c10")),
        check_ce_gradient_fd(30, seed::derive(seed_value, "c11")),
        check_model_gradients(OperatorKind::Unb, 2, seed::derive(seed_value, "c12")),
        check_model_gradients(OperatorKind::Isab, 1, seed::derive(seed_value, "c13")),
    ];
    let (cross, direct) = check_solver_agreement(5, seed::derive(seed_value, "c14"));
    items.push(cross);
    items.push(direct);
    let (spread, means) = check_prop2(3, seed::derive(seed_value, "c15"));
    items.push(spread);
    items.push(means);
    let passed = items.iter().all(|i| i.passed);
    CheckReport { items, passed }
}
