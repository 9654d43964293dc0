//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).

use std::time::Instant;

use conhd::check::{
    check_ce_prox_oracle, check_classical_equivariance, check_gd_monotonicity,
    check_layer_equivariance, check_model_gradients, check_operator_equivariance, check_prop2,
    check_prox_iterative_oracle, check_solver_agreement,
};
use conhd::cli::commands::cmd_gen;
use conhd::cli::configs::{GenConfig, GenKind, GraphSource, RandomGraphSpec};
use conhd::encpipe::{
    approx_experiment_on, evaluate, make_rank_label_dataset, train, Split, TrainConfig,
};
use conhd::hypergraph::{build_pair_index, random_hypergraph, DegreeLaw};
use conhd::neural::{MethodForm, ModelConfig, OperatorKind};
use conhd::regularizers::RegularizerKind;
use conhd::{bench, diffusion, seed};

fn criterion(number: usize, name: &str, passed: bool, details: &str) {
    println!(
        "ACCEPTANCE {number:02} {name}: {} ({details})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {number} ({name}) failed: {details}");
}

#[test]
fn criterion_01_prox_correctness() {
    let start = Instant::now();
    let ce = check_ce_prox_oracle(200, seed::derive(1, "acc-prox"));
    let iter = check_prox_iterative_oracle(200, seed::derive(1, "acc-prox-iter"));
    let elapsed = start.elapsed().as_secs_f64();
    criterion(
        1,
        "prox correctness vs brute-force oracle",
        ce.passed && iter.passed && elapsed < 120.0,
        &format!(
            "ce max dev {:.2e} <= {:.0e}; iterative objective gap {:.2e} <= {:.0e}; {elapsed:.1}s < 120s",
            ce.max_deviation, ce.tolerance, iter.max_deviation, iter.tolerance
        ),
    );
}

#[test]
fn criterion_02_gd_monotonicity() {
    let item = check_gd_monotonicity(200, 100, seed::derive(2, "acc-mono"));
    criterion(
        2,
        "GD objective non-increasing",
        item.passed,
        &format!("max rise {:.2e} <= 1e-10 over 200 instances x 100 steps", item.max_deviation),
    );
}

#[test]
fn criterion_03_solver_agreement() {
    let (cross, direct) = check_solver_agreement(20, seed::derive(3, "acc-agree"));
    criterion(
        3,
        "GD/ADMM/direct stationarity agreement",
        cross.passed && direct.passed,
        &format!(
            "gd-admm max dev {:.2e} <= 1e-3; vs direct {:.2e} <= 1e-4",
            cross.max_deviation, direct.max_deviation
        ),
    );
}

#[test]
fn criterion_04_penalty_sweep_special_case() {
    let (spread, means) = check_prop2(10, seed::derive(4, "acc-prop2"));
    criterion(
        4,
        "node-representation special case under growing gamma",
        spread.passed && means.passed,
        &format!(
            "spread rise {:.2e} <= 1e-10; mean deviation {:.2e} <= 1e-2",
            spread.max_deviation, means.max_deviation
        ),
    );
}

#[test]
fn criterion_05_equivariance() {
    let mut max_dev: f64 = 0.0;
    let mut all = true;
    for item in [
        check_operator_equivariance(OperatorKind::Unb, 100, seed::derive(5, "acc-unb")),
        check_operator_equivariance(OperatorKind::Isab, 100, seed::derive(5, "acc-isab")),
        check_layer_equivariance(OperatorKind::Unb, MethodForm::Gd, 100, seed::derive(5, "acc-l1")),
        check_layer_equivariance(OperatorKind::Unb, MethodForm::Admm, 100, seed::derive(5, "acc-l2")),
        check_layer_equivariance(OperatorKind::Isab, MethodForm::Gd, 100, seed::derive(5, "acc-l3")),
        check_layer_equivariance(OperatorKind::Isab, MethodForm::Admm, 100, seed::derive(5, "acc-l4")),
        check_classical_equivariance(100, seed::derive(5, "acc-classical")),
    ] {
        all &= item.passed;
        max_dev = max_dev.max(item.max_deviation);
    }
    criterion(
        5,
        "permutation equivariance (operators, layers, classical steps)",
        all,
        &format!("max deviation {max_dev:.2e} <= 1e-10 over 100 permutations each"),
    );
}

#[test]
fn criterion_06_gradient_verification() {
    let unb = check_model_gradients(OperatorKind::Unb, 2, seed::derive(6, "acc-grad-unb"));
    let isab = check_model_gradients(OperatorKind::Isab, 1, seed::derive(6, "acc-grad-isab"));
    criterion(
        6,
        "finite-difference gradient verification",
        unb.passed && isab.passed,
        &format!(
            "2-layer UNB max rel err {:.2e}, 1-layer ISAB {:.2e}, tolerance 1e-4",
            unb.max_deviation, isab.max_deviation
        ),
    );
}

#[test]
fn criterion_07_diffusion_approximation() {
    let start = Instant::now();
    let h = random_hypergraph(100, 150, DegreeLaw::Uniform { lo: 2, hi: 6 }, 777).unwrap();
    let idx = build_pair_index(&h);
    let samples = diffusion::generate_semisynthetic(&h, &idx, RegularizerKind::Ce, 100, 777)
        .unwrap();
    let model_cfg = ModelConfig {
        operator: OperatorKind::Unb,
        d: 64,
        layers: 2,
        share_weights: true,
        method: MethodForm::Gd,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        lr: 2e-3,
        epochs: 40,
        patience: 40,
        seed: 777,
        ..TrainConfig::default()
    };
    let report =
        approx_experiment_on(&h, &idx, RegularizerKind::Ce, &samples, &model_cfg, &train_cfg)
            .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let ratio = report.model_mae / report.identity_baseline_mae;
    criterion(
        7,
        "learned diffusion beats the identity baseline",
        ratio <= 0.2 && elapsed < 600.0,
        &format!(
            "model MAE {:.4} vs identity {:.4} (ratio {ratio:.3} <= 0.2) in {elapsed:.0}s < 600s",
            report.model_mae, report.identity_baseline_mae
        ),
    );
}

#[test]
fn criterion_08_equivariance_ablation() {
    let budget = TrainConfig {
        lr: 2e-3,
        epochs: 50,
        patience: 50,
        batch_edges: 16,
        ..TrainConfig::default()
    };
    let base_model = ModelConfig {
        operator: OperatorKind::Unb,
        d: 32,
        layers: 2,
        share_weights: true,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let mut diffs = Vec::new();
    for s in 0..5u64 {
        let h =
            random_hypergraph(60, 90, DegreeLaw::Uniform { lo: 4, hi: 6 }, 4000 + s).unwrap();
        let ds = make_rank_label_dataset(&h, 5000 + s).unwrap();
        let cfg = TrainConfig { seed: s, ..budget.clone() };

        let equi = train(&ds, &base_model, &cfg).unwrap();
        let equi_f1 = evaluate(&ds, &equi.model, Split::Test).unwrap().micro_f1;

        let ablated_model = ModelConfig {
            phi_equivariant: false,
            varphi_equivariant: false,
            ..base_model.clone()
        };
        let ablated = train(&ds, &ablated_model, &cfg).unwrap();
        let ablated_f1 = evaluate(&ds, &ablated.model, Split::Test).unwrap().micro_f1;
        println!(
            "  seed {s}: equivariant {equi_f1:.3} vs double-invariant {ablated_f1:.3}"
        );
        diffs.push(equi_f1 - ablated_f1);
    }
    diffs.sort_by(f64::total_cmp);
    let median = diffs[2];
    criterion(
        8,
        "equivariant operators beat the double-invariant ablation",
        median >= 0.05,
        &format!("median micro-F1 gain over 5 seeds {median:.3} >= 0.05"),
    );
}

#[test]
fn criterion_09_complexity_scaling() {
    let cfg = ModelConfig {
        operator: OperatorKind::Unb,
        d: 32,
        layers: 2,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let report = bench::scaling_bench(60, 90, 4, &cfg, 5, 99).unwrap();
    let passed = (0.8..=1.3).contains(&report.exponent);
    let ratios: Vec<String> = report.ratios.iter().map(|r| format!("{r:.2}")).collect();
    criterion(
        9,
        "forward+backward scales linearly in the pair count",
        passed,
        &format!(
            "fitted exponent {:.3} in [0.8, 1.3]; consecutive ratios [{}]",
            report.exponent,
            ratios.join(", ")
        ),
    );
}

#[test]
fn criterion_10_generators() {
    // Outsider invariants: degree-<=-3 edges excluded, 5 variants per
    // retained edge, exactly floor(d_e / 2) outsider labels per edge.
    let h = random_hypergraph(40, 20, DegreeLaw::Uniform { lo: 2, hi: 6 }, 31).unwrap();
    let retained = (0..h.edge_count()).filter(|&e| h.edge_degree(e) > 3).count();
    assert!(retained > 0 && retained < h.edge_count(), "mixed-size fixture");
    let x0 = ndarray::Array2::zeros((40, 1));
    let ds = conhd::encpipe::make_outsider_dataset(&h, &x0, 5, 13).unwrap();
    let mut ok = ds.hypergraph.edge_count() == retained * 5;
    for e in 0..ds.hypergraph.edge_count() {
        let d_e = ds.hypergraph.edge_degree(e);
        ok &= d_e > 3;
        let outsiders: usize =
            ds.pair_index.edge_slice(e).iter().map(|&p| ds.labels[p]).sum();
        ok &= outsiders == d_e / 2;
    }

    // Semi-synthetic generation is byte-for-byte reproducible.
    let gen_cfg = GenConfig {
        kind: GenKind::Semisynthetic,
        graph: GraphSource {
            hypergraph: None,
            random: Some(RandomGraphSpec { n: 30, m: 25, size_min: 2, size_max: 5 }),
        },
        samples: 20,
        seed: 55,
        ..GenConfig::default()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    cmd_gen(&gen_cfg, d1.path()).unwrap();
    cmd_gen(&gen_cfg, d2.path()).unwrap();
    let mut byte_identical = true;
    let mut files = 0;
    for entry in walkdir(d1.path()) {
        let rel = entry.strip_prefix(d1.path()).unwrap();
        byte_identical &=
            std::fs::read(&entry).unwrap() == std::fs::read(d2.path().join(rel)).unwrap();
        files += 1;
    }
    criterion(
        10,
        "generator invariants and byte-reproducibility",
        ok && byte_identical && files > 20,
        &format!(
            "outsider: {retained} retained edges x 5 variants with floor(d_e/2) outsiders; \
             {files} semi-synthetic files byte-identical across reruns"
        ),
    );
}

fn walkdir(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walkdir(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}
