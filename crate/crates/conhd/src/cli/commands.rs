//! Command implementations. Everything a command emits is derived from its
//! resolved config and seed, so reruns produce identical artifacts
//! (wall-clock timings in bench output excluded).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use crate::bench::scaling_bench;
use crate::check::run_all;
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::cli::configs::{
    ApproxConfig, BenchConfig, CheckConfig, DiffuseConfig, EvalConfig, GenConfig, GenKind,
    MethodName, TrainCmdConfig,
};
use crate::cli::CliError;
use crate::diffusion::{generate_semisynthetic, run_diffusion, DiffusionConfig, Method};
use crate::encpipe::{
    approx_experiment_on, evaluate, load_enc_dataset, make_outsider_dataset,
    make_rank_label_dataset, save_enc_dataset, train, write_log_csv, Split,
};
use crate::hypergraph::{build_pair_index, write_hypergraph, write_id_remap, Hypergraph, IdRemap};
use crate::seed;

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Load `node_id,f0,...` features, remapping node ids like the hypergraph
/// loader did.
fn load_features(
    path: &Path,
    h: &Hypergraph,
    remap: Option<&IdRemap>,
) -> Result<Array2<f64>, CliError> {
    let to_dense: HashMap<u64, usize> = match remap {
        Some(r) => r.iter().map(|&(o, d)| (o, d)).collect(),
        None => (0..h.node_count() as u64).map(|i| (i, i as usize)).collect(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let width = reader
        .headers()
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .len()
        .saturating_sub(1);
    if width == 0 {
        return Err(CliError::Runtime(format!("{}: no feature columns", path.display())));
    }
    let mut x0 = Array2::zeros((h.node_count(), width));
    let mut seen = vec![false; h.node_count()];
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Runtime(e.to_string()))?;
        let raw: u64 = record
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Runtime(format!("{}: bad node id", path.display())))?;
        let Some(&v) = to_dense.get(&raw) else { continue };
        for c in 0..width {
            x0[[v, c]] = record
                .get(c + 1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Runtime(format!("{}: bad value row", path.display())))?;
        }
        seen[v] = true;
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(CliError::Runtime(format!("{}: misses node {v}", path.display())));
    }
    Ok(x0)
}

fn features_from_config(
    features: &Option<std::path::PathBuf>,
    random_features: &Option<usize>,
    h: &Hypergraph,
    remap: Option<&IdRemap>,
    seed_value: u64,
) -> Result<Array2<f64>, CliError> {
    match (features, random_features) {
        (Some(path), None) => load_features(path, h, remap),
        (None, Some(width)) => {
            if *width == 0 {
                return Err(CliError::Config("random_features must be >= 1".into()));
            }
            let mut rng = seed::rng_for(seed_value, "features");
            let normal = Normal::new(0.0, 1.0).expect("valid normal");
            Ok(Array2::from_shape_fn((h.node_count(), *width), |_| normal.sample(&mut rng)))
        }
        (None, None) => Err(CliError::Config(
            "provide node features via `features` or `random_features`".into(),
        )),
        (Some(_), Some(_)) => Err(CliError::Config(
            "`features` and `random_features` are mutually exclusive".into(),
        )),
    }
}

pub fn cmd_diffuse(cfg: &DiffuseConfig, out: &Path) -> Result<(), CliError> {
    let (h, remap) = cfg.graph.load(cfg.seed)?;
    if let Some(remap) = &remap {
        write_id_remap(remap, &out.join("id_remap.csv"))?;
    }
    let idx = build_pair_index(&h);
    let x0 = features_from_config(&cfg.features, &cfg.random_features, &h, remap.as_ref(), cfg.seed)?;

    let mut anchors = Array2::zeros((idx.pair_count(), x0.ncols()));
    for p in 0..idx.pair_count() {
        anchors.row_mut(p).assign(&x0.row(idx.node_of(p)));
    }
    let mut dcfg = match cfg.method {
        MethodName::Gd => {
            DiffusionConfig::gd(cfg.edge_reg, cfg.node_reg, cfg.alpha, cfg.lambda, cfg.gamma, cfg.steps)
        }
        MethodName::Admm => {
            DiffusionConfig::admm(cfg.edge_reg, cfg.node_reg, cfg.rho, cfg.lambda, cfg.gamma, cfg.steps)
        }
    };
    dcfg.seed = cfg.seed;
    dcfg.snapshot_stride = cfg.snapshot_stride;
    let traj = run_diffusion(&h, &idx, &anchors.view(), &dcfg)?;

    let mut csv = String::new();
    match dcfg.method {
        Method::Gd => {
            csv.push_str("step,objective\n");
            for (step, obj) in traj.objectives.iter().enumerate() {
                csv.push_str(&format!("{step},{obj}\n"));
            }
        }
        Method::Admm => {
            csv.push_str("step,primal_residual_edge,primal_residual_node\n");
            for (i, r) in traj.residuals.iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", i + 1, r.edge, r.node));
            }
        }
    }
    fs::write(out.join("trajectory.csv"), csv)?;

    let final_h = &traj.final_state.h;
    let mut csv = String::from("pair_id,node_id,edge_id");
    for c in 1..=final_h.ncols() {
        csv.push_str(&format!(",h_{c}"));
    }
    csv.push('\n');
    for p in 0..idx.pair_count() {
        csv.push_str(&format!("{p},{},{}", idx.node_of(p), idx.edge_of(p)));
        for c in 0..final_h.ncols() {
            csv.push_str(&format!(",{}", final_h[[p, c]]));
        }
        csv.push('\n');
    }
    fs::write(out.join("final_h.csv"), csv)?;
    Ok(())
}

pub fn cmd_gen(cfg: &GenConfig, out: &Path) -> Result<(), CliError> {
    let (h, remap) = cfg.graph.load(cfg.seed)?;
    if let Some(remap) = &remap {
        fs::create_dir_all(out)?;
        write_id_remap(remap, &out.join("id_remap.csv"))?;
    }
    let proportions = (cfg.proportions[0], cfg.proportions[1], cfg.proportions[2]);
    if (proportions.0 + proportions.1 + proportions.2 - 1.0).abs() > 1e-9 {
        return Err(CliError::Config("split proportions must sum to 1".into()));
    }
    match cfg.kind {
        GenKind::Outsider => {
            let x0 = features_from_config(
                &cfg.features,
                &cfg.random_features,
                &h,
                remap.as_ref(),
                cfg.seed,
            )?;
            let mut ds = make_outsider_dataset(&h, &x0, cfg.variants, cfg.seed)?;
            ds.splits = crate::encpipe::split_edges(
                ds.hypergraph.edge_count(),
                proportions,
                seed::derive(cfg.seed, "gen-split"),
            );
            save_enc_dataset(&ds, out)?;
        }
        GenKind::RankLabel => {
            let mut ds = make_rank_label_dataset(&h, cfg.seed)?;
            ds.splits = crate::encpipe::split_edges(
                ds.hypergraph.edge_count(),
                proportions,
                seed::derive(cfg.seed, "gen-split"),
            );
            save_enc_dataset(&ds, out)?;
        }
        GenKind::Semisynthetic => {
            let idx = build_pair_index(&h);
            let samples = generate_semisynthetic(
                &h,
                &idx,
                cfg.reg,
                cfg.samples,
                seed::derive(cfg.seed, "semisynthetic"),
            )?;
            write_hypergraph(&h, &out.join("edges.txt"))?;
            let samples_dir = out.join("samples");
            fs::create_dir_all(&samples_dir)?;
            for (i, sample) in samples.iter().enumerate() {
                let mut csv = String::from("pair_id,h0,h2\n");
                for p in 0..idx.pair_count() {
                    csv.push_str(&format!("{p},{},{}\n", sample.h0[[p, 0]], sample.h2[[p, 0]]));
                }
                fs::write(samples_dir.join(format!("sample_{i:03}.csv")), csv)?;
            }
            // Sample-level split with the same floor rule as edge splits.
            let split_assign = crate::encpipe::split_edges(
                samples.len(),
                proportions,
                seed::derive(cfg.seed, "sample-split"),
            );
            let mut csv = String::from("sample_id,split\n");
            for (i, s) in split_assign.iter().enumerate() {
                csv.push_str(&format!("{i},{}\n", s.as_str()));
            }
            fs::write(out.join("sample_splits.csv"), csv)?;
        }
    }
    Ok(())
}

pub fn cmd_train(cfg: &TrainCmdConfig, out: &Path) -> Result<(), CliError> {
    let dataset = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Config("train requires `dataset`".into()))?;
    let ds = load_enc_dataset(dataset)?;
    let result = train(&ds, &cfg.model, &cfg.train)?;
    save_checkpoint(&result.model, &out.join("checkpoint.ckpt"))?;
    write_log_csv(&result.log, &out.join("train_log.csv"))?;

    let mut metrics = serde_json::Map::new();
    for split in [Split::Val, Split::Test] {
        if !ds.edges_in(split).is_empty() {
            let report = evaluate(&ds, &result.model, split)?;
            metrics.insert(
                split.as_str().to_string(),
                serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
            );
        }
    }
    metrics.insert("best_epoch".into(), result.best_epoch.into());
    write_json(&serde_json::Value::Object(metrics), &out.join("metrics.json"))?;
    Ok(())
}

pub fn cmd_eval(cfg: &EvalConfig, out: &Path) -> Result<(), CliError> {
    let dataset = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Config("eval requires `dataset`".into()))?;
    let checkpoint = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("eval requires `checkpoint`".into()))?;
    let ds = load_enc_dataset(dataset)?;
    let model = load_checkpoint(checkpoint)?;
    let report = evaluate(&ds, &model, cfg.split)?;
    write_json(&report, &out.join("metrics.json"))?;
    Ok(())
}

pub fn cmd_approx(cfg: &ApproxConfig, out: &Path) -> Result<(), CliError> {
    let (h, _) = cfg.graph.load(cfg.train.seed)?;
    let idx = build_pair_index(&h);
    let samples = generate_semisynthetic(
        &h,
        &idx,
        cfg.kind,
        cfg.samples,
        seed::derive(cfg.train.seed, "semisynthetic"),
    )?;
    let report = approx_experiment_on(&h, &idx, cfg.kind, &samples, &cfg.model, &cfg.train)?;
    write_log_csv(&report.log, &out.join("train_log.csv"))?;
    write_json(&report, &out.join("approx_report.json"))?;
    Ok(())
}

pub fn cmd_bench(cfg: &BenchConfig, out: &Path) -> Result<(), CliError> {
    let report = scaling_bench(
        cfg.base_n,
        cfg.base_m,
        cfg.doublings,
        &cfg.model,
        cfg.repeats,
        cfg.seed,
    )?;
    let mut csv = String::from("size,wall_time\n");
    for p in &report.points {
        csv.push_str(&format!("{},{}\n", p.size, p.wall_time));
    }
    fs::write(out.join("bench.csv"), csv)?;
    write_json(&report, &out.join("bench_report.json"))?;
    Ok(())
}

pub fn cmd_check(cfg: &CheckConfig, out: &Path) -> Result<(), CliError> {
    let report = run_all(cfg.seed);
    write_json(&report, &out.join("check_report.json"))?;
    for item in &report.items {
        println!(
            "{} {} (max deviation {:.3e}, tolerance {:.3e})",
            if item.passed { "PASS" } else { "FAIL" },
            item.name,
            item.max_deviation,
            item.tolerance
        );
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .items
            .iter()
            .filter(|i| !i.passed)
            .map(|i| i.name.as_str())
            .collect();
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}
