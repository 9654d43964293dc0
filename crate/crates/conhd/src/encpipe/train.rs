//! Training and evaluation loops.
//!
//! Training iterates shuffled batches of whole edges (every pair of an edge
//! travels with it), applies seeded dropout, and early-stops on validation
//! micro-F1. Evaluation and embedding export run one deterministic
//! full-graph forward pass in eval mode.

use std::fs;
use std::path::Path;
use std::rc::Rc;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::diffusion::{generate_semisynthetic, SemiSample};
use crate::encpipe::{classification_metrics, sample_batch, EncDataset, MetricsReport, PipelineError, Split};
use crate::hypergraph::{Hypergraph, PairIndex};
use crate::neural::losses::{argmax_rows, cross_entropy_loss, mae, mae_loss};
use crate::neural::{Adam, ConhdModel, ModelConfig, Phase};
use crate::regularizers::RegularizerKind;
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Target edges per training batch.
    pub batch_edges: usize,
    /// Early stopping patience (epochs without improvement).
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, epochs: 100, batch_edges: 64, patience: 10, min_delta: 1e-4, seed: 0 }
    }
}

/// One training-log record; unset metric columns stay empty in the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub split: String,
    pub loss: Option<f64>,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub mae: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub model: ConhdModel,
    pub log: Vec<LogRow>,
    pub best_epoch: usize,
    pub best_val_micro_f1: f64,
}

fn shuffled<T: Copy>(items: &[T], rng: &mut rand_chacha::ChaCha12Rng) -> Vec<T> {
    use rand::Rng;
    let mut out = items.to_vec();
    for i in (1..out.len()).rev() {
        out.swap(i, rng.random_range(0..=i));
    }
    out
}

/// Train a model on the dataset's train split with early stopping on
/// validation micro-F1; returns the best-validation parameters.
pub fn train(
    ds: &EncDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutput, PipelineError> {
    let train_edges = ds.edges_in(Split::Train);
    if train_edges.is_empty() {
        return Err(PipelineError::EmptySplit("train".into()));
    }
    let has_val = !ds.edges_in(Split::Val).is_empty();

    let mut model = ConhdModel::new(
        model_cfg.clone(),
        ds.feature_width(),
        ds.num_classes,
        seed::derive(cfg.seed, "model-init"),
    )?;
    let mut adam = Adam::new(cfg.lr);
    let mut shuffle_rng = seed::rng_for(cfg.seed, "train-shuffle");
    let mut batch_rng = seed::rng_for(cfg.seed, "train-batch");
    let mut dropout_rng = seed::rng_for(cfg.seed, "train-dropout");

    let mut log = Vec::new();
    let mut best_params = model.params.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        let order = shuffled(&train_edges, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in order.chunks(cfg.batch_edges.max(1)) {
            let batch = sample_batch(ds, chunk, model_cfg.neighbor_sample, &mut batch_rng)?;
            let mut phase = Phase::Train { rng: &mut dropout_rng };
            let (mut tape, emb) =
                model.forward(&batch.sub, &batch.sub_idx, &batch.x0.view(), &mut phase)?;
            let logits = model.head(&mut tape, emb)?;
            let picked = tape
                .gather_rows(logits, Rc::new(batch.target_pairs.clone()))
                .map_err(crate::neural::ModelError::from)?;
            let loss = cross_entropy_loss(&mut tape, picked, &batch.labels)?;
            loss_sum += tape.value(loss)[[0, 0]] * batch.labels.len() as f64;
            loss_count += batch.labels.len();
            let grads = tape.backward(loss).map_err(crate::neural::ModelError::from)?;
            model.params.zero_grads();
            model.params.accumulate(&grads)?;
            adam.step(&mut model.params);
        }
        let train_loss = loss_sum / loss_count.max(1) as f64;
        log.push(LogRow {
            epoch,
            split: "train".into(),
            loss: Some(train_loss),
            micro_f1: None,
            macro_f1: None,
            mae: None,
        });

        if has_val {
            let val = evaluate(ds, &model, Split::Val)?;
            log.push(LogRow {
                epoch,
                split: "val".into(),
                loss: None,
                micro_f1: Some(val.micro_f1),
                macro_f1: Some(val.macro_f1),
                mae: None,
            });
            if val.micro_f1 > best_val + cfg.min_delta {
                best_val = val.micro_f1;
                best_params = model.params.clone();
                best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale > cfg.patience {
                    break;
                }
            }
        } else {
            best_params = model.params.clone();
            best_epoch = epoch;
        }
    }
    model.params = best_params;
    Ok(TrainOutput { model, log, best_epoch, best_val_micro_f1: best_val })
}

/// Evaluate a model on one split with a deterministic full-graph forward.
pub fn evaluate(
    ds: &EncDataset,
    model: &ConhdModel,
    split: Split,
) -> Result<MetricsReport, PipelineError> {
    let pairs = ds.pairs_in(split);
    if pairs.is_empty() {
        return Err(PipelineError::EmptySplit(split.as_str().into()));
    }
    let outputs = model.predict(&ds.hypergraph, &ds.pair_index, &ds.x0.view())?;
    let all_preds = argmax_rows(&outputs.view());
    let preds: Vec<usize> = pairs.iter().map(|&p| all_preds[p]).collect();
    let labels: Vec<usize> = pairs.iter().map(|&p| ds.labels[p]).collect();
    classification_metrics(&preds, &labels, ds.num_classes)
}

/// Write the training log as CSV.
pub fn write_log_csv(log: &[LogRow], path: &Path) -> Result<(), PipelineError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in log {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Export embeddings as CSV rows `(node_id, edge_id, label, h_1..h_d)`,
/// optionally filtered by node and/or edge ids. Returns the number of data
/// rows written (the header is always written).
pub fn export_embeddings(
    ds: &EncDataset,
    model: &ConhdModel,
    node_filter: Option<&[usize]>,
    edge_filter: Option<&[usize]>,
    path: &Path,
) -> Result<usize, PipelineError> {
    let emb = model.embeddings(&ds.hypergraph, &ds.pair_index, &ds.x0.view())?;
    let d = emb.ncols();
    let mut out = String::from("node_id,edge_id,label");
    for c in 1..=d {
        out.push_str(&format!(",h_{c}"));
    }
    out.push('\n');
    let keep = |set: Option<&[usize]>, x: usize| set.is_none_or(|s| s.contains(&x));
    let mut rows = 0;
    for p in 0..ds.pair_index.pair_count() {
        let (v, e) = (ds.pair_index.node_of(p), ds.pair_index.edge_of(p));
        if !keep(node_filter, v) || !keep(edge_filter, e) {
            continue;
        }
        out.push_str(&format!("{v},{e},{}", ds.labels[p]));
        for c in 0..d {
            out.push_str(&format!(",{}", emb[[p, c]]));
        }
        out.push('\n');
        rows += 1;
    }
    fs::write(path, out)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxReport {
    pub kind: RegularizerKind,
    pub samples: usize,
    pub model_mae: f64,
    /// MAE of predicting H2 := H0.
    pub identity_baseline_mae: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Per-epoch validation MAE log.
    #[serde(skip)]
    pub log: Vec<LogRow>,
}

/// Diffusion-approximation experiment: generate (H0, H2) samples, train a
/// model with MAE loss to map H0 to H2, and report test MAE next to the
/// identity baseline. Samples are split 60/20/20 into train/val/test.
pub fn approx_experiment(
    h: &Hypergraph,
    idx: &PairIndex,
    kind: RegularizerKind,
    samples: usize,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<ApproxReport, PipelineError> {
    let data = generate_semisynthetic(h, idx, kind, samples, seed::derive(cfg.seed, "semisynthetic"))?;
    approx_experiment_on(h, idx, kind, &data, model_cfg, cfg)
}

/// As [`approx_experiment`], but on pre-generated samples.
pub fn approx_experiment_on(
    h: &Hypergraph,
    idx: &PairIndex,
    kind: RegularizerKind,
    data: &[SemiSample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<ApproxReport, PipelineError> {
    if data.len() < 5 {
        return Err(PipelineError::Validation(format!(
            "need at least 5 samples, got {}",
            data.len()
        )));
    }
    let n_val = data.len() / 5;
    let n_test = data.len() / 5;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut split_rng = seed::rng_for(cfg.seed, "approx-split");
    order = shuffled(&order, &mut split_rng);
    let (test_ids, rest) = order.split_at(n_test);
    let (val_ids, train_ids) = rest.split_at(n_val);

    let mut model = ConhdModel::new(
        model_cfg.clone(),
        1,
        1,
        seed::derive(cfg.seed, "approx-model-init"),
    )?;
    let mut adam = Adam::new(cfg.lr);
    let mut shuffle_rng = seed::rng_for(cfg.seed, "approx-shuffle");
    let mut dropout_rng = seed::rng_for(cfg.seed, "approx-dropout");

    let forward_mae = |model: &ConhdModel, ids: &[usize]| -> Result<f64, PipelineError> {
        let mut total = 0.0;
        for &i in ids {
            let x0 = data[i].features.view().insert_axis(ndarray::Axis(1));
            let pred = model.predict(h, idx, &x0)?;
            total += mae(&pred.view(), &data[i].h2.view());
        }
        Ok(total / ids.len() as f64)
    };

    let mut best_params = model.params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0usize;
    let mut epochs_run = 0;
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        for &i in &shuffled(train_ids, &mut shuffle_rng) {
            let x0 = data[i].features.view().insert_axis(ndarray::Axis(1));
            let mut phase = Phase::Train { rng: &mut dropout_rng };
            let (mut tape, emb) = model.forward(h, idx, &x0, &mut phase)?;
            let pred = model.head(&mut tape, emb)?;
            let loss = mae_loss(&mut tape, pred, &data[i].h2.view())?;
            let grads = tape.backward(loss).map_err(crate::neural::ModelError::from)?;
            model.params.zero_grads();
            model.params.accumulate(&grads)?;
            adam.step(&mut model.params);
        }
        let val = forward_mae(&model, val_ids)?;
        log.push(LogRow {
            epoch,
            split: "val".into(),
            loss: None,
            micro_f1: None,
            macro_f1: None,
            mae: Some(val),
        });
        if val < best_val - cfg.min_delta {
            best_val = val;
            best_params = model.params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                break;
            }
        }
    }
    model.params = best_params;

    let model_mae = forward_mae(&model, test_ids)?;
    let identity: f64 = test_ids
        .iter()
        .map(|&i| mae(&data[i].h0.view(), &data[i].h2.view()))
        .sum::<f64>()
        / test_ids.len() as f64;
    Ok(ApproxReport {
        kind,
        samples: data.len(),
        model_mae,
        identity_baseline_mae: identity,
        best_epoch,
        epochs_run,
        log,
    })
}

/// MAE of a fixed prediction matrix against per-pair targets; used by tests
/// and the CLI for regression-style reports.
pub fn regression_mae(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> f64 {
    mae(pred, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encpipe::make_rank_label_dataset;
    use crate::hypergraph::{build_pair_index, random_hypergraph, DegreeLaw};
    use crate::neural::{MethodForm, OperatorKind};
    use ndarray::Array2;

    fn small_model_cfg() -> ModelConfig {
        ModelConfig {
            operator: OperatorKind::Unb,
            d: 8,
            layers: 2,
            share_weights: true,
            method: MethodForm::Gd,
            dropout_rate: 0.0,
            neighbor_sample: 40,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let h = random_hypergraph(15, 12, DegreeLaw::Uniform { lo: 2, hi: 4 }, 1).unwrap();
        let ds = make_rank_label_dataset(&h, 3).unwrap();
        let cfg = TrainConfig { lr: 0.0, epochs: 3, patience: 10, ..TrainConfig::default() };
        let out = train(&ds, &small_model_cfg(), &cfg).unwrap();
        let reference = ConhdModel::new(
            small_model_cfg(),
            ds.feature_width(),
            ds.num_classes,
            seed::derive(cfg.seed, "model-init"),
        )
        .unwrap();
        for name in reference.params.names() {
            assert_eq!(out.model.params.value(name), reference.params.value(name), "{name}");
        }
        // Train loss is constant across epochs.
        let losses: Vec<f64> = out
            .log
            .iter()
            .filter(|r| r.split == "train")
            .map(|r| r.loss.unwrap())
            .collect();
        assert!(losses.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn seeded_training_runs_are_identical() {
        let h = random_hypergraph(15, 12, DegreeLaw::Uniform { lo: 2, hi: 4 }, 2).unwrap();
        let ds = make_rank_label_dataset(&h, 4).unwrap();
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let a = train(&ds, &small_model_cfg(), &cfg).unwrap();
        let b = train(&ds, &small_model_cfg(), &cfg).unwrap();
        assert_eq!(a.log.len(), b.log.len());
        for (x, y) in a.log.iter().zip(b.log.iter()) {
            assert_eq!(x.loss, y.loss);
            assert_eq!(x.micro_f1, y.micro_f1);
        }
        for name in a.model.params.names() {
            assert_eq!(a.model.params.value(name), b.model.params.value(name));
        }
    }

    #[test]
    fn training_learns_the_rank_task_better_than_chance() {
        let h = random_hypergraph(30, 40, DegreeLaw::Uniform { lo: 3, hi: 5 }, 5).unwrap();
        let ds = make_rank_label_dataset(&h, 6).unwrap();
        let cfg = TrainConfig { epochs: 40, patience: 40, batch_edges: 16, ..TrainConfig::default() };
        let out = train(&ds, &small_model_cfg(), &cfg).unwrap();
        let test = evaluate(&ds, &out.model, Split::Test).unwrap();
        assert!(test.micro_f1 > 0.45, "micro-F1 {}", test.micro_f1);
    }

    #[test]
    fn evaluate_rejects_empty_splits() {
        let h = Hypergraph::new(3, vec![vec![0, 1, 2]]).unwrap();
        let ds = EncDataset::new(
            h,
            Array2::zeros((3, 1)),
            vec![0, 0, 0],
            1,
            vec![Split::Train],
        )
        .unwrap();
        let model = ConhdModel::new(small_model_cfg(), 1, 1, 0).unwrap();
        assert!(matches!(
            evaluate(&ds, &model, Split::Val),
            Err(PipelineError::EmptySplit(_))
        ));
    }

    #[test]
    fn export_embeddings_matches_forward_and_filters() {
        let h = random_hypergraph(10, 8, DegreeLaw::Uniform { lo: 2, hi: 3 }, 3).unwrap();
        let ds = make_rank_label_dataset(&h, 1).unwrap();
        let model =
            ConhdModel::new(small_model_cfg(), ds.feature_width(), ds.num_classes, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let rows = export_embeddings(&ds, &model, None, None, &path).unwrap();
        assert_eq!(rows, ds.pair_index.pair_count());

        let content = fs::read_to_string(&path).unwrap();
        let mut lines = content.lines();
        let header = lines.next().unwrap();
        assert_eq!(header.split(',').count(), model.config.d + 3);
        let emb = model.embeddings(&ds.hypergraph, &ds.pair_index, &ds.x0.view()).unwrap();
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        for c in 0..model.config.d {
            let got: f64 = first[3 + c].parse().unwrap();
            assert!((got - emb[[0, c]]).abs() < 1e-12);
        }

        // Filter by one node: row count equals its degree.
        let v = 0;
        let rows = export_embeddings(&ds, &model, Some(&[v]), None, &path).unwrap();
        assert_eq!(rows, ds.hypergraph.node_degree(v));

        // Filter that matches nothing: header-only file.
        let rows = export_embeddings(&ds, &model, Some(&[usize::MAX]), None, &path).unwrap();
        assert_eq!(rows, 0);
        let content = fs::read_to_string(&path).unwrap();
        assert_eq!(content.lines().count(), 1);
    }

    #[test]
    fn identity_initialized_model_matches_identity_baseline() {
        let h = random_hypergraph(12, 10, DegreeLaw::Uniform { lo: 2, hi: 4 }, 7).unwrap();
        let idx = build_pair_index(&h);
        let mut cfg = small_model_cfg();
        cfg.layers = 1;
        let mut model = ConhdModel::new(cfg.clone(), 1, 1, 3).unwrap();

        // Route the raw feature through every layer and the head unchanged
        // (relu(x) - relu(-x) = x).
        let d = cfg.d;
        let mut input_w = Array2::zeros((1, d));
        input_w[[0, 0]] = 1.0;
        model.params.set("input.w", input_w).unwrap();
        let mut psi_w = Array2::zeros((4 * d, d));
        for i in 0..d {
            psi_w[[i, i]] = 1.0;
        }
        model.params.set("shared.psi.w", psi_w).unwrap();
        let mut head_w0 = Array2::zeros((d, d));
        head_w0[[0, 0]] = 1.0;
        head_w0[[0, 1]] = -1.0;
        model.params.set("head.w0", head_w0).unwrap();
        let mut head_w1 = Array2::zeros((d, 1));
        head_w1[[0, 0]] = 1.0;
        head_w1[[1, 0]] = -1.0;
        model.params.set("head.w1", head_w1).unwrap();

        let data = generate_semisynthetic(&h, &idx, RegularizerKind::Ce, 10, 2).unwrap();
        let mut model_total = 0.0;
        let mut identity_total = 0.0;
        for sample in &data {
            let x0 = sample.features.view().insert_axis(ndarray::Axis(1));
            let pred = model.predict(&h, &idx, &x0).unwrap();
            model_total += mae(&pred.view(), &sample.h2.view());
            identity_total += mae(&sample.h0.view(), &sample.h2.view());
        }
        assert!(
            (model_total - identity_total).abs() < 1e-10,
            "model {model_total} vs identity {identity_total}"
        );
    }
}
