//! Edge-dependent node classification pipeline: dataset schema and I/O,
//! edge-level splits, mini-batch neighbor sampling, training/evaluation,
//! metrics, and synthetic dataset generators.
//!
//! Dataset directory layout:
//! - `edges.txt`    hypergraph text format (one edge per line)
//! - `features.csv` header `node_id,f0,...`; one row per node
//! - `labels.csv`   header `node_id,edge_id,label`; one row per pair
//! - `splits.csv`   header `edge_id,split` with split in {train,val,test}
//!
//! Edge ids are the zero-based index of the edge's line in `edges.txt`
//! (comment lines excluded); node ids are densified by the hypergraph
//! loader and features/labels are remapped the same way.

pub mod batch;
pub mod generate;
pub mod metrics;
pub mod train;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::DiffusionError;
use crate::hypergraph::{
    build_pair_index, load_hypergraph, write_hypergraph, Hypergraph, HypergraphError, PairIndex,
};
use crate::neural::ModelError;

pub use batch::{sample_batch, Batch};
pub use generate::{make_outsider_dataset, make_rank_label_dataset, split_edges};
pub use metrics::{classification_metrics, MetricsReport};
pub use train::{
    approx_experiment, approx_experiment_on, evaluate, export_embeddings, train, write_log_csv,
    ApproxReport, LogRow, TrainConfig, TrainOutput,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset validation failed: {0}")]
    Validation(String),
    #[error("missing label for pair (node {node}, edge {edge})")]
    MissingLabel { node: usize, edge: usize },
    #[error("edge {edge} appears in more than one split")]
    SplitConflict { edge: usize },
    #[error("split {0:?} contains no edges")]
    EmptySplit(String),
    #[error("batch edge list is empty")]
    EmptyBatch,
    #[error("not enough non-member nodes to replace {needed} of edge {edge}")]
    NotEnoughOutsiders { edge: usize, needed: usize },
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A labeled hypergraph with node features and an edge-level split.
#[derive(Debug, Clone)]
pub struct EncDataset {
    pub hypergraph: Hypergraph,
    pub pair_index: PairIndex,
    /// n x f node features.
    pub x0: Array2<f64>,
    /// One class label per pair id.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// One split per edge id; pairs inherit their edge's split.
    pub splits: Vec<Split>,
}

impl EncDataset {
    pub fn new(
        hypergraph: Hypergraph,
        x0: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        splits: Vec<Split>,
    ) -> Result<Self, PipelineError> {
        let pair_index = build_pair_index(&hypergraph);
        if x0.nrows() != hypergraph.node_count() {
            return Err(PipelineError::Validation(format!(
                "features have {} rows for {} nodes",
                x0.nrows(),
                hypergraph.node_count()
            )));
        }
        if labels.len() != pair_index.pair_count() {
            return Err(PipelineError::Validation(format!(
                "{} labels for {} pairs",
                labels.len(),
                pair_index.pair_count()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(PipelineError::Validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if splits.len() != hypergraph.edge_count() {
            return Err(PipelineError::Validation(format!(
                "{} split entries for {} edges",
                splits.len(),
                hypergraph.edge_count()
            )));
        }
        Ok(Self { hypergraph, pair_index, x0, labels, num_classes, splits })
    }

    pub fn feature_width(&self) -> usize {
        self.x0.ncols()
    }

    pub fn edges_in(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter_map(|(e, &s)| (s == split).then_some(e))
            .collect()
    }

    /// Pair ids belonging to the edges of one split.
    pub fn pairs_in(&self, split: Split) -> Vec<usize> {
        self.edges_in(split)
            .into_iter()
            .flat_map(|e| self.pair_index.edge_slice(e).iter().copied())
            .collect()
    }
}

/// Load and validate a dataset directory.
pub fn load_enc_dataset(dir: &Path) -> Result<EncDataset, PipelineError> {
    let (h, remap) = load_hypergraph(&dir.join("edges.txt"))?;
    let to_dense: HashMap<u64, usize> = remap.iter().map(|&(o, d)| (o, d)).collect();
    let idx = build_pair_index(&h);

    // features.csv
    let mut reader = csv::Reader::from_path(dir.join("features.csv"))?;
    let width = reader.headers()?.len().saturating_sub(1);
    if width == 0 {
        return Err(PipelineError::Validation("features.csv has no feature columns".into()));
    }
    let mut x0 = Array2::zeros((h.node_count(), width));
    let mut seen = vec![false; h.node_count()];
    for record in reader.records() {
        let record = record?;
        let raw: u64 = parse_field(&record, 0, "features.csv node_id")?;
        let Some(&v) = to_dense.get(&raw) else {
            // Features for nodes outside every edge are allowed but ignored.
            continue;
        };
        if record.len() != width + 1 {
            return Err(PipelineError::Validation(format!(
                "features.csv row for node {raw} has {} fields, expected {}",
                record.len(),
                width + 1
            )));
        }
        for c in 0..width {
            x0[[v, c]] = parse_field(&record, c + 1, "features.csv value")?;
        }
        seen[v] = true;
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(PipelineError::Validation(format!("features.csv misses node {v}")));
    }

    // labels.csv
    let mut reader = csv::Reader::from_path(dir.join("labels.csv"))?;
    let mut labels: Vec<Option<usize>> = vec![None; idx.pair_count()];
    let mut max_label = 0usize;
    for record in reader.records() {
        let record = record?;
        let raw_node: u64 = parse_field(&record, 0, "labels.csv node_id")?;
        let edge: usize = parse_field(&record, 1, "labels.csv edge_id")?;
        let label: usize = parse_field(&record, 2, "labels.csv label")?;
        let Some(&node) = to_dense.get(&raw_node) else {
            return Err(PipelineError::Validation(format!(
                "labels.csv references unknown node {raw_node}"
            )));
        };
        let Some(pair) = (edge < h.edge_count()).then(|| idx.pair_id(node, edge)).flatten() else {
            return Err(PipelineError::Validation(format!(
                "labels.csv references non-member pair (node {raw_node}, edge {edge})"
            )));
        };
        if labels[pair].is_some() {
            return Err(PipelineError::Validation(format!(
                "duplicate label for pair (node {raw_node}, edge {edge})"
            )));
        }
        labels[pair] = Some(label);
        max_label = max_label.max(label);
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .enumerate()
        .map(|(p, l)| {
            l.ok_or(PipelineError::MissingLabel { node: idx.node_of(p), edge: idx.edge_of(p) })
        })
        .collect::<Result<_, _>>()?;

    // splits.csv
    let mut reader = csv::Reader::from_path(dir.join("splits.csv"))?;
    let mut splits: Vec<Option<Split>> = vec![None; h.edge_count()];
    for record in reader.records() {
        let record = record?;
        let edge: usize = parse_field(&record, 0, "splits.csv edge_id")?;
        if edge >= h.edge_count() {
            return Err(PipelineError::Validation(format!(
                "splits.csv references unknown edge {edge}"
            )));
        }
        let split = Split::parse(record.get(1).unwrap_or("")).ok_or_else(|| {
            PipelineError::Validation(format!(
                "splits.csv has invalid split {:?} for edge {edge}",
                record.get(1).unwrap_or("")
            ))
        })?;
        if splits[edge].is_some() {
            return Err(PipelineError::SplitConflict { edge });
        }
        splits[edge] = Some(split);
    }
    let splits: Vec<Split> = splits
        .into_iter()
        .enumerate()
        .map(|(e, s)| {
            s.ok_or_else(|| PipelineError::Validation(format!("splits.csv misses edge {e}")))
        })
        .collect::<Result<_, _>>()?;

    EncDataset::new(h, x0, labels, max_label + 1, splits)
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    what: &str,
) -> Result<T, PipelineError> {
    record
        .get(i)
        .ok_or_else(|| PipelineError::Validation(format!("{what}: missing field {i}")))?
        .trim()
        .parse()
        .map_err(|_| {
            PipelineError::Validation(format!(
                "{what}: cannot parse {:?}",
                record.get(i).unwrap_or("")
            ))
        })
}

/// Write a dataset directory in the schema documented on this module.
pub fn save_enc_dataset(ds: &EncDataset, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    write_hypergraph(&ds.hypergraph, &dir.join("edges.txt"))?;

    let width = ds.feature_width();
    let mut out = String::from("node_id");
    for c in 0..width {
        out.push_str(&format!(",f{c}"));
    }
    out.push('\n');
    for v in 0..ds.hypergraph.node_count() {
        out.push_str(&v.to_string());
        for c in 0..width {
            out.push_str(&format!(",{}", ds.x0[[v, c]]));
        }
        out.push('\n');
    }
    fs::write(dir.join("features.csv"), out)?;

    let mut out = String::from("node_id,edge_id,label\n");
    for p in 0..ds.pair_index.pair_count() {
        out.push_str(&format!(
            "{},{},{}\n",
            ds.pair_index.node_of(p),
            ds.pair_index.edge_of(p),
            ds.labels[p]
        ));
    }
    fs::write(dir.join("labels.csv"), out)?;

    let mut out = String::from("edge_id,split\n");
    for (e, split) in ds.splits.iter().enumerate() {
        out.push_str(&format!("{e},{}\n", split.as_str()));
    }
    fs::write(dir.join("splits.csv"), out)?;
    Ok(())
}
