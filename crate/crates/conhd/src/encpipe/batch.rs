//! Mini-batch construction from direct neighbors.
//!
//! A batch is built from a list of target edges: it contains every member
//! pair of those edges plus, for each member node, up to `neighbor_sample`
//! of its incident edges (uniform without replacement). Included edges
//! always come with their complete member list; only the node side is
//! sampled.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::encpipe::{EncDataset, PipelineError};
use crate::hypergraph::{build_pair_index, Hypergraph, PairIndex};

#[derive(Debug)]
pub struct Batch {
    pub sub: Hypergraph,
    pub sub_idx: PairIndex,
    /// Features of the batch nodes (rows follow the batch node ids).
    pub x0: Array2<f64>,
    /// Batch node id -> original node id.
    pub node_map: Vec<usize>,
    /// Batch edge id -> original edge id.
    pub edge_map: Vec<usize>,
    /// Pair ids (in the batch index) of the target edges' pairs.
    pub target_pairs: Vec<usize>,
    /// Labels aligned with `target_pairs`.
    pub labels: Vec<usize>,
}

/// Build the direct-neighbor subgraph for the given target edges.
pub fn sample_batch(
    ds: &EncDataset,
    edge_ids: &[usize],
    neighbor_sample: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Batch, PipelineError> {
    if edge_ids.is_empty() {
        return Err(PipelineError::EmptyBatch);
    }
    let h = &ds.hypergraph;
    for &e in edge_ids {
        if e >= h.edge_count() {
            return Err(PipelineError::Validation(format!("edge {e} out of range")));
        }
    }

    let mut edge_list: Vec<usize> = Vec::new();
    let mut edge_seen: HashMap<usize, usize> = HashMap::new();
    let push_edge = |e: usize, list: &mut Vec<usize>, seen: &mut HashMap<usize, usize>| {
        if !seen.contains_key(&e) {
            let id = list.len();
            list.push(e);
            seen.insert(e, id);
        }
    };
    for &e in edge_ids {
        push_edge(e, &mut edge_list, &mut edge_seen);
    }
    let n_targets = edge_list.len();

    // Sample incident edges of every member node of the targets.
    for t in 0..n_targets {
        let e = edge_list[t];
        for &v in h.members(e) {
            let incident = h.incident(v);
            if incident.len() <= neighbor_sample {
                for &ne in incident {
                    push_edge(ne, &mut edge_list, &mut edge_seen);
                }
            } else {
                let mut pool: Vec<usize> = incident.to_vec();
                for i in 0..neighbor_sample {
                    let j = rng.random_range(i..pool.len());
                    pool.swap(i, j);
                }
                for &ne in &pool[..neighbor_sample] {
                    push_edge(ne, &mut edge_list, &mut edge_seen);
                }
            }
        }
    }

    // Dense node ids in first-encounter order over the included edges.
    let mut node_map: Vec<usize> = Vec::new();
    let mut node_seen: HashMap<usize, usize> = HashMap::new();
    let mut members = Vec::with_capacity(edge_list.len());
    for &e in &edge_list {
        let remapped: Vec<usize> = h
            .members(e)
            .iter()
            .map(|&v| {
                *node_seen.entry(v).or_insert_with(|| {
                    node_map.push(v);
                    node_map.len() - 1
                })
            })
            .collect();
        members.push(remapped);
    }
    let sub = Hypergraph::new(node_map.len(), members)?;
    let sub_idx = build_pair_index(&sub);

    let mut x0 = Array2::zeros((node_map.len(), ds.feature_width()));
    for (b, &orig) in node_map.iter().enumerate() {
        x0.row_mut(b).assign(&ds.x0.row(orig));
    }

    let mut target_pairs = Vec::new();
    let mut labels = Vec::new();
    for t in 0..n_targets {
        let orig_e = edge_list[t];
        for (&p, &orig_v) in sub_idx.edge_slice(t).iter().zip(h.members(orig_e)) {
            target_pairs.push(p);
            let orig_pair = ds
                .pair_index
                .pair_id(orig_v, orig_e)
                .expect("member pair exists in the original index");
            labels.push(ds.labels[orig_pair]);
        }
    }

    Ok(Batch { sub, sub_idx, x0, node_map, edge_map: edge_list, target_pairs, labels })
}
