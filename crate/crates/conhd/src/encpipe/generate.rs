//! Synthetic ENC dataset generators.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::encpipe::{EncDataset, PipelineError, Split};
use crate::hypergraph::Hypergraph;
use crate::seed;

/// Random edge-level split with the given proportions (train and val counts
/// are floored, the remainder goes to test).
pub fn split_edges(m: usize, proportions: (f64, f64, f64), seed_value: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = seed::rng_for(seed_value, "edge-split");
    shuffle(&mut order, &mut rng);
    let n_train = (m as f64 * proportions.0).floor() as usize;
    let n_val = (m as f64 * proportions.1).floor() as usize;
    let mut splits = vec![Split::Test; m];
    for (rank, &e) in order.iter().enumerate() {
        splits[e] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha12Rng) {
    for i in (1..items.len()).rev() {
        items.swap(i, rng.random_range(0..=i));
    }
}

/// Sample `k` distinct values from `0..n` (partial Fisher-Yates).
fn sample_without_replacement(n: usize, k: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Outsider-identification dataset. Edges with degree <= 3 are dropped;
/// each retained edge yields `variants` new edges in which floor(d_e / 2)
/// members are replaced by uniformly drawn non-member nodes. Labels are 1
/// for the replacements (outsiders) and 0 for kept members.
pub fn make_outsider_dataset(
    h: &Hypergraph,
    x0: &Array2<f64>,
    variants: usize,
    seed_value: u64,
) -> Result<EncDataset, PipelineError> {
    if variants < 1 {
        return Err(PipelineError::Validation("variants must be >= 1".into()));
    }
    if x0.nrows() != h.node_count() {
        return Err(PipelineError::Validation(format!(
            "features have {} rows for {} nodes",
            x0.nrows(),
            h.node_count()
        )));
    }
    let retained: Vec<usize> = (0..h.edge_count()).filter(|&e| h.edge_degree(e) > 3).collect();
    if retained.is_empty() {
        return Err(PipelineError::Validation(
            "no edges of degree > 3 to build outsider variants from".into(),
        ));
    }
    let mut rng = seed::rng_for(seed_value, "outsider");
    let n = h.node_count();
    let mut members = Vec::with_capacity(retained.len() * variants);
    let mut edge_labels: Vec<Vec<usize>> = Vec::with_capacity(retained.len() * variants);
    for &e in &retained {
        let original = h.members(e);
        let d_e = original.len();
        let replace = d_e / 2;
        let is_member = {
            let mut mask = vec![false; n];
            for &v in original {
                mask[v] = true;
            }
            mask
        };
        let pool: Vec<usize> = (0..n).filter(|&v| !is_member[v]).collect();
        if pool.len() < replace {
            return Err(PipelineError::NotEnoughOutsiders { edge: e, needed: replace });
        }
        for _ in 0..variants {
            let mut positions = sample_without_replacement(d_e, replace, &mut rng);
            positions.sort_unstable();
            let replacements = sample_without_replacement(pool.len(), replace, &mut rng);
            let mut edge = original.to_vec();
            let mut labels = vec![0usize; d_e];
            for (slot, &pos) in positions.iter().enumerate() {
                edge[pos] = pool[replacements[slot]];
                labels[pos] = 1;
            }
            members.push(edge);
            edge_labels.push(labels);
        }
    }
    let out = Hypergraph::new(n, members)?;
    let labels: Vec<usize> = edge_labels.into_iter().flatten().collect();
    let splits = split_edges(out.edge_count(), (0.6, 0.2, 0.2), seed::derive(seed_value, "outsider-split"));
    EncDataset::new(out, x0.clone(), labels, 2, splits)
}

const RANK_CODE_BLOCKS: usize = 8;

/// Injective block-permuted encoding of a latent score in [0, 1): the unit
/// interval is cut into blocks whose order is shuffled, so the code no
/// longer sorts like the score and ranking requires decoding.
fn encode_score(s: f64, perm: &[usize]) -> f64 {
    let b = RANK_CODE_BLOCKS as f64;
    let block = ((s * b) as usize).min(RANK_CODE_BLOCKS - 1);
    let frac = s * b - block as f64;
    (perm[block] as f64 + frac) / b
}

fn block_permutation(rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..RANK_CODE_BLOCKS).collect();
    shuffle(&mut perm, rng);
    perm
}

/// Rank-label dataset: each node gets a latent uniform score; the label of
/// a pair (v, e) is the tercile of v's score rank among the members of e
/// (ties broken by node id), C = 3. The 1-d node feature is an injective
/// but non-monotone encoding of the score, so ranks cannot be read off the
/// raw feature order.
pub fn make_rank_label_dataset(
    h: &Hypergraph,
    seed_value: u64,
) -> Result<EncDataset, PipelineError> {
    for e in 0..h.edge_count() {
        if h.edge_degree(e) < 2 {
            return Err(PipelineError::Validation(format!(
                "edge {e} has degree < 2; rank labels need at least two members"
            )));
        }
    }
    let mut rng = seed::rng_for(seed_value, "rank-label");
    let latent = Array1::from_shape_fn(h.node_count(), |_| rng.random::<f64>());
    let perm = block_permutation(&mut rng);
    let x0 = Array2::from_shape_fn((h.node_count(), 1), |(v, _)| encode_score(latent[v], &perm));

    let mut labels = Vec::with_capacity(h.pair_count());
    for e in 0..h.edge_count() {
        let mem = h.members(e);
        let d_e = mem.len();
        let mut order: Vec<usize> = (0..d_e).collect();
        order.sort_by(|&i, &j| latent[mem[i]].total_cmp(&latent[mem[j]]).then(mem[i].cmp(&mem[j])));
        let mut rank_of = vec![0usize; d_e];
        for (rank, &pos) in order.iter().enumerate() {
            rank_of[pos] = rank;
        }
        labels.extend(rank_of.into_iter().map(|r| r * 3 / d_e));
    }
    let splits = split_edges(h.edge_count(), (0.6, 0.2, 0.2), seed::derive(seed_value, "rank-split"));
    EncDataset::new(h.clone(), x0, labels, 3, splits)
}
