//! Forward+backward scaling benchmark over a doubling ladder of the total
//! pair count, with a fitted log-log growth exponent.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::encpipe::PipelineError;
use crate::hypergraph::{build_pair_index, random_hypergraph, DegreeLaw};
use crate::neural::losses::mae_loss;
use crate::neural::{ConhdModel, ModelConfig, Phase};
use crate::seed;

#[derive(Debug, Clone, Serialize)]
pub struct BenchPoint {
    /// Total pair count of this rung.
    pub size: usize,
    /// Median forward+backward wall time in seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log(time) against log(size).
    pub exponent: f64,
    /// Time ratios between consecutive rungs.
    pub ratios: Vec<f64>,
}

/// Time one forward+backward per rung of a doubling ladder (n and m both
/// double, so the expected pair count doubles) at fixed d and L.
pub fn scaling_bench(
    base_n: usize,
    base_m: usize,
    doublings: usize,
    model_cfg: &ModelConfig,
    repeats: usize,
    seed_value: u64,
) -> Result<BenchReport, PipelineError> {
    let mut points = Vec::with_capacity(doublings);
    for step in 0..doublings {
        let n = base_n << step;
        let m = base_m << step;
        let h = random_hypergraph(
            n,
            m,
            DegreeLaw::Uniform { lo: 2, hi: 6 },
            seed::derive(seed_value, &format!("bench-graph-{step}")),
        )?;
        let idx = build_pair_index(&h);
        let model = ConhdModel::new(
            model_cfg.clone(),
            1,
            1,
            seed::derive(seed_value, "bench-model"),
        )?;
        let mut rng = seed::rng_for(seed_value, &format!("bench-feat-{step}"));
        let x0 = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>() * 2.0 - 1.0);
        let target = Array2::zeros((idx.pair_count(), 1));

        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            let (mut tape, emb) = model.forward(&h, &idx, &x0.view(), &mut Phase::Eval)?;
            let pred = model.head(&mut tape, emb)?;
            let loss = mae_loss(&mut tape, pred, &target.view())?;
            let grads = tape.backward(loss).map_err(crate::neural::ModelError::from)?;
            times.push(start.elapsed().as_secs_f64());
            drop(grads);
        }
        times.sort_by(f64::total_cmp);
        points.push(BenchPoint { size: idx.pair_count(), wall_time: times[times.len() / 2] });
    }

    let exponent = fit_exponent(&points);
    let ratios = points
        .windows(2)
        .map(|w| w[1].wall_time / w[0].wall_time)
        .collect();
    Ok(BenchReport { points, exponent, ratios })
}

fn fit_exponent(points: &[BenchPoint]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| (p.size as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.wall_time.max(1e-12).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}
