//! Structural regularizers on stacks of co-representations, their gradients
//! and proximity operators, plus the non-structural squared-loss prox and a
//! brute-force oracle used to validate the prox implementations.
//!
//! A "stack" is a `rows x cols` matrix whose rows are the co-representations
//! sharing one edge or one node. Values are permutation invariant in the
//! rows; gradients and proxes are permutation equivariant. Vector features
//! are handled coordinate-wise for TV2/LEC2.
//!
//! Adopted forms (applied per column):
//! - CE: sum over ordered row pairs (i, j) of ||row_i - row_j||^2,
//! - TV2: squared range (max - min)^2,
//! - LEC2: squared Lovasz extension of the cardinality weights
//!   w(i) = min(i, rows - i) evaluated on the sorted column.
//!
//! Both TV2 and LEC2 are squared Lovasz extensions of concave cardinality
//! weights (TV2 uses w(i) = 1), so one prox routine covers both: the prox of
//! `s * L(x)^2` is `prox_{tau L}(y)` at the unique `tau >= 0` satisfying
//! `tau = 2 s L(prox_{tau L}(y))`, and `prox_{tau L}` reduces to isotonic
//! regression of `sorted(y) - tau * a` where `a` telescopes the weights.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegError {
    #[error("input contains a non-finite entry")]
    NonFinite,
    #[error("prox scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{kind:?} is not handled by this operation")]
    UnsupportedKind { kind: RegularizerKind },
    #[error("oracle size limit exceeded: {rows} rows x {cols} cols (max 6 x 2)")]
    SizeLimit { rows: usize, cols: usize },
    #[error("prox did not converge within {max_iter} iterations (residual {residual:.3e})")]
    Convergence { max_iter: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    Ce,
    Tv2,
    Lec2,
}

/// Which structure a regularizer applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Edge,
    Node,
}

/// A structural regularizer with its side and weight (lambda for the edge
/// side, gamma for the node side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub side: Side,
    pub weight: f64,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, side: Side, weight: f64) -> Result<Self, RegError> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(RegError::InvalidScale(weight));
        }
        Ok(Self { kind, side, weight })
    }
}

fn check_finite(s: &ArrayView2<f64>) -> Result<(), RegError> {
    if s.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(RegError::NonFinite)
    }
}

/// Regularizer value dispatch.
pub fn reg_value(kind: RegularizerKind, s: &ArrayView2<f64>) -> Result<f64, RegError> {
    match kind {
        RegularizerKind::Ce => ce_value(s),
        RegularizerKind::Tv2 => tv2_value(s),
        RegularizerKind::Lec2 => lec2_value(s),
    }
}

/// Clique-expansion value: sum over ordered row pairs of the squared
/// distance. Computed literally so that equal rows give exactly zero.
pub fn ce_value(s: &ArrayView2<f64>) -> Result<f64, RegError> {
    check_finite(s)?;
    let n = s.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = s
                .row(i)
                .iter()
                .zip(s.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += 2.0 * d2;
        }
    }
    Ok(total)
}

/// Gradient of [`ce_value`]: row v maps to `4 * rows * (row_v - row_mean)`,
/// accumulated as pairwise differences so equal rows give exactly zero.
pub fn ce_gradient(s: &ArrayView2<f64>) -> Result<Array2<f64>, RegError> {
    check_finite(s)?;
    let (n, d) = s.dim();
    let mut g = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for k in 0..d {
                g[[i, k]] += 4.0 * (s[[i, k]] - s[[j, k]]);
            }
        }
    }
    Ok(g)
}

/// Closed-form prox of `s * ce_value` at `y`:
/// `x_v = (y_v + 4 s rows ybar) / (1 + 4 s rows)` with `ybar` the column
/// mean. Preserves column means.
pub fn ce_prox(y: &ArrayView2<f64>, s: f64) -> Result<Array2<f64>, RegError> {
    check_finite(y)?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(RegError::InvalidScale(s));
    }
    let n = y.nrows() as f64;
    let mean = y.mean_axis(Axis(0)).expect("rows >= 1");
    let denom = 1.0 + 4.0 * s * n;
    let mut x = y.to_owned();
    for mut row in x.rows_mut() {
        for (v, &m) in row.iter_mut().zip(mean.iter()) {
            *v = (*v + 4.0 * s * n * m) / denom;
        }
    }
    Ok(x)
}

/// Total variation (p=2) value: per column, the squared range.
pub fn tv2_value(s: &ArrayView2<f64>) -> Result<f64, RegError> {
    check_finite(s)?;
    let mut total = 0.0;
    for col in s.columns() {
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        total += (max - min) * (max - min);
    }
    Ok(total)
}

/// Lovasz-extension cardinality (p=2) value: per column, square of
/// `sum_i min(i, rows - i) * (x_(i+1) - x_(i))` over the ascending sort.
pub fn lec2_value(s: &ArrayView2<f64>) -> Result<f64, RegError> {
    check_finite(s)?;
    let n = s.nrows();
    let mut total = 0.0;
    for col in s.columns() {
        let mut vals: Vec<f64> = col.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        let mut lin = 0.0;
        for i in 1..n {
            let w = i.min(n - i) as f64;
            lin += w * (vals[i] - vals[i - 1]);
        }
        total += lin * lin;
    }
    Ok(total)
}

/// Gap weights w(1..rows-1) whose squared Lovasz extension realizes `kind`.
fn cardinality_weights(kind: RegularizerKind, n: usize) -> Result<Vec<f64>, RegError> {
    match kind {
        RegularizerKind::Tv2 => Ok(vec![1.0; n.saturating_sub(1)]),
        RegularizerKind::Lec2 => Ok((1..n).map(|i| i.min(n - i) as f64).collect()),
        RegularizerKind::Ce => Err(RegError::UnsupportedKind { kind }),
    }
}

/// Telescoped coefficients: L(x) = sum_i a_i x_(i) on sorted x, with
/// a_i = w_{i-1} - w_i and w_0 = w_n = 0.
fn telescoped_coeffs(w: &[f64]) -> Vec<f64> {
    let n = w.len() + 1;
    (0..n)
        .map(|i| {
            let prev = if i == 0 { 0.0 } else { w[i - 1] };
            let next = if i == n - 1 { 0.0 } else { w[i] };
            prev - next
        })
        .collect()
}

/// Isotonic regression (pool-adjacent-violators) for a nondecreasing fit
/// with unit weights.
fn pava_nondecreasing(y: &[f64]) -> Vec<f64> {
    let mut means: Vec<f64> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        means.push(v);
        counts.push(1);
        while means.len() >= 2 && means[means.len() - 2] > means[means.len() - 1] {
            let (m2, c2) = (means.pop().unwrap(), counts.pop().unwrap());
            let (m1, c1) = (means.pop().unwrap(), counts.pop().unwrap());
            let c = c1 + c2;
            means.push((m1 * c1 as f64 + m2 * c2 as f64) / c as f64);
            counts.push(c);
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (m, c) in means.into_iter().zip(counts) {
        out.extend(std::iter::repeat(m).take(c));
    }
    out
}

/// Iterative prox of `s * Omega` for the non-differentiable regularizers.
///
/// Per column: bisection on the fixed point `tau = 2 s L(prox_{tau L}(y))`,
/// where each inner prox is an exact isotonic regression. Deterministic for
/// fixed inputs; the unique minimizer is located to bisection accuracy.
pub fn prox_iterative(
    kind: RegularizerKind,
    y: &ArrayView2<f64>,
    s: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Array2<f64>, RegError> {
    check_finite(y)?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(RegError::InvalidScale(s));
    }
    if !(tol > 0.0) {
        return Err(RegError::InvalidScale(tol));
    }
    let n = y.nrows();
    let w = cardinality_weights(kind, n)?;
    let a = telescoped_coeffs(&w);
    let mut x = y.to_owned();
    for (c, col) in y.columns().into_iter().enumerate() {
        let solved = prox_column(&col, s, &a, tol, max_iter)?;
        for (r, v) in solved.into_iter().enumerate() {
            x[[r, c]] = v;
        }
    }
    Ok(x)
}

fn prox_column(
    col: &ArrayView1<f64>,
    s: f64,
    a: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, RegError> {
    let n = col.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| col[i].total_cmp(&col[j]).then(i.cmp(&j)));
    let sorted: Vec<f64> = order.iter().map(|&i| col[i]).collect();
    let lovasz = |x: &[f64]| -> f64 { x.iter().zip(a).map(|(v, c)| v * c).sum() };

    let l0 = lovasz(&sorted);
    if l0 <= 0.0 {
        // Constant column: already the minimizer.
        return Ok(col.to_vec());
    }
    let shifted_fit = |tau: f64| -> Vec<f64> {
        let shifted: Vec<f64> = sorted.iter().zip(a).map(|(v, c)| v - tau * c).collect();
        pava_nondecreasing(&shifted)
    };
    let (mut lo, mut hi) = (0.0, 2.0 * s * l0);
    let thresh = tol * hi.max(1.0);
    let mut width = hi - lo;
    for _ in 0..max_iter {
        if width <= thresh {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g = 2.0 * s * lovasz(&shifted_fit(mid)) - mid;
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        width = hi - lo;
    }
    if width > thresh {
        return Err(RegError::Convergence { max_iter, residual: width });
    }
    let fit = shifted_fit(0.5 * (lo + hi));
    let mut out = vec![0.0; n];
    for (pos, &orig) in order.iter().enumerate() {
        out[orig] = fit[pos];
    }
    Ok(out)
}

/// Prox dispatch: CE closed form, TV2/LEC2 iterative.
pub fn reg_prox(
    kind: RegularizerKind,
    y: &ArrayView2<f64>,
    s: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Array2<f64>, RegError> {
    match kind {
        RegularizerKind::Ce => ce_prox(y, s),
        RegularizerKind::Tv2 | RegularizerKind::Lec2 => prox_iterative(kind, y, s, tol, max_iter),
    }
}

/// Prox of `c * 1/2 ||x - a||^2` evaluated at `y`: `(y + c a) / (1 + c)`.
pub fn squared_loss_prox(
    y: &ArrayView1<f64>,
    a: &ArrayView1<f64>,
    c: f64,
) -> Result<Array1<f64>, RegError> {
    if y.len() != a.len() {
        return Err(RegError::DimensionMismatch(format!(
            "y has {} entries, a has {}",
            y.len(),
            a.len()
        )));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(RegError::InvalidScale(c));
    }
    Ok((y.to_owned() + &(a.to_owned() * c)) / (1.0 + c))
}

/// Objective minimized by the prox of `s * Omega_kind` at `y`, evaluated
/// at `x`.
pub fn prox_objective(
    kind: RegularizerKind,
    x: &ArrayView2<f64>,
    y: &ArrayView2<f64>,
    s: f64,
) -> Result<f64, RegError> {
    let omega = reg_value(kind, x)?;
    let dist: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s * omega + 0.5 * dist)
}

fn prox_subgradient(
    kind: RegularizerKind,
    x: &ArrayView2<f64>,
    y: &ArrayView2<f64>,
    s: f64,
) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut g = x.to_owned() - y;
    match kind {
        RegularizerKind::Ce => {
            let cg = ce_gradient(x).expect("finite by construction");
            g += &(cg * s);
        }
        RegularizerKind::Tv2 => {
            for c in 0..d {
                let col = x.column(c);
                let mut maxi = 0;
                let mut mini = 0;
                for i in 1..n {
                    if col[i] > col[maxi] {
                        maxi = i;
                    }
                    if col[i] < col[mini] {
                        mini = i;
                    }
                }
                let range = col[maxi] - col[mini];
                g[[maxi, c]] += s * 2.0 * range;
                g[[mini, c]] -= s * 2.0 * range;
            }
        }
        RegularizerKind::Lec2 => {
            let w = cardinality_weights(kind, n).expect("lec weights");
            let a = telescoped_coeffs(&w);
            for c in 0..d {
                let col = x.column(c);
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&i, &j| col[i].total_cmp(&col[j]).then(i.cmp(&j)));
                let lin: f64 = order.iter().zip(&a).map(|(&i, coef)| col[i] * coef).sum();
                for (pos, &i) in order.iter().enumerate() {
                    g[[i, c]] += s * 2.0 * lin * a[pos];
                }
            }
        }
    }
    g
}

const ORACLE_RESTARTS: usize = 20;
const ORACLE_STEPS: usize = 5_000;

/// Brute-force prox oracle: multi-start projected subgradient descent with
/// diminishing steps. Used only to validate `ce_prox` and `prox_iterative`;
/// limited to tiny stacks (rows <= 6, cols <= 2).
pub fn prox_oracle(
    kind: RegularizerKind,
    y: &ArrayView2<f64>,
    s: f64,
) -> Result<Array2<f64>, RegError> {
    check_finite(y)?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(RegError::InvalidScale(s));
    }
    let (n, d) = y.dim();
    if n > 6 || d > 2 {
        return Err(RegError::SizeLimit { rows: n, cols: d });
    }

    // The minimizer lies inside the per-column hull of y, so projecting onto
    // it keeps subgradients bounded.
    let lows: Vec<f64> = y
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let highs: Vec<f64> = y
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();

    let lipschitz = match kind {
        RegularizerKind::Ce => 1.0 + 4.0 * s * n as f64,
        RegularizerKind::Tv2 => 1.0 + 4.0 * s,
        RegularizerKind::Lec2 => {
            let w = cardinality_weights(kind, n)?;
            let a = telescoped_coeffs(&w);
            1.0 + 2.0 * s * a.iter().map(|v| v * v).sum::<f64>()
        }
    };
    let alpha0 = 1.0 / lipschitz;

    let mut rng = ChaCha12Rng::seed_from_u64(0x0dac1e);
    let mut best_x = y.to_owned();
    let mut best_f = prox_objective(kind, &best_x.view(), y, s)?;
    for restart in 0..ORACLE_RESTARTS {
        let mut x = y.to_owned();
        if restart > 0 {
            for c in 0..d {
                let scale = 0.5 * (highs[c] - lows[c]).max(1e-3);
                for r in 0..n {
                    x[[r, c]] += scale * (rng.random::<f64>() * 2.0 - 1.0);
                    x[[r, c]] = x[[r, c]].clamp(lows[c], highs[c]);
                }
            }
        }
        for k in 0..ORACLE_STEPS {
            let g = prox_subgradient(kind, &x.view(), y, s);
            let alpha = alpha0 / (1.0 + 2.0 * k as f64 / ORACLE_STEPS as f64);
            x.scaled_add(-alpha, &g);
            for c in 0..d {
                for r in 0..n {
                    x[[r, c]] = x[[r, c]].clamp(lows[c], highs[c]);
                }
            }
            let f = prox_objective(kind, &x.view(), y, s)?;
            if f < best_f {
                best_f = f;
                best_x = x.clone();
            }
        }
    }
    Ok(best_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> Array2<f64> {
        let r = rows.len();
        let c = rows[0].len();
        Array2::from_shape_fn((r, c), |(i, j)| rows[i][j])
    }

    #[test]
    fn ce_value_examples() {
        assert_eq!(ce_value(&array![[1.0], [0.0]].view()).unwrap(), 2.0);
        assert_eq!(ce_value(&array![[0.3], [0.3], [0.3]].view()).unwrap(), 0.0);
        let s = mat(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(ce_value(&s.view()).unwrap(), 8.0);
    }

    #[test]
    fn ce_gradient_examples() {
        let g = ce_gradient(&array![[1.0], [0.0]].view()).unwrap();
        assert_eq!(g, array![[4.0], [-4.0]]);
        let g = ce_gradient(&array![[0.7], [0.7], [0.7]].view()).unwrap();
        assert_eq!(g, Array2::<f64>::zeros((3, 1)));
        let g = ce_gradient(&array![[2.0], [0.0], [1.0]].view()).unwrap();
        assert_eq!(g, array![[12.0], [-12.0], [0.0]]);
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..=3);
            let d = rng.random_range(1..=3);
            let s = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
            let g = ce_gradient(&s.view()).unwrap();
            let h = 1e-6;
            for i in 0..n {
                for j in 0..d {
                    let mut plus = s.clone();
                    plus[[i, j]] += h;
                    let mut minus = s.clone();
                    minus[[i, j]] -= h;
                    let fd = (ce_value(&plus.view()).unwrap() - ce_value(&minus.view()).unwrap())
                        / (2.0 * h);
                    let denom = g[[i, j]].abs().max(fd.abs()).max(1.0);
                    assert!(
                        ((g[[i, j]] - fd) / denom).abs() <= 1e-6,
                        "fd mismatch at ({i},{j}): {} vs {}",
                        g[[i, j]],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn ce_prox_examples() {
        let x = ce_prox(&array![[1.0], [0.0]].view(), 1.0).unwrap();
        assert_abs_diff_eq!(x[[0, 0]], 5.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[[1, 0]], 4.0 / 9.0, epsilon = 1e-15);

        let y = array![[0.4], [0.4], [0.4]];
        let x = ce_prox(&y.view(), 2.5).unwrap();
        assert_abs_diff_eq!(x[[0, 0]], 0.4, epsilon = 1e-14);

        let y = array![[1.0], [-2.0], [0.5]];
        let x = ce_prox(&y.view(), 1e-10).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        assert!(matches!(ce_prox(&y.view(), 0.0), Err(RegError::InvalidScale(_))));
    }

    #[test]
    fn ce_prox_preserves_column_means() {
        let y = array![[1.0, -3.0], [0.25, 2.0], [-0.5, 0.0]];
        let x = ce_prox(&y.view(), 0.7).unwrap();
        let ym = y.mean_axis(Axis(0)).unwrap();
        let xm = x.mean_axis(Axis(0)).unwrap();
        for (a, b) in ym.iter().zip(xm.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn tv2_value_examples() {
        assert_eq!(tv2_value(&array![[0.0], [0.5], [1.0]].view()).unwrap(), 1.0);
        assert_eq!(tv2_value(&array![[2.0], [2.0]].view()).unwrap(), 0.0);
        assert_eq!(tv2_value(&mat(&[&[0.0, 3.0], &[1.0, 0.0]]).view()).unwrap(), 10.0);
    }

    #[test]
    fn lec2_value_examples() {
        assert_eq!(lec2_value(&array![[0.0], [1.0], [2.0]].view()).unwrap(), 4.0);
        assert_eq!(lec2_value(&array![[0.0], [1.0]].view()).unwrap(), 1.0);
        assert_eq!(lec2_value(&array![[5.0], [5.0], [5.0]].view()).unwrap(), 0.0);
    }

    #[test]
    fn prox_iterative_examples() {
        // Constant rows are a fixed point for any scale.
        let y = array![[0.3], [0.3]];
        let x = prox_iterative(RegularizerKind::Tv2, &y.view(), 3.0, 1e-10, 2000).unwrap();
        assert_eq!(x, y);

        // Two-row TV2: the gap shrinks by 1/(1+4s).
        let y = array![[0.0], [1.0]];
        let x = prox_iterative(RegularizerKind::Tv2, &y.view(), 0.25, 1e-12, 2000).unwrap();
        assert_abs_diff_eq!(x[[0, 0]], 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(x[[1, 0]], 0.75, epsilon = 1e-9);

        // Two-row LEC2 coincides with two-row TV2.
        let x = prox_iterative(RegularizerKind::Lec2, &y.view(), 0.25, 1e-12, 2000).unwrap();
        assert_abs_diff_eq!(x[[0, 0]], 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(x[[1, 0]], 0.75, epsilon = 1e-9);
    }

    #[test]
    fn prox_iterative_rejects_bad_inputs() {
        let y = array![[0.0], [1.0]];
        assert!(matches!(
            prox_iterative(RegularizerKind::Ce, &y.view(), 1.0, 1e-8, 100),
            Err(RegError::UnsupportedKind { .. })
        ));
        assert!(matches!(
            prox_iterative(RegularizerKind::Tv2, &y.view(), -1.0, 1e-8, 100),
            Err(RegError::InvalidScale(_))
        ));
        // An absurd iteration cap cannot bring the interval below tolerance.
        assert!(matches!(
            prox_iterative(RegularizerKind::Tv2, &y.view(), 1.0, 1e-12, 2),
            Err(RegError::Convergence { .. })
        ));
    }

    #[test]
    fn squared_loss_prox_examples() {
        let y = array![0.2, -0.4];
        let out = squared_loss_prox(&y.view(), &y.view(), 3.0).unwrap();
        assert_abs_diff_eq!(out[0], y[0], epsilon = 1e-15);

        let out = squared_loss_prox(&array![1.0].view(), &array![0.0].view(), 1.0).unwrap();
        assert_abs_diff_eq!(out[0], 0.5, epsilon = 1e-15);

        let out = squared_loss_prox(&array![1.0, 2.0].view(), &array![0.0, 0.0].view(), 1e-10).unwrap();
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(out[1], 2.0, epsilon = 1e-8);

        assert!(matches!(
            squared_loss_prox(&array![1.0].view(), &array![0.0, 0.0].view(), 1.0),
            Err(RegError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn oracle_agrees_with_closed_forms() {
        let y = array![[1.0], [0.0]];
        let oracle = prox_oracle(RegularizerKind::Ce, &y.view(), 1.0).unwrap();
        let closed = ce_prox(&y.view(), 1.0).unwrap();
        for (a, b) in oracle.iter().zip(closed.iter()) {
            assert!((a - b).abs() < 1e-5, "oracle {a} vs closed {b}");
        }

        let oracle = prox_oracle(RegularizerKind::Tv2, &y.view(), 0.25).unwrap();
        assert!((oracle[[0, 0]] - 0.75).abs() < 1e-4);
        assert!((oracle[[1, 0]] - 0.25).abs() < 1e-4);

        let y = array![[0.6], [-1.2]];
        let oracle = prox_oracle(RegularizerKind::Lec2, &y.view(), 1e-10).unwrap();
        for (a, b) in oracle.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_rejects_large_stacks() {
        let y = Array2::<f64>::zeros((7, 1));
        assert!(matches!(
            prox_oracle(RegularizerKind::Ce, &y.view(), 1.0),
            Err(RegError::SizeLimit { .. })
        ));
    }

    #[test]
    fn iterative_prox_beats_oracle_objective() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..25 {
            let n = rng.random_range(2..=5);
            let y = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>() * 4.0 - 2.0);
            for s in [0.1, 1.0, 10.0] {
                for kind in [RegularizerKind::Tv2, RegularizerKind::Lec2] {
                    let x = prox_iterative(kind, &y.view(), s, 1e-10, 2000).unwrap();
                    let o = prox_oracle(kind, &y.view(), s).unwrap();
                    let fx = prox_objective(kind, &x.view(), &y.view(), s).unwrap();
                    let fo = prox_objective(kind, &o.view(), &y.view(), s).unwrap();
                    assert!(
                        fx <= fo + 1e-6,
                        "{kind:?} s={s}: iterative {fx} vs oracle {fo}"
                    );
                }
            }
        }
    }

    #[test]
    fn tv2_lec2_subgradients_match_fd_at_smooth_points() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for kind in [RegularizerKind::Tv2, RegularizerKind::Lec2] {
            for _ in 0..20 {
                let n = rng.random_range(2..=5);
                let y = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>() * 2.0 - 1.0);
                let x = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>() * 2.0 - 1.0);
                let g = prox_subgradient(kind, &x.view(), &y.view(), 0.8);
                let h = 1e-6;
                for i in 0..n {
                    let mut p = x.clone();
                    p[[i, 0]] += h;
                    let mut m = x.clone();
                    m[[i, 0]] -= h;
                    let fd = (prox_objective(kind, &p.view(), &y.view(), 0.8).unwrap()
                        - prox_objective(kind, &m.view(), &y.view(), 0.8).unwrap())
                        / (2.0 * h);
                    let denom = g[[i, 0]].abs().max(fd.abs()).max(1.0);
                    assert!(
                        ((g[[i, 0]] - fd) / denom).abs() < 1e-5,
                        "{kind:?} subgradient {} vs fd {}",
                        g[[i, 0]],
                        fd
                    );
                }
            }
        }
    }

    fn permute_rows(s: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros(s.dim());
        for (to, &from) in perm.iter().enumerate() {
            out.row_mut(to).assign(&s.row(from));
        }
        out
    }

    proptest! {
        #[test]
        fn values_are_permutation_invariant(
            rows in 1usize..6, cols in 1usize..3, seed in 0u64..500
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let s = Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 4.0 - 2.0);
            let mut perm: Vec<usize> = (0..rows).collect();
            for i in (1..rows).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let p = permute_rows(&s, &perm);
            for kind in [RegularizerKind::Ce, RegularizerKind::Tv2, RegularizerKind::Lec2] {
                let v1 = reg_value(kind, &s.view()).unwrap();
                let v2 = reg_value(kind, &p.view()).unwrap();
                prop_assert!((v1 - v2).abs() <= 1e-12);
                prop_assert!(v1 >= 0.0);
            }
        }

        #[test]
        fn gradients_and_proxes_are_permutation_equivariant(
            rows in 2usize..6, seed in 0u64..300
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let s = Array2::from_shape_fn((rows, 2), |_| rng.random::<f64>() * 4.0 - 2.0);
            let mut perm: Vec<usize> = (0..rows).collect();
            for i in (1..rows).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let p = permute_rows(&s, &perm);

            let g1 = permute_rows(&ce_gradient(&s.view()).unwrap(), &perm);
            let g2 = ce_gradient(&p.view()).unwrap();
            for (a, b) in g1.iter().zip(g2.iter()) {
                prop_assert!((a - b).abs() <= 1e-10);
            }

            let x1 = permute_rows(&ce_prox(&s.view(), 0.9).unwrap(), &perm);
            let x2 = ce_prox(&p.view(), 0.9).unwrap();
            for (a, b) in x1.iter().zip(x2.iter()) {
                prop_assert!((a - b).abs() <= 1e-10);
            }

            for kind in [RegularizerKind::Tv2, RegularizerKind::Lec2] {
                let x1 = permute_rows(&prox_iterative(kind, &s.view(), 0.6, 1e-10, 2000).unwrap(), &perm);
                let x2 = prox_iterative(kind, &p.view(), 0.6, 1e-10, 2000).unwrap();
                for (a, b) in x1.iter().zip(x2.iter()) {
                    prop_assert!((a - b).abs() <= 1e-10);
                }
            }
        }
    }
}
