//! Exact solution of the block subproblem
//!
//! ```text
//! min_v  ½vᵀHv + ⟨v,r⟩ + h_B(v) + (θ/2)‖v − x_B‖²
//! ```
//!
//! by enumerating every combinatorial pattern of the block. Binary blocks walk
//! the 2^k sign vectors in Gray-code order; sparse blocks visit every support
//! and solve the convex problem on it.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{box_qp, cholesky_in_place, cholesky_solve};
use crate::model::{Penalty, ReducedQuadratic};

/// Largest block the exhaustive search accepts.
pub const K_MAX: usize = 20;

/// Magnitude below which a solved coordinate is a candidate for exact zero.
pub const SNAP_TOL: f64 = 1e-12;

const RESYNC_EVERY: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub v: Vec<f64>,
    /// `½vᵀHv + ⟨v,r⟩ + h_B(v) + (θ/2)‖v − x_B‖²`, recomputed from scratch.
    pub value: f64,
    /// Binary: bit j set iff `v_j = −1`. Sparse: the enumerated support.
    /// Binary cardinality: bit j set iff `v_j = 1`.
    pub pattern: u64,
    pub candidates_evaluated: u64,
}

fn check_inputs(red: &ReducedQuadratic, theta: f64) -> Result<usize> {
    let k = red.k();
    if k > K_MAX {
        return Err(Error::BlockTooLarge { k, max: K_MAX });
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("theta must be finite and >= 0, got {theta}")));
    }
    Ok(k)
}

fn tie_band(best: f64) -> f64 {
    1e-11 * (1.0 + best.abs())
}

/// Returns true if `(val, pat)` beats `(best, best_pat)` under the
/// value-then-pattern order.
fn better(val: f64, pat: u64, best: f64, best_pat: u64) -> bool {
    if !val.is_finite() {
        return false;
    }
    if !best.is_finite() {
        return true;
    }
    let band = tie_band(best);
    val < best - band || (val <= best + band && pat < best_pat)
}

/// Smooth part plus the proximal term, without the penalty.
pub(crate) fn prox_smooth_value(red: &ReducedQuadratic, theta: f64, v: &[f64]) -> f64 {
    let mut dist = 0.0;
    for (a, b) in v.iter().zip(red.x_block.iter()) {
        dist += (a - b) * (a - b);
    }
    red.smooth_value(v) + 0.5 * theta * dist
}

fn flat_h(red: &ReducedQuadratic) -> Vec<f64> {
    red.h.as_slice().to_vec()
}

/// Exact minimizer over `v ∈ {−1, 1}^k`.
pub fn solve_block_binary(red: &ReducedQuadratic, theta: f64) -> Result<SubproblemResult> {
    let k = check_inputs(red, theta)?;
    let walk = gray_walk(red, theta, RESYNC_EVERY);
    let v: Vec<f64> = (0..k).map(|j| if walk.best_pat >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
    let value = prox_smooth_value(red, theta, &v);
    Ok(SubproblemResult { v, value, pattern: walk.best_pat, candidates_evaluated: 1u64 << k })
}

/// Runs the full Gray-code walk with no resynchronisation and returns the
/// gap between the incrementally tracked value at the last vertex and a
/// from-scratch evaluation there.
#[doc(hidden)]
pub fn gray_walk_drift(red: &ReducedQuadratic, theta: f64) -> Result<f64> {
    check_inputs(red, theta)?;
    let walk = gray_walk(red, theta, u64::MAX);
    let scratch = prox_smooth_value(red, theta, &walk.last_v);
    // the walk drops the constant part of the proximal term
    let constant = 0.5 * theta * (red.k() as f64 + red.x_block.norm_squared());
    Ok((walk.last_value + constant - scratch).abs())
}

struct GrayWalk {
    best_pat: u64,
    last_v: Vec<f64>,
    last_value: f64,
}

fn gray_walk(red: &ReducedQuadratic, theta: f64, resync_every: u64) -> GrayWalk {
    let k = red.k();
    let h = flat_h(red);
    // On {−1,1}^k the proximal term is linear: (θ/2)‖v−x‖² = const − θ⟨x,v⟩.
    let lin: Vec<f64> = (0..k).map(|j| red.r[j] - theta * red.x_block[j]).collect();

    let mut v = vec![1.0; k];
    let mut w = vec![0.0; k];
    let resync = |v: &[f64], w: &mut [f64]| -> f64 {
        let mut val = 0.0;
        for i in 0..k {
            let mut hv = 0.0;
            for j in 0..k {
                hv += h[i + j * k] * v[j];
            }
            w[i] = hv + lin[i];
            val += v[i] * (0.5 * hv + lin[i]);
        }
        val
    };
    let mut cur = resync(&v, &mut w);
    let mut pattern = 0u64;
    let mut best = cur;
    let mut best_pat = 0u64;

    for step in 1..(1u64 << k) {
        let j = step.trailing_zeros() as usize;
        let s = v[j];
        cur += -2.0 * s * w[j] + 2.0 * h[j + j * k];
        let col = &h[j * k..(j + 1) * k];
        for i in 0..k {
            w[i] -= 2.0 * s * col[i];
        }
        v[j] = -s;
        pattern ^= 1 << j;
        if step % resync_every == 0 {
            cur = resync(&v, &mut w);
        }
        if better(cur, pattern, best, best_pat) {
            best = cur;
            best_pat = pattern;
        }
    }
    GrayWalk { best_pat, last_v: v, last_value: cur }
}

/// Exact minimizer of the ℓ0 block problem with box half-width `rho`.
pub fn solve_block_sparse(
    red: &ReducedQuadratic,
    theta: f64,
    lambda: f64,
    rho: f64,
) -> Result<SubproblemResult> {
    let k = check_inputs(red, theta)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    enumerate_supports(red, theta, lambda, rho, k)
}

/// Exact minimizer under a cardinality penalty, where `budget` is what is
/// left of `s` after the coordinates outside the block.
pub fn solve_block_cardinality(
    red: &ReducedQuadratic,
    theta: f64,
    penalty: &Penalty,
    budget: i64,
) -> Result<SubproblemResult> {
    let k = check_inputs(red, theta)?;
    match *penalty {
        Penalty::BinaryCardinality { .. } => {
            if budget < 0 || budget as usize > k {
                return Err(Error::InfeasibleBudget { budget, k });
            }
            Ok(enumerate_fixed_weight(red, theta, budget as usize))
        }
        Penalty::SparseCardinality { .. } => {
            if budget < 0 {
                return Err(Error::InfeasibleBudget { budget, k });
            }
            enumerate_supports(red, theta, 0.0, f64::INFINITY, (budget as usize).min(k))
        }
        _ => Err(Error::WrongPenalty { expected: "cardinality" }),
    }
}

/// Dispatches on the penalty. `x` is the full iterate, used to compute the
/// cardinality budget left to the block.
pub fn solve_subproblem(
    penalty: &Penalty,
    red: &ReducedQuadratic,
    theta: f64,
    x: &[f64],
) -> Result<SubproblemResult> {
    match *penalty {
        Penalty::Binary => solve_block_binary(red, theta),
        Penalty::SparseL0 { lambda, rho } => solve_block_sparse(red, theta, lambda, rho),
        Penalty::BinaryCardinality { s } => {
            let outside = count_outside(x, &red.block, |v| v == 1.0);
            solve_block_cardinality(red, theta, penalty, s as i64 - outside as i64)
        }
        Penalty::SparseCardinality { s } => {
            let outside = count_outside(x, &red.block, |v| v != 0.0);
            solve_block_cardinality(red, theta, penalty, s as i64 - outside as i64)
        }
    }
}

fn count_outside(x: &[f64], block: &[usize], pred: impl Fn(f64) -> bool) -> usize {
    let mut inside = vec![false; x.len()];
    for &i in block {
        inside[i] = true;
    }
    x.iter().enumerate().filter(|&(i, &v)| !inside[i] && pred(v)).count()
}

fn enumerate_fixed_weight(red: &ReducedQuadratic, theta: f64, budget: usize) -> SubproblemResult {
    let k = red.k();
    let h = flat_h(red);
    let lin: Vec<f64> = (0..k).map(|j| red.r[j] - theta * red.x_block[j]).collect();
    let mut best = f64::INFINITY;
    let mut best_pat = 0u64;
    let mut count = 0u64;
    let mut idx = Vec::with_capacity(budget);

    let mut pat: u64 = if budget == 0 { 0 } else { (1u64 << budget) - 1 };
    let limit = 1u64 << k;
    while pat < limit {
        count += 1;
        idx.clear();
        idx.extend((0..k).filter(|&j| pat >> j & 1 == 1));
        let mut val = 0.0;
        for &a in &idx {
            val += lin[a];
            for &b in &idx {
                val += 0.5 * h[a + b * k];
            }
        }
        if better(val, pat, best, best_pat) {
            best = val;
            best_pat = pat;
        }
        if pat == 0 {
            break;
        }
        // next integer with the same popcount
        let c = pat & pat.wrapping_neg();
        let r = pat + c;
        pat = (((r ^ pat) >> 2) / c) | r;
    }

    let v: Vec<f64> = (0..k).map(|j| (best_pat >> j & 1) as f64).collect();
    let value = prox_smooth_value(red, theta, &v);
    SubproblemResult { v, value, pattern: best_pat, candidates_evaluated: count }
}

fn enumerate_supports(
    red: &ReducedQuadratic,
    theta: f64,
    lambda: f64,
    rho: f64,
    max_size: usize,
) -> Result<SubproblemResult> {
    let k = red.k();
    let h = flat_h(red);
    let mut best = f64::INFINITY;
    let mut best_v = vec![0.0; k];
    let mut best_pat = 0u64;
    let mut count = 0u64;

    let mut idx = Vec::with_capacity(k);
    let mut m = Vec::with_capacity(k * k);
    let mut rhs = Vec::with_capacity(k);
    let mut v = vec![0.0; k];

    for mask in 0..(1u64 << k) {
        if mask.count_ones() as usize > max_size {
            continue;
        }
        count += 1;
        idx.clear();
        idx.extend((0..k).filter(|&j| mask >> j & 1 == 1));
        let s = idx.len();
        m.clear();
        for &c in &idx {
            for &r in &idx {
                m.push(h[r + c * k] + if r == c { theta } else { 0.0 });
            }
        }
        v.iter_mut().for_each(|x| *x = 0.0);
        if s > 0 {
            let sol = if rho.is_infinite() {
                rhs.clear();
                rhs.extend(idx.iter().map(|&j| theta * red.x_block[j] - red.r[j]));
                if cholesky_in_place(&mut m, s) {
                    cholesky_solve(&m, s, &mut rhs);
                    Some(rhs.clone())
                } else {
                    None
                }
            } else {
                let q: Vec<f64> = idx.iter().map(|&j| red.r[j] - theta * red.x_block[j]).collect();
                box_qp(&m, &q, s, rho, 1e-10)
            };
            let Some(sol) = sol else {
                return Err(Error::NotPositiveDefinite {
                    support: idx.iter().map(|&j| red.block[j]).collect(),
                });
            };
            for (a, &j) in idx.iter().enumerate() {
                v[j] = sol[a];
            }
        }
        let val = snap_and_value(red, theta, lambda, &mut v);
        if better(val, mask, best, best_pat) {
            best = val;
            best_pat = mask;
            best_v.copy_from_slice(&v);
        }
    }

    let value = prox_smooth_value(red, theta, &best_v) + lambda * nnz(&best_v) as f64;
    Ok(SubproblemResult { v: best_v, value, pattern: best_pat, candidates_evaluated: count })
}

fn nnz(v: &[f64]) -> usize {
    v.iter().filter(|&&x| x != 0.0).count()
}

/// Zeroes coordinates below [`SNAP_TOL`] when that does not increase the
/// penalized value, and returns the value.
pub(crate) fn snap_and_value(red: &ReducedQuadratic, theta: f64, lambda: f64, v: &mut [f64]) -> f64 {
    let val = prox_smooth_value(red, theta, v) + lambda * nnz(v) as f64;
    if !v.iter().any(|&x| x != 0.0 && x.abs() < SNAP_TOL) {
        return val;
    }
    let snapped: Vec<f64> = v.iter().map(|&x| if x.abs() < SNAP_TOL { 0.0 } else { x }).collect();
    let sval = prox_smooth_value(red, theta, &snapped) + lambda * nnz(&snapped) as f64;
    if sval <= val {
        v.copy_from_slice(&snapped);
        sval
    } else {
        val
    }
}

/// `value` of a given block vector under the same accounting as the solvers.
pub fn block_value(red: &ReducedQuadratic, theta: f64, penalty: &Penalty, v: &[f64]) -> f64 {
    let base = prox_smooth_value(red, theta, v);
    match *penalty {
        Penalty::SparseL0 { lambda, rho } => {
            if v.iter().any(|x| x.abs() > rho) {
                f64::INFINITY
            } else {
                base + lambda * nnz(v) as f64
            }
        }
        _ => base,
    }
}

impl SubproblemResult {
    pub fn v_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn red(h: &[f64], r: &[f64], xb: &[f64]) -> ReducedQuadratic {
        let k = r.len();
        ReducedQuadratic {
            h: DMatrix::from_column_slice(k, k, h),
            r: DVector::from_column_slice(r),
            c0: 0.0,
            x_block: DVector::from_column_slice(xb),
            block: (0..k).collect(),
        }
    }

    #[test]
    fn binary_one_dimensional() {
        let res = solve_block_binary(&red(&[2.0], &[-3.0], &[1.0]), 0.0).unwrap();
        assert_eq!(res.v, vec![1.0]);
        assert_eq!(res.value, -2.0);
        assert_eq!(res.candidates_evaluated, 2);
    }

    #[test]
    fn binary_pure_proximal() {
        let res = solve_block_binary(&red(&[0.0; 4], &[0.0, 0.0], &[0.2, -0.7]), 1.0).unwrap();
        assert_eq!(res.v, vec![1.0, -1.0]);
        assert_eq!(res.pattern, 0b10);
    }

    #[test]
    fn binary_ties_take_smallest_pattern() {
        // all four sign vectors tie
        let res = solve_block_binary(&red(&[0.0; 4], &[0.0, 0.0], &[0.0, 0.0]), 0.0).unwrap();
        assert_eq!(res.pattern, 0);
        assert_eq!(res.v, vec![1.0, 1.0]);
    }

    #[test]
    fn block_too_large() {
        let k = K_MAX + 1;
        let r = red(&vec![0.0; k * k], &vec![0.0; k], &vec![1.0; k]);
        assert!(matches!(solve_block_binary(&r, 0.0), Err(Error::BlockTooLarge { .. })));
    }

    #[test]
    fn sparse_examples() {
        let r = red(&[1.0], &[-2.0], &[0.0]);
        let res = solve_block_sparse(&r, 0.0, 1.0, f64::INFINITY).unwrap();
        assert_eq!(res.v, vec![2.0]);
        assert_eq!(res.value, -1.0);
        let res = solve_block_sparse(&r, 0.0, 3.0, f64::INFINITY).unwrap();
        assert_eq!(res.v, vec![0.0]);
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn sparse_box_clips() {
        let r = red(&[1.0], &[-2.0], &[0.0]);
        let res = solve_block_sparse(&r, 0.0, 0.1, 1.0).unwrap();
        assert_eq!(res.v, vec![1.0]);
        assert!((res.value - (0.5 - 2.0 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn sparse_singular_without_theta_errors() {
        let r = red(&[1.0, 1.0, 1.0, 1.0], &[-1.0, -1.0], &[0.0, 0.0]);
        assert!(matches!(
            solve_block_sparse(&r, 0.0, 0.1, f64::INFINITY),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(solve_block_sparse(&r, 1e-5, 0.1, f64::INFINITY).is_ok());
    }

    #[test]
    fn cardinality_examples() {
        let r = red(&[0.0; 4], &[-1.0, -2.0], &[0.0, 0.0]);
        let pen = Penalty::BinaryCardinality { s: 1 };
        let res = solve_block_cardinality(&r, 0.0, &pen, 1).unwrap();
        assert_eq!(res.v, vec![0.0, 1.0]);
        let res = solve_block_cardinality(&r, 0.0, &pen, 0).unwrap();
        assert_eq!(res.v, vec![0.0, 0.0]);
        assert!(matches!(
            solve_block_cardinality(&r, 0.0, &pen, 3),
            Err(Error::InfeasibleBudget { .. })
        ));
        assert!(solve_block_cardinality(&r, 0.0, &pen, -1).is_err());
    }

    #[test]
    fn sparse_cardinality_respects_budget() {
        let r = red(&[1.0, 0.0, 0.0, 1.0], &[-1.0, -2.0], &[0.0, 0.0]);
        let pen = Penalty::SparseCardinality { s: 1 };
        let res = solve_block_cardinality(&r, 0.0, &pen, 1).unwrap();
        assert_eq!(res.v, vec![0.0, 2.0]);
        assert_eq!(res.candidates_evaluated, 3);
    }

    #[test]
    fn fixed_weight_enumerates_binomial() {
        let k = 6;
        let r = red(&vec![0.0; k * k], &vec![0.0; k], &vec![0.0; k]);
        let res = enumerate_fixed_weight(&r, 0.0, 3);
        assert_eq!(res.candidates_evaluated, 20);
        assert_eq!(res.pattern, 0b111);
    }
}
