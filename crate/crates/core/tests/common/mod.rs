//! Naive reference implementations shared by the integration tests. Nothing
//! here calls into the library's evaluation or solver code.
#![allow(dead_code)]

use hybridopt::{Objective, Penalty, Problem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(rng))
}

pub fn gauss_mat(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| gauss(rng))
}

/// Positive definite `MᵀM/n + shift·I`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let m = gauss_mat(rng, n + 2, n);
    m.transpose() * &m / n as f64 + DMatrix::identity(n, n) * shift
}

pub fn random_quadratic(rng: &mut ChaCha8Rng, n: usize, penalty: Penalty) -> Problem {
    let q = random_pd(rng, n, 0.1);
    let p = gauss_vec(rng, n);
    Problem::new(Objective::quadratic(q, p).unwrap(), penalty).unwrap()
}

pub fn random_ls(rng: &mut ChaCha8Rng, m: usize, n: usize, penalty: Penalty) -> Problem {
    let a = gauss_mat(rng, m, n);
    let b = gauss_vec(rng, m);
    Problem::new(Objective::least_squares(a, b).unwrap(), penalty).unwrap()
}

/// `f(x)` by explicit loops.
pub fn naive_f(obj: &Objective, x: &[f64]) -> f64 {
    match obj {
        Objective::Quadratic { q, p } => {
            let n = x.len();
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += 0.5 * x[i] * q[(i, j)] * x[j];
                }
                acc += p[i] * x[i];
            }
            acc
        }
        Objective::LeastSquares { a, b } => {
            let mut acc = 0.0;
            for i in 0..a.nrows() {
                let mut r = -b[i];
                for j in 0..a.ncols() {
                    r += a[(i, j)] * x[j];
                }
                acc += 0.5 * r * r;
            }
            acc
        }
    }
}

/// `h(x)` by explicit cases.
pub fn naive_h(pen: &Penalty, x: &[f64]) -> f64 {
    let nnz = x.iter().filter(|&&v| v != 0.0).count();
    let ok = match *pen {
        Penalty::Binary => x.iter().all(|&v| v == 1.0 || v == -1.0),
        Penalty::SparseL0 { rho, .. } => x.iter().all(|&v| v.abs() <= rho),
        Penalty::BinaryCardinality { s } => {
            x.iter().all(|&v| v == 0.0 || v == 1.0) && x.iter().sum::<f64>() == s as f64
        }
        Penalty::SparseCardinality { s } => nnz <= s,
    };
    if !ok {
        return f64::INFINITY;
    }
    match *pen {
        Penalty::SparseL0 { lambda, .. } => lambda * nnz as f64,
        _ => 0.0,
    }
}

pub fn naive_big_f(prob: &Problem, x: &[f64]) -> f64 {
    let h = naive_h(&prob.penalty, x);
    if h.is_finite() {
        naive_f(&prob.objective, x) + h
    } else {
        f64::INFINITY
    }
}

/// `x` with `x[block[j]] = v[j]`.
pub fn splice(x: &[f64], block: &[usize], v: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for (j, &i) in block.iter().enumerate() {
        out[i] = v[j];
    }
    out
}

pub fn sign_vector(pattern: u64, n: usize) -> Vec<f64> {
    (0..n).map(|j| if pattern >> j & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

/// Global minimum of `F` over `{−1,1}ⁿ` and the minimizing patterns within
/// `tol` of it.
pub fn brute_binary(prob: &Problem, tol: f64) -> (f64, Vec<u64>) {
    let n = prob.dim();
    let vals: Vec<f64> = (0..1u64 << n).map(|p| naive_big_f(prob, &sign_vector(p, n))).collect();
    let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let arg = (0..vals.len() as u64).filter(|&p| vals[p as usize] <= best + tol).collect();
    (best, arg)
}

/// Minimizer of the quadratic `½vᵀMv + ⟨c,v⟩` with the coordinates in
/// `fixed` pinned to given values, via nalgebra's LU.
fn solve_free(m: &DMatrix<f64>, c: &DVector<f64>, pinned: &[Option<f64>]) -> Option<Vec<f64>> {
    let k = c.len();
    let free: Vec<usize> = (0..k).filter(|&i| pinned[i].is_none()).collect();
    let mut v: Vec<f64> = pinned.iter().map(|p| p.unwrap_or(0.0)).collect();
    if free.is_empty() {
        return Some(v);
    }
    let nf = free.len();
    let mf = DMatrix::from_fn(nf, nf, |a, b| m[(free[a], free[b])]);
    let rhs = DVector::from_fn(nf, |a, _| {
        let i = free[a];
        let mut r = -c[i];
        for j in 0..k {
            if let Some(val) = pinned[j] {
                r -= m[(i, j)] * val;
            }
        }
        r
    });
    let sol = mf.lu().solve(&rhs)?;
    for (a, &i) in free.iter().enumerate() {
        v[i] = sol[a];
    }
    Some(v)
}

/// Minimum of `½vᵀMv + ⟨c,v⟩` over `[−rho, rho]^k` (or all of `R^k`) by
/// trying every free/upper/lower assignment.
pub fn brute_box_qp(m: &DMatrix<f64>, c: &DVector<f64>, rho: f64) -> Vec<f64> {
    let k = c.len();
    let value = |v: &[f64]| {
        let vv = DVector::from_column_slice(v);
        0.5 * vv.dot(&(m * &vv)) + c.dot(&vv)
    };
    if rho.is_infinite() {
        return solve_free(m, c, &vec![None; k]).expect("nonsingular");
    }
    let mut best = vec![0.0; k];
    let mut best_val = value(&best);
    let mut code = vec![0u8; k];
    loop {
        let pinned: Vec<Option<f64>> = code
            .iter()
            .map(|&s| match s {
                0 => None,
                1 => Some(rho),
                _ => Some(-rho),
            })
            .collect();
        if let Some(v) = solve_free(m, c, &pinned) {
            if v.iter().all(|x| x.abs() <= rho * (1.0 + 1e-12)) {
                let val = value(&v);
                if val < best_val {
                    best_val = val;
                    best = v;
                }
            }
        }
        let mut i = 0;
        while i < k && code[i] == 2 {
            code[i] = 0;
            i += 1;
        }
        if i == k {
            break;
        }
        code[i] += 1;
    }
    best
}
