//! Decidable checks for basic, L- and block-k stationarity, and the
//! exhaustive census of small instances.

use nalgebra::DVector;

use crate::driver::{certify_block_k, TieRule};
use crate::error::{Error, Result};
use crate::linalg::{box_qp, cholesky_in_place, cholesky_solve};
use crate::model::{Penalty, Problem};
use crate::subsolver::snap_and_value;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const BLOCK_TOL: f64 = 1e-9;
pub const CENSUS_MAX_N: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Coordinate `index` is not a fixed point of the restricted update.
    Basic { index: usize, margin: f64 },
    /// Coordinate `index` fails the prox fixed-point test.
    L { index: usize, margin: f64 },
    /// Block `block` improves `F` (by `margin`) or moves under the exact update.
    Block { k: usize, block: Vec<usize>, margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub is_basic: bool,
    pub is_l: bool,
    /// `(k, passes)` for each checked block size.
    pub block_k: Vec<(usize, bool)>,
    pub violations: Vec<Violation>,
}

fn require_hierarchy_penalty(problem: &Problem) -> Result<()> {
    match problem.penalty {
        Penalty::Binary | Penalty::SparseL0 { .. } => Ok(()),
        _ => Err(Error::WrongPenalty { expected: "binary or l0" }),
    }
}

fn basic_violations(problem: &Problem, x: &DVector<f64>, l: f64, tol: f64) -> Result<Vec<Violation>> {
    require_hierarchy_penalty(problem)?;
    if !problem.penalty.is_feasible(x.as_slice()) {
        return Err(Error::Infeasible);
    }
    let Penalty::SparseL0 { rho, .. } = problem.penalty else {
        return Ok(Vec::new());
    };
    let g = problem.objective.gradient(x)?;
    let mut out = Vec::new();
    for i in 0..x.len() {
        if x[i] == 0.0 {
            continue;
        }
        let target = (x[i] - g[i] / l).clamp(-rho, rho);
        let margin = (target - x[i]).abs();
        if margin > tol * x[i].abs().max(1.0) {
            out.push(Violation::Basic { index: i, margin });
        }
    }
    Ok(out)
}

fn l_violations(problem: &Problem, x: &DVector<f64>, l: f64, tol: f64) -> Result<Vec<Violation>> {
    require_hierarchy_penalty(problem)?;
    if !problem.penalty.is_feasible(x.as_slice()) {
        return Err(Error::Infeasible);
    }
    let g = problem.objective.gradient(x)?;
    let mut out = Vec::new();
    match problem.penalty {
        Penalty::Binary => {
            for i in 0..x.len() {
                // strict: a tie in the sign step is not a unique fixed point
                let margin = x[i] * (x[i] - g[i] / l);
                if !(margin > tol) {
                    out.push(Violation::L { index: i, margin });
                }
            }
        }
        Penalty::SparseL0 { lambda, rho } => {
            let tau = 2.0 * lambda / l;
            let band = tol * tau.max(1.0);
            for i in 0..x.len() {
                let a = x[i] - g[i] / l;
                let c = a.clamp(-rho, rho);
                let gap = c * (2.0 * a - c) - tau;
                let ok = if x[i] == 0.0 {
                    gap < -band
                } else {
                    gap > band && (c - x[i]).abs() <= tol * x[i].abs().max(1.0)
                };
                if !ok {
                    out.push(Violation::L { index: i, margin: gap });
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(out)
}

/// Binary: every sign vector. ℓ0: `x` restricted to its support is a fixed
/// point of the projected gradient step.
pub fn is_basic_stationary(problem: &Problem, x: &DVector<f64>, tol: f64) -> Result<bool> {
    let l = problem.objective.lipschitz_sharp();
    Ok(basic_violations(problem, x, l, tol)?.is_empty())
}

/// `x` is the unique minimizer of the prox step with weight `L` (the sharp
/// spectral bound). Prox ties count as failures.
pub fn is_l_stationary(problem: &Problem, x: &DVector<f64>, tol: f64) -> Result<bool> {
    let l = problem.objective.lipschitz_sharp();
    is_l_stationary_with(problem, x, l, tol)
}

pub fn is_l_stationary_with(problem: &Problem, x: &DVector<f64>, l: f64, tol: f64) -> Result<bool> {
    if !(l > 0.0) {
        return Err(Error::InvalidParameter(format!("L must be positive, got {l}")));
    }
    Ok(l_violations(problem, x, l, tol)?.is_empty())
}

/// No block of size `k` improves `F` by more than `tol`.
pub fn is_block_k_stationary(problem: &Problem, x: &DVector<f64>, k: usize, tol: f64) -> Result<bool> {
    Ok(certify_block_k(problem, x, k, TieRule::Improvement { tol })?.certified)
}

/// Classifies `x` against the whole hierarchy up to block size `k_max`.
pub fn report(problem: &Problem, x: &DVector<f64>, k_max: usize, rule: TieRule) -> Result<StationarityReport> {
    let l = problem.objective.lipschitz_sharp();
    let mut violations = basic_violations(problem, x, l, DEFAULT_TOL)?;
    let is_basic = violations.is_empty();
    let lv = l_violations(problem, x, l, DEFAULT_TOL)?;
    let is_l = lv.is_empty();
    violations.extend(lv);
    let mut block_k = Vec::new();
    for k in 1..=k_max.min(problem.dim()) {
        let cert = certify_block_k(problem, x, k, rule)?;
        if let Some(block) = cert.violating_block {
            violations.push(Violation::Block { k, block, margin: cert.improvement });
        }
        block_k.push((k, cert.certified));
    }
    Ok(StationarityReport { is_basic, is_l, block_k, violations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusCandidate {
    /// Binary: bit j set iff `x_j = −1`. ℓ0: the support enumerated.
    pub pattern: u64,
    pub x: DVector<f64>,
    pub value: f64,
    pub basic: bool,
    pub l_stationary: bool,
    /// `block[k-1]` is block-k stationarity.
    pub block: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusResult {
    pub candidates: Vec<CensusCandidate>,
    /// `[basic, L, block-1, …, block-n]`.
    pub counts: Vec<usize>,
    pub global_value: f64,
    /// Supports whose restricted problem is singular (minimum unattained).
    pub skipped: Vec<u64>,
}

/// Enumerates the `2ⁿ` candidate points and classifies each one. Block
/// membership uses the fixed-point rule.
pub fn census(problem: &Problem) -> Result<CensusResult> {
    census_with(problem, TieRule::FixedPoint)
}

pub fn census_with(problem: &Problem, rule: TieRule) -> Result<CensusResult> {
    require_hierarchy_penalty(problem)?;
    let n = problem.dim();
    if n > CENSUS_MAX_N {
        return Err(Error::InvalidParameter(format!("census needs n <= {CENSUS_MAX_N}, got {n}")));
    }
    let (points, skipped) = census_points(problem)?;
    let l = problem.objective.lipschitz_sharp();
    let mut counts = vec![0usize; n + 2];
    let mut candidates = Vec::with_capacity(points.len());
    let mut global_value = f64::INFINITY;
    for (pattern, x) in points {
        let value = problem.eval(&x)?;
        global_value = global_value.min(value);
        let basic = basic_violations(problem, &x, l, DEFAULT_TOL)?.is_empty();
        let l_stationary = l_violations(problem, &x, l, DEFAULT_TOL)?.is_empty();
        let mut block = Vec::with_capacity(n);
        for k in 1..=n {
            block.push(certify_block_k(problem, &x, k, rule)?.certified);
        }
        counts[0] += basic as usize;
        counts[1] += l_stationary as usize;
        for (k, &b) in block.iter().enumerate() {
            counts[k + 2] += b as usize;
        }
        candidates.push(CensusCandidate { pattern, x, value, basic, l_stationary, block });
    }
    Ok(CensusResult { candidates, counts, global_value, skipped })
}

/// Sign vectors, or one restricted minimizer per support.
fn census_points(problem: &Problem) -> Result<(Vec<(u64, DVector<f64>)>, Vec<u64>)> {
    let n = problem.dim();
    let total = 1u64 << n;
    if problem.penalty == Penalty::Binary {
        let pts = (0..total)
            .map(|p| (p, DVector::from_fn(n, |j, _| if p >> j & 1 == 1 { -1.0 } else { 1.0 })))
            .collect();
        return Ok((pts, Vec::new()));
    }
    let Penalty::SparseL0 { lambda, rho } = problem.penalty else { unreachable!() };
    let all: Vec<usize> = (0..n).collect();
    let red = problem.objective.reduce_to_block(&DVector::zeros(n), &all)?;
    let h = red.h.as_slice();
    let mut pts = Vec::with_capacity(total as usize);
    let mut skipped = Vec::new();
    for mask in 0..total {
        let idx: Vec<usize> = (0..n).filter(|&j| mask >> j & 1 == 1).collect();
        let s = idx.len();
        let mut m: Vec<f64> = Vec::with_capacity(s * s);
        for &c in &idx {
            for &r in &idx {
                m.push(h[r + c * n]);
            }
        }
        let sol = if s == 0 {
            Some(Vec::new())
        } else if rho.is_infinite() {
            let mut rhs: Vec<f64> = idx.iter().map(|&j| -red.r[j]).collect();
            if cholesky_in_place(&mut m, s) {
                cholesky_solve(&m, s, &mut rhs);
                Some(rhs)
            } else {
                None
            }
        } else {
            let q: Vec<f64> = idx.iter().map(|&j| red.r[j]).collect();
            box_qp(&m, &q, s, rho, 1e-10)
        };
        let Some(sol) = sol else {
            skipped.push(mask);
            continue;
        };
        let mut v = vec![0.0; n];
        for (a, &j) in idx.iter().enumerate() {
            v[j] = sol[a];
        }
        snap_and_value(&red, 0.0, lambda, &mut v);
        pts.push((mask, DVector::from_vec(v)));
    }
    Ok((pts, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Objective;
    use nalgebra::DMatrix;

    fn running_example(penalty: Penalty) -> Problem {
        let c = DVector::from_fn(6, |i, _| (i + 1) as f64);
        let q = &c * c.transpose() + DMatrix::identity(6, 6);
        Problem::new(Objective::quadratic(q, DVector::from_element(6, 1.0)).unwrap(), penalty).unwrap()
    }

    #[test]
    fn table_binary_row() {
        let res = census(&running_example(Penalty::Binary)).unwrap();
        assert_eq!(res.counts, vec![64, 56, 9, 3, 1, 1, 1, 1]);
    }

    #[test]
    fn table_sparse_row() {
        let res = census(&running_example(Penalty::sparse_l0(0.01, f64::INFINITY).unwrap())).unwrap();
        assert_eq!(res.counts, vec![64, 58, 11, 2, 1, 1, 1, 1]);
        assert!(res.skipped.is_empty());
    }

    #[test]
    fn l_stationary_zero_coordinate_example() {
        // λ=0.5, L=1, x=0, |∇f| = 0.9 → (0.9)² = 0.81 ≤ 1
        let obj = Objective::quadratic(DMatrix::identity(1, 1), DVector::from_vec(vec![0.9])).unwrap();
        let prob = Problem::new(obj, Penalty::sparse_l0(0.5, f64::INFINITY).unwrap()).unwrap();
        assert!(is_l_stationary(&prob, &DVector::zeros(1), DEFAULT_TOL).unwrap());
        // a nonzero with nonzero gradient is not a fixed point
        assert!(!is_l_stationary(&prob, &DVector::from_vec(vec![2.0]), DEFAULT_TOL).unwrap());
    }

    #[test]
    fn basic_examples() {
        let prob = running_example(Penalty::Binary);
        assert!(is_basic_stationary(&prob, &DVector::from_element(6, -1.0), DEFAULT_TOL).unwrap());
        let obj = Objective::quadratic(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, 3.0])).unwrap();
        let prob = Problem::new(obj, Penalty::sparse_l0(0.1, f64::INFINITY).unwrap()).unwrap();
        assert!(is_basic_stationary(&prob, &DVector::from_vec(vec![1.0, 0.0]), DEFAULT_TOL).unwrap());
        assert!(!is_basic_stationary(&prob, &DVector::from_vec(vec![2.0, 0.0]), DEFAULT_TOL).unwrap());
    }

    #[test]
    fn report_nests() {
        let prob = running_example(Penalty::Binary);
        let res = census(&prob).unwrap();
        let best = res.candidates.iter().find(|c| c.block[5]).unwrap();
        let rep = report(&prob, &best.x, 6, TieRule::FixedPoint).unwrap();
        assert!(rep.is_basic && rep.is_l);
        assert!(rep.block_k.iter().all(|&(_, b)| b));
        assert!(rep.violations.is_empty());
    }

    #[test]
    fn cardinality_penalties_are_rejected() {
        let prob = running_example(Penalty::BinaryCardinality { s: 2 });
        assert!(census(&prob).is_err());
    }
}
