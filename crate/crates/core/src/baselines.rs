//! Reference methods: proximal gradient (PPA), its accelerated variant with
//! restarts (APPA), and orthogonal matching pursuit.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::driver::{check_stop, relative_change, IterationRecord, SolverTrace, Termination};
use crate::error::{Error, Result};
use crate::model::{Objective, Penalty, Problem};

/// The nonsmooth part as the prox-gradient methods see it.
pub trait Regularizer {
    fn value(&self, x: &[f64]) -> f64;
    /// `argmin_x ½t‖x − a‖² + h(x)`.
    fn prox(&self, a: &[f64], t: f64) -> Result<Vec<f64>>;
}

impl Regularizer for Penalty {
    fn value(&self, x: &[f64]) -> f64 {
        Penalty::value(self, x)
    }

    fn prox(&self, a: &[f64], t: f64) -> Result<Vec<f64>> {
        Penalty::prox(self, a, t)
    }
}

/// Indicator of `[−rho, rho]ⁿ`; a convex stand-in for the binary set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxIndicator {
    pub rho: f64,
}

impl Regularizer for BoxIndicator {
    fn value(&self, x: &[f64]) -> f64 {
        if x.iter().all(|v| v.abs() <= self.rho) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, a: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(a.iter().map(|v| v.clamp(-self.rho, self.rho)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub max_iter: usize,
    pub epsilon: f64,
    pub window: usize,
    /// Step size; `None` means `1/L` with `L` from power iteration.
    pub step: Option<f64>,
    pub record_time: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { max_iter: 1000, epsilon: 1e-5, window: 50, step: None, record_time: false }
    }
}

impl BaselineConfig {
    fn step_for(&self, obj: &Objective) -> Result<f64> {
        match self.step {
            Some(s) if s > 0.0 && s.is_finite() => Ok(s),
            Some(s) => Err(Error::InvalidParameter(format!("step must be positive, got {s}"))),
            None => Ok(1.0 / obj.lipschitz_estimate()),
        }
    }
}

fn composite(obj: &Objective, reg: &impl Regularizer, x: &DVector<f64>) -> Result<f64> {
    let h = reg.value(x.as_slice());
    Ok(if h.is_finite() { obj.value(x)? + h } else { f64::INFINITY })
}

fn prox_step(obj: &Objective, reg: &impl Regularizer, y: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
    let g = obj.gradient(y)?;
    let a = y - g * step;
    Ok(DVector::from_vec(reg.prox(a.as_slice(), 1.0 / step)?))
}

struct Recorder {
    records: Vec<IterationRecord>,
    r_hist: Vec<f64>,
    changes: usize,
    start: Instant,
    record_time: bool,
    n: usize,
}

impl Recorder {
    fn new(f0: f64, n: usize, record_time: bool) -> Self {
        let first = IterationRecord { t: 0, objective: f0, change_norm: 0.0, block_size: 0, block: Vec::new(), seconds: 0.0 };
        Recorder { records: vec![first], r_hist: Vec::new(), changes: 0, start: Instant::now(), record_time, n }
    }

    /// Records iteration `t` and returns whether the stopping rule fires.
    fn push(&mut self, t: usize, f_old: f64, f_new: f64, change: f64, cfg: &BaselineConfig) -> bool {
        if change > 0.0 {
            self.changes += 1;
        }
        self.records.push(IterationRecord {
            t,
            objective: f_new,
            change_norm: change,
            block_size: self.n,
            block: Vec::new(),
            seconds: if self.record_time { self.start.elapsed().as_secs_f64() } else { 0.0 },
        });
        self.r_hist.push(relative_change(f_old, f_new));
        check_stop(&self.r_hist, t, cfg.epsilon, cfg.window, usize::MAX)
    }

    fn finish(self, x: DVector<f64>, converged: bool) -> SolverTrace {
        let termination = if converged { Termination::Converged } else { Termination::MaxIter };
        SolverTrace { records: self.records, x, termination, changes: self.changes }
    }
}

fn start(obj: &Objective, reg: &impl Regularizer, x0: &DVector<f64>) -> Result<f64> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: x0.len() });
    }
    let f0 = composite(obj, reg, x0)?;
    if !f0.is_finite() {
        return Err(Error::Infeasible);
    }
    Ok(f0)
}

/// `x ← prox_{γh}(x − γ∇f(x))` under the hybrid method's stopping rule.
pub fn ppa(problem: &Problem, x0: &DVector<f64>, config: &BaselineConfig) -> Result<SolverTrace> {
    ppa_with(&problem.objective, &problem.penalty, x0, config)
}

pub fn ppa_with(
    obj: &Objective,
    reg: &impl Regularizer,
    x0: &DVector<f64>,
    config: &BaselineConfig,
) -> Result<SolverTrace> {
    let mut f = start(obj, reg, x0)?;
    let step = config.step_for(obj)?;
    let mut rec = Recorder::new(f, x0.len(), config.record_time);
    let mut x = x0.clone();
    for t in 1..=config.max_iter {
        let z = prox_step(obj, reg, &x, step)?;
        let change = (&z - &x).norm();
        let f_new = composite(obj, reg, &z)?;
        x = z;
        let stop = rec.push(t, f, f_new, change, config);
        f = f_new;
        if stop {
            return Ok(rec.finish(x, true));
        }
    }
    Ok(rec.finish(x, false))
}

/// Prox-gradient with Nesterov extrapolation `y = x + ((t−1)/(t+2))(x − x_prev)`.
/// When the extrapolated step would raise `F`, momentum restarts and a plain
/// step from `x` is taken instead, so `F` never increases.
pub fn appa(problem: &Problem, x0: &DVector<f64>, config: &BaselineConfig) -> Result<SolverTrace> {
    appa_with(&problem.objective, &problem.penalty, x0, config)
}

pub fn appa_with(
    obj: &Objective,
    reg: &impl Regularizer,
    x0: &DVector<f64>,
    config: &BaselineConfig,
) -> Result<SolverTrace> {
    let mut f = start(obj, reg, x0)?;
    let step = config.step_for(obj)?;
    let mut rec = Recorder::new(f, x0.len(), config.record_time);
    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut m = 1usize;
    for t in 1..=config.max_iter {
        let beta = (m as f64 - 1.0) / (m as f64 + 2.0);
        let y = &x + (&x - &x_prev) * beta;
        let mut z = prox_step(obj, reg, &y, step)?;
        let mut f_new = composite(obj, reg, &z)?;
        m += 1;
        if !(f_new <= f) {
            z = prox_step(obj, reg, &x, step)?;
            f_new = composite(obj, reg, &z)?;
            m = 1;
        }
        let change = (&z - &x).norm();
        x_prev = std::mem::replace(&mut x, z);
        let stop = rec.push(t, f, f_new, change, config);
        f = f_new;
        if stop {
            return Ok(rec.finish(x, true));
        }
    }
    Ok(rec.finish(x, false))
}

/// Orthogonal matching pursuit: `s` greedy picks of the column most
/// correlated with the residual (ties to the lower index), each followed by
/// a least-squares refit on the active set. Stops early on a zero residual.
pub fn omp(a: &DMatrix<f64>, b: &DVector<f64>, s: usize) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    if s == 0 || s > m.min(n) {
        return Err(Error::InvalidParameter(format!("sparsity {s} must be in [1, {}]", m.min(n))));
    }
    let mut active: Vec<usize> = Vec::with_capacity(s);
    let mut in_active = vec![false; n];
    let mut x = DVector::zeros(n);
    let mut res = b.clone();
    for _ in 0..s {
        let corr = a.tr_mul(&res);
        let mut best = None;
        let mut best_val = 0.0;
        for i in 0..n {
            if !in_active[i] && corr[i].abs() > best_val {
                best_val = corr[i].abs();
                best = Some(i);
            }
        }
        let Some(j) = best else { break };
        active.push(j);
        in_active[j] = true;
        let sub = a.select_columns(&active);
        let z = least_squares(sub.clone(), b);
        x.fill(0.0);
        for (c, &i) in active.iter().enumerate() {
            x[i] = z[c];
        }
        res = b - sub * z;
    }
    Ok(x)
}

/// Least-squares fit through the normal equations; falls back to the
/// minimum-norm SVD solution when the columns are (numerically) dependent.
fn least_squares(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let dim = a.nrows().max(a.ncols()) as f64;
    if let Some(chol) = a.tr_mul(&a).cholesky() {
        let l = chol.l_dirty();
        let diag = l.diagonal().map(f64::abs);
        // squared conditioning of the Gram matrix stays well inside f64 range
        if diag.min() > diag.max() * 1e-6 {
            return chol.solve(&a.tr_mul(b));
        }
    }
    let svd = a.svd(true, true);
    let top = svd.singular_values.max();
    svd.solve(b, top * dim * f64::EPSILON).expect("both factors computed")
}

/// Indices of the nonzero entries.
pub fn support(x: &DVector<f64>) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omp_identity() {
        let x = omp(&DMatrix::identity(3, 3), &DVector::from_vec(vec![0.0, 3.0, 0.0]), 1).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 3.0, 0.0]);
    }

    #[test]
    fn omp_full_rank_square_is_exact() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let truth = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = omp(&a, &(&a * &truth), 3).unwrap();
        assert!((x - truth).norm() < 1e-12);
    }

    #[test]
    fn omp_rejects_bad_sparsity() {
        let a = DMatrix::identity(3, 3);
        let b = DVector::zeros(3);
        assert!(omp(&a, &b, 0).is_err());
        assert!(omp(&a, &b, 4).is_err());
    }

    #[test]
    fn omp_stops_on_zero_residual() {
        let x = omp(&DMatrix::identity(3, 3), &DVector::from_vec(vec![0.0, 3.0, 0.0]), 3).unwrap();
        assert_eq!(support(&x), vec![1]);
    }

    #[test]
    fn ppa_flat_objective_is_one_prox() {
        let obj = Objective::quadratic(DMatrix::zeros(3, 3), DVector::zeros(3)).unwrap();
        let pen = Penalty::sparse_l0(0.5, f64::INFINITY).unwrap();
        let prob = Problem::new(obj, pen).unwrap();
        let x0 = DVector::from_vec(vec![2.0, 0.5, -3.0]);
        let cfg = BaselineConfig { step: Some(1.0), ..Default::default() };
        let trace = ppa(&prob, &x0, &cfg).unwrap();
        assert_eq!(trace.x.as_slice(), &[2.0, 0.0, -3.0]);
        assert_eq!(trace.changes, 1);
    }

    #[test]
    fn ppa_one_dimensional_fixed_point() {
        let obj = Objective::quadratic(DMatrix::identity(1, 1), DVector::from_vec(vec![-2.0])).unwrap();
        let prob = Problem::new(obj, Penalty::sparse_l0(0.01, f64::INFINITY).unwrap()).unwrap();
        let trace = ppa(&prob, &DVector::from_vec(vec![0.3]), &BaselineConfig::default()).unwrap();
        assert!((trace.x[0] - 2.0).abs() < 1e-6, "{}", trace.x[0]);
    }

    #[test]
    fn appa_first_step_matches_ppa() {
        let obj = Objective::quadratic(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![-1.0, 0.3]),
        )
        .unwrap();
        let prob = Problem::new(obj, Penalty::sparse_l0(0.05, f64::INFINITY).unwrap()).unwrap();
        let x0 = DVector::from_vec(vec![0.1, 0.2]);
        let one = BaselineConfig { max_iter: 1, ..Default::default() };
        assert_eq!(ppa(&prob, &x0, &one).unwrap().x, appa(&prob, &x0, &one).unwrap().x);
    }
}
