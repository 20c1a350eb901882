//! The hybrid block method: pick a working set, solve the block subproblem
//! exactly, repeat until the objective stalls.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Objective, Penalty, Problem};
use crate::subsolver::{block_value, solve_subproblem};
use crate::workset::{binomial, CyclicBlocks, SelectionStrategy, Selector};

/// Improvement below this is treated as no change.
pub const KEEP_TOL: f64 = 1e-12;

/// Slack for the per-iteration sufficient-decrease check.
pub const DECREASE_SLACK: f64 = 1e-10;

/// Work limit `C(n,k)·2^k` for exhaustive certification.
pub const CERTIFY_GUARD: u128 = 100_000_000;

const RESYNC_EVERY: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub strategy: SelectionStrategy,
    pub theta: f64,
    pub epsilon: f64,
    pub window: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub assert_invariants: bool,
    /// Record wall-clock seconds per iteration. Off by default so traces are
    /// reproducible byte for byte.
    pub record_time: bool,
}

impl SolverConfig {
    pub fn new(strategy: SelectionStrategy) -> Self {
        SolverConfig {
            strategy,
            theta: 1e-5,
            epsilon: 1e-5,
            window: 50,
            max_iter: 1000,
            seed: 0,
            assert_invariants: false,
            record_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(Error::InvalidParameter(format!("theta must be >= 0, got {}", self.theta)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("stopping window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub objective: f64,
    pub change_norm: f64,
    pub block_size: usize,
    pub block: Vec<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max-iter",
        }
    }
}

/// Row 0 holds the starting point; row `t` the iterate after iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub x: DVector<f64>,
    pub termination: Termination,
    /// Iterations in which the iterate actually moved.
    pub changes: usize,
}

impl SolverTrace {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// True iff `t ≥ max_iter` or the mean of the last `min(t, window)` relative
/// changes is at most `epsilon`.
pub fn check_stop(r_history: &[f64], t: usize, epsilon: f64, window: usize, max_iter: usize) -> bool {
    if t >= max_iter {
        return true;
    }
    let w = t.min(window).min(r_history.len());
    if w == 0 {
        return false;
    }
    let tail = &r_history[r_history.len() - w..];
    tail.iter().sum::<f64>() / w as f64 <= epsilon
}

/// `(F_t − F_{t+1}) / max(|F_t|, 1e-12)`.
pub fn relative_change(f_old: f64, f_new: f64) -> f64 {
    (f_old - f_new) / f_old.abs().max(1e-12)
}

/// Smooth-part state kept in sync with the iterate.
struct Cache {
    f: f64,
    /// `Ax − b` for least squares.
    res: Option<DVector<f64>>,
    /// `∇f(x)`, kept when the objective is quadratic or greedy scoring needs it.
    grad: Option<DVector<f64>>,
}

impl Cache {
    fn build(obj: &Objective, x: &DVector<f64>, want_grad: bool) -> Result<Self> {
        match obj {
            Objective::Quadratic { .. } => {
                Ok(Cache { f: obj.value(x)?, res: None, grad: Some(obj.gradient(x)?) })
            }
            Objective::LeastSquares { a, b } => {
                let res = a * x - b;
                let grad = want_grad.then(|| a.tr_mul(&res));
                Ok(Cache { f: 0.5 * res.norm_squared(), res: Some(res), grad })
            }
        }
    }

    fn grad_block(&self, obj: &Objective, block: &[usize]) -> DVector<f64> {
        if let Some(g) = &self.grad {
            return DVector::from_iterator(block.len(), block.iter().map(|&i| g[i]));
        }
        let (Objective::LeastSquares { a, .. }, Some(res)) = (obj, &self.res) else {
            unreachable!("quadratic objectives always cache the gradient")
        };
        DVector::from_iterator(block.len(), block.iter().map(|&i| a.column(i).dot(res)))
    }

    fn update(&mut self, obj: &Objective, block: &[usize], delta: &[f64], new_f: f64) {
        match obj {
            Objective::Quadratic { q, .. } => {
                let g = self.grad.as_mut().expect("quadratic gradient");
                for (&j, &d) in block.iter().zip(delta) {
                    g.axpy(d, &q.column(j), 1.0);
                }
                self.f = new_f;
            }
            Objective::LeastSquares { a, .. } => {
                let res = self.res.as_mut().expect("residual");
                let mut ad = DVector::zeros(a.nrows());
                for (&j, &d) in block.iter().zip(delta) {
                    ad.axpy(d, &a.column(j), 1.0);
                }
                *res += &ad;
                if let Some(g) = self.grad.as_mut() {
                    *g += a.tr_mul(&ad);
                }
                self.f = 0.5 * res.norm_squared();
            }
        }
    }
}

fn needs_gradient(strategy: SelectionStrategy) -> bool {
    match strategy {
        SelectionStrategy::Greedy { .. } => true,
        SelectionStrategy::Combined { j_greedy, .. } => j_greedy > 0,
        _ => false,
    }
}

struct InvariantChecker {
    enabled: bool,
    binary: bool,
    /// `min(ρ, √(2λ/(θ+L)))` for the ℓ0 penalty.
    magnitude_floor: Option<f64>,
    touched: Vec<bool>,
}

impl InvariantChecker {
    fn new(problem: &Problem, config: &SolverConfig) -> Self {
        let magnitude_floor = match problem.penalty {
            Penalty::SparseL0 { lambda, rho } if config.assert_invariants => {
                let l = problem.objective.lipschitz_estimate();
                Some(rho.min((2.0 * lambda / (config.theta + l)).sqrt()))
            }
            _ => None,
        };
        InvariantChecker {
            enabled: config.assert_invariants,
            binary: matches!(problem.penalty, Penalty::Binary),
            magnitude_floor,
            touched: vec![false; problem.dim()],
        }
    }

    fn check(
        &mut self,
        problem: &Problem,
        theta: f64,
        t: usize,
        f_old: f64,
        f_new: f64,
        change: f64,
        block: &[usize],
        moved: bool,
        x: &DVector<f64>,
    ) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let fail = |msg: String| Err(Error::InvariantViolated(format!("iteration {t}: {msg}")));
        if !problem.penalty.is_feasible(x.as_slice()) {
            return fail("iterate left the feasible set".into());
        }
        if f_new - f_old > -0.5 * theta * change * change + DECREASE_SLACK {
            return fail(format!("sufficient decrease failed: F {f_old} -> {f_new}, change {change}"));
        }
        if self.binary && moved && change < 2.0 - 1e-12 {
            return fail(format!("binary change norm {change} < 2"));
        }
        if moved {
            for &i in block {
                self.touched[i] = true;
            }
        }
        if let Some(floor) = self.magnitude_floor {
            for (i, &xi) in x.iter().enumerate() {
                if self.touched[i] && xi != 0.0 && xi.abs() < floor - 1e-9 {
                    return fail(format!("|x_{i}| = {} below {floor}", xi.abs()));
                }
            }
        }
        Ok(())
    }
}

/// Runs the hybrid block method from `x0`.
pub fn run(problem: &Problem, x0: &DVector<f64>, config: &SolverConfig) -> Result<SolverTrace> {
    config.validate()?;
    let n = problem.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let f0 = problem.eval(x0)?;
    if !f0.is_finite() {
        return Err(Error::Infeasible);
    }
    let obj = &problem.objective;
    let penalty = &problem.penalty;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut selector = Selector::new(problem, config.strategy)?;
    let sweep = selector.sweep_len(n);
    let mut cache = Cache::build(obj, x0, needs_gradient(config.strategy))?;
    let mut checker = InvariantChecker::new(problem, config);
    let start = Instant::now();
    let empty: Vec<f64> = Vec::new();

    let mut x = x0.clone();
    let mut big_f = f0;
    let mut records = vec![IterationRecord {
        t: 0,
        objective: f0,
        change_norm: 0.0,
        block_size: 0,
        block: Vec::new(),
        seconds: 0.0,
    }];
    let mut r_hist = Vec::new();
    let mut changes = 0;
    let mut unchanged_streak: u128 = 0;
    let mut termination = Termination::MaxIter;

    for t in 1..=config.max_iter {
        let g = cache.grad.as_ref().map_or(empty.as_slice(), |g| g.as_slice());
        let block = selector.next(penalty, x.as_slice(), g, &mut rng)?;
        let grad_b = cache.grad_block(obj, &block);
        let red = obj.reduce_with(&x, &block, &grad_b, cache.f);
        let sol = solve_subproblem(penalty, &red, config.theta, x.as_slice())?;
        let keep = block_value(&red, config.theta, penalty, red.x_block.as_slice());

        let f_old = big_f;
        let mut change = 0.0;
        let moved = sol.value < keep - KEEP_TOL;
        if moved {
            let delta: Vec<f64> = block.iter().zip(&sol.v).map(|(&i, &v)| v - x[i]).collect();
            change = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            for (&i, &v) in block.iter().zip(&sol.v) {
                x[i] = v;
            }
            let new_f = red.c0 + red.smooth_value(&sol.v);
            cache.update(obj, &block, &delta, new_f);
            if t % RESYNC_EVERY == 0 {
                cache = Cache::build(obj, &x, cache.grad.is_some())?;
            }
            big_f = cache.f + penalty.value(x.as_slice());
            changes += 1;
            unchanged_streak = 0;
        } else {
            unchanged_streak += 1;
        }
        checker.check(problem, config.theta, t, f_old, big_f, change, &block, moved, &x)?;

        records.push(IterationRecord {
            t,
            objective: big_f,
            change_norm: change,
            block_size: block.len(),
            block,
            seconds: if config.record_time { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        r_hist.push(relative_change(f_old, big_f));

        let converged = match sweep {
            // a full sweep over every block without a move is a certificate
            Some(len) => unchanged_streak >= len,
            None => check_stop(&r_hist, t, config.epsilon, config.window, usize::MAX),
        };
        if converged {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(SolverTrace { records, x, termination, changes })
}

/// How "no block improves x" is decided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieRule {
    /// A block violates iff its exact solution lowers `F` by more than `tol`.
    Improvement { tol: f64 },
    /// A block violates iff its exact solution (with the smallest-pattern
    /// tie-break) differs from `x_B`. Co-optimal alternatives count as
    /// violations, so only the canonical minimizer of each block passes.
    FixedPoint,
}

impl Default for TieRule {
    fn default() -> Self {
        TieRule::Improvement { tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub certified: bool,
    pub violating_block: Option<Vec<usize>>,
    /// `F(x) − F(x with the block replaced)` for the violating block.
    pub improvement: f64,
    pub blocks_checked: u128,
}

/// Checks every `k`-block with the exact `θ = 0` subsolver.
pub fn certify_block_k(problem: &Problem, x: &DVector<f64>, k: usize, rule: TieRule) -> Result<Certification> {
    let n = problem.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("block size {k} must be in [1, {n}]")));
    }
    let work = binomial(n, k).saturating_mul(1u128 << k.min(127));
    if work > CERTIFY_GUARD {
        return Err(Error::GuardExceeded { work, limit: CERTIFY_GUARD });
    }
    if !problem.penalty.is_feasible(x.as_slice()) {
        return Err(Error::Infeasible);
    }
    let obj = &problem.objective;
    let penalty = &problem.penalty;
    let grad = obj.gradient(x)?;
    let f = obj.value(x)?;
    let total = binomial(n, k);
    let mut blocks = CyclicBlocks::new(n, k)?;
    for checked in 1..=total {
        let block = blocks.next_block();
        let grad_b = DVector::from_iterator(k, block.iter().map(|&i| grad[i]));
        let red = obj.reduce_with(x, &block, &grad_b, f);
        let sol = solve_subproblem(penalty, &red, 0.0, x.as_slice())?;
        let keep = block_value(&red, 0.0, penalty, red.x_block.as_slice());
        let improvement = keep - sol.value;
        let violated = match rule {
            TieRule::Improvement { tol } => improvement > tol,
            TieRule::FixedPoint => sol
                .v
                .iter()
                .zip(red.x_block.iter())
                .any(|(a, b)| (a - b).abs() > 1e-9),
        };
        if violated {
            return Ok(Certification {
                certified: false,
                violating_block: Some(block),
                improvement,
                blocks_checked: checked,
            });
        }
    }
    Ok(Certification { certified: true, violating_block: None, improvement: 0.0, blocks_checked: total })
}

/// A feasible random starting point: signs of `σ·N(0,1)` for binary,
/// `σ·N(0,1)` (clipped to the box) for ℓ0, and `1e-12·N(0,1)` projected onto
/// the constraint set for the cardinality penalties.
pub fn init_point<R: Rng + ?Sized>(penalty: &Penalty, n: usize, sigma: f64, rng: &mut R) -> DVector<f64> {
    let mut gauss = |scale: f64| -> Vec<f64> {
        (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let v = match *penalty {
        Penalty::Binary => gauss(sigma).into_iter().map(|a| if a >= 0.0 { 1.0 } else { -1.0 }).collect(),
        Penalty::SparseL0 { rho, .. } => gauss(sigma).into_iter().map(|a| a.clamp(-rho, rho)).collect(),
        Penalty::BinaryCardinality { .. } | Penalty::SparseCardinality { .. } => {
            penalty.prox(&gauss(1e-12), 1.0).expect("positive weight")
        }
    };
    DVector::from_vec(v)
}
