//! Problem instances: a smooth convex quadratic part plus a piecewise
//! separable (or cardinality) penalty.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smooth part `f` of the composite objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `f(x) = ½ xᵀQx + ⟨x, p⟩`; `q` is stored symmetrized.
    Quadratic { q: DMatrix<f64>, p: DVector<f64> },
    /// `f(x) = ½ ‖Ax − b‖²`.
    LeastSquares { a: DMatrix<f64>, b: DVector<f64> },
}

impl Objective {
    pub fn quadratic(q: DMatrix<f64>, p: DVector<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: q.ncols() });
        }
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
        let q = (&q + q.transpose()) * 0.5;
        Ok(Objective::Quadratic { q, p })
    }

    pub fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        Ok(Objective::LeastSquares { a, b })
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic { p, .. } => p.len(),
            Objective::LeastSquares { a, .. } => a.ncols(),
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            Objective::Quadratic { q, p } => 0.5 * x.dot(&(q * x)) + x.dot(p),
            Objective::LeastSquares { a, b } => 0.5 * (a * x - b).norm_squared(),
        })
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(match self {
            Objective::Quadratic { q, p } => q * x + p,
            Objective::LeastSquares { a, b } => a.tr_mul(&(a * x - b)),
        })
    }

    /// The Hessian diagonal: `Q_ii`, or `‖A_{·,i}‖²` for least squares.
    pub fn hessian_diagonal(&self) -> DVector<f64> {
        match self {
            Objective::Quadratic { q, .. } => q.diagonal(),
            Objective::LeastSquares { a, .. } => {
                DVector::from_iterator(a.ncols(), a.column_iter().map(|c| c.norm_squared()))
            }
        }
    }

    /// Returns `(Q, p, c)` with `f(x) = ½ xᵀQx + ⟨x,p⟩ + c`.
    pub fn as_quadratic(&self) -> (DMatrix<f64>, DVector<f64>, f64) {
        match self {
            Objective::Quadratic { q, p } => (q.clone(), p.clone(), 0.0),
            Objective::LeastSquares { a, b } => {
                (a.tr_mul(a), -a.tr_mul(b), 0.5 * b.norm_squared())
            }
        }
    }

    /// Upper bound on the gradient Lipschitz constant, from power iteration on
    /// the Hessian with a 1.01 safety factor. Never below 1e-12.
    pub fn lipschitz_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1e-12;
        }
        // deterministic start, not orthogonal to any coordinate axis
        let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i * 7919) % 101) as f64 / 101.0);
        v /= v.norm();
        let mut estimate = 0.0;
        for _ in 0..200 {
            let w = self.hessian_apply(&v);
            let rayleigh = v.dot(&w).abs();
            let norm = w.norm();
            if norm == 0.0 {
                break;
            }
            v = w / norm;
            let prev = estimate;
            // ‖Hv‖ with unit v bounds |λ| from below as well and converges faster
            estimate = norm.max(rayleigh);
            if prev > 0.0 && (estimate - prev).abs() <= 1e-10 * estimate {
                break;
            }
        }
        (1.01 * estimate).max(1e-12)
    }

    /// The spectral norm of the Hessian, computed by a full eigen/singular
    /// value decomposition. Intended for small instances.
    pub fn lipschitz_sharp(&self) -> f64 {
        let l = match self {
            Objective::Quadratic { q, .. } => q
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0f64, |m, e| m.max(e.abs())),
            Objective::LeastSquares { a, .. } => {
                let s = a.clone().singular_values();
                let top = s.iter().fold(0.0f64, |m, e| m.max(*e));
                top * top
            }
        };
        l.max(1e-12)
    }

    fn hessian_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Objective::Quadratic { q, .. } => q * v,
            Objective::LeastSquares { a, .. } => a.tr_mul(&(a * v)),
        }
    }

    /// `H = ∇²f` restricted to `block × block`.
    pub(crate) fn block_hessian(&self, block: &[usize]) -> DMatrix<f64> {
        let k = block.len();
        match self {
            Objective::Quadratic { q, .. } => DMatrix::from_fn(k, k, |i, j| q[(block[i], block[j])]),
            Objective::LeastSquares { a, .. } => {
                let mut h = DMatrix::zeros(k, k);
                for j in 0..k {
                    let cj = a.column(block[j]);
                    for i in 0..=j {
                        let v = a.column(block[i]).dot(&cj);
                        h[(i, j)] = v;
                        h[(j, i)] = v;
                    }
                }
                h
            }
        }
    }

    /// Builds the reduced quadratic from an already known `f(x)` and
    /// `∇f(x)_B`, so callers with cached state pay only for `H`.
    pub(crate) fn reduce_with(
        &self,
        x: &DVector<f64>,
        block: &[usize],
        grad_block: &DVector<f64>,
        f_value: f64,
    ) -> ReducedQuadratic {
        let h = self.block_hessian(block);
        let x_block = DVector::from_iterator(block.len(), block.iter().map(|&i| x[i]));
        let r = grad_block - &h * &x_block;
        let c0 = f_value - 0.5 * x_block.dot(&(&h * &x_block)) - x_block.dot(&r);
        ReducedQuadratic { h, r, c0, x_block, block: block.to_vec() }
    }

    /// Restricts `f` to the coordinates in `block` with the others frozen at `x`.
    pub fn reduce_to_block(&self, x: &DVector<f64>, block: &[usize]) -> Result<ReducedQuadratic> {
        self.check_dim(x)?;
        validate_block(block, self.dim())?;
        let (grad_block, f_value) = match self {
            Objective::Quadratic { q, p } => {
                let qx = q * x;
                let g = DVector::from_iterator(block.len(), block.iter().map(|&i| qx[i] + p[i]));
                (g, 0.5 * x.dot(&qx) + x.dot(p))
            }
            Objective::LeastSquares { a, b } => {
                let res = a * x - b;
                let g = DVector::from_iterator(
                    block.len(),
                    block.iter().map(|&i| a.column(i).dot(&res)),
                );
                (g, 0.5 * res.norm_squared())
            }
        };
        Ok(self.reduce_with(x, block, &grad_block, f_value))
    }
}

pub(crate) fn validate_block(block: &[usize], n: usize) -> Result<()> {
    if block.is_empty() {
        return Err(Error::InvalidBlock("empty working set".into()));
    }
    let mut seen = vec![false; n];
    for &i in block {
        if i >= n {
            return Err(Error::InvalidBlock(format!("index {i} out of range for n={n}")));
        }
        if seen[i] {
            return Err(Error::InvalidBlock(format!("duplicate index {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// The nonsmooth part `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// Indicator of `{−1, 1}ⁿ`.
    Binary,
    /// `λ‖x‖₀` plus the indicator of `[−ρ, ρ]ⁿ`; `rho` may be infinite.
    SparseL0 { lambda: f64, rho: f64 },
    /// Indicator of `{x ∈ {0,1}ⁿ : Σx = s}`.
    BinaryCardinality { s: usize },
    /// Indicator of `{x : ‖x‖₀ ≤ s}`.
    SparseCardinality { s: usize },
}

impl Penalty {
    pub fn sparse_l0(lambda: f64, rho: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        Ok(Penalty::SparseL0 { lambda, rho })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Penalty::Binary => "binary",
            Penalty::SparseL0 { .. } => "l0",
            Penalty::BinaryCardinality { .. } => "card-binary",
            Penalty::SparseCardinality { .. } => "card-sparse",
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Penalty::Binary => Ok(()),
            Penalty::SparseL0 { lambda, rho } => Penalty::sparse_l0(lambda, rho).map(|_| ()),
            Penalty::BinaryCardinality { s } | Penalty::SparseCardinality { s } => {
                if s > n {
                    Err(Error::InvalidParameter(format!("cardinality s={s} exceeds n={n}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `h(x)`; `+∞` exactly when `x` is infeasible.
    pub fn value(&self, x: &[f64]) -> f64 {
        if self.is_feasible(x) {
            match *self {
                Penalty::SparseL0 { lambda, .. } => lambda * count_nonzero(x) as f64,
                _ => 0.0,
            }
        } else {
            f64::INFINITY
        }
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        match *self {
            Penalty::Binary => x.iter().all(|&v| v == 1.0 || v == -1.0),
            Penalty::SparseL0 { rho, .. } => x.iter().all(|&v| v.is_finite() && v.abs() <= rho),
            Penalty::BinaryCardinality { s } => {
                x.iter().all(|&v| v == 0.0 || v == 1.0)
                    && x.iter().filter(|&&v| v == 1.0).count() == s
            }
            Penalty::SparseCardinality { s } => {
                x.iter().all(|v| v.is_finite()) && count_nonzero(x) <= s
            }
        }
    }

    /// `argmin_x ½t‖x − a‖² + h(x)`.
    ///
    /// Threshold ties go to zero, `sign(0) = +1`, and the cardinality
    /// variants break magnitude ties toward the lower index.
    pub fn prox(&self, a: &[f64], t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("prox weight must be positive, got {t}")));
        }
        Ok(match *self {
            Penalty::Binary => a.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect(),
            Penalty::SparseL0 { lambda, rho } => {
                let thresh = 2.0 * lambda / t;
                a.iter()
                    .map(|&v| {
                        let c = v.clamp(-rho, rho);
                        if c * (2.0 * v - c) > thresh {
                            c
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            Penalty::SparseCardinality { s } => {
                let keep = top_indices(a, s, |v| v.abs());
                let mut x = vec![0.0; a.len()];
                for i in keep {
                    x[i] = a[i];
                }
                x
            }
            Penalty::BinaryCardinality { s } => {
                let keep = top_indices(a, s, |v| v);
                let mut x = vec![0.0; a.len()];
                for i in keep {
                    x[i] = 1.0;
                }
                x
            }
        })
    }
}

/// Indices of the `s` largest `key(a_i)`, ties toward the lower index.
pub(crate) fn top_indices(a: &[f64], s: usize, key: impl Fn(f64) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| key(a[j]).total_cmp(&key(a[i])).then(i.cmp(&j)));
    idx.truncate(s);
    idx
}

pub(crate) fn count_nonzero(x: &[f64]) -> usize {
    x.iter().filter(|&&v| v != 0.0).count()
}

/// `F = f + h` on a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub objective: Objective,
    pub penalty: Penalty,
}

impl Problem {
    pub fn new(objective: Objective, penalty: Penalty) -> Result<Self> {
        penalty.validate(objective.dim())?;
        Ok(Problem { objective, penalty })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// `F(x)`; `+∞` iff `x` is infeasible.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        let f = self.objective.value(x)?;
        let h = self.penalty.value(x.as_slice());
        Ok(if h.is_finite() { f + h } else { f64::INFINITY })
    }
}

/// `f` restricted to a working set: `f(x with x_B := v) = ½vᵀHv + ⟨v,r⟩ + c0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedQuadratic {
    pub h: DMatrix<f64>,
    pub r: DVector<f64>,
    pub c0: f64,
    pub x_block: DVector<f64>,
    pub block: Vec<usize>,
}

impl ReducedQuadratic {
    pub fn k(&self) -> usize {
        self.block.len()
    }

    /// `½vᵀHv + ⟨v,r⟩` (without `c0`).
    pub fn smooth_value(&self, v: &[f64]) -> f64 {
        let k = self.k();
        let mut acc = 0.0;
        for j in 0..k {
            let mut hv = 0.0;
            for i in 0..k {
                hv += self.h[(i, j)] * v[i];
            }
            acc += v[j] * (0.5 * hv + self.r[j]);
        }
        acc
    }
}
