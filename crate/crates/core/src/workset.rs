//! Working-set selection: uniform random subsets, greedy one-coordinate move
//! scores, their union, and a lexicographic sweep over all blocks.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Penalty, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStrategy {
    Random { k: usize },
    Greedy { k: usize },
    Combined { i_random: usize, j_greedy: usize },
    /// Every `C(n,k)` block in lexicographic order, wrapping around.
    Cyclic { k: usize },
}

impl SelectionStrategy {
    /// Upper bound on `|B|`.
    pub fn block_size(&self) -> usize {
        match *self {
            SelectionStrategy::Random { k }
            | SelectionStrategy::Greedy { k }
            | SelectionStrategy::Cyclic { k } => k,
            SelectionStrategy::Combined { i_random, j_greedy } => i_random + j_greedy,
        }
    }

    /// Shrinks the block to at most `n` coordinates, dropping greedy picks
    /// before random ones.
    pub fn fit_to(self, n: usize) -> Self {
        match self {
            SelectionStrategy::Random { k } => SelectionStrategy::Random { k: k.min(n) },
            SelectionStrategy::Greedy { k } => SelectionStrategy::Greedy { k: k.min(n) },
            SelectionStrategy::Cyclic { k } => SelectionStrategy::Cyclic { k: k.min(n) },
            SelectionStrategy::Combined { i_random, j_greedy } => {
                let i = i_random.min(n);
                SelectionStrategy::Combined { i_random: i, j_greedy: j_greedy.min(n - i) }
            }
        }
    }

    /// Parses `R<i>G<j>`, `cyclic` or `cyclic<k>`; bare `cyclic` takes
    /// `default_k`.
    pub fn parse(s: &str, default_k: usize) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown strategy '{s}', expected R<i>G<j> or cyclic"));
        let lower = s.trim().to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("cyclic") {
            let k = if rest.is_empty() { default_k } else { rest.parse().map_err(|_| bad())? };
            if k == 0 {
                return Err(bad());
            }
            return Ok(SelectionStrategy::Cyclic { k });
        }
        let rest = lower.strip_prefix('r').ok_or_else(bad)?;
        let (i, j) = rest.split_once('g').ok_or_else(bad)?;
        let i: usize = i.parse().map_err(|_| bad())?;
        let j: usize = j.parse().map_err(|_| bad())?;
        if i + j == 0 {
            return Err(Error::InvalidParameter("strategy selects no coordinates".into()));
        }
        Ok(SelectionStrategy::Combined { i_random: i, j_greedy: j })
    }
}

impl FromStr for SelectionStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SelectionStrategy::parse(s, 2)
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SelectionStrategy::Random { k } => write!(f, "R{k}G0"),
            SelectionStrategy::Greedy { k } => write!(f, "R0G{k}"),
            SelectionStrategy::Combined { i_random, j_greedy } => write!(f, "R{i_random}G{j_greedy}"),
            SelectionStrategy::Cyclic { k } => write!(f, "cyclic{k}"),
        }
    }
}

/// Uniform `k`-subset of `[0, n)` by partial Fisher–Yates, sorted.
/// Always draws exactly `k` values from `rng`.
pub fn select_random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::InvalidParameter(format!("block size {k} exceeds n={n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..k {
        // u64 ranges keep the draw sequence identical across pointer widths
        let j = rng.random_range(i as u64..n as u64) as usize;
        perm.swap(i, j);
    }
    let mut out = perm[..k].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// One-coordinate move scores for the ℓ0 penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseScores {
    /// `(i, c_i)` for every `x_i = 0`, in index order.
    pub c: Vec<(usize, f64)>,
    /// `(j, d_j)` for every `x_j ≠ 0`, in index order.
    pub d: Vec<(usize, f64)>,
    /// Zero coordinates whose best move is unbounded (`c_i = −∞`).
    pub unbounded: Vec<usize>,
}

pub(crate) fn sparse_scores(
    x: &[f64],
    g: &[f64],
    diag: &[f64],
    lambda: f64,
    rho: f64,
) -> SparseScores {
    let mut c = Vec::new();
    let mut d = Vec::new();
    let mut unbounded = Vec::new();
    for i in 0..x.len() {
        let (gi, qi) = (g[i], diag[i]);
        if x[i] == 0.0 {
            let score = if qi > 0.0 {
                let a = (-gi / qi).clamp(-rho, rho);
                a * gi + 0.5 * a * a * qi + lambda
            } else if gi == 0.0 && qi == 0.0 {
                lambda
            } else if rho.is_infinite() {
                unbounded.push(i);
                f64::NEG_INFINITY
            } else {
                let end = |a: f64| a * gi + 0.5 * a * a * qi + lambda;
                end(rho).min(end(-rho))
            };
            c.push((i, score));
        } else {
            let a = -x[i];
            d.push((i, a * gi + 0.5 * a * a * qi - lambda));
        }
    }
    SparseScores { c, d, unbounded }
}

/// Scores `c` (adding a coordinate) and `d` (zeroing one) at `x`.
pub fn greedy_scores_sparse(problem: &Problem, x: &DVector<f64>) -> Result<SparseScores> {
    let Penalty::SparseL0 { lambda, rho } = problem.penalty else {
        return Err(Error::WrongPenalty { expected: "l0" });
    };
    let g = problem.objective.gradient(x)?;
    let diag = problem.objective.hessian_diagonal();
    Ok(sparse_scores(x.as_slice(), g.as_slice(), diag.as_slice(), lambda, rho))
}

fn ascending(mut v: Vec<(usize, f64)>) -> Vec<usize> {
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(i, _)| i).collect()
}

/// Takes `k_a` from `a` and `k_b` from `b` (both already ranked), filling
/// from the other list when one runs short.
fn balanced(a: Vec<usize>, b: Vec<usize>, k_a: usize, k_b: usize) -> Vec<usize> {
    let take_a = k_a.min(a.len()) + k_b.saturating_sub(b.len());
    let take_b = k_b.min(b.len()) + k_a.saturating_sub(a.len());
    let mut out: Vec<usize> = a.into_iter().take(take_a).chain(b.into_iter().take(take_b)).collect();
    out.sort_unstable();
    out
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("block size {k} must be in [1, {n}]")));
    }
    Ok(())
}

pub(crate) fn greedy_from_gradient(
    penalty: &Penalty,
    x: &[f64],
    g: &[f64],
    diag: &[f64],
    k: usize,
) -> Result<Vec<usize>> {
    let n = x.len();
    check_k(k, n)?;
    match *penalty {
        Penalty::SparseL0 { lambda, rho } => {
            if k % 2 == 1 {
                return Err(Error::InvalidParameter(format!("greedy sparse selection needs an even k, got {k}")));
            }
            let s = sparse_scores(x, g, diag, lambda, rho);
            Ok(balanced(ascending(s.c), ascending(s.d), k / 2, k / 2))
        }
        Penalty::SparseCardinality { .. } => {
            if k % 2 == 1 {
                return Err(Error::InvalidParameter(format!("greedy sparse selection needs an even k, got {k}")));
            }
            let s = sparse_scores(x, g, diag, 0.0, f64::INFINITY);
            Ok(balanced(ascending(s.c), ascending(s.d), k / 2, k / 2))
        }
        Penalty::Binary => {
            let deltas = binary_deltas(x, g, diag);
            let mut out = ascending(deltas.into_iter().enumerate().collect());
            out.truncate(k);
            out.sort_unstable();
            Ok(out)
        }
        Penalty::BinaryCardinality { .. } => {
            let mut add = Vec::new();
            let mut remove = Vec::new();
            for i in 0..n {
                if x[i] == 1.0 {
                    remove.push((i, -g[i] + 0.5 * diag[i]));
                } else {
                    add.push((i, g[i] + 0.5 * diag[i]));
                }
            }
            Ok(balanced(ascending(remove), ascending(add), k / 2, k - k / 2))
        }
    }
}

fn binary_deltas(x: &[f64], g: &[f64], diag: &[f64]) -> Vec<f64> {
    (0..x.len()).map(|i| -2.0 * x[i] * g[i] + 2.0 * diag[i]).collect()
}

/// `F(x − 2x_i e_i) − F(x)` for every `i`.
pub fn binary_flip_deltas(problem: &Problem, x: &DVector<f64>) -> Result<Vec<f64>> {
    if problem.penalty != Penalty::Binary {
        return Err(Error::WrongPenalty { expected: "binary" });
    }
    let g = problem.objective.gradient(x)?;
    let diag = problem.objective.hessian_diagonal();
    Ok(binary_deltas(x.as_slice(), g.as_slice(), diag.as_slice()))
}

/// `k/2` zero coordinates with the smallest `c` and `k/2` nonzero
/// coordinates with the smallest `d`.
pub fn select_greedy_sparse(problem: &Problem, x: &DVector<f64>, k: usize) -> Result<Vec<usize>> {
    if !matches!(problem.penalty, Penalty::SparseL0 { .. } | Penalty::SparseCardinality { .. }) {
        return Err(Error::WrongPenalty { expected: "l0" });
    }
    let g = problem.objective.gradient(x)?;
    let diag = problem.objective.hessian_diagonal();
    greedy_from_gradient(&problem.penalty, x.as_slice(), g.as_slice(), diag.as_slice(), k)
}

/// The `k` cheapest flips (binary) or a balanced add/remove split
/// (binary cardinality).
pub fn select_greedy_binary(problem: &Problem, x: &DVector<f64>, k: usize) -> Result<Vec<usize>> {
    if !matches!(problem.penalty, Penalty::Binary | Penalty::BinaryCardinality { .. }) {
        return Err(Error::WrongPenalty { expected: "binary" });
    }
    let g = problem.objective.gradient(x)?;
    let diag = problem.objective.hessian_diagonal();
    greedy_from_gradient(&problem.penalty, x.as_slice(), g.as_slice(), diag.as_slice(), k)
}

pub(crate) fn combined_from_gradient<R: Rng + ?Sized>(
    penalty: &Penalty,
    x: &[f64],
    g: &[f64],
    diag: &[f64],
    i_random: usize,
    j_greedy: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = x.len();
    if i_random + j_greedy == 0 || i_random + j_greedy > n {
        return Err(Error::InvalidParameter(format!(
            "i+j = {} must be in [1, {n}]",
            i_random + j_greedy
        )));
    }
    let (i, j) = match penalty {
        Penalty::SparseL0 { .. } | Penalty::SparseCardinality { .. } => {
            (i_random + j_greedy % 2, j_greedy - j_greedy % 2)
        }
        _ => (i_random, j_greedy),
    };
    let mut out = if i > 0 { select_random(n, i, rng)? } else { Vec::new() };
    if j > 0 {
        out.extend(greedy_from_gradient(penalty, x, g, diag, j)?);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Union of a random `i_random`-subset and the greedy `j_greedy` selection.
pub fn select_combined<R: Rng + ?Sized>(
    problem: &Problem,
    x: &DVector<f64>,
    i_random: usize,
    j_greedy: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let g = problem.objective.gradient(x)?;
    let diag = problem.objective.hessian_diagonal();
    combined_from_gradient(&problem.penalty, x.as_slice(), g.as_slice(), diag.as_slice(), i_random, j_greedy, rng)
}

/// Lexicographic walk over the `k`-subsets of `[0, n)`.
#[derive(Debug, Clone)]
pub struct CyclicBlocks {
    n: usize,
    current: Vec<usize>,
}

impl CyclicBlocks {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        check_k(k, n)?;
        Ok(CyclicBlocks { n, current: (0..k).collect() })
    }

    /// Returns the current block and advances, wrapping after the last one.
    pub fn next_block(&mut self) -> Vec<usize> {
        let out = self.current.clone();
        let k = self.current.len();
        let n = self.n;
        let mut i = k;
        while i > 0 && self.current[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            self.current = (0..k).collect();
        } else {
            self.current[i - 1] += 1;
            for j in i..k {
                self.current[j] = self.current[j - 1] + 1;
            }
        }
        out
    }
}

/// `C(n, k)` without overflow for the sizes used here.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Stateful selector used by the driver, with the Hessian diagonal cached.
#[derive(Debug, Clone)]
pub struct Selector {
    strategy: SelectionStrategy,
    diag: Vec<f64>,
    cyclic: Option<CyclicBlocks>,
}

impl Selector {
    pub fn new(problem: &Problem, strategy: SelectionStrategy) -> Result<Self> {
        let n = problem.dim();
        let cyclic = match strategy {
            SelectionStrategy::Cyclic { k } => Some(CyclicBlocks::new(n, k)?),
            SelectionStrategy::Random { k } | SelectionStrategy::Greedy { k } => {
                check_k(k, n)?;
                None
            }
            SelectionStrategy::Combined { i_random, j_greedy } => {
                check_k(i_random + j_greedy, n)?;
                None
            }
        };
        if let SelectionStrategy::Greedy { k } = strategy {
            if k % 2 == 1 && matches!(problem.penalty, Penalty::SparseL0 { .. } | Penalty::SparseCardinality { .. }) {
                return Err(Error::InvalidParameter(format!("greedy sparse selection needs an even k, got {k}")));
            }
        }
        Ok(Selector { strategy, diag: problem.objective.hessian_diagonal().as_slice().to_vec(), cyclic })
    }

    pub fn strategy(&self) -> SelectionStrategy {
        self.strategy
    }

    /// Number of blocks in one full sweep for the cyclic strategy.
    pub fn sweep_len(&self, n: usize) -> Option<u128> {
        match self.strategy {
            SelectionStrategy::Cyclic { k } => Some(binomial(n, k)),
            _ => None,
        }
    }

    pub fn next<R: Rng + ?Sized>(
        &mut self,
        penalty: &Penalty,
        x: &[f64],
        g: &[f64],
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        match self.strategy {
            SelectionStrategy::Random { k } => select_random(x.len(), k, rng),
            SelectionStrategy::Greedy { k } => greedy_from_gradient(penalty, x, g, &self.diag, k),
            SelectionStrategy::Combined { i_random, j_greedy } => {
                combined_from_gradient(penalty, x, g, &self.diag, i_random, j_greedy, rng)
            }
            SelectionStrategy::Cyclic { .. } => {
                Ok(self.cyclic.as_mut().expect("cyclic state").next_block())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_to_caps_block_size() {
        let s = SelectionStrategy::Combined { i_random: 6, j_greedy: 6 };
        assert_eq!(s.fit_to(20), s);
        assert_eq!(s.fit_to(8), SelectionStrategy::Combined { i_random: 6, j_greedy: 2 });
        assert_eq!(s.fit_to(3), SelectionStrategy::Combined { i_random: 3, j_greedy: 0 });
        assert_eq!(SelectionStrategy::Cyclic { k: 5 }.fit_to(2), SelectionStrategy::Cyclic { k: 2 });
    }
    use crate::model::Objective;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_full_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_random(5, 5, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_random(5, 6, &mut rng).is_err());
    }

    #[test]
    fn parse_strategies() {
        assert_eq!(
            "R6G6".parse::<SelectionStrategy>().unwrap(),
            SelectionStrategy::Combined { i_random: 6, j_greedy: 6 }
        );
        assert_eq!(SelectionStrategy::parse("cyclic", 3).unwrap(), SelectionStrategy::Cyclic { k: 3 });
        assert_eq!(SelectionStrategy::parse("cyclic4", 3).unwrap(), SelectionStrategy::Cyclic { k: 4 });
        assert!("R0G0".parse::<SelectionStrategy>().is_err());
        assert!("G6".parse::<SelectionStrategy>().is_err());
        assert_eq!(SelectionStrategy::Combined { i_random: 10, j_greedy: 0 }.to_string(), "R10G0");
    }

    #[test]
    fn sparse_score_examples() {
        let s = sparse_scores(&[0.0], &[2.0], &[1.0], 0.01, f64::INFINITY);
        assert!((s.c[0].1 + 1.99).abs() < 1e-15);
        let s = sparse_scores(&[1.0], &[0.0], &[1.0], 0.01, f64::INFINITY);
        assert!((s.d[0].1 - 0.49).abs() < 1e-15);
    }

    #[test]
    fn sparse_score_degenerate_diagonal() {
        let s = sparse_scores(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], 0.1, f64::INFINITY);
        assert_eq!(s.c[0].1, 0.1);
        assert_eq!(s.c[1].1, f64::NEG_INFINITY);
        assert_eq!(s.unbounded, vec![1]);
        let s = sparse_scores(&[0.0], &[1.0], &[0.0], 0.1, 2.0);
        assert!((s.c[0].1 - (-2.0 + 0.1)).abs() < 1e-15);
    }

    fn quad(n: usize, penalty: Penalty) -> Problem {
        let q = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 + i as f64 } else { 0.1 });
        let p = DVector::from_fn(n, |i, _| (i as f64 - 2.5) * 0.7);
        Problem::new(Objective::quadratic(q, p).unwrap(), penalty).unwrap()
    }

    #[test]
    fn greedy_sparse_fill_rules() {
        let prob = quad(6, Penalty::sparse_l0(0.01, f64::INFINITY).unwrap());
        let x = DVector::zeros(6);
        let b = select_greedy_sparse(&prob, &x, 4).unwrap();
        let s = greedy_scores_sparse(&prob, &x).unwrap();
        let mut ranked = ascending(s.c);
        ranked.truncate(4);
        ranked.sort_unstable();
        assert_eq!(b, ranked);

        let x = DVector::from_vec(vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        let b = select_greedy_sparse(&prob, &x, 4).unwrap();
        assert!(b.contains(&2));
        assert_eq!(b.len(), 4);
        assert!(select_greedy_sparse(&prob, &x, 3).is_err());
    }

    #[test]
    fn greedy_binary_examples() {
        let obj = Objective::quadratic(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 3.0])).unwrap();
        let prob = Problem::new(obj, Penalty::Binary).unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0]);
        // deltas: [-2, 6]
        assert_eq!(binary_flip_deltas(&prob, &x).unwrap(), vec![-2.0, 6.0]);
        assert_eq!(select_greedy_binary(&prob, &x, 1).unwrap(), vec![0]);
        assert_eq!(select_greedy_binary(&prob, &x, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn greedy_binary_cardinality_is_balanced() {
        let prob = quad(6, Penalty::BinaryCardinality { s: 2 });
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = select_greedy_binary(&prob, &x, 4).unwrap();
        assert_eq!(b.iter().filter(|&&i| x[i] == 1.0).count(), 2);
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn combined_edge_cases() {
        let prob = quad(6, Penalty::sparse_l0(0.01, f64::INFINITY).unwrap());
        let x = DVector::zeros(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let greedy = select_greedy_sparse(&prob, &x, 2).unwrap();
        assert_eq!(select_combined(&prob, &x, 0, 2, &mut rng).unwrap(), greedy);
        let b = select_combined(&prob, &x, 2, 0, &mut rng).unwrap();
        assert_eq!(b.len(), 2);
        // odd j: one coordinate moves to the random part
        let b = select_combined(&prob, &x, 0, 3, &mut rng).unwrap();
        assert!((2..=3).contains(&b.len()));
        assert!(select_combined(&prob, &x, 4, 4, &mut rng).is_err());
    }

    #[test]
    fn cyclic_enumerates_lexicographically() {
        let mut c = CyclicBlocks::new(4, 2).unwrap();
        let blocks: Vec<_> = (0..7).map(|_| c.next_block()).collect();
        assert_eq!(
            blocks,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3], vec![0, 1]]
        );
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(14, 4), 1001);
    }
}
