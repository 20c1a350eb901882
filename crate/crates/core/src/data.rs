//! Synthetic instances and graph input.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Objective, Penalty, Problem};
use crate::workset::select_random;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Same key as [`rng_from_seed`] on an independent stream, so one seed can
/// drive several consumers without them sharing draws.
pub fn rng_from_seed_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The six-dimensional example with `Q = ccᵀ + I`, `c = (1, …, 6)` and
/// `p = 1`.
pub fn running_example() -> Objective {
    let c = DVector::from_fn(6, |i, _| (i + 1) as f64);
    let q = &c * c.transpose() + DMatrix::identity(6, 6);
    Objective::quadratic(q, DVector::from_element(6, 1.0)).expect("square and matching")
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `A ∈ [0,1)^{m×n}` and `b ∈ [0,1)^m`, i.i.d. uniform. `A` is filled
/// column by column, then `b`.
pub fn gen_uniform_ls(m: usize, n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>());
    let b = DVector::from_fn(m, |_, _| rng.random::<f64>());
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// Standard Gaussian entries.
    AI,
    /// Gaussian entries with 2% of them scaled by 100.
    AII,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// `o = 10·N(0, I)`.
    BI,
    /// `o` with 2% of its entries scaled by 100.
    BII,
    /// `o = 0`, so `b = A·x_true` exactly.
    Noiseless,
}

impl FromStr for MatrixKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AI" | "I" => Ok(MatrixKind::AI),
            "AII" | "II" => Ok(MatrixKind::AII),
            _ => Err(Error::InvalidParameter(format!("matrix kind '{s}', expected AI or AII"))),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BI" | "I" => Ok(NoiseKind::BI),
            "BII" | "II" => Ok(NoiseKind::BII),
            "B0" | "0" | "NONE" => Ok(NoiseKind::Noiseless),
            _ => Err(Error::InvalidParameter(format!("noise kind '{s}', expected bI, bII or b0"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseInstance {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub x_true: DVector<f64>,
    /// `b − A·x_true`, as used when building `b`.
    pub noise: DVector<f64>,
}

/// Planted sparse regression: Gaussian `A`, a uniformly random support of
/// size `s_true` with Gaussian values, and `b = A·x_true + o`.
pub fn gen_sparse_instance(
    m: usize,
    n: usize,
    s_true: usize,
    a_kind: MatrixKind,
    b_kind: NoiseKind,
    seed: u64,
) -> Result<SparseInstance> {
    if s_true > n {
        return Err(Error::InvalidParameter(format!("support size {s_true} exceeds n={n}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut x_true = DVector::zeros(n);
    for i in select_random(n, s_true, &mut rng)? {
        x_true[i] = gaussian(&mut rng);
    }
    let mut a = DMatrix::from_fn(m, n, |_, _| gaussian(&mut rng));
    if a_kind == MatrixKind::AII {
        corrupt_in_place(a.as_mut_slice(), 0.02, 100.0, &mut rng)?;
    }
    let mut noise = match b_kind {
        NoiseKind::Noiseless => DVector::zeros(m),
        _ => DVector::from_fn(m, |_, _| 10.0 * gaussian(&mut rng)),
    };
    if b_kind == NoiseKind::BII {
        corrupt_in_place(noise.as_mut_slice(), 0.02, 100.0, &mut rng)?;
    }
    let b = &a * &x_true + &noise;
    Ok(SparseInstance { a, b, x_true, noise })
}

/// Multiplies `round(frac·len)` distinct, uniformly chosen entries by
/// `scale`; returns their (sorted) positions.
pub fn corrupt_in_place<R: Rng + ?Sized>(
    data: &mut [f64],
    frac: f64,
    scale: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::InvalidParameter(format!("fraction must be in [0, 1], got {frac}")));
    }
    let count = (frac * data.len() as f64).round() as usize;
    let picked = select_random(data.len(), count, rng)?;
    for &i in &picked {
        data[i] *= scale;
    }
    Ok(picked)
}

pub fn corrupt_entries<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    frac: f64,
    scale: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let mut out = x.clone();
    corrupt_in_place(out.as_mut_slice(), frac, scale, rng)?;
    Ok(out)
}

/// Undirected simple graph with a dense 0/1 adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub n: usize,
    pub w: DMatrix<f64>,
    pub edge_count: usize,
    /// Original vertex id of each compacted vertex.
    pub ids: Vec<u64>,
}

impl Graph {
    /// Builds from undirected edges over `[0, n)`; self-loops dropped,
    /// duplicates collapsed.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!("edge ({u}, {v}) out of range for n={n}")));
            }
            if u != v {
                w[(u, v)] = 1.0;
                w[(v, u)] = 1.0;
            }
        }
        let edge_count = (0..n).map(|j| (0..j).filter(|&i| w[(i, j)] == 1.0).count()).sum();
        Ok(Graph { n, w, edge_count, ids: (0..n as u64).collect() })
    }

    /// Symmetric, zero diagonal, entries in {0, 1}.
    pub fn check(&self) -> bool {
        let n = self.n;
        self.w.nrows() == n
            && self.w.ncols() == n
            && (0..n).all(|i| self.w[(i, i)] == 0.0)
            && (0..n).all(|i| (0..n).all(|j| self.w[(i, j)] == self.w[(j, i)]))
            && self.w.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Number of edges inside the vertex set `x ∈ {0,1}ⁿ`, i.e. `xᵀWx/2`.
    pub fn induced_edges(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.w * x))
    }
}

/// Erdős–Rényi `G(n, p)`; pairs `(i, j)` with `i < j` visited column by
/// column, one uniform draw each.
pub fn gen_random_graph(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge probability must be in [0, 1], got {p}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    parse_edge_list(BufReader::new(File::open(path)?))
}

/// Whitespace-separated pairs of integer vertex ids, one edge per line; `#`
/// lines ignored, extra columns ignored. Ids are compacted to `[0, n)` in
/// increasing id order.
pub fn parse_edge_list(r: impl BufRead) -> Result<Graph> {
    let mut raw = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut toks = t.split_whitespace();
        let mut id = || -> Result<u64> {
            let tok = toks.next().ok_or_else(|| Error::Parse { line: i + 1, msg: "expected two vertex ids".into() })?;
            tok.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad vertex id '{tok}'") })
        };
        let u = id()?;
        let v = id()?;
        raw.push((u, v));
    }
    let ids: Vec<u64> = raw.iter().flat_map(|&(u, v)| [u, v]).collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let edges: Vec<(usize, usize)> = raw.iter().map(|(u, v)| (index[u], index[v])).collect();
    let mut g = Graph::from_edges(ids.len(), &edges)?;
    g.ids = ids;
    debug_assert!(g.check());
    Ok(g)
}

/// `min −xᵀWx + (η/2)‖x‖²` over `{x ∈ {0,1}ⁿ : Σx = s}`. With `η = 0`,
/// `F(x) = −xᵀWx` exactly.
pub fn subgraph_problem(graph: &Graph, s: usize, eta: f64) -> Result<Problem> {
    if s == 0 || s > graph.n {
        return Err(Error::InvalidParameter(format!("subgraph size {s} must be in [1, {}]", graph.n)));
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be >= 0, got {eta}")));
    }
    let n = graph.n;
    let q = &graph.w * -2.0 + DMatrix::identity(n, n) * eta;
    Problem::new(Objective::quadratic(q, DVector::zeros(n))?, Penalty::BinaryCardinality { s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn uniform_shapes_and_range() {
        let (a, b) = gen_uniform_ls(3, 5, 1);
        assert_eq!(a.shape(), (3, 5));
        assert_eq!(b.len(), 3);
        assert!(a.iter().chain(b.iter()).all(|&v| (0.0..1.0).contains(&v)));
        assert_eq!(gen_uniform_ls(3, 5, 1), (a, b));
    }

    #[test]
    fn edge_list_examples() {
        let g = parse_edge_list(Cursor::new("0 1\n1 2")).unwrap();
        assert_eq!((g.n, g.edge_count), (3, 2));
        let g = parse_edge_list(Cursor::new("# comment\n0 1\n1 0")).unwrap();
        assert_eq!((g.n, g.edge_count), (2, 1));
        let g = parse_edge_list(Cursor::new("0 0\n0 1")).unwrap();
        assert_eq!(g.edge_count, 1);
        assert!(g.check());
    }

    #[test]
    fn edge_list_compacts_ids() {
        let g = parse_edge_list(Cursor::new("10 30\n30 20\n")).unwrap();
        assert_eq!(g.ids, vec![10, 20, 30]);
        assert_eq!(g.w[(0, 2)], 1.0);
        assert_eq!(g.w[(1, 2)], 1.0);
        assert_eq!(g.w[(0, 1)], 0.0);
    }

    #[test]
    fn edge_list_errors_report_line() {
        let err = parse_edge_list(Cursor::new("0 1\n# c\n2 x\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = parse_edge_list(Cursor::new("5\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn subgraph_objective_counts_ordered_pairs() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let prob = subgraph_problem(&g, 2, 0.0).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        assert_eq!(prob.eval(&x).unwrap(), -2.0);
        assert_eq!(g.induced_edges(&x), 1.0);
        assert!(subgraph_problem(&g, 4, 0.0).is_err());
    }

    #[test]
    fn corrupt_frac_zero_is_identity() {
        let mut rng = rng_from_seed(0);
        let x = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(corrupt_entries(&x, 0.0, 100.0, &mut rng).unwrap(), x);
        assert!(corrupt_entries(&x, 1.5, 100.0, &mut rng).is_err());
    }
}
