use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use hybridopt::baselines::{appa, omp, ppa, support, BaselineConfig};
use hybridopt::{Objective, Penalty, Problem, SelectionStrategy, SolverConfig};
use rayon::prelude::*;

use crate::instance::{GenSpec, Instance, X0Spec};
use crate::{num, BenchArgs, CliError, CliResult, PenaltyKind};

pub const THREADS_ENV: &str = "HYBRID_OPT_THREADS";
pub const BENCH_HEADER: &str = "method,seed,s,final_objective,seconds,iters,support_recovery";
const AVAILABLE: &str = "hybrid[:R<i>G<j>|:cyclic<k>], ppa, appa, omp";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Hybrid(SelectionStrategy),
    Ppa,
    Appa,
    Omp,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Hybrid(s) => format!("hybrid:{s}"),
            Method::Ppa => "ppa".into(),
            Method::Appa => "appa".into(),
            Method::Omp => "omp".into(),
        }
    }
}

pub fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(CliError::Usage(format!("empty method list; available: {AVAILABLE}")));
    }
    names
        .into_iter()
        .map(|name| {
            let lower = name.to_ascii_lowercase();
            match lower.as_str() {
                "ppa" => Ok(Method::Ppa),
                "appa" => Ok(Method::Appa),
                "omp" => Ok(Method::Omp),
                "hybrid" => Ok(Method::Hybrid(SelectionStrategy::Combined { i_random: 6, j_greedy: 6 })),
                _ => match lower.strip_prefix("hybrid:") {
                    Some(s) => Ok(Method::Hybrid(SelectionStrategy::parse(s, 2)?)),
                    None => Err(CliError::Usage(format!("unknown method '{name}'; available: {AVAILABLE}"))),
                },
            }
        })
        .collect()
}

/// `a-b` (inclusive) or `a,b,c`.
pub fn parse_seeds(spec: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::Usage(format!("bad seed list '{spec}', expected a-b or a,b,c"));
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once('-') {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds = spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<CliResult<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn parse_grid(spec: &str) -> CliResult<Vec<usize>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad --s-grid entry '{s}'"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub seed: u64,
    pub s: Option<usize>,
    pub final_objective: f64,
    pub seconds: f64,
    pub iters: usize,
    /// `Some(exact)` when the instance has a planted signal.
    pub support_recovery: Option<bool>,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        let s = self.s.map(|s| s.to_string()).unwrap_or_default();
        let rec = match self.support_recovery {
            Some(true) => "exact",
            Some(false) => "inexact",
            None => "",
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            self.seed,
            s,
            num(self.final_objective),
            num(self.seconds),
            self.iters,
            rec
        )
    }
}

struct Cell {
    method: Method,
    seed_idx: usize,
    s: Option<usize>,
}

struct Ctx<'a> {
    args: &'a BenchArgs,
    seeds: &'a [u64],
    instances: &'a [Instance],
}

impl Ctx<'_> {
    fn penalty(&self, s: Option<usize>) -> CliResult<Penalty> {
        let mut p = self.args.penalty.clone();
        p.s = s.or(p.s);
        p.build(0.1)
    }

    fn run_cell(&self, cell: &Cell) -> CliResult<BenchRow> {
        let seed = self.seeds[cell.seed_idx];
        let inst = &self.instances[cell.seed_idx];
        let a = self.args;
        let start = Instant::now();
        let (x, final_objective, iters) = match cell.method {
            Method::Omp => {
                let Objective::LeastSquares { a: mat, b } = &inst.objective else {
                    return Err(CliError::Usage("omp needs a least-squares instance".into()));
                };
                let x = omp(mat, b, cell.s.expect("omp cells carry s"))?;
                let f = inst.objective.value(&x)?;
                let picks = support(&x).len();
                (x, f, picks)
            }
            method => {
                let penalty = self.penalty(cell.s)?;
                let problem = Problem::new(inst.objective.clone(), penalty)?;
                let x0 = X0Spec::Random { sigma: 1.0 }.build(&penalty, problem.dim(), seed)?;
                let trace = match method {
                    Method::Hybrid(strategy) => {
                        let mut cfg = SolverConfig::new(strategy.fit_to(problem.dim()));
                        cfg.theta = a.theta;
                        cfg.epsilon = a.eps;
                        cfg.window = a.window;
                        cfg.max_iter = a.max_iter;
                        cfg.seed = seed;
                        cfg.validate()?;
                        hybridopt::run(&problem, &x0, &cfg)?
                    }
                    _ => {
                        let cfg = BaselineConfig {
                            max_iter: a.max_iter,
                            epsilon: a.eps,
                            window: a.window,
                            ..Default::default()
                        };
                        if method == Method::Ppa {
                            ppa(&problem, &x0, &cfg)?
                        } else {
                            appa(&problem, &x0, &cfg)?
                        }
                    }
                };
                let f = trace.final_objective();
                let iters = trace.iterations();
                (trace.x, f, iters)
            }
        };
        let seconds = if a.timing { start.elapsed().as_secs_f64() } else { 0.0 };
        Ok(BenchRow {
            method: cell.method.name(),
            seed,
            s: cell.s,
            final_objective,
            seconds,
            iters,
            support_recovery: inst.x_true.as_ref().map(|t| support(t) == support(&x)),
        })
    }
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

/// Runs every (method, seed, s) cell; rows come back sorted by
/// method name, seed, then s.
pub fn bench_rows(a: &BenchArgs) -> CliResult<Vec<BenchRow>> {
    let methods = parse_methods(&a.methods)?;
    let seeds = parse_seeds(&a.seeds)?;
    let grid = parse_grid(&a.s_grid)?;
    let spec: GenSpec = a.gen.parse()?;
    if spec == GenSpec::RunningExample && methods.contains(&Method::Omp) {
        return Err(CliError::Usage("omp needs a least-squares instance".into()));
    }
    let card = matches!(a.penalty.penalty, PenaltyKind::CardBinary | PenaltyKind::CardSparse);

    let mut cells = Vec::new();
    for seed_idx in 0..seeds.len() {
        for &method in &methods {
            let needs_s = method == Method::Omp || (card && a.penalty.s.is_none());
            if needs_s {
                if grid.is_empty() {
                    return Err(CliError::Usage(format!("method {} needs --s-grid", method.name())));
                }
                cells.extend(grid.iter().map(|&s| Cell { method, seed_idx, s: Some(s) }));
            } else {
                let s = if card { a.penalty.s } else { None };
                cells.push(Cell { method, seed_idx, s });
            }
        }
    }

    let pool = thread_pool()?;
    let instances = pool.install(|| seeds.par_iter().map(|&s| spec.generate(s)).collect::<CliResult<Vec<_>>>())?;
    let ctx = Ctx { args: a, seeds: &seeds, instances: &instances };
    let mut rows = pool.install(|| cells.par_iter().map(|c| ctx.run_cell(c)).collect::<CliResult<Vec<_>>>())?;
    rows.sort_by(|x, y| (&x.method, x.seed, x.s).cmp(&(&y.method, y.seed, y.s)));
    Ok(rows)
}

pub fn bench(a: &BenchArgs, out: &mut dyn Write) -> CliResult<()> {
    let rows = bench_rows(a)?;
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(BENCH_HEADER);
    text.push('\n');
    for r in &rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    match &a.out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}
