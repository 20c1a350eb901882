//! Command-line front end: `solve`, `census`, `bench`, `subgraph` and
//! `certify`. Every command is a pure function of its flags, so repeated
//! invocations with the same seed produce byte-identical output.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybridopt::io::fmt_f64;
use hybridopt::{Penalty, SelectionStrategy};

mod bench;
mod commands;
mod instance;

pub use bench::{bench_rows, parse_methods, parse_seeds, BenchRow, Method, BENCH_HEADER, THREADS_ENV};
pub use instance::{parse_x0, GenSpec, Instance, X0Spec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hybridopt::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for an infeasible start or bad usage, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(hybridopt::Error::Infeasible) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "hybridopt", version, about = "Hybrid block coordinate descent for discrete quadratic problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the hybrid method on one instance and write its trace.
    Solve(SolveArgs),
    /// Classify every candidate point of a small instance by stationarity level.
    Census(CensusArgs),
    /// Run several methods on identical seeded instances; emits long-format CSV.
    Bench(BenchArgs),
    /// Densest-s-subgraph search with a cyclic polish and certification.
    Subgraph(SubgraphArgs),
    /// Check a point for basic, L and block-k stationarity.
    Certify(CertifyArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveKind {
    /// ½xᵀQx + pᵀx from `--matrix Q --vector p`.
    Quad,
    /// ½‖Ax − b‖² from `--matrix A --vector b`.
    Ls,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PenaltyKind {
    Binary,
    L0,
    CardBinary,
    CardSparse,
}

#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    /// Generated instance: `uniform:MxN`, `sparse:MxN:S[:AI|AII][:bI|bII|b0]` or `running-example`.
    #[arg(long, conflicts_with_all = ["matrix", "vector"])]
    pub gen: Option<String>,
    /// Seed for `--gen`; defaults to `--seed`.
    #[arg(long)]
    pub gen_seed: Option<u64>,
    /// Q or A as MatrixMarket or CSV.
    #[arg(long, requires = "vector")]
    pub matrix: Option<PathBuf>,
    /// p or b, one value per line.
    #[arg(long, requires = "matrix")]
    pub vector: Option<PathBuf>,
    /// How `--matrix/--vector` are interpreted.
    #[arg(long, value_enum, default_value = "quad")]
    pub objective: ObjectiveKind,
}

#[derive(Args, Debug, Clone)]
pub struct PenaltyArgs {
    #[arg(long, value_enum, default_value = "l0")]
    pub penalty: PenaltyKind,
    /// ℓ0 weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Box bound for `l0`; `inf` for none.
    #[arg(long, default_value = "inf")]
    pub rho: f64,
    /// Cardinality for `card-binary` and `card-sparse`.
    #[arg(long)]
    pub s: Option<usize>,
}

impl PenaltyArgs {
    pub fn build(&self, default_lambda: f64) -> CliResult<Penalty> {
        let need_s = || self.s.ok_or_else(|| CliError::Usage("--s is required for cardinality penalties".into()));
        Ok(match self.penalty {
            PenaltyKind::Binary => Penalty::Binary,
            PenaltyKind::L0 => Penalty::sparse_l0(self.lambda.unwrap_or(default_lambda), self.rho)?,
            PenaltyKind::CardBinary => Penalty::BinaryCardinality { s: need_s()? },
            PenaltyKind::CardSparse => Penalty::SparseCardinality { s: need_s()? },
        })
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// `R<i>G<j>` (i random + j greedy coordinates), `cyclic` or `cyclic<k>`.
    #[arg(long, default_value = "R6G6")]
    pub strategy: String,
    /// Block size for a bare `cyclic`.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Proximal weight of the subproblem.
    #[arg(long, default_value_t = 1e-5)]
    pub theta: f64,
    /// Stopping threshold on the windowed mean relative decrease.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 50)]
    pub window: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Abort if sufficient decrease or feasibility ever fails.
    #[arg(long)]
    pub check_invariants: bool,
    /// Record wall-clock time in the trace (output is then not reproducible).
    #[arg(long)]
    pub timing: bool,
}

impl RunArgs {
    pub fn strategy(&self) -> CliResult<SelectionStrategy> {
        Ok(SelectionStrategy::parse(&self.strategy, self.k)?)
    }

    /// Solver settings for an `n`-dimensional problem; blocks larger than `n`
    /// are shrunk to fit.
    pub fn config(&self, n: usize) -> CliResult<hybridopt::SolverConfig> {
        let mut cfg = hybridopt::SolverConfig::new(self.strategy()?.fit_to(n));
        cfg.theta = self.theta;
        cfg.epsilon = self.eps;
        cfg.window = self.window;
        cfg.max_iter = self.max_iter;
        cfg.seed = self.seed;
        cfg.assert_invariants = self.check_invariants;
        cfg.record_time = self.timing;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Starting point: `random[:sigma]`, `zeros`, `ones` or a vector file.
    #[arg(long, default_value = "random")]
    pub x0: String,
    /// Trace CSV output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Final iterate output, one value per line.
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleKind {
    /// A block fails if its exact minimizer differs from the current values.
    FixedPoint,
    /// A block fails if it can lower the objective by more than 1e-9.
    Improvement,
}

impl RuleKind {
    pub fn rule(self) -> hybridopt::TieRule {
        match self {
            RuleKind::FixedPoint => hybridopt::TieRule::FixedPoint,
            RuleKind::Improvement => hybridopt::TieRule::default(),
        }
    }
}

#[derive(Args, Debug)]
pub struct CensusArgs {
    /// Use the built-in six-dimensional example.
    #[arg(long, conflicts_with_all = ["gen", "matrix"])]
    pub running_example: bool,
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// `binary` or `l0`; `--lambda` defaults to 0.01 here.
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, value_enum, default_value = "fixed-point")]
    pub rule: RuleKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-candidate CSV output.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// `uniform:MxN` or `sparse:MxN:S[:AI|AII][:bI|bII|b0]`; one instance per seed.
    #[arg(long)]
    pub gen: String,
    /// Comma-separated: `hybrid[:<strategy>]`, `ppa`, `appa`, `omp`.
    #[arg(long, default_value = "hybrid:R6G6,ppa")]
    pub methods: String,
    /// `a-b` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "0-19")]
    pub seeds: String,
    /// Sparsity levels for `omp` and the cardinality penalties, comma-separated.
    #[arg(long, default_value = "")]
    pub s_grid: String,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value_t = 1e-5)]
    pub theta: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 50)]
    pub window: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Report wall-clock seconds (output is then not reproducible).
    #[arg(long)]
    pub timing: bool,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SubgraphArgs {
    /// Edge list, one whitespace-separated pair per line.
    #[arg(long, conflicts_with = "random_graph", required_unless_present = "random_graph")]
    pub edges: Option<PathBuf>,
    /// `N:P` random graph seeded by `--seed`.
    #[arg(long)]
    pub random_graph: Option<String>,
    #[arg(long)]
    pub s: usize,
    /// Diagonal shift η added to the objective.
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
    /// Block size of the cyclic polish and certificate; 0 skips both.
    /// Defaults to min(2s, n), which certifies global optimality.
    #[arg(long)]
    pub polish_k: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Point to check, one value per line.
    #[arg(long)]
    pub x: PathBuf,
    /// Largest block size to check.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "improvement")]
    pub rule: RuleKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Runs one command, writing its summary to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Solve(a) => commands::solve(&a, out),
        Command::Census(a) => commands::census(&a, out),
        Command::Bench(a) => bench::bench(&a, out),
        Command::Subgraph(a) => commands::subgraph(&a, out),
        Command::Certify(a) => commands::certify(&a, out),
    }
}

/// Parses `args` (without the program name) and runs; stdout goes to `out`.
pub fn run_from<I, S>(args: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("hybridopt")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli, out)
}

fn num(v: f64) -> String {
    fmt_f64(v)
}
