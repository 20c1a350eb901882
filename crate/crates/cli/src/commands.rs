use std::fs::File;
use std::io::{BufWriter, Write};

use hybridopt::data::{gen_random_graph, load_edge_list, rng_from_seed_stream, subgraph_problem, Graph};
use hybridopt::driver::{certify_block_k, init_point, run, CERTIFY_GUARD};
use hybridopt::io::{read_vector, write_trace, write_vector};
use hybridopt::stationarity::{census_with, report, CensusResult};
use hybridopt::workset::binomial;
use hybridopt::{Penalty, Problem, SelectionStrategy, SolverTrace, TieRule};

use crate::instance::parse_x0;
use crate::{num, CensusArgs, CertifyArgs, CliError, CliResult, PenaltyKind, SolveArgs, SubgraphArgs};

pub fn solve(a: &SolveArgs, out: &mut dyn Write) -> CliResult<()> {
    let seed = a.run.seed;
    let inst = a.instance.load(seed)?;
    let penalty = a.penalty.build(0.1)?;
    let problem = Problem::new(inst.objective, penalty)?;
    let cfg = a.run.config(problem.dim())?;
    let x0 = parse_x0(&a.x0)?.build(&penalty, problem.dim(), seed)?;
    let trace = run(&problem, &x0, &cfg)?;
    if let Some(p) = &a.trace {
        write_trace(p, &trace)?;
    }
    if let Some(p) = &a.solution {
        write_vector(p, &trace.x)?;
    }
    writeln!(out, "final_objective={}", num(trace.final_objective()))?;
    writeln!(out, "termination={}", trace.termination.as_str())?;
    writeln!(out, "iterations={}", trace.iterations())?;
    writeln!(out, "nonzeros={}", trace.x.iter().filter(|v| **v != 0.0).count())?;
    Ok(())
}

pub fn census(a: &CensusArgs, out: &mut dyn Write) -> CliResult<()> {
    if !matches!(a.penalty.penalty, PenaltyKind::Binary | PenaltyKind::L0) {
        return Err(CliError::Usage("census supports --penalty binary or l0".into()));
    }
    let objective = if a.running_example {
        hybridopt::data::running_example()
    } else {
        a.instance.load(a.seed)?.objective
    };
    let problem = Problem::new(objective, a.penalty.build(0.01)?)?;
    let res = census_with(&problem, a.rule.rule())?;
    let row: Vec<String> = res.counts.iter().map(|c| c.to_string()).collect();
    writeln!(out, "{}", row.join(","))?;
    if !res.skipped.is_empty() {
        writeln!(out, "# {} supports skipped (singular restricted problem)", res.skipped.len())?;
    }
    if let Some(p) = &a.candidates {
        let mut w = BufWriter::new(File::create(p)?);
        write_candidates(&mut w, &res, problem.dim())?;
        w.flush()?;
    }
    Ok(())
}

fn write_candidates(w: &mut impl Write, res: &CensusResult, n: usize) -> CliResult<()> {
    let mut header = vec!["pattern".to_string(), "value".into(), "basic".into(), "l_stationary".into()];
    header.extend((1..=n).map(|k| format!("block_{k}")));
    header.extend((1..=n).map(|j| format!("x_{j}")));
    writeln!(w, "{}", header.join(","))?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for c in &res.candidates {
        let mut row = vec![c.pattern.to_string(), num(c.value), flag(c.basic).into(), flag(c.l_stationary).into()];
        row.extend(c.block.iter().map(|&b| flag(b).to_string()));
        row.extend(c.x.iter().map(|&v| num(v)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn load_graph(a: &SubgraphArgs) -> CliResult<Graph> {
    if let Some(p) = &a.edges {
        return Ok(load_edge_list(p)?);
    }
    let spec = a.random_graph.as_deref().unwrap_or_default();
    let bad = || CliError::Usage(format!("bad --random-graph '{spec}', expected N:P"));
    let (n, p) = spec.split_once(':').ok_or_else(bad)?;
    let n: usize = n.parse().map_err(|_| bad())?;
    let p: f64 = p.parse().map_err(|_| bad())?;
    Ok(gen_random_graph(n, p, a.run.seed)?)
}

/// Largest `k ≤ want` whose exhaustive certificate fits the work guard.
fn affordable_k(n: usize, want: usize) -> usize {
    let mut k = want.min(n);
    while k > 1 && binomial(n, k).saturating_mul(1u128 << k.min(127)) > CERTIFY_GUARD {
        k -= 1;
    }
    k
}

/// Appends the polish run to the main trace, renumbering its iterations.
fn append_trace(main: &mut SolverTrace, polish: SolverTrace) {
    let offset = main.iterations();
    main.records.extend(polish.records.into_iter().skip(1).map(|mut r| {
        r.t += offset;
        r
    }));
    main.x = polish.x;
    main.termination = polish.termination;
    main.changes += polish.changes;
}

pub fn subgraph(a: &SubgraphArgs, out: &mut dyn Write) -> CliResult<()> {
    let graph = load_graph(a)?;
    let problem = subgraph_problem(&graph, a.s, a.eta)?;
    let n = graph.n;
    let cfg = a.run.config(n)?;
    let x0 = init_point(&problem.penalty, n, 1.0, &mut rng_from_seed_stream(a.run.seed, 1));
    let mut trace = run(&problem, &x0, &cfg)?;

    let k = match a.polish_k {
        Some(k) => k.min(n),
        None => affordable_k(n, 2 * a.s),
    };
    let certified = if k > 0 {
        let mut polish = cfg.clone();
        polish.strategy = SelectionStrategy::Cyclic { k };
        // every improving step lowers F on a finite feasible set, so this
        // only bounds pathological inputs
        polish.max_iter = usize::try_from(binomial(n, k).saturating_mul(10_000)).unwrap_or(usize::MAX);
        let p = run(&problem, &trace.x, &polish)?;
        append_trace(&mut trace, p);
        let cert = certify_block_k(&problem, &trace.x, k, TieRule::default())?;
        if cert.certified { "true" } else { "false" }
    } else {
        "skipped"
    };

    if let Some(p) = &a.trace {
        write_trace(p, &trace)?;
    }
    if let Some(p) = &a.solution {
        write_vector(p, &trace.x)?;
    }
    let vertices: Vec<String> =
        (0..n).filter(|&i| trace.x[i] == 1.0).map(|i| graph.ids[i].to_string()).collect();
    writeln!(out, "vertices={}", vertices.join(" "))?;
    writeln!(out, "density={}", num(graph.induced_edges(&trace.x)))?;
    writeln!(out, "objective={}", num(trace.final_objective()))?;
    writeln!(out, "polish_k={k}")?;
    writeln!(out, "certified={certified}")?;
    writeln!(out, "iterations={}", trace.iterations())?;
    Ok(())
}

pub fn certify(a: &CertifyArgs, out: &mut dyn Write) -> CliResult<()> {
    let inst = a.instance.load(a.seed)?;
    let penalty = a.penalty.build(0.1)?;
    let problem = Problem::new(inst.objective, penalty)?;
    let x = read_vector(&a.x)?;
    if x.len() != problem.dim() {
        return Err(hybridopt::Error::DimensionMismatch { expected: problem.dim(), got: x.len() }.into());
    }
    if !problem.eval(&x)?.is_finite() {
        return Err(hybridopt::Error::Infeasible.into());
    }
    writeln!(out, "objective={}", num(problem.eval(&x)?))?;
    if matches!(penalty, Penalty::Binary | Penalty::SparseL0 { .. }) {
        let rep = report(&problem, &x, 0, a.rule.rule())?;
        writeln!(out, "basic={}", rep.is_basic)?;
        writeln!(out, "l_stationary={}", rep.is_l)?;
    }
    for k in 1..=a.k.min(problem.dim()) {
        let cert = certify_block_k(&problem, &x, k, a.rule.rule())?;
        match cert.violating_block {
            None => writeln!(out, "block_{k}=true")?,
            Some(b) => {
                let b: Vec<String> = b.iter().map(|i| i.to_string()).collect();
                writeln!(out, "block_{k}=false violating={} improvement={}", b.join(" "), num(cert.improvement))?;
            }
        }
    }
    Ok(())
}
