use std::path::PathBuf;
use std::str::FromStr;

use hybridopt::data::{gen_sparse_instance, gen_uniform_ls, rng_from_seed_stream, running_example, MatrixKind, NoiseKind};
use hybridopt::driver::init_point;
use hybridopt::io::{read_matrix, read_vector};
use hybridopt::{Objective, Penalty};
use nalgebra::DVector;

use crate::{CliError, CliResult, InstanceArgs, ObjectiveKind};

/// RNG stream used for random starting points, kept apart from the stream
/// that drives block selection.
const X0_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum GenSpec {
    Uniform { m: usize, n: usize },
    Sparse { m: usize, n: usize, s_true: usize, a_kind: MatrixKind, b_kind: NoiseKind },
    RunningExample,
}

fn parse_dims(s: &str) -> Option<(usize, usize)> {
    let (m, n) = s.split_once(['x', 'X'])?;
    Some((m.parse().ok()?, n.parse().ok()?))
}

impl FromStr for GenSpec {
    type Err = CliError;

    fn from_str(spec: &str) -> CliResult<Self> {
        let bad = |why: &str| CliError::Usage(format!("bad generator '{spec}': {why}"));
        let parts: Vec<&str> = spec.trim().split(':').collect();
        match parts[0] {
            "running-example" if parts.len() == 1 => Ok(GenSpec::RunningExample),
            "uniform" => {
                let [_, dims] = parts[..] else { return Err(bad("expected uniform:MxN")) };
                let (m, n) = parse_dims(dims).ok_or_else(|| bad("expected MxN"))?;
                if m == 0 || n == 0 {
                    return Err(bad("dimensions must be positive"));
                }
                Ok(GenSpec::Uniform { m, n })
            }
            "sparse" => {
                if parts.len() < 3 || parts.len() > 5 {
                    return Err(bad("expected sparse:MxN:S[:AI|AII][:bI|bII|b0]"));
                }
                let (m, n) = parse_dims(parts[1]).ok_or_else(|| bad("expected MxN"))?;
                let s_true = parts[2].parse().map_err(|_| bad("support size must be an integer"))?;
                let mut a_kind = MatrixKind::AI;
                let mut b_kind = NoiseKind::BI;
                for p in &parts[3..] {
                    if p.to_ascii_lowercase().starts_with('a') {
                        a_kind = p.parse()?;
                    } else {
                        b_kind = p.parse()?;
                    }
                }
                if m == 0 || n == 0 || s_true > n {
                    return Err(bad("need m, n >= 1 and S <= n"));
                }
                Ok(GenSpec::Sparse { m, n, s_true, a_kind, b_kind })
            }
            _ => Err(bad("expected uniform:MxN, sparse:MxN:S[...] or running-example")),
        }
    }
}

/// A smooth objective plus, for planted instances, the true signal.
#[derive(Debug, Clone)]
pub struct Instance {
    pub objective: Objective,
    pub x_true: Option<DVector<f64>>,
}

impl GenSpec {
    pub fn generate(&self, seed: u64) -> CliResult<Instance> {
        Ok(match *self {
            GenSpec::Uniform { m, n } => {
                let (a, b) = gen_uniform_ls(m, n, seed);
                Instance { objective: Objective::least_squares(a, b)?, x_true: None }
            }
            GenSpec::Sparse { m, n, s_true, a_kind, b_kind } => {
                let inst = gen_sparse_instance(m, n, s_true, a_kind, b_kind, seed)?;
                Instance { objective: Objective::least_squares(inst.a, inst.b)?, x_true: Some(inst.x_true) }
            }
            GenSpec::RunningExample => Instance { objective: running_example(), x_true: None },
        })
    }
}

impl InstanceArgs {
    pub fn load(&self, seed: u64) -> CliResult<Instance> {
        match (&self.gen, &self.matrix, &self.vector) {
            (Some(spec), _, _) => spec.parse::<GenSpec>()?.generate(self.gen_seed.unwrap_or(seed)),
            (None, Some(m), Some(v)) => {
                let mat = read_matrix(m)?;
                let vec = read_vector(v)?;
                let objective = match self.objective {
                    ObjectiveKind::Quad => Objective::quadratic(mat, vec)?,
                    ObjectiveKind::Ls => Objective::least_squares(mat, vec)?,
                };
                Ok(Instance { objective, x_true: None })
            }
            _ => Err(CliError::Usage("give --gen or both --matrix and --vector".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum X0Spec {
    Random { sigma: f64 },
    Zeros,
    Ones,
    File(PathBuf),
}

pub fn parse_x0(spec: &str) -> CliResult<X0Spec> {
    Ok(match spec {
        "zeros" => X0Spec::Zeros,
        "ones" => X0Spec::Ones,
        "random" => X0Spec::Random { sigma: 1.0 },
        _ => match spec.strip_prefix("random:") {
            Some(s) => {
                let sigma: f64 = s.parse().map_err(|_| CliError::Usage(format!("bad sigma in '{spec}'")))?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(CliError::Usage(format!("sigma must be positive, got {sigma}")));
                }
                X0Spec::Random { sigma }
            }
            None => X0Spec::File(PathBuf::from(spec)),
        },
    })
}

impl X0Spec {
    pub fn build(&self, penalty: &Penalty, n: usize, seed: u64) -> CliResult<DVector<f64>> {
        let x = match self {
            X0Spec::Random { sigma } => init_point(penalty, n, *sigma, &mut rng_from_seed_stream(seed, X0_STREAM)),
            X0Spec::Zeros => DVector::zeros(n),
            X0Spec::Ones => DVector::from_element(n, 1.0),
            X0Spec::File(p) => read_vector(p)?,
        };
        if x.len() != n {
            return Err(hybridopt::Error::DimensionMismatch { expected: n, got: x.len() }.into());
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_specs_parse() {
        assert_eq!("uniform:200x500".parse::<GenSpec>().unwrap(), GenSpec::Uniform { m: 200, n: 500 });
        assert_eq!(
            "sparse:64x128:5:b0".parse::<GenSpec>().unwrap(),
            GenSpec::Sparse { m: 64, n: 128, s_true: 5, a_kind: MatrixKind::AI, b_kind: NoiseKind::Noiseless }
        );
        assert_eq!(
            "sparse:8x9:2:AII:bII".parse::<GenSpec>().unwrap(),
            GenSpec::Sparse { m: 8, n: 9, s_true: 2, a_kind: MatrixKind::AII, b_kind: NoiseKind::BII }
        );
        for bad in ["uniform", "uniform:0x3", "sparse:4x4:9", "gauss:3x3", "uniform:3x"] {
            assert!(bad.parse::<GenSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn x0_specs_parse() {
        assert_eq!(parse_x0("random:0.5").unwrap(), X0Spec::Random { sigma: 0.5 });
        assert_eq!(parse_x0("zeros").unwrap(), X0Spec::Zeros);
        assert!(parse_x0("random:-1").is_err());
        assert_eq!(parse_x0("x.vec").unwrap(), X0Spec::File("x.vec".into()));
    }
}
