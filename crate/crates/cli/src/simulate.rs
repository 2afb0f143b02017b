use serde::{Deserialize, Serialize};
use sgdtime::sgd_lab::{run_grid, InitPolicy, Problem, ProblemKind, RunRecord, Spectrum, DEFAULT_MAX_UPDATES};
use sgdtime::SgdConfig64;

use crate::error::{CliError, CliResult};
use crate::files::Outputs;
use crate::overrides::Overrides;
use crate::{check_increasing, Cli, SimulateArgs};

pub(crate) const RUNS_HEADER: [&str; 6] = ["M", "seed", "epsilon", "n_update", "converged", "final_residual"];

/// One line of runs.csv. `n_update` is empty for runs that did not converge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RunRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub n_update: Option<u64>,
    pub converged: bool,
    pub final_residual: f64,
}

impl From<&RunRecord<f64>> for RunRow {
    fn from(r: &RunRecord<f64>) -> Self {
        RunRow {
            m: r.minibatch,
            seed: r.seed,
            epsilon: r.epsilon,
            n_update: r.n_update,
            converged: r.converged(),
            final_residual: r.final_residual,
        }
    }
}

fn build_problem(kind: ProblemKind, seed: u64, o: &mut Overrides) -> CliResult<Problem<f64>> {
    let dim = o.take_or("dim", 10usize)?;
    let data_seed = o.take_or("data_seed", seed)?;
    let problem = match kind {
        ProblemKind::Logistic => Problem::logistic(dim, o.take_or("dataset_size", 1024usize)?, data_seed)?,
        ProblemKind::NoisyQuadratic | ProblemKind::Quadratic => {
            let curvature = o.take_or("curvature", 1.0)?;
            let phi = o.take_or("phi", 0.2)?;
            let p = if kind == ProblemKind::Quadratic {
                Problem::quadratic(dim, curvature, phi, o.take_or("dataset_size", 1024usize)?, data_seed)?
            } else {
                Problem::noisy_quadratic(dim, curvature, phi)?
            };
            match o.take::<f64>("condition")? {
                Some(c) if c > 1.0 => p.with_spectrum(Spectrum::LogSpaced { condition: c })?,
                Some(c) if c < 1.0 => return Err(CliError::input(format!("--set condition must be >= 1, got {c}"))),
                _ => p,
            }
        }
    };
    Ok(problem)
}

pub(crate) fn run(args: &SimulateArgs, cli: &Cli, mut o: Overrides) -> CliResult<String> {
    let kind: ProblemKind = args.problem.parse()?;
    check_increasing("--M", &args.m)?;
    if args.eps.is_empty() {
        return Err(CliError::input("--eps list is empty"));
    }
    if args.seeds == 0 {
        return Err(CliError::input("--seeds must be at least 1"));
    }
    let problem = build_problem(kind, cli.seed, &mut o)?;
    let eta = o.take_or("eta", 0.05)?;
    let max_updates = o.take_or("max_updates", DEFAULT_MAX_UPDATES)?;
    let radius = o.take_or("radius", 1.0)?;
    o.finish("simulate")?;

    let seeds: Vec<u64> = (0..args.seeds).map(|i| cli.seed.wrapping_add(i)).collect();
    let mut rows = Vec::new();
    for &eps in &args.eps {
        let cfg = SgdConfig64::new(eta, eps).with_max_updates(max_updates).with_init(InitPolicy::Sphere { radius });
        let records = run_grid(&problem, &cfg, &args.m, &seeds)?;
        rows.extend(records.iter().map(RunRow::from));
    }
    let converged = rows.iter().filter(|r| r.converged).count();

    let mut out = Outputs::default();
    out.add_csv("runs.csv", &rows)?;
    let written = out.write_all(&cli.out)?;
    Ok(format!(
        "simulate: {} runs ({converged} converged) over {} batch sizes x {} seeds x {} epsilon(s) -> {}",
        rows.len(),
        args.m.len(),
        args.seeds,
        args.eps.len(),
        written[0].display()
    ))
}
