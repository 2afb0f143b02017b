use std::path::Path;

use serde::Serialize;
use sgdtime::hwmodel::{fit_hardware, Timing};
use sgdtime::lawfit::{fit_epsilon_dependence, fit_inverse_law, LawParams};
use sgdtime::sgd_lab::{aggregate, RunRecord};

use crate::error::{CliError, CliResult};
use crate::files::{read_csv, Outputs};
use crate::overrides::Overrides;
use crate::simulate::{RunRow, RUNS_HEADER};
use crate::{Cli, FitArgs};

const TIMINGS_HEADER: [&str; 3] = ["M", "P", "t_update_seconds"];

#[derive(Serialize)]
struct LawRow {
    epsilon: f64,
    n_inf: f64,
    alpha: f64,
    r_squared: f64,
    flags: String,
}

/// Read runs.csv and group the records by epsilon, largest first.
fn load_runs(path: &Path) -> CliResult<Vec<(f64, Vec<RunRecord<f64>>)>> {
    let rows = read_csv::<RunRow>(path, &RUNS_HEADER)?;
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no runs", path.display())));
    }
    let mut groups: Vec<(f64, Vec<RunRecord<f64>>)> = Vec::new();
    for (line, row) in rows {
        if row.converged != row.n_update.is_some() {
            return Err(CliError::input(format!(
                "{} line {line}: converged = {} disagrees with n_update",
                path.display(),
                row.converged
            )));
        }
        if row.epsilon.is_nan() || row.epsilon <= 0.0 || row.m == 0 {
            return Err(CliError::input(format!("{} line {line}: need M >= 1 and epsilon > 0", path.display())));
        }
        let record = RunRecord {
            minibatch: row.m,
            seed: row.seed,
            epsilon: row.epsilon,
            n_update: row.n_update,
            final_residual: row.final_residual,
        };
        match groups.iter_mut().find(|(e, _)| *e == row.epsilon) {
            Some((_, g)) => g.push(record),
            None => groups.push((row.epsilon, vec![record])),
        }
    }
    groups.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(groups)
}

/// Fit one epsilon group. Batch sizes where some seed did not converge are
/// left out, since their mean would be biased low.
fn fit_group(eps: f64, records: &[RunRecord<f64>]) -> CliResult<(LawParams<f64>, usize)> {
    let rows = aggregate(records);
    let complete: Vec<(usize, f64)> =
        rows.iter().filter(|r| r.converged == r.total).map(|r| (r.minibatch, r.mean)).collect();
    let total_sizes = records.iter().map(|r| r.minibatch).collect::<std::collections::BTreeSet<_>>().len();
    let dropped = total_sizes - complete.len();
    if complete.len() < 2 {
        return Err(CliError::input(format!(
            "epsilon {eps}: only {} batch size(s) with every seed converged, need 2",
            complete.len()
        )));
    }
    Ok((fit_inverse_law(&complete, eps)?, dropped))
}

fn flag_list(law: &LawParams<f64>) -> String {
    law.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(";")
}

pub(crate) fn run(args: &FitArgs, cli: &Cli, o: Overrides) -> CliResult<String> {
    o.finish("fit")?;
    let runs_path = match (&args.runs, &args.timings) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(_)) => None,
        (None, None) => Some(cli.out.join("runs.csv")),
    };
    let mut out = Outputs::default();
    let mut summary = Vec::new();

    if let Some(path) = runs_path {
        let groups = load_runs(&path)?;
        let mut fits = Vec::new();
        let mut dropped = 0;
        for (eps, records) in &groups {
            let (law, d) = fit_group(*eps, records)?;
            dropped += d;
            fits.push(law);
        }
        // the tightest target is the one a plan is usually made for
        let law = fits.last().expect("at least one group").clone();
        out.add_json("law.json", &law)?;
        summary.push(format!(
            "law: n_inf={} alpha={} r2={:.4} at epsilon={}",
            law.n_inf, law.alpha, law.r_squared, law.epsilon
        ));
        if !law.flags.is_empty() {
            summary.push(format!("flags={}", flag_list(&law)));
        }
        if dropped > 0 {
            summary.push(format!("{dropped} batch size(s) skipped for non-converged seeds"));
        }
        if fits.len() >= 2 {
            let rows: Vec<LawRow> = fits
                .iter()
                .map(|f| LawRow {
                    epsilon: f.epsilon,
                    n_inf: f.n_inf,
                    alpha: f.alpha,
                    r_squared: f.r_squared,
                    flags: flag_list(f),
                })
                .collect();
            out.add_csv("law_by_epsilon.csv", &rows)?;
        }
        if fits.len() >= 3 {
            match fit_epsilon_dependence(&fits) {
                Ok(study) => {
                    summary
                        .push(format!("epsilon slopes: n_inf {:.3}, alpha {:.3}", study.slope_ninf, study.slope_alpha));
                    out.add_json("epsilon_study.json", &study)?;
                }
                Err(e) => summary.push(format!("epsilon study skipped: {e}")),
            }
        }
    }

    if let Some(path) = &args.timings {
        let rows = read_csv::<Timing<f64>>(path, &TIMINGS_HEADER)?;
        let timings: Vec<Timing<f64>> = rows.into_iter().map(|(_, t)| t).collect();
        let hw = fit_hardware(&timings)?;
        out.add_json("hw.json", &hw.params)?;
        summary.push(format!(
            "hw: gamma={} m_t={} delta={} comm_kind={}",
            hw.params.gamma, hw.params.m_t, hw.params.delta, hw.params.comm_kind
        ));
        if !hw.flags.is_empty() {
            summary.push("knee unresolved: smallest measured M is the best knee".to_string());
        }
    }

    let written = out.write_all(&cli.out)?;
    let names: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    Ok(format!("fit: {} -> {}", summary.join("; "), names.join(", ")))
}
