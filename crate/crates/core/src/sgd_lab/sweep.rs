use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use super::problem::Problem;
use super::run::{sgd_run, RunRecord, SgdConfig};
use crate::error::{Error, Result};
use crate::scalar::{mean, sample_std, Scalar};

/// Seed-averaged `N_Update` at one mini-batch size.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T> {
    pub minibatch: usize,
    pub mean: T,
    pub std: T,
    pub records: Vec<RunRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError<T: Scalar> {
    #[error(transparent)]
    Run(#[from] Error),

    /// Some seeds ran out of updates. `converged` holds the runs that did
    /// converge so the caller can decide what to do with them.
    #[error("{} of {} seeds did not converge at M = {minibatch}", failed_seeds.len(), failed_seeds.len() + converged.len())]
    Partial { minibatch: usize, converged: Vec<RunRecord<T>>, failed_seeds: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("sweep row M = {minibatch}: {source}")]
pub struct SweepError<T: Scalar> {
    pub minibatch: usize,
    pub source: MeasureError<T>,
}

/// Run every seed at batch size `minibatch`, in parallel, and aggregate.
///
/// Results are collected in seed order, so the output is identical to a
/// sequential loop.
pub fn measure_n_update<T: Scalar>(
    problem: &Problem<T>,
    template: &SgdConfig<T>,
    minibatch: usize,
    seeds: &[u64],
) -> Result<Measurement<T>, MeasureError<T>> {
    if seeds.is_empty() {
        return Err(Error::input("seed list is empty").into());
    }
    let records = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = template.clone().with_minibatch(minibatch).with_seed(seed);
            sgd_run(problem, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let (converged, failed): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.converged());
    if !failed.is_empty() {
        return Err(MeasureError::Partial {
            minibatch,
            converged,
            failed_seeds: failed.iter().map(|r| r.seed).collect(),
        });
    }
    let counts: Vec<T> = converged.iter().map(|r| T::count(r.n_update.unwrap_or_default())).collect();
    Ok(Measurement { minibatch, mean: mean(&counts), std: sample_std(&counts), records: converged })
}

/// `measure_n_update` for every batch size in `minibatches` (strictly
/// increasing), one row each in input order.
pub fn sweep<T: Scalar>(
    problem: &Problem<T>,
    template: &SgdConfig<T>,
    minibatches: &[usize],
    seeds: &[u64],
) -> Result<Vec<Measurement<T>>, SweepError<T>> {
    check_batch_list(minibatches)
        .map_err(|e| SweepError { minibatch: minibatches.first().copied().unwrap_or(0), source: e.into() })?;
    minibatches
        .iter()
        .map(|&m| measure_n_update(problem, template, m, seeds).map_err(|source| SweepError { minibatch: m, source }))
        .collect()
}

fn check_batch_list(minibatches: &[usize]) -> Result<()> {
    if minibatches.is_empty() {
        return Err(Error::input("mini-batch list is empty"));
    }
    if minibatches.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("mini-batch list must be strictly increasing"));
    }
    Ok(())
}

/// Every (M, seed) run of a sweep, converged or not, ordered by M then seed.
///
/// This is the raw material of `runs.csv`. Divergence aborts the grid.
pub fn run_grid<T: Scalar>(
    problem: &Problem<T>,
    template: &SgdConfig<T>,
    minibatches: &[usize],
    seeds: &[u64],
) -> Result<Vec<RunRecord<T>>> {
    check_batch_list(minibatches)?;
    if seeds.is_empty() {
        return Err(Error::input("seed list is empty"));
    }
    let jobs: Vec<(usize, u64)> = minibatches.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    jobs.par_iter()
        .map(|&(m, seed)| {
            let cfg = template.clone().with_minibatch(m).with_seed(seed);
            sgd_run(problem, &cfg)
        })
        .collect()
}

/// Summary of records grouped by mini-batch size.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow<T> {
    pub minibatch: usize,
    pub mean: T,
    pub std: T,
    pub converged: usize,
    pub total: usize,
}

/// Group records by M (ascending) and average the converged runs.
/// Groups with no converged run are dropped.
pub fn aggregate<T: Scalar>(records: &[RunRecord<T>]) -> Vec<AggregateRow<T>> {
    let mut groups: BTreeMap<usize, (Vec<T>, usize)> = BTreeMap::new();
    for r in records {
        let entry = groups.entry(r.minibatch).or_default();
        entry.1 += 1;
        if let Some(n) = r.n_update {
            entry.0.push(T::count(n));
        }
    }
    groups
        .into_iter()
        .filter(|(_, (counts, _))| !counts.is_empty())
        .map(|(minibatch, (counts, total))| AggregateRow {
            minibatch,
            mean: mean(&counts),
            std: sample_std(&counts),
            converged: counts.len(),
            total,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgd_lab::run::InitPolicy;

    fn noisy() -> Problem<f64> {
        Problem::noisy_quadratic(10, 1.0, 0.3).unwrap()
    }

    #[test]
    fn noiseless_seeds_have_zero_spread() {
        let p = Problem::<f64>::noisy_quadratic(5, 1.0, 0.0).unwrap();
        let cfg = SgdConfig::new(0.1, 1e-3);
        let m = measure_n_update(&p, &cfg, 8, &[1, 2, 3]).unwrap();
        assert_eq!(m.std, 0.0);
        let single = sgd_run(&p, &cfg.clone().with_minibatch(8).with_seed(1)).unwrap();
        assert_eq!(m.mean, single.n_update.unwrap() as f64);
    }

    #[test]
    fn single_seed_mean_is_that_run() {
        let p = noisy();
        let cfg = SgdConfig::new(0.05, 1e-2);
        let m = measure_n_update(&p, &cfg, 4, &[7]).unwrap();
        let run = sgd_run(&p, &cfg.clone().with_minibatch(4).with_seed(7)).unwrap();
        assert_eq!(m.mean, run.n_update.unwrap() as f64);
        assert_eq!(m.std, 0.0);
    }

    #[test]
    fn larger_batches_need_fewer_updates() {
        let p = noisy();
        let cfg = SgdConfig::new(0.05, 1e-2);
        let seeds: Vec<u64> = (0..20).collect();
        let m1 = measure_n_update(&p, &cfg, 1, &seeds).unwrap();
        let m64 = measure_n_update(&p, &cfg, 64, &seeds).unwrap();
        assert!(m1.mean > m64.mean, "{} vs {}", m1.mean, m64.mean);
    }

    #[test]
    fn non_converged_seeds_produce_partial_result() {
        let p = noisy();
        let cfg = SgdConfig::new(0.05, 1e-2).with_max_updates(3);
        match measure_n_update(&p, &cfg, 1, &[0, 1]) {
            Err(MeasureError::Partial { failed_seeds, converged, .. }) => {
                assert_eq!(failed_seeds, vec![0, 1]);
                assert!(converged.is_empty());
            }
            other => panic!("expected partial result, got {other:?}"),
        }
    }

    #[test]
    fn sweep_means_decrease_with_batch_size() {
        let p = noisy();
        let cfg = SgdConfig::new(0.05, 1e-2);
        let seeds: Vec<u64> = (0..20).collect();
        let ms = [1, 2, 4, 8, 16, 32, 64, 128, 256];
        let rows = sweep(&p, &cfg, &ms, &seeds).unwrap();
        assert_eq!(rows.iter().map(|r| r.minibatch).collect::<Vec<_>>(), ms);
        for w in rows.windows(2) {
            let slack = w[0].std.max(w[1].std);
            assert!(w[1].mean <= w[0].mean + slack, "{:?}", (w[0].mean, w[1].mean));
        }
    }

    #[test]
    fn noiseless_sweep_rows_are_equal() {
        let p = Problem::<f64>::noisy_quadratic(3, 1.0, 0.0).unwrap();
        let cfg = SgdConfig::new(0.2, 1e-4);
        let rows = sweep(&p, &cfg, &[1, 4, 16, 64], &[0, 1]).unwrap();
        assert!(rows.iter().all(|r| r.mean == rows[0].mean));
    }

    #[test]
    fn bad_batch_lists_are_rejected() {
        let p = noisy();
        let cfg = SgdConfig::new(0.05, 1e-2);
        assert!(sweep(&p, &cfg, &[], &[0]).is_err());
        assert!(sweep(&p, &cfg, &[4, 2], &[0]).is_err());
        assert!(run_grid(&p, &cfg, &[1, 1], &[0]).is_err());
    }

    #[test]
    fn sweep_errors_name_the_offending_batch() {
        let p = Problem::<f64>::quadratic(2, 1.0, 0.2, 16, 0).unwrap();
        let cfg = SgdConfig::new(0.05, 1e-2);
        let err = sweep(&p, &cfg, &[8, 32], &[0]).unwrap_err();
        assert_eq!(err.minibatch, 32);
    }

    #[test]
    fn parallel_grid_matches_sequential_runs() {
        let p = noisy();
        let cfg = SgdConfig::new(0.05, 1e-2).with_init(InitPolicy::Sphere { radius: 1.0 });
        let grid = run_grid(&p, &cfg, &[1, 8], &[3, 4, 5]).unwrap();
        let sequential: Vec<_> = [1usize, 8]
            .iter()
            .flat_map(|&m| {
                let cfg = cfg.clone();
                let p = &p;
                [3u64, 4, 5].into_iter().map(move |s| sgd_run(p, &cfg.clone().with_minibatch(m).with_seed(s)).unwrap())
            })
            .collect();
        assert_eq!(grid, sequential);
        let agg = aggregate(&grid);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].total, 3);
    }
}
