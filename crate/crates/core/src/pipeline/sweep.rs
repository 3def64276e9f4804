use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::cell::{assemble, run_cell, slug, Runner};
use super::{io_err, CellFailure, ExperimentConfig, ExperimentResult, PipelineError, Result};

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Overrides the configured worker count.
    pub workers: Option<usize>,
    /// Remove earlier cells, caches and curves first.
    pub clean: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// One result per (sequence, approach), in configuration order.
    pub results: Vec<ExperimentResult>,
    pub cells_total: usize,
    pub cells_executed: usize,
    pub cells_resumed: usize,
    /// External program and mock codec runs performed by this sweep.
    pub invocations: usize,
    pub failures: Vec<CellFailure>,
}

/// Where the curve of one pipeline is written.
pub fn curve_path(output_dir: &Path, sequence: &str, label: &str) -> PathBuf {
    output_dir
        .join("curves")
        .join(format!("{}__{}.json", slug(sequence), slug(label)))
}

/// Removes everything a sweep writes under `output_dir`.
pub fn clean_outputs(output_dir: &Path) -> Result<()> {
    for sub in ["cells", "cache", "curves"] {
        let p = output_dir.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(io_err(&p))?;
        }
    }
    Ok(())
}

/// Runs every (sequence, approach, QP) cell of an experiment on a worker
/// pool. Cells with a matching manifest are reused. A failing cell is
/// reported and does not stop the others.
pub fn sweep(cfg: &ExperimentConfig, opts: &SweepOptions) -> Result<SweepOutcome> {
    let pipes = cfg.pipelines()?;
    if opts.clean {
        clean_outputs(&cfg.output_dir)?;
    }
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let workers = opts.workers.unwrap_or(cfg.workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start {workers} workers: {e}")))?;

    let runner = Runner::new(&cfg.output_dir);
    let jobs: Vec<(usize, i32)> = pipes
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.qps.iter().map(move |&qp| (i, qp)))
        .collect();
    log::info!("sweep: {} cells on {workers} workers", jobs.len());
    let outcomes: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, qp)| run_cell(&runner, &pipes[i], qp))
            .collect()
    });

    let mut per_pipe: Vec<Vec<(i32, Result<_>)>> = pipes.iter().map(|_| Vec::new()).collect();
    let (mut executed, mut resumed) = (0, 0);
    for (&(i, qp), outcome) in jobs.iter().zip(outcomes) {
        let outcome = outcome.map(|(rec, was_resumed)| {
            if was_resumed {
                resumed += 1;
            } else {
                executed += 1;
            }
            rec
        });
        per_pipe[i].push((qp, outcome));
    }

    let curves_dir = cfg.output_dir.join("curves");
    fs::create_dir_all(&curves_dir).map_err(io_err(&curves_dir))?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (pipe, outcomes) in pipes.iter().zip(per_pipe) {
        let result = assemble(pipe, outcomes)?;
        let path = curve_path(&cfg.output_dir, &result.sequence, &result.label);
        fs::write(&path, result.to_json()).map_err(io_err(&path))?;
        failures.extend(result.failures.iter().cloned());
        results.push(result);
    }
    Ok(SweepOutcome {
        results,
        cells_total: jobs.len(),
        cells_executed: executed,
        cells_resumed: resumed,
        invocations: runner.invocations(),
        failures,
    })
}
