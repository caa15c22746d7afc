//! Parallel ensembles over a rayon pool.
//!
//! Trials are collected in index order and aggregated sequentially, so the
//! exported numbers do not depend on the number of worker threads.

use std::time::Instant;

use alphaeta_core::experiment::{check_invariants, Fault, InvariantReport, Simulation};
use alphaeta_core::{aggregate, CurveAggregate, ExperimentConfig, TrialRecord};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Trials per block of the mean-posterior reduction. Block boundaries and
/// the order in which blocks are folded are fixed, which keeps the result
/// independent of scheduling.
const MEAN_POSTERIOR_BLOCK: u64 = 16;
const MEAN_POSTERIOR_WAVE: u64 = 8;

#[derive(Debug, Clone, Default)]
pub struct EnsembleOptions {
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
    /// Also compute the entropy of the mean posterior (keys aligned to the
    /// true key by XOR). Costs roughly one extra pass per update.
    pub mean_posterior: bool,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub aggregate: CurveAggregate,
    pub records: Vec<TrialRecord>,
    /// Per-`q` entropy in bits of the trial-averaged aligned posterior.
    pub mean_posterior_entropy: Option<Vec<f64>>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

impl EnsembleOutput {
    pub fn invariants(&self) -> InvariantReport {
        let cfg = self.aggregate.config.as_ref().expect("ensemble output carries its config");
        check_invariants(cfg, &self.records, &self.aggregate)
    }
}

pub fn resolve_threads(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

/// Runs `cfg.n_trials` trials. The configuration and evaluation budget are
/// checked before any work starts.
pub fn run_ensemble(cfg: &ExperimentConfig, opts: &EnsembleOptions) -> Result<EnsembleOutput> {
    let start = Instant::now();
    let sim = Simulation::new(cfg.clone())?.with_fault(opts.fault);
    let threads = resolve_threads(opts.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} worker threads: {e}")))?;

    let (records, mean_posterior_entropy) = pool.install(|| {
        if opts.mean_posterior {
            run_with_mean_posterior(&sim).map(|(r, h)| (r, Some(h)))
        } else {
            (0..cfg.n_trials)
                .into_par_iter()
                .map(|i| sim.run_trial(i))
                .collect::<alphaeta_core::Result<Vec<_>>>()
                .map(|r| (r, None))
        }
    })?;
    let aggregate = aggregate(cfg, &records)?;
    Ok(EnsembleOutput {
        aggregate,
        records,
        mean_posterior_entropy,
        threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

type Block = (Vec<TrialRecord>, Vec<Vec<f64>>);

fn run_with_mean_posterior(sim: &Simulation) -> alphaeta_core::Result<(Vec<TrialRecord>, Vec<f64>)> {
    let cfg = sim.config();
    let n_keys = sim.map().n_keys();
    let q_max = cfg.q_max as usize;
    let n_blocks = cfg.n_trials.div_ceil(MEAN_POSTERIOR_BLOCK);
    let mut records = Vec::with_capacity(cfg.n_trials as usize);
    let mut total = vec![vec![0.0; n_keys]; q_max];

    let mut first_block = 0;
    while first_block < n_blocks {
        let last_block = (first_block + MEAN_POSTERIOR_WAVE).min(n_blocks);
        let wave: Vec<Block> = (first_block..last_block)
            .into_par_iter()
            .map(|b| {
                let lo = b * MEAN_POSTERIOR_BLOCK;
                let hi = (lo + MEAN_POSTERIOR_BLOCK).min(cfg.n_trials);
                let mut sums = vec![vec![0.0; n_keys]; q_max];
                let mut recs = Vec::with_capacity((hi - lo) as usize);
                for i in lo..hi {
                    let rec = sim.run_trial_observed(i, |q, true_key, post| {
                        let t = true_key.index();
                        let row = &mut sums[q - 1];
                        for (k, &lp) in post.log_probs().iter().enumerate() {
                            row[k ^ t] += lp.exp();
                        }
                    })?;
                    recs.push(rec);
                }
                Ok((recs, sums))
            })
            .collect::<alphaeta_core::Result<Vec<_>>>()?;
        for (recs, sums) in wave {
            records.extend(recs);
            for (acc, s) in total.iter_mut().zip(&sums) {
                acc.iter_mut().zip(s).for_each(|(a, v)| *a += v);
            }
        }
        first_block = last_block;
    }

    let n = cfg.n_trials as f64;
    let entropy = total
        .iter()
        .map(|row| {
            -row.iter()
                .map(|&s| s / n)
                .filter(|&p| p > 0.0)
                .map(|p| p * p.log2())
                .sum::<f64>()
        })
        .collect();
    Ok((records, entropy))
}
