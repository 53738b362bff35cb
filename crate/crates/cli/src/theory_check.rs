//! Randomized sweep over the population-level inequalities.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use sbm_core::graph::{BlockMatrix, Labeling};
use sbm_core::seed::{derive_seed, rng_from_seed};
use sbm_core::theory::{
    bias_gap_kl, chain_with, lbar, lbar_reg, pair_partition_from_labels, pairing, partition_loglik,
    refine, triple_closure_holds, triple_set, PairPartition, ProbMatrix, CHAIN_TOL,
};

use crate::config::{Loaded, TheorySection};
use crate::output::{write_with_header, Meta};
use crate::{with_workers, CliError};

pub const CSV_HEADER: &str =
    "seed,n,K,gap_regularized,gap_refined_regularized,gap_refined,bias_gap,chain_ok,c1,Ne,triples,conflicts,all_ok";

#[derive(Debug, Clone)]
pub struct Instance {
    pub p: ProbMatrix,
    pub z_true: Labeling,
    pub z_est: Labeling,
}

/// Block-constant `P` under a random `z_true` with every block nonempty,
/// and a `z_est` that relabels a random fraction of nodes.
pub fn random_instance(seed: u64, cfg: &TheorySection) -> Result<Instance, CliError> {
    let mut rng = rng_from_seed(seed);
    let k = rng.random_range(2..=cfg.max_k.max(2));
    let n = rng.random_range((2 * k).min(cfg.max_n)..=cfg.max_n.max(2 * k));
    let mut labels: Vec<usize> = (0..n)
        .map(|i| if i < k { i } else { rng.random_range(0..k) })
        .collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    let homogeneous = rng.random_bool(0.2);
    let r = rng.random_range(0.0..0.4);
    let theta = BlockMatrix::from_upper(k, |a, b| {
        if a == b {
            rng.random_range(0.1..0.95)
        } else if homogeneous {
            r
        } else {
            rng.random_range(0.0..0.5)
        }
    })?;
    let z_true = Labeling::new(labels, k)?;
    let p = ProbMatrix::from_blocks(&z_true, &theta)?;
    let flip = rng.random_range(0.0..0.6);
    let est: Vec<usize> = z_true
        .labels()
        .iter()
        .map(|&l| {
            if rng.random_bool(flip) {
                rng.random_range(0..k)
            } else {
                l
            }
        })
        .collect();
    let z_est = Labeling::new(est, k)?;
    Ok(Instance { p, z_true, z_est })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub gap_regularized: f64,
    pub gap_refined_regularized: f64,
    pub gap_refined: f64,
    pub bias_gap: f64,
    pub chain_ok: bool,
    pub c1: usize,
    pub ne: usize,
    pub triples: usize,
    pub conflicts: usize,
    /// Names of the checks that failed.
    pub failures: Vec<&'static str>,
}

impl InstanceReport {
    pub fn all_ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:.10},{:.10},{:.10},{:.10},{},{},{},{},{},{}",
            self.seed,
            self.n,
            self.k,
            self.gap_regularized,
            self.gap_refined_regularized,
            self.gap_refined,
            self.bias_gap,
            self.chain_ok,
            self.c1,
            self.ne,
            self.triples,
            self.conflicts,
            self.all_ok()
        )
    }
}

/// Runs every check on one instance. With `inject_fault`, the plain
/// refinement is replaced by a single all-pairs group before scoring.
pub fn check_instance(
    seed: u64,
    inst: &Instance,
    c_const: f64,
    inject_fault: bool,
) -> Result<InstanceReport, CliError> {
    let Instance { p, z_true, z_est } = inst;
    let n = p.n();
    let mut failures = Vec::new();
    let close = |a: f64, b: f64| (a - b).abs() <= CHAIN_TOL;

    for z in [z_true, z_est] {
        let (l, lr) = (lbar(p, z)?, lbar_reg(p, z)?);
        if !close(
            partition_loglik(p, &pair_partition_from_labels(z, false))?,
            l,
        ) {
            failures.push("identity_plain");
        }
        if !close(
            partition_loglik(p, &pair_partition_from_labels(z, true))?,
            lr,
        ) {
            failures.push("identity_regularized");
        }
        if lr > l + CHAIN_TOL || l > CHAIN_TOL {
            failures.push("ordering");
        }
    }
    let bias = bias_gap_kl(p, z_true)?;
    if !close(lbar(p, z_true)? - lbar_reg(p, z_true)?, bias) {
        failures.push("bias_identity");
    }

    let pr = pairing(z_est, z_true)?;
    let triples = triple_set(&pr, p, c_const, p.expected_edges(), z_true.k());
    if !triple_closure_holds(&triples, &pr, z_true) {
        failures.push("closure");
    }
    for regularized in [false, true] {
        let base = pair_partition_from_labels(z_est, regularized);
        let refined = refine(&base, &triples).partition;
        if !refined.is_refinement_of(&base) {
            failures.push("refinement_structure");
        }
        if partition_loglik(p, &refined)? < partition_loglik(p, &base)? - CHAIN_TOL {
            failures.push("refinement_monotone");
        }
    }

    let report = chain_with(p, z_true, z_est, c_const, |r| {
        if inject_fault {
            PairPartition::from_assignment(n, vec![0; r.assignment().len()]).expect("same length")
        } else {
            r
        }
    })?;
    if !report.chain_ok {
        failures.push("chain");
    }
    if !report.structure_ok {
        failures.push("chain_structure");
    }
    if !(report.ne <= 2 * report.c1 && report.c1 <= report.ne) {
        failures.push("c1_bounds");
    }
    Ok(InstanceReport {
        seed,
        n,
        k: z_true.k(),
        gap_regularized: report.gap_regularized,
        gap_refined_regularized: report.gap_refined_regularized,
        gap_refined: report.gap_refined,
        bias_gap: bias,
        chain_ok: report.chain_ok,
        c1: report.c1,
        ne: report.ne,
        triples: report.triples,
        conflicts: report.conflicts,
        failures,
    })
}

/// Instance `i` uses seed `derive_seed(master, [i])`.
pub fn run(
    master: u64,
    cfg: &TheorySection,
    workers: Option<usize>,
    inject_fault: bool,
) -> Result<Vec<InstanceReport>, CliError> {
    if cfg.max_k < 2 || cfg.max_n < 2 * cfg.max_k.max(2) || cfg.instances == 0 {
        return Err(CliError::Usage(
            "theory needs instances >= 1, max_k >= 2 and max_n >= 2 * max_k".into(),
        ));
    }
    let reports: Vec<Result<InstanceReport, CliError>> = with_workers(workers, || {
        (0..cfg.instances as u64)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(master, &[i]);
                check_instance(
                    seed,
                    &random_instance(seed, cfg)?,
                    cfg.c_const,
                    inject_fault,
                )
            })
            .collect()
    })?;
    reports.into_iter().collect()
}

pub fn write_csv(path: &Path, loaded: &Loaded, reports: &[InstanceReport]) -> Result<(), CliError> {
    let mut body = format!("{CSV_HEADER}\n");
    for r in reports {
        writeln!(body, "{}", r.csv()).ok();
    }
    let meta = Meta {
        command: "theory-check",
        config_sha256: loaded.sha256.clone(),
        seed: loaded.config.run.seed,
    };
    write_with_header(path, &meta, &body)
}

/// First failing instance, formatted for the error message.
pub fn first_failure(reports: &[InstanceReport]) -> Option<String> {
    reports
        .iter()
        .find(|r| !r.all_ok())
        .map(|r| format!("seed {} failed {}", r.seed, r.failures.join(",")))
}
