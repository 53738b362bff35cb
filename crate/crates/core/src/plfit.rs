//! Pseudo-likelihood EM fitting of block labels.
//!
//! Each outer iteration compresses the graph into per-node block-neighbor
//! counts under the current hard labels, models every count row as a
//! mixture of independent Poisson rows with means `lambda_kl = N_l theta_kl`,
//! runs EM on that mixture, and hardens the posterior into new labels.
//!
//! The regularized variant keeps every off-diagonal `theta` equal: the
//! initial `theta` is projected with [`rmle_project`], and each M-step
//! solves the same restricted problem in closed form.

use crate::error::{Result, SbmError};
use crate::graph::{BlockMatrix, Graph, Labeling};
use crate::likelihood::{loglik_from_counts, mle_from_counts, rmle_from_counts, BlockCounts};
use crate::seed::derive_seed;
use crate::spectral::SpectralInit;

/// Floor applied to Poisson means inside logarithms.
pub const LAMBDA_FLOOR: f64 = 1e-10;
/// k-means restarts allowed per fit under [`ReseedPolicy::KmeansRestart`].
pub const MAX_KMEANS_RESTARTS: usize = 3;

/// What to do when hardening leaves a block without nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReseedPolicy {
    /// Rebuild the block from a transitive neighborhood ([`reseed_block`]).
    Reseed,
    /// Rerun the spectral k-means step with a fresh seed and start over.
    KmeansRestart,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub regularized: bool,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative change of the tracked objective that counts as converged.
    pub tol: f64,
    pub seed: u64,
    pub reseed_policy: ReseedPolicy,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            regularized: false,
            max_outer: 20,
            max_inner: 50,
            tol: 1e-6,
            seed: 0,
            reseed_policy: ReseedPolicy::None,
        }
    }
}

impl FitOptions {
    /// Unrestricted MLE with k-means restarts on empty blocks.
    pub fn mle(seed: u64) -> Self {
        Self {
            seed,
            reseed_policy: ReseedPolicy::KmeansRestart,
            ..Self::default()
        }
    }

    /// Regularized MLE with transitive-neighborhood re-seeding.
    pub fn rmle(seed: u64) -> Self {
        Self {
            regularized: true,
            seed,
            reseed_policy: ReseedPolicy::Reseed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(SbmError::invalid("iteration caps must be positive"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(SbmError::invalid("tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReseedAction {
    /// Block rebuilt from `moved` nodes taken around the donor block.
    Reseeded {
        donor: usize,
        moved: usize,
    },
    KmeansRestart {
        attempt: usize,
    },
    /// Nothing could be done (no donor, or restart budget spent).
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReseedEvent {
    pub iteration: usize,
    pub block: usize,
    pub action: ReseedAction,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub labels: Labeling,
    pub theta: BlockMatrix,
    /// Mixture weights from the last EM pass.
    pub mixing: Vec<f64>,
    /// Tracked profile log-likelihood after every outer iteration.
    pub trace: Vec<f64>,
    /// Pseudo-log-likelihood after every E-step, one list per outer iteration.
    pub inner_traces: Vec<Vec<f64>>,
    pub reseed_events: Vec<ReseedEvent>,
    pub converged: bool,
    pub iterations: usize,
    /// Fewest non-empty blocks seen right after any hardening step.
    pub min_nonempty_blocks: usize,
}

impl FitResult {
    pub fn nonempty_blocks(&self) -> usize {
        self.labels.nonempty_blocks()
    }
}

/// Row-major `n x k` matrix of counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl CountMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, l: usize) -> u32 {
        self.data[i * self.cols + l]
    }
}

/// Entry `(i, l)` is the number of neighbors of `i` labeled `l`.
pub fn block_neighbor_counts(g: &Graph, z: &Labeling) -> Result<CountMatrix> {
    z.check_len(g.n())?;
    let (n, k) = (g.n(), z.k());
    let mut data = vec![0u32; n * k];
    for i in 0..n {
        for &j in g.neighbors(i) {
            data[i * k + z.get(j)] += 1;
        }
    }
    Ok(CountMatrix {
        rows: n,
        cols: k,
        data,
    })
}

/// Replaces every off-diagonal entry with the `n_ab`-weighted off-diagonal
/// mean under `z`. Leaves `theta` alone when there are no cross-block pairs.
pub fn rmle_project(theta: &BlockMatrix, z: &Labeling) -> Result<BlockMatrix> {
    let k = theta.k();
    if z.k() != k {
        return Err(SbmError::Dimension {
            expected: k,
            actual: z.k(),
        });
    }
    let sizes = z.block_sizes();
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..k {
        for b in (a + 1)..k {
            let w = (sizes[a] * sizes[b]) as f64;
            num += w * theta.get(a, b);
            den += w;
        }
    }
    if den == 0.0 {
        return Ok(theta.clone());
    }
    let r = num / den;
    BlockMatrix::from_upper(k, |a, b| if a == b { theta.get(a, a) } else { r })
}

fn sorted_intersects(a: &[usize], b: &[usize]) -> bool {
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Neighbors of `v` that have at least one edge to another neighbor of `v`.
pub fn transitive_neighborhood(g: &Graph, v: usize) -> Vec<usize> {
    let nv = g.neighbors(v);
    nv.iter()
        .copied()
        .filter(|&u| sorted_intersects(g.neighbors(u), nv))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReseedOutcome {
    pub labels: Labeling,
    /// Block whose members seeded the new block; `None` when no block
    /// qualified and the labels are unchanged.
    pub donor: Option<usize>,
    pub moved: Vec<usize>,
}

/// Rebuilds `empty_block` from the non-empty block with the smallest
/// empirical in-block probability: the donor member with the largest
/// transitive neighborhood moves to `empty_block` together with that
/// neighborhood. Singleton blocks have no in-block estimate and never donate.
pub fn reseed_block(g: &Graph, z: &Labeling, empty_block: usize) -> Result<ReseedOutcome> {
    if empty_block >= z.k() {
        return Err(SbmError::invalid(format!(
            "block {empty_block} outside 0..{}",
            z.k()
        )));
    }
    let est = mle_from_counts(&BlockCounts::new(g, z)?);
    let donor = (0..z.k())
        .filter(|&a| a != empty_block)
        .filter_map(|a| est.get(a, a).map(|t| (a, t)))
        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
        .map(|(a, _)| a);
    let Some(donor) = donor else {
        return Ok(ReseedOutcome {
            labels: z.clone(),
            donor: None,
            moved: Vec::new(),
        });
    };
    let mut best: Option<(usize, Vec<usize>)> = None;
    for v in (0..z.n()).filter(|&v| z.get(v) == donor) {
        let tn = transitive_neighborhood(g, v);
        if best.as_ref().is_none_or(|(_, b)| tn.len() > b.len()) {
            best = Some((v, tn));
        }
    }
    let (v, tn) = best.expect("donor block has at least two members");
    let mut labels = z.clone();
    let mut moved = vec![v];
    moved.extend(tn);
    moved.sort_unstable();
    for &u in &moved {
        labels.set(u, empty_block);
    }
    Ok(ReseedOutcome {
        labels,
        donor: Some(donor),
        moved,
    })
}

fn tracked_objective(c: &BlockCounts, regularized: bool) -> f64 {
    let est = if regularized {
        rmle_from_counts(c)
    } else {
        mle_from_counts(c)
    };
    loglik_from_counts(c, est.theta())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

struct EmState {
    /// Poisson means, row = mixture class, column = neighbor block.
    lambda: Vec<f64>,
    pi: Vec<f64>,
}

struct EmPass {
    labels: Vec<usize>,
    pi: Vec<f64>,
    trace: Vec<f64>,
}

/// EM on the Poisson row mixture for fixed column labels.
fn inner_em(
    counts: &CountMatrix,
    sizes: &[usize],
    mut state: EmState,
    regularized: bool,
    max_inner: usize,
    tol: f64,
) -> EmPass {
    let (n, k) = (counts.rows(), counts.cols());
    let mut log_w = vec![0.0; n * k];
    let mut trace = Vec::with_capacity(max_inner);
    for iter in 0..max_inner {
        // E-step.
        let log_lambda: Vec<f64> = state
            .lambda
            .iter()
            .map(|&l| l.max(LAMBDA_FLOOR).ln())
            .collect();
        let lambda_total: Vec<f64> = (0..k)
            .map(|c| state.lambda[c * k..(c + 1) * k].iter().sum())
            .collect();
        let log_pi: Vec<f64> = state
            .pi
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        let mut objective = 0.0;
        for i in 0..n {
            let b = counts.row(i);
            let row = &mut log_w[i * k..(i + 1) * k];
            for c in 0..k {
                row[c] = if log_pi[c] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    let dot: f64 = b
                        .iter()
                        .zip(&log_lambda[c * k..(c + 1) * k])
                        .filter(|(&x, _)| x > 0)
                        .map(|(&x, &ll)| x as f64 * ll)
                        .sum();
                    log_pi[c] + dot - lambda_total[c]
                };
            }
            let lse = log_sum_exp(row);
            objective += lse;
            row.iter_mut().for_each(|w| *w = (*w - lse).exp());
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (objective - prev).abs() <= tol * prev.abs());
        trace.push(objective);
        if done || iter + 1 == max_inner {
            break;
        }

        // M-step. `log_w` now holds the responsibilities.
        let mut weight = vec![0.0; k];
        let mut sums = vec![0.0; k * k];
        for i in 0..n {
            let b = counts.row(i);
            for c in 0..k {
                let t = log_w[i * k + c];
                if t == 0.0 {
                    continue;
                }
                weight[c] += t;
                for (s, &x) in sums[c * k..(c + 1) * k].iter_mut().zip(b) {
                    *s += t * x as f64;
                }
            }
        }
        state.pi = weight.iter().map(|w| w / n as f64).collect();
        for c in 0..k {
            for l in 0..k {
                state.lambda[c * k + l] = if weight[c] > 0.0 {
                    sums[c * k + l] / weight[c]
                } else {
                    0.0
                };
            }
        }
        if regularized {
            // Restricted maximizer: theta_cl = r for c != l with
            // r = sum S_cl / sum W_c N_l.
            let mut num = 0.0;
            let mut den = 0.0;
            for c in 0..k {
                for l in 0..k {
                    if c != l && sizes[l] > 0 {
                        num += sums[c * k + l];
                        den += weight[c] * sizes[l] as f64;
                    }
                }
            }
            if den > 0.0 {
                let r = num / den;
                for c in 0..k {
                    for l in 0..k {
                        if c != l {
                            state.lambda[c * k + l] = sizes[l] as f64 * r;
                        }
                    }
                }
            }
        }
    }
    let labels = (0..n)
        .map(|i| {
            let row = &log_w[i * k..(i + 1) * k];
            // First maximum wins.
            (0..k).fold(0, |best, c| if row[c] > row[best] { c } else { best })
        })
        .collect();
    EmPass {
        labels,
        pi: state.pi,
        trace,
    }
}

/// Fits block labels starting from `init`.
///
/// Under [`ReseedPolicy::KmeansRestart`] this has no embedding to rerun
/// k-means on, so empty blocks are recorded as [`ReseedAction::Skipped`];
/// use [`fit_from_spectral`] for the restarting behavior.
pub fn fit(g: &Graph, k: usize, init: &Labeling, opts: &FitOptions) -> Result<FitResult> {
    fit_with_restart(g, k, init, opts, None)
}

/// Fits from a spectral initialization; empty blocks under
/// [`ReseedPolicy::KmeansRestart`] rerun its k-means step.
pub fn fit_from_spectral(
    g: &Graph,
    spectral: &SpectralInit,
    opts: &FitOptions,
) -> Result<FitResult> {
    let restart = |seed: u64| spectral.rerun_kmeans(seed);
    fit_with_restart(
        g,
        spectral.labels.k(),
        &spectral.labels,
        opts,
        Some(&restart),
    )
}

type Restart<'a> = &'a dyn Fn(u64) -> Result<Labeling>;

pub fn fit_with_restart(
    g: &Graph,
    k: usize,
    init: &Labeling,
    opts: &FitOptions,
    restart: Option<Restart<'_>>,
) -> Result<FitResult> {
    opts.validate()?;
    let n = g.n();
    if k == 0 || k > n {
        return Err(SbmError::invalid(format!(
            "need 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    init.check_len(n)?;
    if init.k() != k {
        return Err(SbmError::Dimension {
            expected: k,
            actual: init.k(),
        });
    }
    let finish = |z: Labeling,
                  mixing: Vec<f64>,
                  trace,
                  inner_traces,
                  reseed_events,
                  converged,
                  iterations,
                  min_nonempty|
     -> Result<FitResult> {
        let c = BlockCounts::new(g, &z)?;
        let theta = if opts.regularized {
            rmle_from_counts(&c)
        } else {
            mle_from_counts(&c)
        };
        Ok(FitResult {
            labels: z,
            theta: theta.into_theta(),
            mixing,
            trace,
            inner_traces,
            reseed_events,
            converged,
            iterations,
            min_nonempty_blocks: min_nonempty,
        })
    };
    let proportions = |z: &Labeling| -> Vec<f64> {
        z.block_sizes()
            .iter()
            .map(|&s| s as f64 / n as f64)
            .collect()
    };

    if g.edge_count() == 0 {
        let mix = proportions(init);
        let nonempty = init.nonempty_blocks();
        return finish(
            init.clone(),
            mix,
            Vec::new(),
            Vec::new(),
            Vec::new(),
            false,
            0,
            nonempty,
        );
    }

    let mut z = init.clone();
    let mut mixing = proportions(&z);
    let mut trace = Vec::new();
    let mut inner_traces = Vec::new();
    let mut events = Vec::new();
    let mut min_nonempty = z.nonempty_blocks();
    let mut restarts_used = 0;
    let mut previous: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    for outer in 0..opts.max_outer {
        iterations = outer + 1;
        let counts = block_neighbor_counts(g, &z)?;
        let block_counts = BlockCounts::new(g, &z)?;
        let sizes = block_counts.sizes.clone();
        let mut theta = mle_from_counts(&block_counts).into_theta();
        if opts.regularized {
            theta = rmle_project(&theta, &z)?;
        }
        let lambda = (0..k * k)
            .map(|idx| sizes[idx % k] as f64 * theta.values()[idx])
            .collect();
        let pass = inner_em(
            &counts,
            &sizes,
            EmState {
                lambda,
                pi: proportions(&z),
            },
            opts.regularized,
            opts.max_inner,
            opts.tol,
        );
        inner_traces.push(pass.trace);
        mixing = pass.pi;
        let mut next = Labeling::new(pass.labels, k)?;
        let hardened_nonempty = next.nonempty_blocks();
        min_nonempty = min_nonempty.min(hardened_nonempty);

        let mut restarted = false;
        if hardened_nonempty < k {
            match opts.reseed_policy {
                ReseedPolicy::None => {}
                ReseedPolicy::Reseed => {
                    // Re-seeding can empty another block; at most k passes.
                    for _ in 0..k {
                        let empty: Vec<usize> = next
                            .block_sizes()
                            .iter()
                            .enumerate()
                            .filter(|(_, &s)| s == 0)
                            .map(|(b, _)| b)
                            .collect();
                        let Some(&block) = empty.first() else { break };
                        let out = reseed_block(g, &next, block)?;
                        match out.donor {
                            Some(donor) => {
                                events.push(ReseedEvent {
                                    iteration: outer,
                                    block,
                                    action: ReseedAction::Reseeded {
                                        donor,
                                        moved: out.moved.len(),
                                    },
                                });
                                next = out.labels;
                            }
                            None => {
                                events.push(ReseedEvent {
                                    iteration: outer,
                                    block,
                                    action: ReseedAction::Skipped,
                                });
                                break;
                            }
                        }
                    }
                }
                ReseedPolicy::KmeansRestart => {
                    let empty: Vec<usize> = next
                        .block_sizes()
                        .iter()
                        .enumerate()
                        .filter(|(_, &s)| s == 0)
                        .map(|(b, _)| b)
                        .collect();
                    let fresh = match restart {
                        Some(f) if restarts_used < MAX_KMEANS_RESTARTS => {
                            let seed = derive_seed(opts.seed, &[restarts_used as u64]);
                            restarts_used += 1;
                            Some(f(seed)?)
                        }
                        _ => None,
                    };
                    let action = match fresh {
                        Some(_) => ReseedAction::KmeansRestart {
                            attempt: restarts_used,
                        },
                        None => ReseedAction::Skipped,
                    };
                    events.extend(empty.iter().map(|&block| ReseedEvent {
                        iteration: outer,
                        block,
                        action,
                    }));
                    if let Some(fresh) = fresh {
                        if fresh.k() != k {
                            return Err(SbmError::Dimension {
                                expected: k,
                                actual: fresh.k(),
                            });
                        }
                        next = fresh;
                        restarted = true;
                    }
                }
            }
        }

        let objective = tracked_objective(&BlockCounts::new(g, &next)?, opts.regularized);
        trace.push(objective);
        if restarted {
            previous = None;
            z = next;
            continue;
        }
        let unchanged = next == z;
        let small_change = previous.is_some_and(|p| (objective - p).abs() <= opts.tol * p.abs());
        z = next;
        previous = Some(objective);
        if unchanged || small_change {
            converged = true;
            break;
        }
    }
    finish(
        z,
        mixing,
        trace,
        inner_traces,
        events,
        converged,
        iterations,
        min_nonempty,
    )
}
