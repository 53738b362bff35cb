//! Misclustering and model diagnostics.

use crate::error::{Result, SbmError};
use crate::graph::{Labeling, SbmSpec};
use crate::likelihood::kl_bernoulli;

/// Misclustering count together with how many estimated classes had a tied
/// majority.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Misclustering {
    pub count: usize,
    /// Estimated classes whose most frequent true label was not unique.
    pub tied_classes: usize,
}

/// Nodes whose true class is not the majority true class of their estimated
/// class. Majority ties go to the smallest true label, and every node of a
/// non-winning label counts.
pub fn misclustering(z_true: &Labeling, z_est: &Labeling) -> Result<Misclustering> {
    if z_true.n() != z_est.n() {
        return Err(SbmError::Dimension {
            expected: z_true.n(),
            actual: z_est.n(),
        });
    }
    let (kt, ke) = (z_true.k(), z_est.k());
    let mut table = vec![0usize; ke * kt];
    for (&t, &e) in z_true.labels().iter().zip(z_est.labels()) {
        table[e * kt + t] += 1;
    }
    let mut count = 0;
    let mut tied_classes = 0;
    for row in table.chunks(kt) {
        let total: usize = row.iter().sum();
        let top = row.iter().copied().max().unwrap_or(0);
        if row.iter().filter(|&&c| c == top).count() > 1 && top > 0 {
            tied_classes += 1;
        }
        count += total - top;
    }
    Ok(Misclustering {
        count,
        tied_classes,
    })
}

pub fn misclustered_count(z_true: &Labeling, z_est: &Labeling) -> Result<usize> {
    Ok(misclustering(z_true, z_est)?.count)
}

/// `N_e / N`.
pub fn misclustered_fraction(z_true: &Labeling, z_est: &Labeling) -> Result<f64> {
    Ok(misclustered_count(z_true, z_est)? as f64 / z_true.n() as f64)
}

/// Expected number of edges `M = sum_{a<=b} n_ab theta_ab`.
pub fn expected_edges(spec: &SbmSpec) -> f64 {
    let k = spec.k();
    let mut m = 0.0;
    for a in 0..k {
        for b in a..k {
            m += spec.pair_count(a, b) as f64 * spec.theta.get(a, b);
        }
    }
    m
}

/// Default finite-N cutoff for calling a cross-block probability "tight".
pub fn default_decay_threshold(n: usize) -> f64 {
    10.0 / (n as f64).sqrt()
}

/// Cross-block pairs `a < b` with `theta_ab` above the threshold. A
/// heuristic stand-in for the non-decaying set, which only has an
/// asymptotic definition.
pub fn q_pairs(spec: &SbmSpec, decay_threshold: f64) -> Vec<(usize, usize)> {
    let k = spec.k();
    (0..k)
        .flat_map(|a| ((a + 1)..k).map(move |b| (a, b)))
        .filter(|&(a, b)| spec.theta.get(a, b) > decay_threshold)
        .collect()
}

/// Number of node pairs covered by [`q_pairs`].
pub fn q_size(spec: &SbmSpec, decay_threshold: f64) -> usize {
    q_pairs(spec, decay_threshold)
        .into_iter()
        .map(|(a, b)| spec.pair_count(a, b))
        .sum()
}

/// `D(x || m) + D(y || m)` with `m = (x + y) / 2`.
pub fn pair_separation(x: f64, y: f64) -> f64 {
    let m = 0.5 * (x + y);
    kl_bernoulli(x, m) + kl_bernoulli(y, m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairIdentifiability {
    pub a: usize,
    pub b: usize,
    pub satisfied: bool,
    /// Class with the largest separation (smallest index on ties).
    pub best_c: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// For each pair of distinct classes, the best separating class `c` and
/// whether its separation reaches `c_const * M * K / N^2`.
pub fn identifiability_check(spec: &SbmSpec, c_const: f64) -> Vec<PairIdentifiability> {
    let (k, n) = (spec.k(), spec.n() as f64);
    let rhs = c_const * expected_edges(spec) * k as f64 / (n * n);
    let mut out = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            let mut best_c = 0;
            let mut lhs = f64::NEG_INFINITY;
            for c in 0..k {
                let v = pair_separation(spec.theta.get(a, c), spec.theta.get(b, c));
                if v > lhs {
                    lhs = v;
                    best_c = c;
                }
            }
            out.push(PairIdentifiability {
                a,
                b,
                satisfied: lhs >= rhs,
                best_c,
                lhs,
                rhs,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryCheck {
    pub a: usize,
    pub b: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub in_q: bool,
    pub inside: bool,
}

/// Finite-N reading of the high-dimensional regime conditions. Purely
/// advisory: nothing here is a pass/fail gate.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub n: usize,
    pub smallest_block: usize,
    /// `ln(N)^beta`.
    pub log_power: f64,
    pub smallest_block_exceeds_log_power: bool,
    pub entries: Vec<EntryCheck>,
    pub q_size: usize,
    /// `N * s`.
    pub q_budget: usize,
    pub q_is_heuristic: bool,
}

/// `c_const` is the constant in the non-Q upper bound `C f(N) / N`; `f(N)`
/// defaults to `s / ln(N)^2` when `f_n` is `None`.
pub fn regime_check(
    spec: &SbmSpec,
    beta: f64,
    decay_threshold: f64,
    c_const: f64,
    f_n: Option<f64>,
) -> RegimeReport {
    let n = spec.n();
    let nf = n as f64;
    let ln = nf.ln();
    let s = spec.block_sizes.iter().copied().min().unwrap_or(0);
    let f = f_n.unwrap_or(s as f64 / (ln * ln));
    let log_power = ln.powf(beta);
    let k = spec.k();
    let q = q_pairs(spec, decay_threshold);
    let mut entries = Vec::new();
    for a in 0..k {
        for b in a..k {
            let value = spec.theta.get(a, b);
            let in_q = a != b && q.contains(&(a, b));
            let (lower, upper) = if a == b || in_q {
                (1.0 / ln, 1.0 - 1.0 / ln)
            } else {
                (1.0 / (nf * nf), c_const * f / nf)
            };
            entries.push(EntryCheck {
                a,
                b,
                value,
                lower,
                upper,
                in_q,
                inside: value > lower && value < upper,
            });
        }
    }
    RegimeReport {
        n,
        smallest_block: s,
        log_power,
        smallest_block_exceeds_log_power: s as f64 > log_power,
        entries,
        q_size: q.into_iter().map(|(a, b)| spec.pair_count(a, b)).sum(),
        q_budget: n * s,
        q_is_heuristic: true,
    }
}
