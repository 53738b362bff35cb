//! Bernoulli log-likelihood of a labeled graph and its closed-form maximizers.
//!
//! Natural logarithms throughout, with `0 * log 0 = 0` so that block
//! estimates on the boundary of `[0, 1]` give finite likelihoods.

use crate::error::{Result, SbmError};
use crate::graph::{BlockMatrix, Graph, Labeling};

/// Largest graph [`exhaustive_rmle`] will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 12;

/// `x * ln(y)` with `0 * ln(0) = 0`.
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Bernoulli KL divergence `D(p || q)`. Infinite when `q` is 0 or 1 and
/// differs from `p`.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
    if p == q {
        return 0.0;
    }
    let on = if p == 0.0 {
        0.0
    } else if q == 0.0 {
        return f64::INFINITY;
    } else {
        p * (p / q).ln()
    };
    let off = if p == 1.0 {
        0.0
    } else if q == 1.0 {
        return f64::INFINITY;
    } else {
        (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
    };
    // Rounding can leave a tiny negative sum when p and q are very close.
    (on + off).max(0.0)
}

/// Bernoulli entropy `H(p)` in nats.
pub fn entropy_bernoulli(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SbmError::invalid(format!("p = {p} outside [0, 1]")));
    }
    Ok(-xlogy(p, p) - xlogy(1.0 - p, 1.0 - p))
}

/// Sufficient statistics of a labeled graph: block sizes, pair counts
/// `n_ab` and edge counts `e_ab` (both symmetric, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCounts {
    pub k: usize,
    pub sizes: Vec<usize>,
    pub pairs: Vec<usize>,
    pub edges: Vec<usize>,
}

impl BlockCounts {
    pub fn new(g: &Graph, z: &Labeling) -> Result<Self> {
        z.check_len(g.n())?;
        let k = z.k();
        let sizes = z.block_sizes();
        let mut pairs = vec![0; k * k];
        for a in 0..k {
            for b in 0..k {
                pairs[a * k + b] = if a == b {
                    sizes[a] * sizes[a].saturating_sub(1) / 2
                } else {
                    sizes[a] * sizes[b]
                };
            }
        }
        let mut edges = vec![0; k * k];
        for (i, j) in g.edges() {
            let (a, b) = (z.get(i), z.get(j));
            edges[a * k + b] += 1;
            if a != b {
                edges[b * k + a] += 1;
            }
        }
        Ok(Self {
            k,
            sizes,
            pairs,
            edges,
        })
    }

    pub fn pairs(&self, a: usize, b: usize) -> usize {
        self.pairs[a * self.k + b]
    }

    pub fn edges(&self, a: usize, b: usize) -> usize {
        self.edges[a * self.k + b]
    }

    /// `(edges, pairs)` summed over all cross-block pairs `a < b`.
    pub fn off_diagonal_totals(&self) -> (usize, usize) {
        let mut e = 0;
        let mut p = 0;
        for a in 0..self.k {
            for b in (a + 1)..self.k {
                e += self.edges(a, b);
                p += self.pairs(a, b);
            }
        }
        (e, p)
    }
}

/// Block-matrix estimate where entries with zero sample size are undefined.
///
/// Undefined entries are stored as 0 in [`BlockEstimate::theta`] (no node
/// pair ever reads them) and reported as `None` by [`BlockEstimate::get`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimate {
    theta: BlockMatrix,
    defined: Vec<bool>,
}

impl BlockEstimate {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.defined[a * self.theta.k() + b].then(|| self.theta.get(a, b))
    }

    pub fn is_defined(&self, a: usize, b: usize) -> bool {
        self.defined[a * self.theta.k() + b]
    }

    pub fn is_complete(&self) -> bool {
        self.defined.iter().all(|&d| d)
    }

    pub fn theta(&self) -> &BlockMatrix {
        &self.theta
    }

    pub fn into_theta(self) -> BlockMatrix {
        self.theta
    }

    pub fn k(&self) -> usize {
        self.theta.k()
    }
}

fn ratio(e: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| e as f64 / n as f64)
}

fn estimate_from<F>(k: usize, mut f: F) -> BlockEstimate
where
    F: FnMut(usize, usize) -> Option<f64>,
{
    let mut values = vec![0.0; k * k];
    let mut defined = vec![false; k * k];
    for a in 0..k {
        for b in a..k {
            if let Some(v) = f(a, b) {
                for idx in [a * k + b, b * k + a] {
                    values[idx] = v;
                    defined[idx] = true;
                }
            }
        }
    }
    BlockEstimate {
        theta: BlockMatrix::from_raw(k, values),
        defined,
    }
}

/// Blockwise empirical edge frequencies.
pub fn mle_theta(g: &Graph, z: &Labeling) -> Result<BlockEstimate> {
    let c = BlockCounts::new(g, z)?;
    Ok(mle_from_counts(&c))
}

pub fn mle_from_counts(c: &BlockCounts) -> BlockEstimate {
    estimate_from(c.k, |a, b| ratio(c.edges(a, b), c.pairs(a, b)))
}

/// MLE restricted to equal off-diagonals: blockwise diagonal frequencies and
/// the pooled cross-block frequency `r`.
pub fn rmle_theta(g: &Graph, z: &Labeling) -> Result<BlockEstimate> {
    let c = BlockCounts::new(g, z)?;
    Ok(rmle_from_counts(&c))
}

pub fn rmle_from_counts(c: &BlockCounts) -> BlockEstimate {
    let (e_out, n_out) = c.off_diagonal_totals();
    let r = ratio(e_out, n_out);
    estimate_from(c.k, |a, b| {
        if a == b {
            ratio(c.edges(a, a), c.pairs(a, a))
        } else {
            r
        }
    })
}

/// `sum_{i<j} A_ij ln theta + (1 - A_ij) ln(1 - theta)` evaluated through
/// block counts.
pub fn log_likelihood(g: &Graph, z: &Labeling, theta: &BlockMatrix) -> Result<f64> {
    if z.k() != theta.k() {
        return Err(SbmError::Dimension {
            expected: theta.k(),
            actual: z.k(),
        });
    }
    let c = BlockCounts::new(g, z)?;
    Ok(loglik_from_counts(&c, theta))
}

pub fn loglik_from_counts(c: &BlockCounts, theta: &BlockMatrix) -> f64 {
    let mut total = 0.0;
    for a in 0..c.k {
        for b in a..c.k {
            let t = theta.get(a, b);
            let e = c.edges(a, b) as f64;
            let non = (c.pairs(a, b) - c.edges(a, b)) as f64;
            total += xlogy(e, t) + xlogy(non, 1.0 - t);
        }
    }
    total
}

/// Log-likelihood at the unrestricted MLE.
pub fn profile_loglik(g: &Graph, z: &Labeling) -> Result<f64> {
    let c = BlockCounts::new(g, z)?;
    Ok(loglik_from_counts(&c, mle_from_counts(&c).theta()))
}

/// Same quantity as [`profile_loglik`] via `-sum n_ab H(theta_ab)`.
pub fn profile_loglik_entropy(g: &Graph, z: &Labeling) -> Result<f64> {
    let c = BlockCounts::new(g, z)?;
    let est = mle_from_counts(&c);
    let mut total = 0.0;
    for a in 0..c.k {
        for b in a..c.k {
            if let Some(t) = est.get(a, b) {
                total -= c.pairs(a, b) as f64 * entropy_bernoulli(t)?;
            }
        }
    }
    Ok(total)
}

/// Log-likelihood at the restricted (equal off-diagonal) MLE.
pub fn regularized_profile_loglik(g: &Graph, z: &Labeling) -> Result<f64> {
    let c = BlockCounts::new(g, z)?;
    Ok(loglik_from_counts(&c, rmle_from_counts(&c).theta()))
}

fn binary_loglik(e: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (e, n) = (e as f64, n as f64);
    xlogy(e, e / n) + xlogy(n - e, (n - e) / n)
}

fn regularized_from_counts(c: &BlockCounts) -> f64 {
    let (e_out, n_out) = c.off_diagonal_totals();
    (0..c.k)
        .map(|a| binary_loglik(c.edges(a, a), c.pairs(a, a)))
        .sum::<f64>()
        + binary_loglik(e_out, n_out)
}

/// Exact maximizer of the regularized profile log-likelihood over all
/// partitions of the nodes into exactly `k` nonempty blocks.
///
/// Candidates are enumerated in lexicographic order of their canonical form
/// and only a strict improvement replaces the incumbent, so ties resolve to
/// the lexicographically smallest canonical labeling.
pub fn exhaustive_rmle(g: &Graph, k: usize) -> Result<Labeling> {
    let n = g.n();
    if n > EXHAUSTIVE_LIMIT {
        return Err(SbmError::EnumerationGuard {
            n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    if k == 0 || k > n {
        return Err(SbmError::invalid(format!(
            "need 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let mut search = Exhaustive {
        n,
        k,
        edges: &edges,
        labels: vec![0; n],
        best: None,
    };
    search.visit(0, 0);
    let (labels, _) = search.best.expect("k <= n admits a partition");
    Labeling::new(labels, k)
}

struct Exhaustive<'a> {
    n: usize,
    k: usize,
    edges: &'a [(usize, usize)],
    labels: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
}

impl Exhaustive<'_> {
    fn visit(&mut self, i: usize, used: usize) {
        if i == self.n {
            if used == self.k {
                self.score();
            }
            return;
        }
        // Not enough nodes left to open the remaining blocks.
        if self.n - i < self.k - used {
            return;
        }
        let limit = (used + 1).min(self.k);
        for l in 0..limit {
            self.labels[i] = l;
            self.visit(i + 1, used.max(l + 1));
        }
    }

    fn score(&mut self) {
        let k = self.k;
        let mut sizes = vec![0usize; k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        let mut pairs = vec![0; k * k];
        for a in 0..k {
            for b in 0..k {
                pairs[a * k + b] = if a == b {
                    sizes[a] * sizes[a].saturating_sub(1) / 2
                } else {
                    sizes[a] * sizes[b]
                };
            }
        }
        let mut edges = vec![0; k * k];
        for &(i, j) in self.edges {
            let (a, b) = (self.labels[i], self.labels[j]);
            edges[a * k + b] += 1;
            if a != b {
                edges[b * k + a] += 1;
            }
        }
        let value = regularized_from_counts(&BlockCounts {
            k,
            sizes,
            pairs,
            edges,
        });
        let better = match &self.best {
            None => true,
            Some((_, best)) => value > best + 1e-12 * best.abs().max(1.0),
        };
        if better {
            self.best = Some((self.labels.clone(), value));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g4(edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(4, edges.iter().copied()).unwrap()
    }

    fn z1122() -> Labeling {
        Labeling::new(vec![0, 0, 1, 1], 2).unwrap()
    }

    #[test]
    fn empty_two_node_graph_zero_theta() {
        let g = Graph::empty(2).unwrap();
        let z = Labeling::new(vec![0, 0], 1).unwrap();
        let t = BlockMatrix::from_rows(&[&[0.0]]).unwrap();
        assert_eq!(log_likelihood(&g, &z, &t).unwrap(), 0.0);
    }

    #[test]
    fn half_theta_gives_pair_count_ln_half() {
        let g = g4(&[(0, 1), (1, 3)]);
        let z = z1122();
        let t = BlockMatrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap();
        let ll = log_likelihood(&g, &z, &t).unwrap();
        assert!((ll - 6.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn impossible_edge_is_negative_infinity() {
        let g = g4(&[(0, 2)]);
        let t = BlockMatrix::from_rows(&[&[0.5, 0.0], &[0.0, 0.5]]).unwrap();
        assert_eq!(log_likelihood(&g, &z1122(), &t).unwrap(), f64::NEG_INFINITY);
        let t = BlockMatrix::from_rows(&[&[1.0, 0.5], &[0.5, 0.5]]).unwrap();
        assert_eq!(
            log_likelihood(&Graph::empty(4).unwrap(), &z1122(), &t).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn dimension_mismatch() {
        let t = BlockMatrix::from_rows(&[&[0.5]]).unwrap();
        assert!(log_likelihood(&g4(&[]), &z1122(), &t).is_err());
        let short = Labeling::new(vec![0, 0, 1], 2).unwrap();
        assert!(mle_theta(&g4(&[]), &short).is_err());
    }

    #[test]
    fn mle_two_cliques() {
        let est = mle_theta(&g4(&[(0, 1), (2, 3)]), &z1122()).unwrap();
        assert_eq!(est.theta().values(), &[1.0, 0.0, 0.0, 1.0]);
        let rm = rmle_theta(&g4(&[(0, 1), (2, 3)]), &z1122()).unwrap();
        assert_eq!(rm.get(0, 0), Some(1.0));
        assert_eq!(rm.get(1, 1), Some(1.0));
        assert_eq!(rm.get(0, 1), Some(0.0));
    }

    #[test]
    fn mle_mixed_example() {
        let g = g4(&[(0, 1), (0, 2)]);
        let est = mle_theta(&g, &z1122()).unwrap();
        assert_eq!(est.get(0, 0), Some(1.0));
        assert_eq!(est.get(1, 1), Some(0.0));
        assert_eq!(est.get(0, 1), Some(0.25));
        assert_eq!(rmle_theta(&g, &z1122()).unwrap().get(1, 0), Some(0.25));
        // 1 ln(1/4) + 3 ln(3/4)
        let expected = -2.249340578475233;
        let ll = log_likelihood(&g, &z1122(), est.theta()).unwrap();
        assert!((ll - expected).abs() < 1e-12);
        assert!((profile_loglik(&g, &z1122()).unwrap() - expected).abs() < 1e-12);
        assert!((regularized_profile_loglik(&g, &z1122()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn profile_of_perfect_blocks_is_zero() {
        let g = g4(&[(0, 1), (2, 3)]);
        assert_eq!(profile_loglik(&g, &z1122()).unwrap(), 0.0);
        assert_eq!(regularized_profile_loglik(&g, &z1122()).unwrap(), 0.0);
    }

    #[test]
    fn undefined_entries_are_marked() {
        // Block 1 is a singleton: n_11 = 0. Block 2 is empty.
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let z = Labeling::new(vec![0, 0, 1], 3).unwrap();
        let est = mle_theta(&g, &z).unwrap();
        assert_eq!(est.get(0, 0), Some(1.0));
        assert_eq!(est.get(1, 1), None);
        assert_eq!(est.get(0, 2), None);
        assert_eq!(est.get(0, 1), Some(0.0));
        assert!(!est.is_complete());
        let one = Labeling::new(vec![0, 0, 0], 1).unwrap();
        let r = rmle_theta(&g, &one).unwrap();
        assert_eq!(r.get(0, 0), Some(1.0 / 3.0));
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_bernoulli(0.3, 0.3), 0.0);
        assert!((kl_bernoulli(0.5, 0.25) - 0.143841036225890).abs() < 1e-12);
        assert_eq!(kl_bernoulli(0.5, 0.0), f64::INFINITY);
        assert_eq!(kl_bernoulli(0.5, 1.0), f64::INFINITY);
        assert!((kl_bernoulli(0.0, 0.5) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_pinsker_grid() {
        for i in 0..100 {
            for j in 0..100 {
                let p = i as f64 / 99.0;
                let q = (j as f64 + 0.5) / 100.0;
                let d = kl_bernoulli(p, q);
                assert!(d >= 2.0 * (p - q).powi(2) - 1e-12, "p={p} q={q}");
                assert!(d >= 0.0);
                assert_eq!(d == 0.0, p == q);
            }
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_bernoulli(0.0).unwrap(), 0.0);
        assert_eq!(entropy_bernoulli(1.0).unwrap(), 0.0);
        assert!((entropy_bernoulli(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(entropy_bernoulli(1.1).is_err());
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let h = entropy_bernoulli(p).unwrap();
            assert!((h - entropy_bernoulli(1.0 - p).unwrap()).abs() < 1e-15);
            assert!(h <= std::f64::consts::LN_2 + 1e-15);
        }
    }

    #[test]
    fn exhaustive_two_triangles() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let z = exhaustive_rmle(&g, 2).unwrap();
        assert_eq!(z.labels(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn exhaustive_complete_graph_ties_resolve_lexicographically() {
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let z = exhaustive_rmle(&g, 2).unwrap();
        // Every block estimate is 1, so every 2-partition (balanced or not)
        // scores 0; the first canonical labeling in lexicographic order wins.
        for other in [[0, 0, 1, 1], [0, 1, 0, 1], [0, 1, 1, 0], [0, 0, 0, 1]] {
            let w = Labeling::new(other.to_vec(), 2).unwrap();
            assert_eq!(regularized_profile_loglik(&g, &w).unwrap(), 0.0);
        }
        assert_eq!(z.labels(), &[0, 0, 0, 1]);
    }

    #[test]
    fn exhaustive_guard() {
        let g = Graph::empty(13).unwrap();
        assert!(matches!(
            exhaustive_rmle(&g, 2),
            Err(SbmError::EnumerationGuard { n: 13, .. })
        ));
        assert!(exhaustive_rmle(&Graph::empty(3).unwrap(), 4).is_err());
    }
}
