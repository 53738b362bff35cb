//! Graph and model types, the SBM sampler, and block-matrix generators.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Result, SbmError};
use crate::seed::rng_from_seed;

/// Graphs up to this many nodes keep a dense adjacency bitset next to the
/// adjacency lists.
pub const DENSE_LIMIT: usize = 4096;

/// Undirected simple graph: symmetric adjacency, no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    neighbors: Vec<Vec<usize>>,
    dense: Option<Vec<u64>>,
    edge_count: usize,
}

impl Graph {
    pub fn empty(n: usize) -> Result<Self> {
        Self::from_edges(n, std::iter::empty())
    }

    /// Builds a graph from unordered node pairs (0-based). Duplicate pairs
    /// collapse; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(SbmError::invalid("graph must have at least one node"));
        }
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(SbmError::invalid(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(SbmError::invalid(format!("self-loop at node {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        let mut edge_count = 0;
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        let dense = (n <= DENSE_LIMIT).then(|| {
            let words = (n * n).div_ceil(64);
            let mut bits = vec![0u64; words];
            for (i, list) in neighbors.iter().enumerate() {
                for &j in list {
                    let idx = i * n + j;
                    bits[idx / 64] |= 1 << (idx % 64);
                }
            }
            bits
        });
        Ok(Self {
            n,
            neighbors,
            dense,
            edge_count: edge_count / 2,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i >= self.n || j >= self.n {
            return false;
        }
        match &self.dense {
            Some(bits) => {
                let idx = i * self.n + j;
                bits[idx / 64] >> (idx % 64) & 1 == 1
            }
            None => self.neighbors[i].binary_search(&j).is_ok(),
        }
    }

    /// Sorted neighbor list of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .copied()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        Self::from_edges(self.n, self.edges().map(|(i, j)| (perm[i], perm[j])))
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(SbmError::Dimension {
            expected: n,
            actual: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(SbmError::invalid("not a permutation"));
        }
    }
    Ok(())
}

/// Node-to-block assignment with labels in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    labels: Vec<usize>,
    k: usize,
}

impl Labeling {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(SbmError::invalid("block count must be positive"));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(SbmError::invalid(format!(
                "node {i} has label {l}, outside 0..{k}"
            )));
        }
        Ok(Self { labels, k })
    }

    /// Contiguous blocks: the first `sizes[0]` nodes get label 0, and so on.
    pub fn canonical(sizes: &[usize]) -> Result<Self> {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(a, &s)| std::iter::repeat_n(a, s))
            .collect();
        Self::new(labels, sizes.len())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn nonempty_blocks(&self) -> usize {
        self.block_sizes().iter().filter(|&&s| s > 0).count()
    }

    /// Relabels blocks in order of first appearance, so two labelings that
    /// differ only by a block permutation map to the same value.
    pub fn canonical_form(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        self.labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect()
    }

    pub fn same_partition(&self, other: &Labeling) -> bool {
        self.canonical_form() == other.canonical_form()
    }

    /// Node `i` of `self` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let mut labels = vec![0; self.n()];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = self.labels[i];
        }
        Self::new(labels, self.k)
    }

    pub(crate) fn set(&mut self, i: usize, label: usize) {
        debug_assert!(label < self.k);
        self.labels[i] = label;
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.labels.len() == n {
            Ok(())
        } else {
            Err(SbmError::Dimension {
                expected: n,
                actual: self.labels.len(),
            })
        }
    }
}

/// Symmetric K×K matrix of edge probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    k: usize,
    values: Vec<f64>,
}

impl BlockMatrix {
    /// Row-major values; must be symmetric with entries in `[0, 1]`.
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(SbmError::invalid("block matrix must be at least 1x1"));
        }
        if values.len() != k * k {
            return Err(SbmError::Dimension {
                expected: k * k,
                actual: values.len(),
            });
        }
        for a in 0..k {
            for b in 0..k {
                let v = values[a * k + b];
                if !(0.0..=1.0).contains(&v) {
                    return Err(SbmError::invalid(format!(
                        "theta[{a}][{b}] = {v} outside [0, 1]"
                    )));
                }
                if v != values[b * k + a] {
                    return Err(SbmError::invalid(format!(
                        "theta not symmetric at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(Self { k, values })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(SbmError::invalid(
                "block matrix rows must all have length k",
            ));
        }
        Self::new(k, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    /// Builds from the upper triangle, `f(a, b)` with `a <= b`.
    pub fn from_upper<F: FnMut(usize, usize) -> f64>(k: usize, mut f: F) -> Result<Self> {
        let mut values = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let v = f(a, b);
                values[a * k + b] = v;
                values[b * k + a] = v;
            }
        }
        Self::new(k, values)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.k + b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn from_raw(k: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), k * k);
        Self { k, values }
    }
}

/// Block sizes plus block matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub theta: BlockMatrix,
}

impl SbmSpec {
    pub fn new(block_sizes: Vec<usize>, theta: BlockMatrix) -> Result<Self> {
        let spec = Self { block_sizes, theta };
        spec.validate()?;
        Ok(spec)
    }

    /// `k` blocks of `size` nodes each.
    pub fn balanced(k: usize, size: usize, theta: BlockMatrix) -> Result<Self> {
        Self::new(vec![size; k], theta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.len() != self.theta.k() {
            return Err(SbmError::Dimension {
                expected: self.theta.k(),
                actual: self.block_sizes.len(),
            });
        }
        if self.block_sizes.contains(&0) {
            return Err(SbmError::invalid("block sizes must be positive"));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn n(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Number of node pairs between blocks `a` and `b`.
    pub fn pair_count(&self, a: usize, b: usize) -> usize {
        let (na, nb) = (self.block_sizes[a], self.block_sizes[b]);
        if a == b {
            na * na.saturating_sub(1) / 2
        } else {
            na * nb
        }
    }

    pub fn labeling(&self) -> Labeling {
        Labeling::canonical(&self.block_sizes).expect("validated spec")
    }
}

/// Samples an adjacency matrix from the SBM with canonical labels.
///
/// One uniform draw per pair, consumed in row-major `i < j` order.
pub fn sample_sbm(spec: &SbmSpec, seed: u64) -> Result<(Graph, Labeling)> {
    spec.validate()?;
    let z = spec.labeling();
    let n = z.n();
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        let zi = z.get(i);
        for j in (i + 1)..n {
            let p = spec.theta.get(zi, z.get(j));
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok((Graph::from_edges(n, edges)?, z))
}

/// A generated block matrix and the number of off-diagonal draws that had to
/// be clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDraw {
    pub theta: BlockMatrix,
    pub clamped: usize,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SbmError::invalid(format!("{name} = {p} outside [0, 1]")))
    }
}

/// Constant diagonal `theta_in`, constant off-diagonal `theta_out`.
pub fn planted_theta(k: usize, theta_in: f64, theta_out: f64) -> Result<BlockMatrix> {
    check_prob("theta_in", theta_in)?;
    check_prob("theta_out", theta_out)?;
    BlockMatrix::from_upper(k, |a, b| if a == b { theta_in } else { theta_out })
}

fn check_layout(k: usize, n: usize, s: usize) -> Result<()> {
    if k == 0 || s == 0 || n != k * s {
        return Err(SbmError::invalid(format!(
            "expected n = k * s, got n = {n}, k = {k}, s = {s}"
        )));
    }
    if k < 2 {
        return Err(SbmError::invalid("heterogeneous off-diagonals need k >= 2"));
    }
    Ok(())
}

fn fill_off_diagonal<F>(k: usize, theta_in: f64, mut draw: F) -> ThetaDraw
where
    F: FnMut() -> f64,
{
    let mut values = vec![theta_in; k * k];
    let mut clamped = 0;
    for a in 0..k {
        for b in (a + 1)..k {
            let raw = draw();
            let v = raw.clamp(0.0, 1.0);
            if v != raw {
                clamped += 1;
            }
            values[a * k + b] = v;
            values[b * k + a] = v;
        }
    }
    ThetaDraw {
        theta: BlockMatrix::from_raw(k, values),
        clamped,
    }
}

/// Off-diagonals i.i.d. Gamma(shape `alpha`, rate `alpha (n - s) / d`), so the
/// expected out-of-block degree is `d = target_out_degree`.
pub fn gamma_theta(
    k: usize,
    alpha: f64,
    theta_in: f64,
    target_out_degree: f64,
    n: usize,
    s: usize,
    seed: u64,
) -> Result<ThetaDraw> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SbmError::invalid(format!(
            "alpha = {alpha} must be positive"
        )));
    }
    if !(target_out_degree > 0.0 && target_out_degree.is_finite()) {
        return Err(SbmError::invalid("target out-degree must be positive"));
    }
    check_prob("theta_in", theta_in)?;
    check_layout(k, n, s)?;
    let rate = alpha * (n - s) as f64 / target_out_degree;
    let gamma = Gamma::new(alpha, 1.0 / rate)
        .map_err(|e| SbmError::invalid(format!("gamma parameters: {e}")))?;
    let mut rng = rng_from_seed(seed);
    Ok(fill_off_diagonal(k, theta_in, || gamma.sample(&mut rng)))
}

/// Off-diagonals `(c / p) * Bernoulli(p)` with `c = d / (n - s)`.
pub fn bernoulli_theta(
    k: usize,
    p: f64,
    theta_in: f64,
    target_out_degree: f64,
    n: usize,
    s: usize,
    seed: u64,
) -> Result<ThetaDraw> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SbmError::invalid(format!("p = {p} outside (0, 1]")));
    }
    if !(target_out_degree >= 0.0 && target_out_degree.is_finite()) {
        return Err(SbmError::invalid("target out-degree must be nonnegative"));
    }
    check_prob("theta_in", theta_in)?;
    check_layout(k, n, s)?;
    let c = target_out_degree / (n - s) as f64;
    let mut rng = rng_from_seed(seed);
    Ok(fill_off_diagonal(k, theta_in, || {
        if rng.random::<f64>() < p {
            c / p
        } else {
            0.0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rows: &[&[f64]], sizes: &[usize]) -> SbmSpec {
        SbmSpec::new(sizes.to_vec(), BlockMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_probabilities_give_fixed_graph() {
        let s = spec(&[&[1.0, 0.0], &[0.0, 1.0]], &[2, 2]);
        for seed in 0..5 {
            let (g, z) = sample_sbm(&s, seed).unwrap();
            assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (2, 3)]);
            assert_eq!(z.labels(), &[0, 0, 1, 1]);
        }
    }

    #[test]
    fn zero_theta_gives_empty_graph() {
        let s = SbmSpec::balanced(3, 4, planted_theta(3, 0.0, 0.0).unwrap()).unwrap();
        let (g, _) = sample_sbm(&s, 11).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn spec_dimension_mismatch_is_rejected() {
        let theta = planted_theta(2, 0.5, 0.1).unwrap();
        assert!(SbmSpec::new(vec![3, 3, 3], theta.clone()).is_err());
        assert!(SbmSpec::new(vec![3, 0], theta).is_err());
    }

    #[test]
    fn block_matrix_validation() {
        assert!(BlockMatrix::from_rows(&[&[0.5, 0.1], &[0.2, 0.5]]).is_err());
        assert!(BlockMatrix::from_rows(&[&[1.5]]).is_err());
        assert!(BlockMatrix::from_rows(&[&[0.5, 0.1], &[0.1, 0.5]]).is_ok());
    }

    #[test]
    fn planted_theta_layout() {
        let t = planted_theta(2, 0.4, 0.1).unwrap();
        assert_eq!(t.values(), &[0.4, 0.1, 0.1, 0.4]);
        assert!(planted_theta(2, 1.2, 0.1).is_err());
        assert!(planted_theta(2, 0.4, -0.1).is_err());
        let fig1 = planted_theta(10, 8.0 / 20.0, 5.0 / 200.0).unwrap();
        assert_eq!(fig1.get(3, 3), 0.4);
        assert_eq!(fig1.get(3, 7), 0.025);
    }

    #[test]
    fn bernoulli_p_one_matches_planted() {
        let (k, s) = (6, 5);
        let n = k * s;
        let d = bernoulli_theta(k, 1.0, 0.4, 5.0, n, s, 3).unwrap();
        let c = 5.0 / (n - s) as f64;
        assert_eq!(d.theta, planted_theta(k, 0.4, c).unwrap());
        assert_eq!(d.clamped, 0);
    }

    #[test]
    fn generator_argument_errors() {
        assert!(gamma_theta(4, 0.0, 0.4, 5.0, 80, 20, 0).is_err());
        assert!(gamma_theta(4, -1.0, 0.4, 5.0, 80, 20, 0).is_err());
        assert!(gamma_theta(4, 1.0, 0.4, 5.0, 81, 20, 0).is_err());
        assert!(bernoulli_theta(4, 0.0, 0.4, 5.0, 80, 20, 0).is_err());
        assert!(bernoulli_theta(4, 1.5, 0.4, 5.0, 80, 20, 0).is_err());
    }

    #[test]
    fn clamping_is_counted() {
        // Mean 50/(n - s) = 1.25 forces many draws above 1.
        let d = gamma_theta(5, 1.0, 0.4, 50.0, 50, 10, 9).unwrap();
        assert!(d.clamped > 0);
        assert!(d.theta.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn labeling_helpers() {
        let z = Labeling::canonical(&[2, 3]).unwrap();
        assert_eq!(z.labels(), &[0, 0, 1, 1, 1]);
        assert_eq!(z.block_sizes(), vec![2, 3]);
        let w = Labeling::new(vec![1, 1, 0, 0, 0], 2).unwrap();
        assert!(z.same_partition(&w));
        assert!(Labeling::new(vec![0, 2], 2).is_err());
    }

    #[test]
    fn sparse_storage_answers_like_dense() {
        let n = DENSE_LIMIT + 3;
        let g = Graph::from_edges(n, [(0, 1), (n - 1, 5), (7, 8), (8, 7)]).unwrap();
        assert!(!g.is_dense());
        assert_eq!(g.edge_count(), 3);
        assert!(g.has_edge(5, n - 1) && g.has_edge(n - 1, 5));
        assert!(!g.has_edge(0, 2));
        let small = Graph::from_edges(10, [(0, 1), (9, 5), (7, 8)]).unwrap();
        assert!(small.is_dense());
        assert!(small.has_edge(5, 9) && !small.has_edge(5, 5));
        assert!(Graph::from_edges(3, [(1, 1)]).is_err());
        assert!(Graph::from_edges(3, [(1, 3)]).is_err());
    }
}
