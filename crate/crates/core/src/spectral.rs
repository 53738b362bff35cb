//! Regularized spectral clustering.
//!
//! The operator is `D_tau^{-1/2} A D_tau^{-1/2}` with `tau` added to every
//! degree. "Top k" means the k algebraically largest eigenvalues; the
//! embedding is not row-normalized unless [`SpectralOptions::row_normalize`]
//! is set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Result, SbmError};
use crate::graph::{Graph, Labeling, DENSE_LIMIT};
use crate::seed::{derive_seed, rng_from_seed};

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-8;
pub const KMEANS_RESTARTS: usize = 10;
/// Relative residual bound every returned eigenpair satisfies.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;
const SUBSPACE_MAX_ITER: usize = 20_000;

/// Degree regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    /// Average degree of the graph.
    Auto,
    Value(f64),
}

impl Tau {
    pub fn resolve(self, g: &Graph) -> Result<f64> {
        match self {
            Tau::Auto => Ok(2.0 * g.edge_count() as f64 / g.n() as f64),
            Tau::Value(t) if t >= 0.0 && t.is_finite() => Ok(t),
            Tau::Value(t) => Err(SbmError::invalid(format!("tau = {t} must be nonnegative"))),
        }
    }
}

fn inverse_sqrt_degrees(g: &Graph, tau: f64) -> Vec<f64> {
    g.degrees()
        .into_iter()
        .map(|d| {
            let s = d as f64 + tau;
            if s > 0.0 {
                1.0 / s.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Dense `D_tau^{-1/2} A D_tau^{-1/2}`. Isolated nodes with `tau = 0` get
/// zero rows.
pub fn regularized_laplacian(g: &Graph, tau: Tau) -> Result<DMatrix<f64>> {
    let t = tau.resolve(g)?;
    let w = inverse_sqrt_degrees(g, t);
    let n = g.n();
    let mut m = DMatrix::zeros(n, n);
    for (i, j) in g.edges() {
        let v = w[i] * w[j];
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}

/// Symmetric matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetric {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            y[i] = acc;
        }
    }

    /// Maximum absolute row sum, an upper bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.vals[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[p])] = self.vals[p];
            }
        }
        m
    }
}

/// Sparse `D_tau^{-1/2} A D_tau^{-1/2}`, same entries as
/// [`regularized_laplacian`].
pub fn regularized_laplacian_sparse(g: &Graph, tau: Tau) -> Result<SparseSymmetric> {
    let t = tau.resolve(g)?;
    let w = inverse_sqrt_degrees(g, t);
    let n = g.n();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(2 * g.edge_count());
    let mut vals = Vec::with_capacity(2 * g.edge_count());
    row_ptr.push(0);
    for i in 0..n {
        for &j in g.neighbors(i) {
            cols.push(j);
            vals.push(w[i] * w[j]);
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseSymmetric {
        n,
        row_ptr,
        cols,
        vals,
    })
}

/// Node coordinates (row `i` = node `i`) from the top eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    coords: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Arbitrary points, for clustering data that did not come from an
    /// eigensolver. Eigenvalues are left empty.
    pub fn from_rows(points: &[Vec<f64>]) -> Result<Self> {
        let cols = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != cols) {
            return Err(SbmError::invalid("points must share one dimension"));
        }
        Ok(Self {
            rows: points.len(),
            cols,
            coords: points.iter().flatten().copied().collect(),
            eigenvalues: Vec::new(),
        })
    }

    fn from_columns(vectors: &DMatrix<f64>, eigenvalues: Vec<f64>) -> Self {
        let (rows, cols) = vectors.shape();
        let mut coords = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                coords[i * cols + j] = vectors[(i, j)];
            }
        }
        Self {
            rows,
            cols,
            coords,
            eigenvalues,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.rows,
            (0..self.rows).map(|i| self.coords[i * self.cols + j]),
        )
    }

    /// Eigenvalues in descending order, one per column.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Scales every nonzero row to unit length.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            let row = &mut out.coords[i * self.cols..(i + 1) * self.cols];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        out
    }
}

fn fix_sign(v: &mut DMatrix<f64>, col: usize) {
    let n = v.nrows();
    if let Some(i) = (0..n).find(|&i| v[(i, col)].abs() > 1e-12) {
        if v[(i, col)] < 0.0 {
            v.column_mut(col).neg_mut();
        }
    }
}

fn residual_check(m: &DMatrix<f64>, vecs: &DMatrix<f64>, vals: &[f64], norm: f64) -> Result<()> {
    let mv = m * vecs;
    let tol = EIGEN_RESIDUAL_TOL * norm.max(f64::MIN_POSITIVE);
    let worst = (0..vals.len())
        .map(|j| (mv.column(j) - vecs.column(j) * vals[j]).norm())
        .fold(0.0, f64::max);
    if worst > tol {
        return Err(SbmError::EigenNonConvergence {
            iterations: 0,
            residual: worst,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Eigenvectors of the `k` algebraically largest eigenvalues of a dense
/// symmetric matrix, orthonormal, each with its first nonzero coordinate
/// positive.
pub fn top_k_eigenvectors(m: &DMatrix<f64>, k: usize) -> Result<EmbeddingMatrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(SbmError::Dimension {
            expected: n,
            actual: m.ncols(),
        });
    }
    if k == 0 || k > n {
        return Err(SbmError::invalid(format!(
            "need 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let max_iter = 1000 * n.max(1);
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, max_iter).ok_or(
        SbmError::EigenNonConvergence {
            iterations: max_iter,
            residual: f64::NAN,
            tolerance: EIGEN_RESIDUAL_TOL,
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    // Descending; equal eigenvalues keep solver order.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let norm = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let vals: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
    for c in 0..k {
        fix_sign(&mut vecs, c);
    }
    residual_check(m, &vecs, &vals, norm)?;
    Ok(EmbeddingMatrix::from_columns(&vecs, vals))
}

/// Top-`k` eigenpairs of a sparse symmetric matrix by shifted subspace
/// iteration with Rayleigh-Ritz extraction. Residuals are held to
/// [`EIGEN_RESIDUAL_TOL`] times the row-sum norm bound.
pub fn top_k_eigenvectors_sparse(m: &SparseSymmetric, k: usize) -> Result<EmbeddingMatrix> {
    let n = m.dim();
    if k == 0 || k > n {
        return Err(SbmError::invalid(format!(
            "need 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let block = (2 * k + 8).min(n);
    let shift = m.norm_bound();
    let tol = EIGEN_RESIDUAL_TOL * shift.max(f64::MIN_POSITIVE);
    let apply = |q: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, q.ncols());
        let mut y = vec![0.0; n];
        for c in 0..q.ncols() {
            m.mul_vec(q.column(c).as_slice(), &mut y);
            out.column_mut(c).copy_from_slice(&y);
        }
        out
    };
    let mut rng = rng_from_seed(0x005e_ed0f_5eed);
    let start = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5);
    let mut q = start.qr().q();
    let mut worst = f64::INFINITY;
    for iter in 1..=SUBSPACE_MAX_ITER {
        // Shifting by the norm bound makes the algebraically largest
        // eigenvalues the dominant ones.
        let y = apply(&q) + &q * shift;
        q = y.qr().q();
        let mq = apply(&q);
        let h = q.transpose() * &mq;
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let w = DMatrix::from_fn(block, block, |r, c| eig.eigenvectors[(r, order[c])]);
        let ritz: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        q = &q * &w;
        let mv = &mq * &w;
        worst = (0..k)
            .map(|j| (mv.column(j) - q.column(j) * ritz[j]).norm())
            .fold(0.0, f64::max);
        if worst <= tol {
            let mut vecs = q.columns(0, k).into_owned();
            for c in 0..k {
                fix_sign(&mut vecs, c);
            }
            return Ok(EmbeddingMatrix::from_columns(&vecs, ritz[..k].to_vec()));
        }
        if iter == SUBSPACE_MAX_ITER {
            break;
        }
    }
    Err(SbmError::EigenNonConvergence {
        iterations: SUBSPACE_MAX_ITER,
        residual: worst,
        tolerance: tol,
    })
}

/// Outcome of [`kmeans`].
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Labeling,
    /// Within-cluster sum of squares of the selected restart.
    pub objective: f64,
    pub restart_objectives: Vec<f64>,
    /// Objective after every assignment step, per restart.
    pub traces: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct LloydRun {
    labels: Vec<usize>,
    objective: f64,
    trace: Vec<f64>,
}

fn plus_plus<R: Rng>(points: &EmbeddingMatrix, k: usize, rng: &mut R) -> Vec<f64> {
    let (n, d) = (points.rows(), points.cols());
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(points.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    for _ in 1..k {
        let pick = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // Every point coincides with a centroid.
            Err(_) => rng.random_range(0..n),
        };
        centroids.extend_from_slice(points.row(pick));
        for (i, near) in nearest.iter_mut().enumerate() {
            *near = near.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn lloyd(points: &EmbeddingMatrix, k: usize, mut centroids: Vec<f64>) -> LloydRun {
    let (n, d) = (points.rows(), points.cols());
    let mut labels = vec![0; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        for i in 0..n {
            let p = points.row(i);
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let dc = sq_dist(p, &centroids[c * d..(c + 1) * d]);
                if dc < best_d {
                    best = c;
                    best_d = dc;
                }
            }
            labels[i] = best;
            dists[i] = best_d;
        }
        trace.push(dists.iter().sum());

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, x) in sums[labels[i] * d..(labels[i] + 1) * d]
                .iter_mut()
                .zip(points.row(i))
            {
                *s += x;
            }
        }
        // Empty clusters move to the points farthest from their centroids.
        let mut far: Vec<usize> = (0..n).collect();
        far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]));
        let mut far = far.into_iter();
        let mut shift = 0.0f64;
        for c in 0..k {
            let new: Vec<f64> = if counts[c] > 0 {
                sums[c * d..(c + 1) * d]
                    .iter()
                    .map(|s| s / counts[c] as f64)
                    .collect()
            } else {
                let p = far.next().unwrap_or(0);
                points.row(p).to_vec()
            };
            let old = &mut centroids[c * d..(c + 1) * d];
            shift = shift.max(sq_dist(old, &new).sqrt());
            old.copy_from_slice(&new);
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    LloydRun {
        labels,
        objective: *trace.last().unwrap_or(&0.0),
        trace,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the best of `restarts` runs by
/// within-cluster sum of squares wins (ties go to the earlier restart).
/// Restart `r` draws from `derive_seed(seed, [r])`.
pub fn kmeans(
    points: &EmbeddingMatrix,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(SbmError::invalid(format!(
            "need 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    if restarts == 0 {
        return Err(SbmError::invalid("restarts must be positive"));
    }
    let runs: Vec<LloydRun> = (0..restarts)
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &[r as u64]));
            let init = plus_plus(points, k, &mut rng);
            lloyd(points, k, init)
        })
        .collect();
    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].objective.total_cmp(&runs[b].objective))
        .expect("restarts > 0");
    Ok(KMeansResult {
        labels: Labeling::new(runs[best].labels.clone(), k)?,
        objective: runs[best].objective,
        restart_objectives: runs.iter().map(|r| r.objective).collect(),
        traces: runs.into_iter().map(|r| r.trace).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOptions {
    pub tau: Tau,
    pub restarts: usize,
    pub row_normalize: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tau: Tau::Auto,
            restarts: KMEANS_RESTARTS,
            row_normalize: false,
        }
    }
}

/// Spectral initialization together with the embedding it clustered, so the
/// k-means step can be rerun with a fresh seed.
#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub labels: Labeling,
    pub embedding: EmbeddingMatrix,
    pub tau: f64,
    pub restarts: usize,
}

impl SpectralInit {
    pub fn rerun_kmeans(&self, seed: u64) -> Result<Labeling> {
        Ok(kmeans(&self.embedding, self.labels.k(), self.restarts, seed)?.labels)
    }
}

/// Top-`k` eigenvectors of `g`'s regularized operator, dense up to
/// [`DENSE_LIMIT`] nodes and iterative above.
pub fn spectral_embedding(g: &Graph, k: usize, tau: Tau) -> Result<EmbeddingMatrix> {
    if g.n() <= DENSE_LIMIT {
        top_k_eigenvectors(&regularized_laplacian(g, tau)?, k)
    } else {
        top_k_eigenvectors_sparse(&regularized_laplacian_sparse(g, tau)?, k)
    }
}

pub fn spectral_init(g: &Graph, k: usize, tau: Tau, seed: u64) -> Result<SpectralInit> {
    spectral_init_with(
        g,
        k,
        &SpectralOptions {
            tau,
            ..SpectralOptions::default()
        },
        seed,
    )
}

pub fn spectral_init_with(
    g: &Graph,
    k: usize,
    opts: &SpectralOptions,
    seed: u64,
) -> Result<SpectralInit> {
    let tau = opts.tau.resolve(g)?;
    let mut embedding = spectral_embedding(g, k, Tau::Value(tau))?;
    if opts.row_normalize {
        embedding = embedding.row_normalized();
    }
    let labels = kmeans(&embedding, k, opts.restarts, seed)?.labels;
    Ok(SpectralInit {
        labels,
        embedding,
        tau,
        restarts: opts.restarts,
    })
}
