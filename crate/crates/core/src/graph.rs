//! Spatial correlation graph over sensor positions.
//!
//! A k-nearest-neighbour graph with weights `exp(-distance / sigma2)`, its
//! combinatorial Laplacian `L = D - W`, the Laplacian spectrum used as the
//! graph Fourier basis, and a Gaussian Markov random field with precision
//! `L + delta * I` used to draw smooth test signals.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Point2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Undirected weighted edge, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<Edge>,
    weights: DMatrix<f64>,
}

impl Graph {
    /// Builds a graph from an explicit edge list. Edges are undirected;
    /// `(a, b)` and `(b, a)` may not both appear.
    pub fn from_edges(n_nodes: usize, edges: &[Edge]) -> Result<Self> {
        let mut weights = DMatrix::zeros(n_nodes, n_nodes);
        let mut normalized = Vec::with_capacity(edges.len());
        for e in edges {
            if e.a >= n_nodes || e.b >= n_nodes {
                return Err(invalid(format!("edge ({}, {}) out of range", e.a, e.b)));
            }
            if e.a == e.b {
                return Err(invalid("self loops are not allowed"));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(invalid(format!("edge weight {} must be positive", e.weight)));
            }
            let (a, b) = if e.a < e.b { (e.a, e.b) } else { (e.b, e.a) };
            if weights[(a, b)] != 0.0 {
                return Err(invalid(format!("duplicate edge ({a}, {b})")));
            }
            weights[(a, b)] = e.weight;
            weights[(b, a)] = e.weight;
            normalized.push(Edge { a, b, weight: e.weight });
        }
        normalized.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
        Ok(Self {
            n_nodes,
            edges: normalized,
            weights,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weight_matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_nodes, self.weights.row_iter().map(|r| r.sum()))
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees())
    }

    /// Combinatorial Laplacian `D - W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.weights.clone();
        for (i, d) in self.degrees().iter().enumerate() {
            l[(i, i)] = *d;
        }
        l
    }

    /// Graph Laplacian regularizer `x' L x`, evaluated as the edge sum
    /// `sum w_ab (x_a - x_b)^2` so the result is nonnegative by construction.
    pub fn smoothness(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.n_nodes {
            return Err(invalid(format!(
                "signal has length {}, graph has {} nodes",
                x.len(),
                self.n_nodes
            )));
        }
        Ok(self
            .edges
            .iter()
            .map(|e| e.weight * (x[e.a] - x[e.b]).powi(2))
            .sum())
    }

    pub fn eigendecompose(&self) -> GraphSpectrum {
        GraphSpectrum::of_laplacian(&self.laplacian())
    }
}

/// Builds the k-nearest-neighbour graph, symmetrized by union, with edge
/// weights `exp(-l / sigma2)` where `l` is the Euclidean distance.
///
/// Distance ties are broken by the smaller node index so the edge set is a
/// deterministic function of the input.
pub fn build_knn_graph(positions: &[Point2<f64>], k: usize, sigma2: f64) -> Result<Graph> {
    let n = positions.len();
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if n < k + 1 {
        return Err(invalid(format!("need at least k+1 = {} nodes, got {n}", k + 1)));
    }
    if !(sigma2 > 0.0) {
        return Err(invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    let dist = |i: usize, j: usize| (positions[i] - positions[j]).norm();
    for i in 0..n {
        for j in (i + 1)..n {
            if dist(i, j) == 0.0 {
                return Err(invalid(format!("positions {i} and {j} coincide")));
            }
        }
    }

    let mut linked = vec![vec![false; n]; n];
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&p, &q| dist(i, p).total_cmp(&dist(i, q)).then(p.cmp(&q)));
        for &j in order.iter().take(k) {
            linked[i][j] = true;
            linked[j][i] = true;
        }
    }

    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if linked[a][b] {
                edges.push(Edge {
                    a,
                    b,
                    weight: (-dist(a, b) / sigma2).exp(),
                });
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// Eigen-decomposition `L = V diag(lambda) V'` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct GraphSpectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl GraphSpectrum {
    /// Eigenvectors are sign-normalized so that the first entry with
    /// magnitude above `1e-12` is positive.
    pub fn of_laplacian(laplacian: &DMatrix<f64>) -> Self {
        let n = laplacian.nrows();
        let eig = laplacian.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(src).into_owned();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.neg_mut();
                }
            }
            eigenvectors.set_column(dst, &v);
        }
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Graph Fourier coefficients `V' x`.
    pub fn gft(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.tr_mul(x)
    }

    /// Inverse transform `V alpha`.
    pub fn igft(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.eigenvectors * alpha
    }

    /// `sum_j lambda_j alpha_j^2`, the spectral form of `x' L x`.
    pub fn smoothness(&self, x: &DVector<f64>) -> f64 {
        self.gft(x)
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(a, l)| l * a * a)
            .sum()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues) * self.eigenvectors.transpose()
    }
}

/// Zero-mean GMRF with precision `L + delta * I`.
#[derive(Debug, Clone)]
pub struct GmrfModel {
    delta: f64,
    precision: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
}

impl GmrfModel {
    pub const DEFAULT_DELTA: f64 = 0.01;

    pub fn new(laplacian: &DMatrix<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(invalid(format!("delta must be positive, got {delta}")));
        }
        let n = laplacian.nrows();
        let precision = laplacian + DMatrix::identity(n, n) * delta;
        let cholesky = Cholesky::new(precision.clone())
            .ok_or_else(|| Error::SingularSystem("GMRF precision is not positive definite".into()))?;
        Ok(Self {
            delta,
            precision,
            cholesky,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Lower-triangular factor `C` with `C C' = L + delta I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.cholesky.l()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.cholesky.inverse()
    }

    /// Draws `x = C'^{-1} z` with `z` i.i.d. standard normal, so that
    /// `Cov(x) = (C C')^{-1}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.precision.nrows();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        self.cholesky
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a nonzero diagonal")
    }
}
