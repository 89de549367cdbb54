//! Standard-form linear programming: `min c'z  s.t.  A z = b, z >= 0`.
//!
//! [`Basis`] holds an ordered set of basic columns together with an explicit
//! inverse of `A_B`; pivots update the inverse in place and the factorization
//! is rebuilt from scratch every [`REFACTOR_INTERVAL`] pivots. The pivot
//! primitives are public so callers can steer the walk between vertices
//! themselves instead of running the full simplex method.

mod basis;
mod simplex;
mod trace;

pub use basis::{apply_pivot, basic_solution, min_ratio, ratio_test, Basis, RatioOutcome, TieBreak};
pub use simplex::{simplex_optimize, simplex_optimize_observed, two_phase_solve, two_phase_solve_observed, Status};
pub use trace::{NoTrace, PivotEvent, PivotObserver, TextTrace};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Basic values above `-FEASIBILITY_TOL` count as nonnegative.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Allowed `|A z - b|` for a basic solution.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Entries of `h = A_B^{-1} A_j` at or below this do not bound the step.
pub const PIVOT_TOL: f64 = 1e-10;
/// Reduced costs above `-OPTIMALITY_TOL` count as nonnegative.
pub const OPTIMALITY_TOL: f64 = 1e-9;
pub const REFACTOR_INTERVAL: usize = 50;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct StandardLp {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    /// Original row index of each retained row.
    row_map: Vec<usize>,
}

impl StandardLp {
    /// Validates shapes and drops linearly dependent rows. A dependent row
    /// whose right-hand side is inconsistent with the others makes the
    /// program infeasible.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if b.len() != m || c.len() != n {
            return Err(invalid(format!(
                "lp shapes disagree: A {m}x{n}, b {}, c {}",
                b.len(),
                c.len()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("lp data must be finite"));
        }
        let keep = independent_rows(&a, &b)?;
        if keep.len() == m {
            return Ok(Self {
                a,
                b,
                c,
                row_map: (0..m).collect(),
            });
        }
        let a_red = DMatrix::from_fn(keep.len(), n, |i, j| a[(keep[i], j)]);
        let b_red = DVector::from_iterator(keep.len(), keep.iter().map(|&i| b[i]));
        Ok(Self {
            a: a_red,
            b: b_red,
            c,
            row_map: keep,
        })
    }

    /// Skips the rank check; the caller guarantees full row rank.
    pub(crate) fn from_full_rank(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Self {
        let m = a.nrows();
        Self {
            a,
            b,
            c,
            row_map: (0..m).collect(),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn row_map(&self) -> &[usize] {
        &self.row_map
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        self.c.dot(z)
    }

    /// Same constraints, different cost.
    pub fn with_cost(&self, c: DVector<f64>) -> Result<Self> {
        if c.len() != self.cols() {
            return Err(invalid("cost vector length must equal column count"));
        }
        Ok(Self { c, ..self.clone() })
    }

    /// `max |A z - b|`.
    pub fn residual(&self, z: &DVector<f64>) -> f64 {
        (&self.a * z - &self.b).amax()
    }

    pub fn is_feasible(&self, z: &DVector<f64>) -> bool {
        z.len() == self.cols() && self.residual(z) <= RESIDUAL_TOL && z.iter().all(|&v| v >= -FEASIBILITY_TOL)
    }
}

/// Row indices forming a maximal independent set, chosen greedily in order
/// by modified Gram-Schmidt on the rows of `A`.
fn independent_rows(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<usize>> {
    let (m, n) = a.shape();
    let mut basis: Vec<(DVector<f64>, f64)> = Vec::with_capacity(m.min(n));
    let mut keep = Vec::with_capacity(m);
    for i in 0..m {
        let mut r = a.row(i).transpose();
        let mut rb = b[i];
        let scale = r.norm();
        for (q, qb) in &basis {
            let coef = q.dot(&r);
            r.axpy(-coef, q, 1.0);
            rb -= coef * qb;
        }
        // second pass keeps the orthogonalization accurate
        for (q, qb) in &basis {
            let coef = q.dot(&r);
            r.axpy(-coef, q, 1.0);
            rb -= coef * qb;
        }
        let norm = r.norm();
        if norm <= RANK_TOL * scale.max(1.0) {
            if rb.abs() > 1e-9 * (1.0 + b[i].abs()) {
                return Err(Error::Infeasible { residual: rb.abs() });
            }
            continue;
        }
        basis.push((r / norm, rb / norm));
        keep.push(i);
    }
    Ok(keep)
}
