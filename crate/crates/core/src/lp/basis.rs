use nalgebra::{DMatrix, DVector};

use super::{StandardLp, PIVOT_TOL, REFACTOR_INTERVAL};
use crate::error::{invalid, Error, Result};

const SINGULAR_TOL: f64 = 1e-12;

/// Ordered basis `B(1..m)` with an explicit inverse of `A_B` and the basic
/// values `z_B = A_B^{-1} b`.
#[derive(Debug, Clone)]
pub struct Basis {
    indices: Vec<usize>,
    inverse: DMatrix<f64>,
    values: DVector<f64>,
    since_refactor: usize,
}

/// Which position leaves when several ratios tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Smallest basis position.
    Position,
    /// Smallest column index (Bland's rule).
    ColumnIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioOutcome {
    /// Step length `theta` and the basis position that leaves.
    Step { theta: f64, leaving: usize },
    Unbounded,
}

impl Basis {
    pub fn new(lp: &StandardLp, indices: Vec<usize>) -> Result<Self> {
        let m = lp.rows();
        if indices.len() != m {
            return Err(invalid(format!("basis needs {m} columns, got {}", indices.len())));
        }
        let mut seen = vec![false; lp.cols()];
        for &j in &indices {
            if j >= lp.cols() {
                return Err(invalid(format!("basis column {j} out of range")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(invalid(format!("basis column {j} repeated")));
            }
        }
        let inverse = factorize(lp, &indices)?;
        let values = &inverse * lp.b();
        Ok(Self {
            indices,
            inverse,
            values,
            since_refactor: 0,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Basic values in basis order.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn position_of(&self, column: usize) -> Option<usize> {
        self.indices.iter().position(|&c| c == column)
    }

    pub fn contains(&self, column: usize) -> bool {
        self.position_of(column).is_some()
    }

    pub fn is_feasible(&self) -> bool {
        self.values.iter().all(|&v| v >= -super::FEASIBILITY_TOL)
    }

    /// Full solution vector with zeros at non-basic positions.
    pub fn solution(&self, n_cols: usize) -> DVector<f64> {
        let mut z = DVector::zeros(n_cols);
        for (&j, &v) in self.indices.iter().zip(self.values.iter()) {
            z[j] = v;
        }
        z
    }

    /// Coordinates `h = A_B^{-1} A_j` of column `j` in the current basis.
    pub fn direction(&self, lp: &StandardLp, column: usize) -> DVector<f64> {
        let col = lp.a().column(column);
        let mut h = DVector::zeros(self.indices.len());
        for (k, &v) in col.iter().enumerate() {
            if v != 0.0 {
                h.axpy(v, &self.inverse.column(k), 1.0);
            }
        }
        h
    }

    /// Dual estimate `A_B^{-T} c_B`.
    pub fn duals(&self, c: &DVector<f64>) -> DVector<f64> {
        let cb = DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&j| c[j]));
        self.inverse.tr_mul(&cb)
    }

    /// Exchanges the column at `leaving` for `entering`, given the
    /// precomputed direction `h` of the entering column.
    pub fn pivot_with(&mut self, lp: &StandardLp, entering: usize, leaving: usize, h: &DVector<f64>) -> Result<()> {
        if leaving >= self.indices.len() {
            return Err(invalid(format!("leaving position {leaving} out of range")));
        }
        let hr = h[leaving];
        if hr.abs() <= SINGULAR_TOL * h.amax().max(1.0) {
            return Err(Error::DegeneratePivot { entering });
        }
        let theta = self.values[leaving] / hr;
        for i in 0..self.values.len() {
            if i != leaving {
                self.values[i] -= theta * h[i];
            }
        }
        self.values[leaving] = theta;

        // E * inverse with the elementary eta matrix of this exchange
        for mut col in self.inverse.column_iter_mut() {
            let p = col[leaving] / hr;
            if p != 0.0 {
                for i in 0..col.len() {
                    col[i] -= h[i] * p;
                }
            }
            col[leaving] = p;
        }
        self.indices[leaving] = entering;

        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_INTERVAL {
            self.refactor(lp)?;
        }
        Ok(())
    }

    pub fn pivot(&mut self, lp: &StandardLp, entering: usize, leaving: usize) -> Result<()> {
        if self.contains(entering) {
            return Err(invalid(format!("column {entering} is already basic")));
        }
        let h = self.direction(lp, entering);
        self.pivot_with(lp, entering, leaving, &h)
    }

    /// Rebuilds the inverse and the basic values from `A_B` and `b`.
    pub fn refactor(&mut self, lp: &StandardLp) -> Result<()> {
        self.inverse = factorize(lp, &self.indices)?;
        self.values = &self.inverse * lp.b();
        self.since_refactor = 0;
        Ok(())
    }
}

fn factorize(lp: &StandardLp, indices: &[usize]) -> Result<DMatrix<f64>> {
    let m = lp.rows();
    let a_b = DMatrix::from_fn(m, m, |i, k| lp.a()[(i, indices[k])]);
    let scale = a_b.amax();
    if m > 0 && scale == 0.0 {
        return Err(Error::DegenerateBasis);
    }
    let lu = a_b.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if m > 0 && min_pivot <= SINGULAR_TOL * scale {
        return Err(Error::DegenerateBasis);
    }
    lu.try_inverse().ok_or(Error::DegenerateBasis)
}

/// Full solution `z` for `basis`: `z_B = A_B^{-1} b`, zero elsewhere.
pub fn basic_solution(lp: &StandardLp, basis: &Basis) -> Result<DVector<f64>> {
    let inverse = factorize(lp, basis.indices())?;
    let zb = inverse * lp.b();
    let mut z = DVector::zeros(lp.cols());
    for (&j, &v) in basis.indices().iter().zip(zb.iter()) {
        z[j] = v;
    }
    Ok(z)
}

/// `theta* = min { z_i / h_i : h_i > PIVOT_TOL }`. Slightly negative basic
/// values are treated as zero.
pub fn min_ratio(values: &[f64], h: &[f64], indices: &[usize], tie: TieBreak) -> RatioOutcome {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..h.len() {
        if h[i] <= PIVOT_TOL {
            continue;
        }
        let ratio = values[i].max(0.0) / h[i];
        best = match best {
            None => Some((ratio, i)),
            Some((r, k)) => {
                let tol = 1e-12 * (1.0 + r.abs());
                if ratio < r - tol {
                    Some((ratio, i))
                } else if ratio <= r + tol && tie == TieBreak::ColumnIndex && indices[i] < indices[k] {
                    Some((ratio, i))
                } else {
                    Some((r, k))
                }
            }
        };
    }
    match best {
        Some((theta, leaving)) => RatioOutcome::Step { theta, leaving },
        None => RatioOutcome::Unbounded,
    }
}

/// Ratio test for entering column `entering`, ties to the smallest position.
pub fn ratio_test(lp: &StandardLp, basis: &Basis, entering: usize) -> Result<RatioOutcome> {
    if entering >= lp.cols() {
        return Err(invalid(format!("column {entering} out of range")));
    }
    if basis.contains(entering) {
        return Err(invalid(format!("column {entering} is already basic")));
    }
    let h = basis.direction(lp, entering);
    Ok(min_ratio(basis.values().as_slice(), h.as_slice(), basis.indices(), TieBreak::Position))
}

/// Returns the basis obtained by exchanging position `leaving` for `entering`.
pub fn apply_pivot(lp: &StandardLp, basis: &Basis, entering: usize, leaving: usize) -> Result<Basis> {
    let mut next = basis.clone();
    next.pivot(lp, entering, leaving)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp(a: &[f64], rows: usize, b: &[f64]) -> StandardLp {
        let cols = a.len() / rows;
        StandardLp::new(
            DMatrix::from_row_slice(rows, cols, a),
            DVector::from_row_slice(b),
            DVector::zeros(cols),
        )
        .unwrap()
    }

    #[test]
    fn basic_solution_examples() {
        let p = lp(&[1.0, 1.0], 1, &[2.0]);
        let basis = Basis::new(&p, vec![0]).unwrap();
        assert_eq!(basic_solution(&p, &basis).unwrap(), DVector::from_vec(vec![2.0, 0.0]));

        let p = lp(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3, &[0.5, 2.0, 7.0]);
        let basis = Basis::new(&p, vec![0, 1, 2]).unwrap();
        assert_eq!(basic_solution(&p, &basis).unwrap(), DVector::from_vec(vec![0.5, 2.0, 7.0]));
    }

    #[test]
    fn random_basic_solutions_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = DMatrix::from_fn(3, 6, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let b = DVector::from_fn(3, |_, _| rng.random::<f64>());
            let p = StandardLp::new(a, b, DVector::zeros(6)).unwrap();
            let mut cols: Vec<usize> = (0..6).collect();
            for i in 0..3 {
                let k = rng.random_range(i..6);
                cols.swap(i, k);
            }
            let basis = Basis::new(&p, cols[..3].to_vec()).unwrap();
            let z = basic_solution(&p, &basis).unwrap();
            assert!(p.residual(&z) < 1e-10);
            assert_eq!(z.iter().filter(|&&v| v != 0.0).count() <= 3, true);
            for j in &cols[3..] {
                assert_eq!(z[*j], 0.0);
            }
        }
    }

    #[test]
    fn singular_basis_is_rejected() {
        let p = lp(&[1.0, 2.0, 0.0, 1.0, 2.0, 1.0], 2, &[1.0, 1.0]);
        assert!(matches!(Basis::new(&p, vec![0, 1]), Err(Error::DegenerateBasis)));
        assert!(Basis::new(&p, vec![0, 0]).is_err());
        assert!(Basis::new(&p, vec![0]).is_err());
    }

    #[test]
    fn ratio_examples() {
        let idx = [0, 1];
        let v = DVector::from_vec(vec![2.0, 3.0]);
        assert_eq!(
            min_ratio(v.as_slice(), &[1.0, 3.0], &idx, TieBreak::Position),
            RatioOutcome::Step { theta: 1.0, leaving: 1 }
        );
        assert_eq!(
            min_ratio(v.as_slice(), &[-1.0, 0.0], &idx, TieBreak::Position),
            RatioOutcome::Unbounded
        );
        let tie = DVector::from_vec(vec![2.0, 2.0]);
        assert_eq!(
            min_ratio(tie.as_slice(), &[1.0, 1.0], &idx, TieBreak::Position),
            RatioOutcome::Step { theta: 2.0, leaving: 0 }
        );
        // Bland: column indices decide, not positions
        assert_eq!(
            min_ratio(tie.as_slice(), &[1.0, 1.0], &[5, 3], TieBreak::ColumnIndex),
            RatioOutcome::Step { theta: 2.0, leaving: 1 }
        );
    }

    #[test]
    fn ratio_test_rejects_basic_column() {
        let p = lp(&[1.0, 1.0], 1, &[2.0]);
        let basis = Basis::new(&p, vec![0]).unwrap();
        assert!(matches!(ratio_test(&p, &basis, 0), Err(Error::InvalidArgument(_))));
        assert_eq!(ratio_test(&p, &basis, 1).unwrap(), RatioOutcome::Step { theta: 2.0, leaving: 0 });
    }

    #[test]
    fn pivot_and_reverse() {
        // x + y + s1 = 4, x - y + s2 = 1
        let p = lp(&[1.0, 1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 1.0], 2, &[4.0, 1.0]);
        let start = Basis::new(&p, vec![2, 3]).unwrap();
        let z0 = start.solution(4);
        let RatioOutcome::Step { theta, leaving } = ratio_test(&p, &start, 0).unwrap() else {
            panic!("bounded")
        };
        assert_eq!((theta, leaving), (1.0, 1));
        let next = apply_pivot(&p, &start, 0, leaving).unwrap();
        let z1 = next.solution(4);
        assert!(p.residual(&z1) < 1e-12);
        assert!(z1.iter().all(|&v| v >= -1e-9));
        assert_eq!(z1[0], theta);

        let back_pos = next.position_of(0).unwrap();
        let back = apply_pivot(&p, &next, 3, back_pos).unwrap();
        assert!((back.solution(4) - z0).amax() < 1e-9);
    }

    #[test]
    fn degenerate_pivot_keeps_solution() {
        // x + s1 = 0 makes the step length zero
        let p = lp(&[1.0, 1.0, 0.0, 1.0, 0.0, 1.0], 2, &[0.0, 3.0]);
        let start = Basis::new(&p, vec![1, 2]).unwrap();
        let RatioOutcome::Step { theta, leaving } = ratio_test(&p, &start, 0).unwrap() else {
            panic!()
        };
        assert_eq!(theta, 0.0);
        let next = apply_pivot(&p, &start, 0, leaving).unwrap();
        assert_ne!(next.indices(), start.indices());
        assert!((next.solution(3) - start.solution(3)).amax() < 1e-15);
    }

    #[test]
    fn pivot_rejects_zero_direction_entry() {
        let p = lp(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0], 2, &[1.0, 1.0]);
        let start = Basis::new(&p, vec![0, 1]).unwrap();
        // column 2 equals column 0, so it cannot replace column 1
        assert!(matches!(apply_pivot(&p, &start, 2, 1), Err(Error::DegeneratePivot { .. })));
    }

    #[test]
    fn long_pivot_sequences_stay_accurate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 6;
        let n = 14;
        let a = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let b = DVector::from_fn(m, |_, _| rng.random::<f64>());
        let p = StandardLp::new(a, b, DVector::zeros(n)).unwrap();
        let mut basis = Basis::new(&p, (0..m).collect()).unwrap();
        for step in 0..200 {
            let entering = (0..n).filter(|j| !basis.contains(*j)).nth(step % (n - m)).unwrap();
            let h = basis.direction(&p, entering);
            let leaving = (0..m).max_by(|&x, &y| h[x].abs().total_cmp(&h[y].abs())).unwrap();
            basis.pivot_with(&p, entering, leaving, &h).unwrap();
            let z = basis.solution(n);
            assert!(p.residual(&z) < 1e-8, "step {step}");
        }
    }
}
