use nalgebra::{DMatrix, DVector};

use super::{
    min_ratio, Basis, NoTrace, PivotEvent, PivotObserver, RatioOutcome, StandardLp, TieBreak, OPTIMALITY_TOL,
};
use crate::error::{Error, Result};

/// Consecutive degenerate pivots before switching to Bland's rule.
const BLAND_AFTER: usize = 50;
const PHASE_ONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
}

/// Finds a basic feasible solution with a phase-one program over artificial
/// variables.
pub fn two_phase_solve(lp: &StandardLp) -> Result<(Basis, Status)> {
    two_phase_solve_observed(lp, &mut NoTrace)
}

pub fn two_phase_solve_observed(lp: &StandardLp, observer: &mut dyn PivotObserver) -> Result<(Basis, Status)> {
    let (m, n) = (lp.rows(), lp.cols());
    let sign: Vec<f64> = lp.b().iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut a = DMatrix::zeros(m, n + m);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = sign[i] * lp.a()[(i, j)];
        }
        a[(i, n + i)] = 1.0;
    }
    let b = DVector::from_fn(m, |i, _| sign[i] * lp.b()[i]);
    let c = DVector::from_fn(n + m, |j, _| if j >= n { 1.0 } else { 0.0 });
    let phase_one = StandardLp::from_full_rank(a, b, c);

    let start = Basis::new(&phase_one, (n..n + m).collect())?;
    let (mut basis, z) = optimize(&phase_one, start, "phase1", observer)?;
    let residual = phase_one.objective(&z);
    if residual > PHASE_ONE_TOL {
        return Err(Error::Infeasible { residual });
    }

    // drive zero-valued artificials out of the basis
    for pos in 0..m {
        if basis.indices()[pos] < n {
            continue;
        }
        let row = basis.inverse().row(pos).transpose();
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|j| !basis.contains(*j)) {
            let hr = row.dot(&phase_one.a().column(j));
            if hr.abs() > 1e-9 && best.is_none_or(|(_, v)| hr.abs() > v) {
                best = Some((j, hr.abs()));
            }
        }
        let Some((j, _)) = best else {
            return Err(Error::Assembly(format!("row {pos} is redundant after phase one")));
        };
        basis.pivot(&phase_one, j, pos)?;
    }

    let basis = Basis::new(lp, basis.indices().to_vec())?;
    Ok((basis, Status::Optimal))
}

/// Primal simplex from a basic feasible solution. Dantzig pricing, falling
/// back to Bland's rule after a run of degenerate pivots.
pub fn simplex_optimize(lp: &StandardLp, start: Basis) -> Result<(Basis, DVector<f64>)> {
    optimize(lp, start, "phase2", &mut NoTrace)
}

pub fn simplex_optimize_observed(
    lp: &StandardLp,
    start: Basis,
    observer: &mut dyn PivotObserver,
) -> Result<(Basis, DVector<f64>)> {
    optimize(lp, start, "phase2", observer)
}

fn pivot_budget(n: usize, m: usize) -> usize {
    // C(n, m) saturating at a large cap
    let mut c: u128 = 1;
    for i in 0..m.min(n - m) {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > 10_000_000 {
            c = 10_000_000;
            break;
        }
    }
    c as usize + 50 * n
}

fn optimize(
    lp: &StandardLp,
    mut basis: Basis,
    phase: &str,
    observer: &mut dyn PivotObserver,
) -> Result<(Basis, DVector<f64>)> {
    let n = lp.cols();
    let budget = pivot_budget(n, lp.rows());
    let mut degenerate_run = 0usize;
    let mut in_basis = vec![false; n];
    for &j in basis.indices() {
        in_basis[j] = true;
    }

    // columns whose pivot element was too small to use from this basis
    let mut skip = vec![false; n];
    for _ in 0..budget {
        let bland = degenerate_run >= BLAND_AFTER;
        let duals = basis.duals(lp.c());
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..n {
            if in_basis[j] || skip[j] {
                continue;
            }
            let reduced = lp.c()[j] - lp.a().column(j).dot(&duals);
            if reduced >= -OPTIMALITY_TOL {
                continue;
            }
            if bland {
                entering = Some((j, reduced));
                break;
            }
            if entering.is_none_or(|(_, r)| reduced < r) {
                entering = Some((j, reduced));
            }
        }
        let Some((j, _)) = entering else {
            if skip.iter().any(|&v| v) {
                return Err(Error::DegenerateBasis);
            }
            let z = basis.solution(n);
            return Ok((basis, z));
        };

        let h = basis.direction(lp, j);
        let tie = if bland { TieBreak::ColumnIndex } else { TieBreak::Position };
        let RatioOutcome::Step { theta, leaving } = min_ratio(basis.values().as_slice(), h.as_slice(), basis.indices(), tie) else {
            return Err(Error::Unbounded { column: j });
        };
        let leaving_column = basis.indices()[leaving];
        match basis.pivot_with(lp, j, leaving, &h) {
            Ok(()) => skip.fill(false),
            Err(Error::DegeneratePivot { .. }) => {
                skip[j] = true;
                continue;
            }
            Err(e) => return Err(e),
        }
        if theta <= 1e-12 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        in_basis[leaving_column] = false;
        in_basis[j] = true;
        observer.on_pivot(&PivotEvent {
            phase,
            lp,
            basis: &basis,
            entering: j,
            leaving_column,
            theta,
        });
    }
    Err(Error::PivotLimit(budget))
}
