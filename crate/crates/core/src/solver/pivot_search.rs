//! Sparsity-controlled walk over the vertices of the power polytope.
//!
//! Every vertex is a basic feasible solution; its active sensors are the
//! `eta` columns that are basic with a positive value. Because the ratio
//! test tells which column leaves for a given entering column, the walk can
//! choose entering columns that move the active count `g` towards the
//! target `K`, preferring supports with small `-gamma * sum log psi_i`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use super::power::PowerLp;
use crate::error::{invalid, Result};
use crate::lp::{min_ratio, simplex_optimize, two_phase_solve, Basis, PivotEvent, PivotObserver, RatioOutcome, TieBreak};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotSearchOptions {
    pub k_target: usize,
    pub gamma: f64,
    pub max_pivots: usize,
    /// `eta_i` above this counts as active.
    pub support_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStatus {
    /// `g = K` and no admissible pivot lowers the activation cost.
    Converged,
    /// Pivot budget ran out at `g = K`.
    BudgetExhausted,
    /// `g = K` was never reached; the closest vertex is returned.
    InfeasibleSparsity,
}

/// Which rule selected a pivot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    TowardTarget,
    ImproveAtTarget,
    KeepCount,
    AnyFeasible,
    /// Undo of an earlier pivot after all neighbours were visited.
    Backtrack,
}

#[derive(Debug, Clone)]
pub struct PivotSearchOutcome {
    pub eta: DVector<f64>,
    pub basis: Basis,
    pub status: SearchStatus,
    pub pivots: usize,
    /// `g` at the start and after every pivot.
    pub g_trace: Vec<usize>,
    /// Activation cost at the start and after every pivot.
    pub cost_trace: Vec<f64>,
    pub moves: Vec<MoveKind>,
    /// Largest `max(|A z - b|, -min z)` over every visited vertex.
    pub max_violation: f64,
    pub final_g: usize,
    pub cost: f64,
}

/// `gamma * sum_{i in support} -ln psi_i`.
pub fn activation_cost(support: impl IntoIterator<Item = usize>, psi: &[f64], gamma: f64) -> f64 {
    gamma * support.into_iter().map(|i| -psi[i].ln()).sum::<f64>()
}

/// Initial vertex: a phase-one basic feasible solution, then the simplex
/// method under the program's cost (maximal total power).
pub fn initial_power_basis(power: &PowerLp) -> Result<Basis> {
    let (start, _) = two_phase_solve(power.lp())?;
    let (basis, _) = simplex_optimize(power.lp(), start)?;
    Ok(basis)
}

fn zobrist(column: usize) -> u64 {
    let mut z = (column as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Candidate {
    entering: usize,
    leaving: usize,
    g: usize,
    cost: f64,
    /// Total power of the resulting vertex.
    mass: f64,
    key: u64,
}

fn support_of(basis: &Basis, n: usize, tol: f64) -> Vec<usize> {
    let mut s: Vec<usize> = basis
        .indices()
        .iter()
        .zip(basis.values().iter())
        .filter(|(&j, &v)| j < n && v > tol)
        .map(|(&j, _)| j)
        .collect();
    s.sort_unstable();
    s
}

fn violation(power: &PowerLp, basis: &Basis) -> f64 {
    let z = basis.solution(power.lp().cols());
    power.lp().residual(&z).max(-z.min()).max(0.0)
}

/// Largest constraint violation accepted after a pivot.
const ACCEPT_VIOLATION: f64 = 1e-9;
/// Smallest pivot element, relative to the largest entry of the direction.
const MIN_PIVOT_RATIO: f64 = 1e-7;

/// Tableau rows drift from `B^-1 A` under repeated updates; they are
/// rebuilt this often.
const REBUILD_INTERVAL: usize = 50;

/// Outcome of one guarded pivot, with the violation of the new vertex.
enum PivotCheck {
    Clean(f64),
    /// The basis had to be refactored; the tableau is stale.
    Refactored(f64),
    /// Numerically unsafe, or outside the polytope even after refactoring.
    Failed,
}

fn stable_pivot(power: &PowerLp, basis: &mut Basis, entering: usize, leaving: usize, h: &DVector<f64>) -> PivotCheck {
    let lp = power.lp();
    if basis.pivot_with(lp, entering, leaving, h).is_err() {
        return PivotCheck::Failed;
    }
    let v = violation(power, basis);
    if v <= ACCEPT_VIOLATION {
        return PivotCheck::Clean(v);
    }
    if basis.refactor(lp).is_err() {
        return PivotCheck::Failed;
    }
    let v = violation(power, basis);
    if v <= ACCEPT_VIOLATION {
        PivotCheck::Refactored(v)
    } else {
        PivotCheck::Failed
    }
}

/// Applies the exchange at basis position `leaving` with entering direction
/// `h` to every column of `t`.
fn eliminate(t: &mut DMatrix<f64>, leaving: usize, h: &DVector<f64>) {
    let hr = h[leaving];
    for mut col in t.column_iter_mut() {
        let p = col[leaving] / hr;
        if p != 0.0 {
            col.axpy(-p, h, 1.0);
        }
        col[leaving] = p;
    }
}

#[derive(Clone)]
struct Snapshot {
    eta: DVector<f64>,
    basis: Basis,
    g: usize,
    cost: f64,
}

pub fn sparsity_pivot_search(
    power: &PowerLp,
    psi: &[f64],
    initial: Basis,
    opts: &PivotSearchOptions,
    observer: &mut dyn PivotObserver,
) -> Result<PivotSearchOutcome> {
    let n = power.n_sensors();
    if psi.len() != n {
        return Err(invalid("pivot search: psi must have one entry per sensor"));
    }
    if opts.k_target == 0 || opts.k_target > n {
        return Err(invalid(format!("pivot search: K = {} outside 1..={n}", opts.k_target)));
    }
    let lp = power.lp();
    let cols = lp.cols();
    let k = opts.k_target;
    let tol = opts.support_tol;

    let weight: Vec<f64> = psi.iter().map(|&p| -opts.gamma * p.ln()).collect();
    let mut basis = initial;
    let mut key = basis.indices().iter().fold(0u64, |acc, &j| acc ^ zobrist(j));
    let mut visited: HashSet<u64> = HashSet::from([key]);
    let mut path: Vec<(usize, usize)> = Vec::new();
    // B^-1 A, kept in step with the basis so entering directions are columns
    let mut tableau = basis.inverse() * lp.a();
    let mut since_rebuild = 0usize;

    let mut support = support_of(&basis, n, tol);
    let mut cost = activation_cost(support.iter().copied(), psi, opts.gamma);
    let mut g_trace = vec![support.len()];
    let mut cost_trace = vec![cost];
    let mut moves = Vec::new();
    let mut max_violation = violation(power, &basis);
    let snapshot = |basis: &Basis, g: usize, cost: f64| Snapshot {
        eta: power.eta_block(&basis.solution(cols)),
        basis: basis.clone(),
        g,
        cost,
    };
    let mut best = snapshot(&basis, support.len(), cost);
    let mut pivots = 0usize;
    let mut status = None;
    let mut candidates = Vec::with_capacity(cols);
    let mut in_basis = vec![false; cols];

    while pivots < opts.max_pivots {
        let g = support.len();
        let values = basis.values().as_slice();
        // basis positions holding an eta column
        let eta_pos: Vec<usize> = (0..values.len()).filter(|&p| basis.indices()[p] < n).collect();
        let mass_now: f64 = eta_pos.iter().map(|&p| values[p].max(0.0)).sum();

        candidates.clear();
        in_basis.fill(false);
        for &j in basis.indices() {
            in_basis[j] = true;
        }
        for j in (0..cols).filter(|&j| !in_basis[j]) {
            let h = tableau.column(j);
            let h = h.as_slice();
            let RatioOutcome::Step { theta, leaving } = min_ratio(values, h, basis.indices(), TieBreak::Position) else {
                continue;
            };
            let hmax = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if h[leaving].abs() < MIN_PIVOT_RATIO * hmax {
                continue;
            }
            let (mut new_g, mut new_cost, mut mass) = (g, cost, mass_now);
            for &p in &eta_pos {
                let v = values[p];
                let nv = if p == leaving { 0.0 } else { v - theta * h[p] };
                mass += nv.max(0.0) - v.max(0.0);
                let col = basis.indices()[p];
                match (v > tol, nv > tol) {
                    (true, false) => {
                        new_g -= 1;
                        new_cost -= weight[col];
                    }
                    (false, true) => {
                        new_g += 1;
                        new_cost += weight[col];
                    }
                    _ => {}
                }
            }
            if j < n {
                mass += theta;
                if theta > tol {
                    new_g += 1;
                    new_cost += weight[j];
                }
            }
            candidates.push(Candidate {
                entering: j,
                leaving,
                g: new_g,
                cost: new_cost,
                mass,
                key: key ^ zobrist(basis.indices()[leaving]) ^ zobrist(j),
            });
        }

        // Fallback moves are ranked by how far they move the total power in
        // the direction of the target (shedding power when too many sensors
        // are active, adding it when too few are), then by cost.
        let drift = if g > k { 1.0 } else { -1.0 };
        // costs are summed incrementally, so equal supports may differ in the last bits
        let tie_eps = 1e-12 * (1.0 + cost.abs());
        let pick = |filter: &dyn Fn(&Candidate) -> bool, by_mass: bool| -> Option<usize> {
            let mut chosen: Option<usize> = None;
            for (idx, c) in candidates.iter().enumerate() {
                if visited.contains(&c.key) || !filter(c) {
                    continue;
                }
                // candidates are in increasing column order, so strict
                // comparison keeps the smaller column on ties
                let better = chosen.is_none_or(|b| {
                    let o = &candidates[b];
                    let same_cost = (c.cost - o.cost).abs() <= tie_eps;
                    if by_mass && c.mass != o.mass {
                        drift * c.mass < drift * o.mass
                    } else {
                        !same_cost && c.cost < o.cost
                    }
                });
                if better {
                    chosen = Some(idx);
                }
            }
            chosen
        };

        let improve_eps = 1e-12 * (1.0 + cost.abs());
        let step = if g == k {
            match pick(&|c| c.g == k && c.cost < cost - improve_eps, false) {
                Some(i) => Some((i, MoveKind::ImproveAtTarget)),
                None => {
                    status = Some(SearchStatus::Converged);
                    break;
                }
            }
        } else {
            let toward = |c: &Candidate| if g > k { c.g < g } else { c.g > g };
            pick(&toward, false)
                .map(|i| (i, MoveKind::TowardTarget))
                .or_else(|| pick(&|c| c.g == g, true).map(|i| (i, MoveKind::KeepCount)))
                .or_else(|| pick(&|_| true, true).map(|i| (i, MoveKind::AnyFeasible)))
        };

        let leaving_column;
        let entering;
        let theta;
        let mut step_violation = 0.0;
        match step {
            Some((chosen, kind)) => {
                let c = &candidates[chosen];
                let h = tableau.column(c.entering).into_owned();
                entering = c.entering;
                leaving_column = basis.indices()[c.leaving];
                theta = basis.values()[c.leaving].max(0.0) / h[c.leaving];
                match stable_pivot(power, &mut basis, c.entering, c.leaving, &h) {
                    PivotCheck::Clean(v) => {
                        eliminate(&mut tableau, c.leaving, &h);
                        step_violation = v;
                    }
                    PivotCheck::Refactored(v) => {
                        since_rebuild = REBUILD_INTERVAL;
                        step_violation = v;
                    }
                    PivotCheck::Failed => {
                        // round-off left the polytope; the move is dropped for good
                        let mut indices = basis.indices().to_vec();
                        indices[c.leaving] = leaving_column;
                        basis = Basis::new(lp, indices)?;
                        tableau = basis.inverse() * lp.a();
                        since_rebuild = 0;
                        visited.insert(c.key);
                        pivots += 1;
                        continue;
                    }
                }
                key = c.key;
                visited.insert(key);
                path.push((entering, leaving_column));
                moves.push(kind);
            }
            None => {
                // every neighbour was seen: step back along the path
                let Some((forward_in, forward_out)) = path.pop() else {
                    break;
                };
                let pos = basis
                    .position_of(forward_in)
                    .ok_or_else(|| invalid("pivot search: path column left the basis"))?;
                let h = tableau.column(forward_out).into_owned();
                entering = forward_out;
                leaving_column = forward_in;
                theta = basis.values()[pos].max(0.0) / h[pos];
                let undone = basis.pivot_with(lp, forward_out, pos, &h).is_ok() && {
                    step_violation = violation(power, &basis);
                    step_violation <= ACCEPT_VIOLATION
                };
                if undone {
                    eliminate(&mut tableau, pos, &h);
                } else {
                    // the undo is exact in theory; rebuild from the column set
                    let mut indices = basis.indices().to_vec();
                    indices[pos] = forward_out;
                    basis = Basis::new(lp, indices)?;
                    step_violation = violation(power, &basis);
                    since_rebuild = REBUILD_INTERVAL;
                }
                key ^= zobrist(forward_in) ^ zobrist(forward_out);
                moves.push(MoveKind::Backtrack);
            }
        }
        since_rebuild += 1;
        if since_rebuild >= REBUILD_INTERVAL {
            tableau = basis.inverse() * lp.a();
            since_rebuild = 0;
        }
        pivots += 1;
        observer.on_pivot(&PivotEvent {
            phase: "sparsity",
            lp,
            basis: &basis,
            entering,
            leaving_column,
            theta,
        });

        support = support_of(&basis, n, tol);
        cost = support.iter().map(|&i| weight[i]).sum();
        g_trace.push(support.len());
        cost_trace.push(cost);
        max_violation = max_violation.max(step_violation);

        let better = {
            let d_new = support.len().abs_diff(k);
            let d_best = best.g.abs_diff(k);
            d_new < d_best || (d_new == d_best && cost < best.cost)
        };
        if better {
            best = snapshot(&basis, support.len(), cost);
        }
    }

    let g = support.len();
    let status = status.unwrap_or(if g == k {
        SearchStatus::BudgetExhausted
    } else {
        SearchStatus::InfeasibleSparsity
    });
    let fin = if g == k { snapshot(&basis, g, cost) } else { best };
    let status = if fin.g == k && status == SearchStatus::InfeasibleSparsity {
        SearchStatus::BudgetExhausted
    } else {
        status
    };
    Ok(PivotSearchOutcome {
        eta: fin.eta,
        basis: fin.basis,
        status,
        pivots,
        g_trace,
        cost_trace,
        moves,
        max_violation,
        final_g: fin.g,
        cost: fin.cost,
    })
}
