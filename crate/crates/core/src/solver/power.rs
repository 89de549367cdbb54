//! Power step building blocks: box-constrained least squares, the
//! per-row fidelity slack `epsilon`, and the standard-form program over
//! `[eta; q1; q2; q3]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::lp::StandardLp;
use crate::measurement::Measurement;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxLsOptions {
    pub max_iters: usize,
    /// KKT tolerance is `tol_factor * (1 + |y|)`.
    pub tol_factor: f64,
}

impl Default for BoxLsOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol_factor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxLsOutcome {
    pub eta: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest KKT violation at the returned point.
    pub kkt_violation: f64,
}

fn objective(q: &DMatrix<f64>, y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    (q * eta - y).norm_squared()
}

fn project(eta: &mut DVector<f64>, upper: &DVector<f64>) {
    for (v, &u) in eta.iter_mut().zip(upper.iter()) {
        *v = v.clamp(0.0, u);
    }
}

/// Largest violation of the first-order conditions for the box `[0, upper]`.
pub fn box_kkt_violation(grad: &DVector<f64>, eta: &DVector<f64>, upper: &DVector<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..eta.len() {
        let g = grad[i];
        let v = if eta[i] <= 0.0 {
            (-g).max(0.0)
        } else if eta[i] >= upper[i] {
            g.max(0.0)
        } else {
            g.abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// `argmin |y - Q eta|^2` over `0 <= eta <= eta_max`.
///
/// Projected gradient with Barzilai-Borwein trial steps and Armijo
/// backtracking along the projection arc. Each iteration also tries an
/// exact least-squares step on the free coordinates, truncated to the box,
/// which settles the active set quickly on ill-conditioned problems.
pub fn power_box_ls(
    y: &DVector<f64>,
    q: &DMatrix<f64>,
    eta_max: &DVector<f64>,
    opts: &BoxLsOptions,
) -> Result<BoxLsOutcome> {
    let (m, n) = q.shape();
    if y.len() != m || eta_max.len() != n {
        return Err(invalid("box least squares: dimensions disagree"));
    }
    if eta_max.iter().any(|&u| !(u >= 0.0)) {
        return Err(invalid("box least squares: upper bounds must be nonnegative"));
    }
    let tol = opts.tol_factor * (1.0 + y.norm());
    let gradient = |eta: &DVector<f64>| q.tr_mul(&(q * eta - y)) * 2.0;

    let mut eta = eta_max * 0.5;
    let mut f = objective(q, y, &eta);
    let lipschitz = 2.0 * q.norm_squared();
    let mut step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;

    for iter in 0..opts.max_iters {
        let grad = gradient(&eta);
        let violation = box_kkt_violation(&grad, &eta, eta_max);
        if violation <= tol {
            return Ok(BoxLsOutcome {
                eta,
                converged: true,
                iterations: iter,
                kkt_violation: violation,
            });
        }

        if let Some((p_eta, p_grad)) = &prev {
            let s = &eta - p_eta;
            let d = &grad - p_grad;
            let sd = s.dot(&d);
            if sd > 0.0 {
                step = (s.norm_squared() / sd).clamp(1e-3 / lipschitz.max(1e-300), 1e3 / lipschitz.max(1e-300));
            }
        }
        prev = Some((eta.clone(), grad.clone()));

        let mut alpha = step;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = &eta - &grad * alpha;
            project(&mut trial, eta_max);
            let ft = objective(q, y, &trial);
            if ft <= f + 1e-4 * grad.dot(&(&trial - &eta)) {
                eta = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no descent along the arc: at numerical precision already
            break;
        }

        if let Some((candidate, fc)) = subspace_step(q, y, &eta, eta_max) {
            if fc < f {
                eta = candidate;
                f = fc;
            }
        }
    }

    let grad = gradient(&eta);
    let violation = box_kkt_violation(&grad, &eta, eta_max);
    Ok(BoxLsOutcome {
        converged: violation <= tol,
        eta,
        iterations: opts.max_iters,
        kkt_violation: violation,
    })
}

/// Minimum-norm least-squares correction on the free coordinates, scaled
/// back so the iterate stays in the box.
fn subspace_step(
    q: &DMatrix<f64>,
    y: &DVector<f64>,
    eta: &DVector<f64>,
    upper: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let residual = y - q * eta;
    let grad = q.tr_mul(&residual) * -2.0;
    let free: Vec<usize> = (0..eta.len())
        .filter(|&i| {
            let at_lower = eta[i] <= 0.0 && grad[i] >= 0.0;
            let at_upper = eta[i] >= upper[i] && grad[i] <= 0.0;
            !(at_lower || at_upper)
        })
        .collect();
    if free.is_empty() {
        return None;
    }
    let qf = DMatrix::from_fn(q.nrows(), free.len(), |i, k| q[(i, free[k])]);
    let svd = qf.svd(true, true);
    let delta = svd.solve(&residual, 1e-12 * svd.singular_values.max()).ok()?;

    let mut t = 1.0f64;
    for (k, &i) in free.iter().enumerate() {
        let d = delta[k];
        if d > 0.0 {
            t = t.min((upper[i] - eta[i]) / d);
        } else if d < 0.0 {
            t = t.min(-eta[i] / d);
        }
    }
    if !(t > 0.0) {
        return None;
    }
    let mut next = eta.clone();
    for (k, &i) in free.iter().enumerate() {
        next[i] += t * delta[k];
    }
    project(&mut next, upper);
    let f = objective(q, y, &next);
    Some((next, f))
}

/// `epsilon_i = |y_i - [Q]_i eta*|`.
pub fn compute_epsilon(y: &DVector<f64>, q: &DMatrix<f64>, eta_star: &DVector<f64>) -> DVector<f64> {
    (y - q * eta_star).abs()
}

/// Standard-form program with variables `z = [eta; q1; q2; q3] >= 0`:
///
/// ```text
/// [ Q  I  0  0 ]       [ y + eps ]
/// [ Q  0 -I  0 ] z  =  [ y - eps ]
/// [ I  0  0  I ]       [ eta_max ]
/// ```
///
/// The cost is `[-1, 0, 0, 0]` so that phase two maximizes total power.
#[derive(Debug, Clone)]
pub struct PowerLp {
    lp: StandardLp,
    n_sensors: usize,
    n_rows: usize,
}

impl PowerLp {
    pub fn lp(&self) -> &StandardLp {
        &self.lp
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    /// Number of fidelity rows `M` (each appears twice in the program).
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// `eta` block of a full solution.
    pub fn eta_block(&self, z: &DVector<f64>) -> DVector<f64> {
        z.rows(0, self.n_sensors).into_owned()
    }

    /// Extends a feasible `eta` with its slack values.
    pub fn extend_with_slacks(&self, y: &DVector<f64>, eps: &DVector<f64>, q: &DMatrix<f64>, eta: &DVector<f64>, eta_max: &DVector<f64>) -> DVector<f64> {
        let (m, n) = (self.n_rows, self.n_sensors);
        let qe = q * eta;
        let mut z = DVector::zeros(2 * (m + n));
        z.rows_mut(0, n).copy_from(eta);
        for i in 0..m {
            z[n + i] = y[i] + eps[i] - qe[i];
            z[n + m + i] = qe[i] - (y[i] - eps[i]);
        }
        for i in 0..n {
            z[n + 2 * m + i] = eta_max[i] - eta[i];
        }
        z
    }
}

pub fn assemble_power_lp(
    y: &DVector<f64>,
    epsilon: &DVector<f64>,
    q: &DMatrix<f64>,
    eta_max: &DVector<f64>,
) -> Result<PowerLp> {
    let (m, n) = q.shape();
    if y.len() != m || epsilon.len() != m || eta_max.len() != n {
        return Err(invalid("power lp: dimensions disagree"));
    }
    if epsilon.iter().any(|&e| !(e >= 0.0)) {
        return Err(invalid("power lp: epsilon must be nonnegative"));
    }
    let rows = 2 * m + n;
    let cols = 2 * (m + n);
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = q[(i, j)];
            a[(m + i, j)] = q[(i, j)];
        }
        a[(i, n + i)] = 1.0;
        a[(m + i, n + m + i)] = -1.0;
        b[i] = y[i] + epsilon[i];
        b[m + i] = y[i] - epsilon[i];
    }
    for j in 0..n {
        a[(2 * m + j, j)] = 1.0;
        a[(2 * m + j, n + 2 * m + j)] = 1.0;
        b[2 * m + j] = eta_max[j];
    }
    let c = DVector::from_fn(cols, |j, _| if j < n { -1.0 } else { 0.0 });
    let lp = StandardLp::new(a, b, c).map_err(|e| Error::Assembly(e.to_string()))?;
    if lp.rows() != rows {
        // the slack blocks make every row independent
        return Err(Error::Assembly(format!("expected {rows} independent rows, found {}", lp.rows())));
    }
    Ok(PowerLp {
        lp,
        n_sensors: n,
        n_rows: m,
    })
}

/// Step-one state for one outer iteration.
#[derive(Debug, Clone)]
pub struct StepOneWorkspace {
    /// `Q = Phi H diag(x_hat)` (stacked).
    pub q_matrix: DMatrix<f64>,
    pub eta_star: DVector<f64>,
    pub box_ls: BoxLsOutcome,
    pub epsilon: DVector<f64>,
    pub power_lp: PowerLp,
}

impl StepOneWorkspace {
    /// `epsilon_floor` is a lower bound on every `epsilon_i`; zero keeps the
    /// exact residuals.
    pub fn build(
        meas: &Measurement,
        x_hat: &DVector<f64>,
        eta_max: &DVector<f64>,
        opts: &BoxLsOptions,
        epsilon_floor: f64,
    ) -> Result<Self> {
        let q_matrix = meas.scaled(x_hat);
        let box_ls = power_box_ls(meas.y(), &q_matrix, eta_max, opts)?;
        let eta_star = box_ls.eta.clone();
        let epsilon = compute_epsilon(meas.y(), &q_matrix, &eta_star).map(|e| e.max(epsilon_floor));
        let power_lp = assemble_power_lp(meas.y(), &epsilon, &q_matrix, eta_max)?;
        Ok(Self {
            q_matrix,
            eta_star,
            box_ls,
            epsilon,
            power_lp,
        })
    }

    /// Same box-LS point, with every `epsilon_i` raised to at least `floor`.
    pub fn with_floor(&self, meas: &Measurement, eta_max: &DVector<f64>, floor: f64) -> Result<Self> {
        let epsilon = compute_epsilon(meas.y(), &self.q_matrix, &self.eta_star).map(|e| e.max(floor));
        let power_lp = assemble_power_lp(meas.y(), &epsilon, &self.q_matrix, eta_max)?;
        Ok(Self {
            epsilon,
            power_lp,
            ..self.clone()
        })
    }

    /// `sum epsilon_i^2`, the fidelity radius of the polytope.
    pub fn radius(&self) -> f64 {
        self.epsilon.norm_squared()
    }
}
