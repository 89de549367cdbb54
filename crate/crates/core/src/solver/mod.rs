//! Alternating restoration of the signal `x` and the power vector `eta`.
//!
//! The cost is
//!
//! ```text
//! J(x, eta) = |y - Phi H diag(eta) x|^2 + mu x'Lx - gamma sum_{eta_i > 0} ln psi_i
//! ```
//!
//! Starting from a constant signal fitted with `eta = eta_max`, every outer
//! iteration solves for `eta` with `x` fixed (step one) and then for `x` with
//! `eta` fixed (step two, closed form).

pub mod pivot_search;
pub mod power;

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::lp::{NoTrace, PivotObserver};
use crate::measurement::Measurement;
pub use pivot_search::{
    activation_cost, initial_power_basis, sparsity_pivot_search, MoveKind, PivotSearchOptions, PivotSearchOutcome,
    SearchStatus,
};
pub use power::{
    assemble_power_lp, box_kkt_violation, compute_epsilon, power_box_ls, BoxLsOptions, BoxLsOutcome, PowerLp,
    StepOneWorkspace,
};

/// How the smoothness weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuPolicy {
    /// `mu = f * tr(A'A) / tr(L)` with `A = Phi H diag(eta_max)`.
    Relative(f64),
    /// Fixed value in the units of the raw observation.
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub mu: MuPolicy,
    pub gamma: f64,
    /// Target number of active sensors; `None` uses `round(sum psi)`.
    pub k_target: Option<usize>,
    pub max_outer_iters: usize,
    pub x_convergence_tol: f64,
    pub max_pivots: usize,
    pub box_ls: BoxLsOptions,
    pub support_tol: f64,
    /// Lower bound on the polytope half-widths, relative to `|y|_inf`.
    pub epsilon_floor: f64,
    /// Retries of the pivot search when `g = K` is missed; each retry
    /// raises the floor, starting at `epsilon_widen_start` and growing
    /// by `sqrt(10)`.
    pub epsilon_widenings: usize,
    pub epsilon_widen_start: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: MuPolicy::Relative(1e-2),
            gamma: 1.0,
            k_target: None,
            max_outer_iters: 20,
            x_convergence_tol: 1e-4,
            max_pivots: 200,
            box_ls: BoxLsOptions::default(),
            support_tol: 1e-9,
            epsilon_floor: 0.0,
            epsilon_widenings: 4,
            epsilon_widen_start: 1e-2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mu_ok = match self.mu {
            MuPolicy::Relative(f) | MuPolicy::Absolute(f) => f.is_finite() && f >= 0.0,
        };
        if !mu_ok {
            return Err(invalid("mu must be finite and non-negative"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid("gamma must be finite and non-negative"));
        }
        if let Some(k) = self.k_target {
            if k == 0 || k > n {
                return Err(invalid(format!("K = {k} outside 1..={n}")));
            }
        }
        if !(self.x_convergence_tol >= 0.0) || !(self.support_tol >= 0.0) || !(self.epsilon_floor >= 0.0)
            || !(self.epsilon_widen_start > 0.0 && self.epsilon_widen_start.is_finite())
        {
            return Err(invalid("tolerances must be non-negative"));
        }
        Ok(())
    }

    /// Floors tried in order by one power step.
    pub fn epsilon_schedule(&self) -> impl Iterator<Item = f64> + '_ {
        let start = self.epsilon_widen_start.max(self.epsilon_floor);
        std::iter::once(self.epsilon_floor)
            .chain((0..self.epsilon_widenings).map(move |j| start * 10f64.sqrt().powi(j as i32)))
    }

    /// The sparsity target for a given activation profile.
    pub fn resolve_k(&self, psi: &[f64]) -> usize {
        self.k_target
            .unwrap_or_else(|| (psi.iter().sum::<f64>().round() as usize).clamp(1, psi.len().max(1)))
    }
}

/// Which update is used for `eta` in step one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerStep {
    /// Box least squares, polytope, sparsity-controlled pivoting.
    SparsityPivot,
    /// Box least squares alone.
    BoxLs,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub fidelity: f64,
    pub smoothness: f64,
    pub activation: f64,
    /// Active sensors after step one.
    pub g: usize,
    pub pivots: usize,
    pub search_status: Option<SearchStatus>,
    /// Moves taken by a fallback rule (no admissible move towards `K`).
    pub fallback_moves: usize,
    /// `sum eps_i^2` of the polytope, in raw units.
    pub radius: f64,
    /// `|y - Q eta_hat|^2` after step one, in raw units.
    pub step_one_fidelity: f64,
    /// Relative floor of the polytope that produced `eta`.
    pub epsilon_floor: f64,
    /// Largest constraint violation over the visited vertices.
    pub max_violation: f64,
    pub box_ls_converged: bool,
    pub x_change: f64,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} J={:e} fid={:e} smooth={:e} act={:e} g={} pivots={} fallback={} status={} floor={:e} r={:e} fid1={:e} viol={:e} boxls={} dx={:e}",
            self.iteration,
            self.objective,
            self.fidelity,
            self.smoothness,
            self.activation,
            self.g,
            self.pivots,
            self.fallback_moves,
            self.search_status.map_or("none".into(), |s| format!("{s:?}")),
            self.epsilon_floor,
            self.radius,
            self.step_one_fidelity,
            self.max_violation,
            self.box_ls_converged,
            self.x_change,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationResult {
    pub x_hat: DVector<f64>,
    pub eta_hat: DVector<f64>,
    pub active_estimate: Vec<usize>,
    /// `J` after initialization and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    /// Smoothness weight actually used, in raw units.
    pub mu: f64,
    pub gamma: f64,
    pub k_target: usize,
    /// Initial constant level `c*`.
    pub c_star: f64,
    pub iterations: Vec<IterationRecord>,
    pub warnings: Vec<String>,
}

/// Terms of `J` in the units of `meas`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub fidelity: f64,
    pub smoothness: f64,
    pub activation: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.fidelity + self.smoothness + self.activation
    }
}

#[allow(clippy::too_many_arguments)]
pub fn objective_terms(
    meas: &Measurement,
    x: &DVector<f64>,
    eta: &DVector<f64>,
    laplacian: &DMatrix<f64>,
    mu: f64,
    psi: &[f64],
    gamma: f64,
    support_tol: f64,
) -> ObjectiveTerms {
    let r = meas.y() - meas.scaled(eta) * x;
    let support = (0..eta.len()).filter(|&i| eta[i] > support_tol);
    ObjectiveTerms {
        fidelity: r.norm_squared(),
        smoothness: mu * (x.transpose() * laplacian * x)[(0, 0)],
        activation: activation_cost(support, psi, gamma),
    }
}

/// Least-squares constant fit `x = c 1` with `eta = eta_max`.
pub fn init_signal(meas: &Measurement, eta_max: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let n = meas.n_sensors();
    if eta_max.len() != n {
        return Err(invalid("eta_max must have one entry per sensor"));
    }
    let a = meas.gain() * eta_max;
    let den = a.norm_squared();
    if den <= 1e-12 {
        return Err(Error::DegenerateInput(format!(
            "init: |Phi H eta_max|^2 = {den:e}; signatures or channels are all zero"
        )));
    }
    let c = meas.y().dot(&a) / den;
    Ok((DVector::from_element(n, c), c))
}

/// `argmin_x |y - A x|^2 + mu x'Lx` with `A = Phi H diag(eta)`.
pub fn signal_step(meas: &Measurement, eta: &DVector<f64>, laplacian: &DMatrix<f64>, mu: f64) -> Result<DVector<f64>> {
    let n = meas.n_sensors();
    if eta.len() != n || laplacian.shape() != (n, n) {
        return Err(invalid("signal step: eta and L must match the sensor count"));
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(invalid("signal step: mu must be finite and non-negative"));
    }
    let a = meas.scaled(eta);
    let normal = a.transpose() * &a + laplacian * mu;
    let rhs = a.transpose() * meas.y();
    let x = match normal.clone().cholesky() {
        Some(chol) => {
            let mut x = chol.solve(&rhs);
            // one step of iterative refinement
            let r = &rhs - &normal * &x;
            x += chol.solve(&r);
            x
        }
        // a connected graph keeps the system definite for mu > 0, but nearly
        // disconnected clusters without observations can defeat Cholesky
        None if mu > 0.0 => {
            let cutoff = 1e-14 * normal.amax();
            normal
                .svd(true, true)
                .solve(&rhs, cutoff)
                .map_err(|e| Error::SingularSystem(e.to_string()))?
        }
        None => {
            return Err(Error::SingularSystem(format!("A'A + mu L is not positive definite (mu = {mu:e})")));
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("signal step produced non-finite values".into()));
    }
    Ok(x)
}

/// Smoothness weight for a (normalized) measurement.
pub fn resolve_mu(policy: MuPolicy, meas: &Measurement, eta_max: &DVector<f64>, laplacian: &DMatrix<f64>) -> f64 {
    match policy {
        MuPolicy::Absolute(mu) => mu,
        MuPolicy::Relative(f) => {
            let a = meas.scaled(eta_max);
            let tr_l = laplacian.trace();
            if tr_l <= 0.0 {
                0.0
            } else {
                f * a.norm_squared() / tr_l
            }
        }
    }
}

/// Joint restoration with the sparsity-controlled power step.
pub fn restore(
    meas: &Measurement,
    laplacian: &DMatrix<f64>,
    psi: &[f64],
    eta_max: &DVector<f64>,
    config: &SolverConfig,
) -> Result<RestorationResult> {
    alternate(meas, laplacian, psi, eta_max, config, PowerStep::SparsityPivot, &mut NoTrace)
}

/// [`restore`] reporting every step-one pivot to `observer`.
pub fn restore_observed(
    meas: &Measurement,
    laplacian: &DMatrix<f64>,
    psi: &[f64],
    eta_max: &DVector<f64>,
    config: &SolverConfig,
    observer: &mut dyn PivotObserver,
) -> Result<RestorationResult> {
    alternate(meas, laplacian, psi, eta_max, config, PowerStep::SparsityPivot, observer)
}

/// The alternating driver shared by all power-step variants.
///
/// Internally the observation and the gain are divided by `|y|_inf` so that
/// the LP tolerances are meaningful; everything reported is in raw units.
pub fn alternate(
    meas: &Measurement,
    laplacian: &DMatrix<f64>,
    psi: &[f64],
    eta_max: &DVector<f64>,
    config: &SolverConfig,
    step: PowerStep,
    observer: &mut dyn PivotObserver,
) -> Result<RestorationResult> {
    let n = meas.n_sensors();
    config.validate(n)?;
    if laplacian.shape() != (n, n) || psi.len() != n || eta_max.len() != n {
        return Err(invalid("restore: L, psi and eta_max must match the sensor count"));
    }
    if eta_max.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(invalid("restore: eta_max must be finite and non-negative"));
    }
    let k = config.resolve_k(psi);

    let ymax = meas.y().amax();
    let scale = if ymax > 0.0 && ymax.is_finite() { ymax } else { 1.0 };
    let norm = meas.rescaled(scale);
    let mu_n = match config.mu {
        MuPolicy::Absolute(mu) => mu / (scale * scale),
        p => resolve_mu(p, &norm, eta_max, laplacian),
    };
    let mu = mu_n * scale * scale;

    let (mut x, c_star) = init_signal(&norm, eta_max)?;
    let mut eta = eta_max.clone();
    let terms = |x: &DVector<f64>, eta: &DVector<f64>| {
        objective_terms(meas, x, eta, laplacian, mu, psi, config.gamma, config.support_tol)
    };
    let mut objective_trace = vec![terms(&x, &eta).total()];
    let mut iterations = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let s2 = scale * scale;

    for it in 1..=config.max_outer_iters {
        let wrap = |e: Error| Error::Iteration {
            iteration: it,
            source: Box::new(e),
        };
        let mut ws = StepOneWorkspace::build(&norm, &x, eta_max, &config.box_ls, config.epsilon_floor).map_err(wrap)?;
        if !ws.box_ls.converged {
            warnings.push(format!(
                "iteration {it}: box least squares stopped at KKT violation {:e}",
                ws.box_ls.kkt_violation
            ));
        }
        let mut floor = config.epsilon_floor;
        let (new_eta, pivots, status, fallback, max_violation) = match step {
            PowerStep::BoxLs => (ws.eta_star.clone(), 0, None, 0, 0.0),
            PowerStep::SparsityPivot => {
                let opts = PivotSearchOptions {
                    k_target: k,
                    gamma: config.gamma,
                    max_pivots: config.max_pivots,
                    support_tol: config.support_tol,
                };
                let (mut pivots, mut fallback, mut max_violation) = (0, 0, 0.0f64);
                let mut out = None;
                // a polytope that admits no K-sparse vertex is widened and searched again
                for f in config.epsilon_schedule() {
                    if f != floor {
                        ws = ws.with_floor(&norm, eta_max, f).map_err(wrap)?;
                        floor = f;
                    }
                    let start = initial_power_basis(&ws.power_lp).map_err(wrap)?;
                    let o = sparsity_pivot_search(&ws.power_lp, psi, start, &opts, observer).map_err(wrap)?;
                    pivots += o.pivots;
                    fallback += o
                        .moves
                        .iter()
                        .filter(|m| matches!(m, MoveKind::KeepCount | MoveKind::AnyFeasible | MoveKind::Backtrack))
                        .count();
                    max_violation = max_violation.max(o.max_violation);
                    let done = o.status != SearchStatus::InfeasibleSparsity;
                    out = Some(o);
                    if done {
                        break;
                    }
                }
                let out = out.expect("the schedule is never empty");
                if out.status == SearchStatus::InfeasibleSparsity {
                    warnings.push(format!(
                        "iteration {it}: sparsity target {k} not reached, kept g = {}",
                        out.final_g
                    ));
                }
                // the LP works on non-negative values; tiny negatives are round-off
                let eta = out.eta.map(|v| v.max(0.0));
                (eta, pivots, Some(out.status), fallback, max_violation)
            }
        };
        eta = new_eta;
        let step_one_fidelity = (norm.y() - &ws.q_matrix * &eta).norm_squared() * s2;

        let x_new = signal_step(&norm, &eta, laplacian, mu_n).map_err(wrap)?;
        let x_change = (&x_new - &x).norm() / (x.norm() + 1e-12);
        x = x_new;

        let t = terms(&x, &eta);
        objective_trace.push(t.total());
        iterations.push(IterationRecord {
            iteration: it,
            objective: t.total(),
            fidelity: t.fidelity,
            smoothness: t.smoothness,
            activation: t.activation,
            g: eta.iter().filter(|&&v| v > config.support_tol).count(),
            pivots,
            search_status: status,
            fallback_moves: fallback,
            radius: ws.radius() * s2,
            step_one_fidelity,
            max_violation,
            epsilon_floor: floor,
            box_ls_converged: ws.box_ls.converged,
            x_change,
        });
        if x_change < config.x_convergence_tol {
            converged = true;
            break;
        }
    }

    let active_estimate = (0..n).filter(|&i| eta[i] > config.support_tol).collect();
    Ok(RestorationResult {
        x_hat: x,
        eta_hat: eta,
        active_estimate,
        objective_trace,
        outer_iters: iterations.len(),
        converged,
        mu,
        gamma: config.gamma,
        k_target: k,
        c_star,
        iterations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path_laplacian(n: usize) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            l[(i, i)] += 1.0;
            l[(i + 1, i + 1)] += 1.0;
            l[(i, i + 1)] -= 1.0;
            l[(i + 1, i)] -= 1.0;
        }
        l
    }

    fn random_meas(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Measurement {
        let g = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() - 0.3);
        let y = DVector::from_fn(m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        Measurement::from_parts(g, y).unwrap()
    }

    #[test]
    fn init_trivial_cases() {
        let meas = Measurement::from_parts(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0)).unwrap();
        let (x, c) = init_signal(&meas, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(c, 2.0);
        assert_eq!(x[0], 2.0);

        let meas = Measurement::from_parts(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), DVector::from_vec(vec![0.0, 3.0])).unwrap();
        assert_eq!(init_signal(&meas, &DVector::from_element(1, 1.0)).unwrap().1, 0.0);

        let meas = Measurement::from_parts(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(matches!(init_signal(&meas, &DVector::from_element(2, 1.0)), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn init_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let meas = random_meas(&mut rng, 4, 6);
            let eta_max = DVector::from_fn(6, |_, _| rng.random::<f64>() + 0.1);
            let (_, c) = init_signal(&meas, &eta_max).unwrap();
            let a = meas.gain() * &eta_max;
            let f = |c: f64| (meas.y() - &a * c).norm_squared();
            assert!(f(c) <= f(c + 1e-3) && f(c) <= f(c - 1e-3));
        }
    }

    #[test]
    fn signal_step_square_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let meas = Measurement::from_parts(a.clone(), DVector::from_vec(vec![3.0, 1.0])).unwrap();
        let x = signal_step(&meas, &DVector::from_element(2, 1.0), &path_laplacian(2), 0.0).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-12);
    }

    #[test]
    fn signal_step_singular_without_smoothing() {
        let meas = random_meas(&mut ChaCha8Rng::seed_from_u64(1), 2, 4);
        let r = signal_step(&meas, &DVector::from_element(4, 1.0), &path_laplacian(4), 0.0);
        assert!(matches!(r, Err(Error::SingularSystem(_))));
    }

    #[test]
    fn signal_step_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (m, n) = (rng.random_range(2..6), rng.random_range(3..8));
            let meas = random_meas(&mut rng, m, n);
            let eta = DVector::from_fn(n, |_, _| rng.random::<f64>());
            let l = path_laplacian(n);
            let mu = 0.3;
            let x = signal_step(&meas, &eta, &l, mu).unwrap();
            let a = meas.scaled(&eta);
            let f = |x: &DVector<f64>| (meas.y() - &a * x).norm_squared() + mu * (x.transpose() * &l * x)[(0, 0)];
            let grad = (a.transpose() * (&a * &x - meas.y())) * 2.0 + &l * &x * (2.0 * mu);
            assert!(grad.norm() <= 1e-6 * (1.0 + meas.y().norm()));
            let h = 1e-6;
            for i in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn nearly_disconnected_graph_still_solves() {
        // two path clusters joined by a vanishing edge; the second cluster is
        // never observed
        let n = 6;
        let mut l = DMatrix::zeros(n, n);
        for (a, b, w) in [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1e-19), (3, 4, 1.0), (4, 5, 1.0)] {
            l[(a, a)] += w;
            l[(b, b)] += w;
            l[(a, b)] -= w;
            l[(b, a)] -= w;
        }
        let meas = random_meas(&mut ChaCha8Rng::seed_from_u64(4), 3, n);
        let eta = DVector::from_vec(vec![1.0, 0.5, 0.8, 0.0, 0.0, 0.0]);
        let mu = 0.05;
        let a = meas.scaled(&eta);
        assert!((a.transpose() * &a + &l * mu).cholesky().is_none());
        let x = signal_step(&meas, &eta, &l, mu).unwrap();
        let grad = (a.transpose() * (&a * &x - meas.y())) * 2.0 + &l * &x * (2.0 * mu);
        assert!(grad.norm() <= 1e-6 * (1.0 + meas.y().norm()), "{}", grad.norm());
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn heavy_smoothing_gives_constant_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let meas = random_meas(&mut rng, 4, 5);
        let eta = DVector::from_element(5, 1.0);
        let x = signal_step(&meas, &eta, &path_laplacian(5), 1e9).unwrap();
        let (_, c) = init_signal(&meas, &eta).unwrap();
        assert!((x - DVector::from_element(5, c)).amax() < 1e-6);
    }

    #[test]
    fn zero_outer_iterations_return_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let meas = random_meas(&mut rng, 3, 5);
        let eta_max = DVector::from_element(5, 1.0);
        let config = SolverConfig {
            max_outer_iters: 0,
            k_target: Some(3),
            ..Default::default()
        };
        let r = restore(&meas, &path_laplacian(5), &[0.5; 5], &eta_max, &config).unwrap();
        let (x0, _) = init_signal(&meas, &eta_max).unwrap();
        assert_eq!(r.eta_hat, eta_max);
        assert!((r.x_hat - x0).amax() < 1e-12);
        assert_eq!(r.outer_iters, 0);
        assert_eq!(r.objective_trace.len(), 1);
    }

    #[test]
    fn identity_sensing_recovers_product() {
        // only eta * x is identifiable; with Phi = I it must be fitted exactly
        let n = 6;
        let x_true = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
        let eta_true = DVector::from_element(n, 0.5);
        let g = DMatrix::identity(n, n);
        let y = &g * eta_true.component_mul(&x_true);
        let meas = Measurement::from_parts(g, y).unwrap();
        let config = SolverConfig {
            mu: MuPolicy::Absolute(1e-6),
            k_target: Some(n),
            ..Default::default()
        };
        let r = restore(&meas, &path_laplacian(n), &[0.9; 6], &eta_true, &config).unwrap();
        let p_true = eta_true.component_mul(&x_true);
        assert!((r.eta_hat.component_mul(&r.x_hat) - &p_true).norm() / p_true.norm() < 1e-4);
        assert_eq!(r.active_estimate.len(), n);
    }

    #[test]
    fn pinned_power_recovers_signal() {
        // eta_true = eta_max and a constant signal: the scale is pinned
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let n = 6;
            let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() + 0.1);
            let x_true = DVector::from_element(n, 1.0 + rng.random::<f64>());
            let eta_true = DVector::from_fn(n, |_, _| 0.2 + rng.random::<f64>());
            let y = &g * eta_true.component_mul(&x_true);
            let meas = Measurement::from_parts(g, y).unwrap();
            let config = SolverConfig {
                mu: MuPolicy::Absolute(1e-6),
                k_target: Some(n),
                ..Default::default()
            };
            let r = restore(&meas, &path_laplacian(n), &[0.9; 6], &eta_true, &config).unwrap();
            assert!((&r.x_hat - &x_true).norm() / x_true.norm() < 1e-4);
        }
    }

    #[test]
    fn restore_is_deterministic_and_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, n) = (4, 8);
        let g = DMatrix::from_fn(m, n, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 } * (0.5 + rng.random::<f64>()));
        let x = DVector::from_fn(n, |_, _| 1.0 + 0.2 * rng.random::<f64>());
        let eta = DVector::from_fn(n, |i, _| if i % 2 == 0 { 0.7 } else { 0.0 });
        let meas = Measurement::from_parts(g.clone(), &g * eta.component_mul(&x)).unwrap();
        let psi: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.9 } else { 0.1 }).collect();
        let config = SolverConfig {
            k_target: Some(m),
            ..Default::default()
        };
        let eta_max = DVector::from_element(n, 1.0);
        let a = restore(&meas, &path_laplacian(n), &psi, &eta_max, &config).unwrap();
        let b = restore(&meas, &path_laplacian(n), &psi, &eta_max, &config).unwrap();
        assert_eq!(a, b);
        for rec in &a.iterations {
            assert!(rec.max_violation <= 1e-8);
            assert!(rec.step_one_fidelity <= rec.radius + 1e-6);
            if rec.search_status != Some(SearchStatus::InfeasibleSparsity) {
                assert_eq!(rec.g, m);
            }
        }
        assert!(a.eta_hat.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn box_ls_variant_stays_in_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let meas = random_meas(&mut rng, 5, 7);
        let eta_max = DVector::from_element(7, 0.4);
        let r = alternate(
            &meas,
            &path_laplacian(7),
            &[0.5; 7],
            &eta_max,
            &SolverConfig::default(),
            PowerStep::BoxLs,
            &mut NoTrace,
        )
        .unwrap();
        assert!(r.eta_hat.iter().all(|&v| (0.0..=0.4).contains(&v)));
        assert!(r.iterations.iter().all(|it| it.pivots == 0));
    }

    #[test]
    fn invalid_config_rejected() {
        let meas = random_meas(&mut ChaCha8Rng::seed_from_u64(0), 2, 3);
        let eta_max = DVector::from_element(3, 1.0);
        let l = path_laplacian(3);
        for config in [
            SolverConfig { gamma: -1.0, ..Default::default() },
            SolverConfig { mu: MuPolicy::Absolute(-1.0), ..Default::default() },
            SolverConfig { k_target: Some(4), ..Default::default() },
            SolverConfig { k_target: Some(0), ..Default::default() },
        ] {
            assert!(restore(&meas, &l, &[0.5; 3], &eta_max, &config).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn signal_step_zeroes_the_gradient(seed in any::<u64>(), m in 1usize..8, n in 2usize..10, mu in 1e-3f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let meas = random_meas(&mut rng, m, n);
            let eta = DVector::from_fn(n, |_, _| rng.random::<f64>());
            let l = path_laplacian(n);
            let x = signal_step(&meas, &eta, &l, mu).unwrap();
            let a = meas.scaled(&eta);
            let grad = (a.transpose() * (&a * &x - meas.y())) * 2.0 + &l * &x * (2.0 * mu);
            prop_assert!(grad.norm() <= 1e-6 * (1.0 + meas.y().norm()));
        }
    }
}
