//! Comparison schemes: basis pursuit over graph Fourier coefficients with
//! known or guessed power, the alternating scheme without priors (box least
//! squares in place of the pivot search), and signal recovery with the true
//! power.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::graph::GraphSpectrum;
use crate::lp::{simplex_optimize, two_phase_solve, NoTrace, StandardLp};
use crate::measurement::Measurement;
use crate::solver::{alternate, signal_step, PowerStep, RestorationResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineKind {
    ReferenceKnownPower,
    ReferenceUnknownPower,
    ProposedBaseline,
    ProposedKnownPower,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        Self::ReferenceKnownPower,
        Self::ReferenceUnknownPower,
        Self::ProposedBaseline,
        Self::ProposedKnownPower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ReferenceKnownPower => "reference_known_power",
            Self::ReferenceUnknownPower => "reference_unknown_power",
            Self::ProposedBaseline => "proposed_baseline",
            Self::ProposedKnownPower => "proposed_known_power",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| format!("unknown baseline `{s}`"))
    }
}

/// Power assumed by the reference scheme when the true power is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaGuessPolicy {
    /// `sqrt(P_max)` on the assumed support.
    EtaMax,
    /// The power bound handed to the alternating solvers.
    SolverBound,
    /// Amplitude of the mean harvested budget on the assumed support.
    ExpectedHarvest,
}

impl FromStr for EtaGuessPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "eta_max" => Ok(Self::EtaMax),
            "solver_bound" => Ok(Self::SolverBound),
            "expected_harvest" => Ok(Self::ExpectedHarvest),
            other => Err(format!("unknown power guess policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsOutcome {
    pub x_hat: DVector<f64>,
    pub alpha: DVector<f64>,
    /// Slack that made the program feasible, in raw units.
    pub slack: f64,
    pub widenings: usize,
}

const MAX_WIDENINGS: usize = 3;

/// `min |alpha|_1  s.t. |y - B alpha| <= slack` with
/// `B = Phi H diag(eta 1_active) V`; returns `x = V alpha`.
///
/// An infeasible program is retried with the slack widened ten-fold, up to
/// three times. A zero slack is widened from `1e-9 |y|_inf`.
pub fn cs_reference(
    meas: &Measurement,
    spectrum: &GraphSpectrum,
    eta: &DVector<f64>,
    active: &[usize],
    noise_slack: f64,
) -> Result<CsOutcome> {
    let n = meas.n_sensors();
    if spectrum.len() != n || eta.len() != n {
        return Err(invalid("reference: spectrum and eta must match the sensor count"));
    }
    if active.iter().any(|&i| i >= n) {
        return Err(invalid("reference: active index out of range"));
    }
    if !(noise_slack.is_finite() && noise_slack >= 0.0) {
        return Err(invalid("reference: slack must be finite and non-negative"));
    }
    let mut masked = DVector::zeros(n);
    for &i in active {
        masked[i] = eta[i];
    }

    let ymax = meas.y().amax();
    let scale = if ymax > 0.0 { ymax } else { 1.0 };
    let b_mat = meas.scaled(&masked) * spectrum.eigenvectors() / scale;
    let y = meas.y() / scale;
    let base = noise_slack / scale;

    let mut last = None;
    for widenings in 0..=MAX_WIDENINGS {
        let slack = if widenings == 0 {
            base
        } else {
            base.max(1e-9) * 10f64.powi(widenings as i32)
        };
        match basis_pursuit(&b_mat, &y, slack) {
            Ok(alpha) => {
                return Ok(CsOutcome {
                    x_hat: spectrum.igft(&alpha),
                    alpha,
                    slack: slack * scale,
                    widenings,
                })
            }
            Err(e @ Error::Infeasible { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("loop ran at least once"))
}

/// Unknown power: substitutes `guess` on the assumed support.
pub fn cs_reference_unknown(
    meas: &Measurement,
    spectrum: &GraphSpectrum,
    active: &[usize],
    guess: &DVector<f64>,
    noise_slack: f64,
) -> Result<CsOutcome> {
    cs_reference(meas, spectrum, guess, active, noise_slack)
}

/// `alpha = a+ - a-`, rows `B a+ - B a- + s1 = y + slack` and
/// `B a+ - B a- - s2 = y - slack`.
fn basis_pursuit(b: &DMatrix<f64>, y: &DVector<f64>, slack: f64) -> Result<DVector<f64>> {
    let (m, n) = b.shape();
    let cols = 2 * n + 2 * m;
    let mut a = DMatrix::zeros(2 * m, cols);
    for i in 0..m {
        for j in 0..n {
            for r in [i, m + i] {
                a[(r, j)] = b[(i, j)];
                a[(r, n + j)] = -b[(i, j)];
            }
        }
        a[(i, 2 * n + i)] = 1.0;
        a[(m + i, 2 * n + m + i)] = -1.0;
    }
    let rhs = DVector::from_fn(2 * m, |r, _| if r < m { y[r] + slack } else { y[r - m] - slack });
    let c = DVector::from_fn(cols, |j, _| if j < 2 * n { 1.0 } else { 0.0 });
    let lp = StandardLp::new(a, rhs, c)?;
    let (start, _) = two_phase_solve(&lp)?;
    let (_, z) = simplex_optimize(&lp, start)?;
    Ok(DVector::from_fn(n, |j, _| z[j] - z[n + j]))
}

/// The alternating scheme with plain box least squares as the power step.
pub fn baseline_restore(
    meas: &Measurement,
    laplacian: &DMatrix<f64>,
    psi: &[f64],
    eta_max: &DVector<f64>,
    config: &SolverConfig,
) -> Result<RestorationResult> {
    alternate(meas, laplacian, psi, eta_max, config, PowerStep::BoxLs, &mut NoTrace)
}

/// Signal step with the true power.
pub fn known_power_restore(
    meas: &Measurement,
    eta_true: &DVector<f64>,
    laplacian: &DMatrix<f64>,
    mu: f64,
) -> Result<DVector<f64>> {
    signal_step(meas, eta_true, laplacian, mu)
}
