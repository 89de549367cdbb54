//! Physical-layer simulation of one harvest-then-transmit round.
//!
//! Sensors harvest energy from the fusion center's downlink, a random subset
//! wakes up, and the active sensors spread their reading with a binary
//! signature over `M` slots. The fusion center observes the superposition
//! `y = Phi H diag(eta) x + w`.

use nalgebra::{DMatrix, DVector, Point2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, Result};
use crate::measurement::Measurement;

/// Log-distance path loss `L(d) = L(d0) + 10 * exponent * log10(d / d0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    pub ref_loss_db: f64,
    pub ref_distance_m: f64,
    pub exponent: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            ref_loss_db: 30.0,
            ref_distance_m: 1.0,
            exponent: 2.0,
        }
    }
}

impl PathLossModel {
    /// Distances below the reference distance are clamped to it.
    pub fn loss_db(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(invalid(format!("distance must be positive, got {d}")));
        }
        let d = d.max(self.ref_distance_m);
        Ok(self.ref_loss_db + 10.0 * self.exponent * (d / self.ref_distance_m).log10())
    }

    /// Average power gain `10^(-L(d)/10)`.
    pub fn power_gain(&self, d: f64) -> Result<f64> {
        Ok(10f64.powf(-self.loss_db(d)? / 10.0))
    }
}

/// Path loss in dB under the default model (30 dB at 1 m, exponent 2).
pub fn path_loss_db(d: f64) -> Result<f64> {
    PathLossModel::default().loss_db(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FadingMode {
    /// Rayleigh magnitude, real-valued channels and noise.
    Real,
    /// Circularly-symmetric complex Gaussian channels and noise.
    Complex,
}

impl std::str::FromStr for FadingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "real" => Ok(Self::Real),
            "complex" => Ok(Self::Complex),
            other => Err(format!("unknown fading mode `{other}` (expected real or complex)")),
        }
    }
}

impl std::fmt::Display for FadingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Real => "real",
            Self::Complex => "complex",
        })
    }
}

/// Small-scale fading law. `None` keeps only the path loss and is meant for
/// tests that need deterministic channel magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fading {
    Rayleigh,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorField {
    positions: Vec<Point2<f64>>,
    fc_position: Point2<f64>,
    psi: Vec<f64>,
    rho: Vec<f64>,
    p_max: f64,
}

impl SensorField {
    pub fn new(
        positions: Vec<Point2<f64>>,
        fc_position: Point2<f64>,
        psi: Vec<f64>,
        rho: Vec<f64>,
        p_max: f64,
    ) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(invalid("sensor field needs at least one sensor"));
        }
        if psi.len() != n || rho.len() != n {
            return Err(invalid("psi and rho must have one entry per sensor"));
        }
        if psi.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(invalid("activation probabilities must lie in (0, 1]"));
        }
        if rho.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(invalid("harvesting efficiencies must lie in (0, 1]"));
        }
        if !(p_max > 0.0) {
            return Err(invalid("P_max must be positive"));
        }
        Ok(Self {
            positions,
            fc_position,
            psi,
            rho,
            p_max,
        })
    }

    /// Field with the fusion center at the area center and two activation
    /// groups: sensors `S_1, S_3, ...` (zero-based even indices) get
    /// `psi_high`, the rest `psi_low`.
    pub fn two_groups(
        positions: Vec<Point2<f64>>,
        side: f64,
        psi_high: f64,
        psi_low: f64,
        rho: f64,
        p_max: f64,
    ) -> Result<Self> {
        let n = positions.len();
        let psi = two_group_psi(n, n - n / 2, psi_high, psi_low);
        Self::new(
            positions,
            Point2::new(side / 2.0, side / 2.0),
            psi,
            vec![rho; n],
            p_max,
        )
    }

    /// Same field with other activation probabilities.
    pub fn with_psi(&self, psi: Vec<f64>) -> Result<Self> {
        Self::new(self.positions.clone(), self.fc_position, psi, self.rho.clone(), self.p_max)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point2<f64>] {
        &self.positions
    }

    pub fn fc_position(&self) -> Point2<f64> {
        self.fc_position
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// `sqrt(P_max) * 1`.
    pub fn eta_max(&self) -> DVector<f64> {
        DVector::from_element(self.len(), self.p_max.sqrt())
    }

    pub fn distances(&self) -> Vec<f64> {
        self.positions
            .iter()
            .map(|p| (p - self.fc_position).norm())
            .collect()
    }
}

/// `n` i.i.d. uniform points in `[0, side]^2`.
/// `psi_high` for `n_high` sensors, `psi_low` for the rest. The high group
/// is filled in the order `S_1, S_3, ...` (zero-based even indices) and then
/// `S_2, S_4, ...`.
pub fn two_group_psi(n: usize, n_high: usize, psi_high: f64, psi_low: f64) -> Vec<f64> {
    let mut psi = vec![psi_low; n];
    for i in (0..n).step_by(2).chain((1..n).step_by(2)).take(n_high) {
        psi[i] = psi_high;
    }
    psi
}

pub fn place_sensors<R: Rng + ?Sized>(n: usize, side: f64, rng: &mut R) -> Vec<Point2<f64>> {
    (0..n)
        .map(|_| Point2::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Downlink (fusion center to sensor) coefficients.
    pub g: Vec<Complex64>,
    /// Uplink coefficients; identical to `g` by reciprocity.
    pub h: Vec<Complex64>,
    pub mode: FadingMode,
}

/// Draws block-fading channels `g_n = sqrt(10^(-L(d_n)/10)) f_n` with unit
/// mean-power fading `f_n`, and sets `h = g`.
pub fn draw_channels<R: Rng + ?Sized>(
    field: &SensorField,
    rng: &mut R,
    mode: FadingMode,
    path_loss: &PathLossModel,
    fading: Fading,
) -> Result<ChannelRealization> {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = Vec::with_capacity(field.len());
    for d in field.distances() {
        let amplitude = path_loss.power_gain(d)?.sqrt();
        let f = match fading {
            Fading::None => Complex64::new(1.0, 0.0),
            Fading::Rayleigh => {
                let re: f64 = rng.sample::<f64, _>(StandardNormal) * half;
                let im: f64 = rng.sample::<f64, _>(StandardNormal) * half;
                match mode {
                    FadingMode::Real => Complex64::new(re.hypot(im), 0.0),
                    FadingMode::Complex => Complex64::new(re, im),
                }
            }
        };
        g.push(f * amplitude);
    }
    Ok(ChannelRealization {
        h: g.clone(),
        g,
        mode,
    })
}

/// Harvested energy `rho |g|^2 P_e T_e`.
pub fn harvest_energy(rho: f64, g: Complex64, p_e: f64, t_e: f64) -> f64 {
    rho * g.norm_sqr() * p_e * t_e
}

/// Independent Bernoulli(psi_n) activation draws.
pub fn sample_activation<R: Rng + ?Sized>(psi: &[f64], rng: &mut R) -> Vec<bool> {
    psi.iter().map(|&p| rng.random::<f64>() < p).collect()
}

/// `m x n` matrix of i.i.d. Bernoulli(1/2) entries in `{0, 1}`. Any
/// all-zero column is redrawn.
pub fn gen_signatures<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(m, n);
    for j in 0..n {
        loop {
            for i in 0..m {
                phi[(i, j)] = if rng.random::<bool>() { 1.0 } else { 0.0 };
            }
            if phi.column(j).iter().any(|&v| v != 0.0) {
                break;
            }
        }
    }
    phi
}

/// How an active sensor spends its harvested budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmitPolicy {
    /// `p_n = min(P_max, xi_n / T_e)`.
    FullBudget,
    /// A uniform random fraction of the full budget.
    UniformFraction,
}

impl std::str::FromStr for TransmitPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "full_budget" => Ok(Self::FullBudget),
            "uniform_fraction" => Ok(Self::UniformFraction),
            other => Err(format!("unknown transmit policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestParams {
    pub p_e: f64,
    pub t_e: f64,
    pub policy: TransmitPolicy,
}

impl Default for HarvestParams {
    fn default() -> Self {
        Self {
            p_e: 0.1,
            t_e: 1.0,
            policy: TransmitPolicy::FullBudget,
        }
    }
}

/// Per-sensor transmit power budget `min(P_max, xi_n / T_e)`.
pub fn power_budget(field: &SensorField, channels: &ChannelRealization, p_e: f64, t_e: f64) -> Vec<f64> {
    channels
        .g
        .iter()
        .zip(field.rho())
        .map(|(&g, &rho)| field.p_max().min(harvest_energy(rho, g, p_e, t_e) / t_e))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub phi: DMatrix<f64>,
    pub channels: ChannelRealization,
    pub active: Vec<bool>,
    pub eta_true: DVector<f64>,
    pub x_true: DVector<f64>,
    pub noise: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

impl Frame {
    pub fn mode(&self) -> FadingMode {
        self.channels.mode
    }

    pub fn n_slots(&self) -> usize {
        self.phi.nrows()
    }

    /// Real-valued measurement system seen by the fusion center.
    pub fn measurement(&self) -> Measurement {
        Measurement::new(&self.y, &self.phi, &self.channels.h, self.mode())
            .expect("frame dimensions are consistent by construction")
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }
}

/// Noise-free received vector `Phi H diag(eta) x`.
pub fn noiseless_observation(
    phi: &DMatrix<f64>,
    h: &[Complex64],
    eta: &DVector<f64>,
    x: &DVector<f64>,
) -> Vec<Complex64> {
    (0..phi.nrows())
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..phi.ncols() {
                acc += h[n] * (phi[(i, n)] * eta[n] * x[n]);
            }
            acc
        })
        .collect()
}

/// Synthesizes one frame: draws the active set, assigns transmit powers from
/// the harvested budget, draws noise and forms `y = Phi H diag(eta) x + w`.
pub fn synthesize_frame<R: Rng + ?Sized>(
    field: &SensorField,
    channels: &ChannelRealization,
    x: &DVector<f64>,
    phi: &DMatrix<f64>,
    noise_power: f64,
    harvest: &HarvestParams,
    rng: &mut R,
) -> Result<Frame> {
    let n = field.len();
    if x.len() != n || phi.ncols() != n || channels.h.len() != n {
        return Err(invalid("frame inputs disagree on the number of sensors"));
    }
    if !(noise_power >= 0.0) {
        return Err(invalid("noise power must be nonnegative"));
    }
    if !(harvest.p_e > 0.0 && harvest.t_e > 0.0) {
        return Err(invalid("P_e and T_e must be positive"));
    }

    let active = sample_activation(field.psi(), rng);
    let budget = power_budget(field, channels, harvest.p_e, harvest.t_e);
    let mut eta = DVector::zeros(n);
    for i in 0..n {
        if active[i] {
            let p = match harvest.policy {
                TransmitPolicy::FullBudget => budget[i],
                TransmitPolicy::UniformFraction => budget[i] * rng.random::<f64>(),
            };
            eta[i] = p.sqrt();
        }
    }

    let m = phi.nrows();
    let noise: Vec<Complex64> = if noise_power == 0.0 {
        vec![Complex64::new(0.0, 0.0); m]
    } else {
        match channels.mode {
            FadingMode::Real => {
                let normal = Normal::new(0.0, noise_power.sqrt()).expect("finite std");
                (0..m).map(|_| Complex64::new(normal.sample(rng), 0.0)).collect()
            }
            FadingMode::Complex => {
                let normal = Normal::new(0.0, (noise_power / 2.0).sqrt()).expect("finite std");
                (0..m)
                    .map(|_| Complex64::new(normal.sample(rng), normal.sample(rng)))
                    .collect()
            }
        }
    };

    let clean = noiseless_observation(phi, &channels.h, &eta, x);
    let y = clean.iter().zip(&noise).map(|(s, w)| s + w).collect();
    Ok(Frame {
        phi: phi.clone(),
        channels: channels.clone(),
        active,
        eta_true: eta,
        x_true: x.clone(),
        noise,
        y,
    })
}

/// Noise power in watts for a spectral density in dBm/Hz and a bandwidth in Hz.
pub fn noise_power_w(density_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((density_dbm_per_hz - 30.0) / 10.0) * bandwidth_hz
}
