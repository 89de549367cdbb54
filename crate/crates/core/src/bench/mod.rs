//! Seeded Monte-Carlo comparison of all schemes over a grid of slot counts.
//!
//! Sensor positions, the graph and (by default) the signature matrix of each
//! `M` are drawn once per experiment. Every frame redraws channels, the
//! signal, the active set and the noise from its own random stream, so a
//! frame is reproducible in isolation and all schemes see the same frame.

mod config;
mod table;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{Activity, ExperimentConfig, KRule, PhiPolicy, PowerBound, Scheme};
pub use table::{emit_csv, MseRow, MseTable, CSV_HEADER};

use crate::baselines::{baseline_restore, cs_reference, cs_reference_unknown, known_power_restore, BaselineKind, EtaGuessPolicy};
use crate::error::{invalid, Error, Result};
use crate::graph::{build_knn_graph, GmrfModel, GraphSpectrum};
use crate::lp::{PivotObserver, TextTrace};
use crate::measurement::Measurement;
use crate::sim::{
    draw_channels, gen_signatures, place_sensors, power_budget, synthesize_frame, ChannelRealization, Frame, HarvestParams,
    PathLossModel, SensorField, two_group_psi,
};
use crate::solver::{resolve_mu, restore_observed, MuPolicy, RestorationResult, SearchStatus, SolverConfig};

/// `|x - x_hat|^2 / N`.
pub fn compute_mse(x_true: &DVector<f64>, x_hat: &DVector<f64>) -> Result<f64> {
    if x_true.len() != x_hat.len() || x_true.is_empty() {
        return Err(invalid(format!(
            "MSE needs equal non-empty lengths, got {} and {}",
            x_true.len(),
            x_hat.len()
        )));
    }
    Ok((x_true - x_hat).norm_squared() / x_true.len() as f64)
}

const POSITION_STREAM: u64 = u64::MAX;
const SIGNATURE_FRAME: u64 = 0xFFFF_FFFF;

/// Random stream of one frame (or, with `SIGNATURE_FRAME`, of the signatures
/// of one slot count).
pub fn frame_rng(seed: u64, m: usize, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((m as u64) << 32) | frame);
    rng
}

/// Quantities shared by every frame of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub field: SensorField,
    pub laplacian: DMatrix<f64>,
    pub spectrum: GraphSpectrum,
    pub gmrf: GmrfModel,
    pub path_loss: PathLossModel,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(POSITION_STREAM);
        let positions = place_sensors(config.n_sensors, config.area_side_m, &mut rng);
        let graph = build_knn_graph(&positions, config.knn_k, config.sigma2)?;
        let field = SensorField::two_groups(
            positions,
            config.area_side_m,
            config.psi_high,
            config.psi_low,
            config.rho,
            config.p_max_w,
        )?;
        let laplacian = graph.laplacian();
        Ok(Self {
            field,
            spectrum: graph.eigendecompose(),
            gmrf: GmrfModel::new(&laplacian, config.delta)?,
            laplacian,
            path_loss: PathLossModel::default(),
        })
    }

    /// The setup of the cell with `m` slots: activation probabilities follow
    /// the configured activity rule.
    pub fn for_slots(&self, config: &ExperimentConfig, m: usize) -> Result<Self> {
        let psi = two_group_psi(config.n_sensors, config.high_count(m), config.psi_high, config.psi_low);
        Ok(Self {
            field: self.field.with_psi(psi)?,
            ..self.clone()
        })
    }

    pub fn signatures(&self, config: &ExperimentConfig, m: usize) -> DMatrix<f64> {
        gen_signatures(m, config.n_sensors, &mut frame_rng(config.seed, m, SIGNATURE_FRAME))
    }

    /// Frame `index` of the cell with `m` slots.
    pub fn frame(&self, config: &ExperimentConfig, m: usize, index: usize, phi: &DMatrix<f64>) -> Result<Frame> {
        if index as u64 >= SIGNATURE_FRAME {
            return Err(invalid("frame index too large"));
        }
        let mut rng = frame_rng(config.seed, m, index as u64);
        let per_frame;
        let phi = match config.phi_policy {
            PhiPolicy::Fixed => phi,
            PhiPolicy::PerFrame => {
                per_frame = gen_signatures(m, config.n_sensors, &mut rng);
                &per_frame
            }
        };
        let channels = draw_channels(&self.field, &mut rng, config.fading_mode, &self.path_loss, config.fading)?;
        let x = self.gmrf.sample(&mut rng);
        let harvest = HarvestParams {
            p_e: config.p_e_w,
            t_e: config.t_e,
            policy: config.transmit_policy,
        };
        synthesize_frame(&self.field, &channels, &x, phi, config.noise_power_w, &harvest, &mut rng)
    }

    /// Power bound given to the solvers.
    pub fn eta_bound(&self, config: &ExperimentConfig, channels: &ChannelRealization) -> DVector<f64> {
        match config.power_bound {
            PowerBound::Uniform => self.field.eta_max(),
            PowerBound::HarvestBudget => {
                let b = power_budget(&self.field, channels, config.p_e_w, config.t_e);
                DVector::from_iterator(b.len(), b.into_iter().map(f64::sqrt))
            }
        }
    }

    /// Power assumed by the reference scheme without power knowledge.
    pub fn eta_guess(&self, config: &ExperimentConfig, channels: &ChannelRealization) -> Result<DVector<f64>> {
        match config.eta_guess {
            EtaGuessPolicy::EtaMax => Ok(self.field.eta_max()),
            EtaGuessPolicy::SolverBound => Ok(self.eta_bound(config, channels)),
            EtaGuessPolicy::ExpectedHarvest => {
                let mut out = DVector::zeros(self.field.len());
                for (i, d) in self.field.distances().into_iter().enumerate() {
                    let mean = self.field.rho()[i] * self.path_loss.power_gain(d)? * config.p_e_w;
                    out[i] = self.field.p_max().min(mean).sqrt();
                }
                Ok(out)
            }
        }
    }
}

/// Diagnostics of the proposed scheme on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedDiagnostics {
    pub final_g: usize,
    pub k_target: usize,
    pub infeasible_sparsity: bool,
    /// Largest constraint violation over every visited vertex, relative to
    /// `|y|_inf`.
    pub max_violation: f64,
    /// Largest `|y - Q eta_hat|^2 - sum eps_i^2` over the outer iterations,
    /// relative to `|y|_inf^2`.
    pub containment_excess: f64,
    pub outer_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub index: usize,
    /// One entry per configured scheme; `None` when the scheme failed.
    pub mse: Vec<Option<f64>>,
    pub errors: Vec<String>,
    pub proposed: Option<ProposedDiagnostics>,
    pub log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub m: usize,
    pub frames: Vec<FrameOutcome>,
}

impl CellReport {
    pub fn failures(&self, scheme_idx: usize) -> usize {
        self.frames.iter().filter(|f| f.mse[scheme_idx].is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub table: MseTable,
    pub cells: Vec<CellReport>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep per-iteration solver records in each frame's log.
    pub verbose: bool,
}

fn solver_config(config: &ExperimentConfig, m: usize) -> SolverConfig {
    SolverConfig {
        k_target: Some(config.k_for(m)),
        ..config.solver
    }
}

fn normalized_diagnostics(r: &RestorationResult, ymax: f64) -> ProposedDiagnostics {
    let s2 = if ymax > 0.0 { ymax * ymax } else { 1.0 };
    let containment_excess = r
        .iterations
        .iter()
        .map(|it| (it.step_one_fidelity - it.radius) / s2)
        .fold(f64::NEG_INFINITY, f64::max);
    ProposedDiagnostics {
        final_g: r.active_estimate.len(),
        k_target: r.k_target,
        infeasible_sparsity: r
            .iterations
            .last()
            .is_some_and(|it| it.search_status == Some(SearchStatus::InfeasibleSparsity)),
        max_violation: r.iterations.iter().map(|it| it.max_violation).fold(0.0, f64::max),
        containment_excess,
        outer_iters: r.outer_iters,
    }
}

/// Runs every configured scheme on one frame.
pub fn run_frame(
    config: &ExperimentConfig,
    setup: &Setup,
    m: usize,
    frame: &Frame,
    index: usize,
    opts: RunOptions,
    observer: &mut dyn PivotObserver,
) -> FrameOutcome {
    let meas = frame.measurement();
    let eta_max = setup.eta_bound(config, &frame.channels);
    let solver = solver_config(config, m);
    let psi = setup.field.psi();
    let active = frame.active_indices();
    let slack = config.cs_slack_factor * config.noise_power_w.sqrt();
    let mut out = FrameOutcome {
        index,
        mse: Vec::with_capacity(config.schemes.len()),
        errors: Vec::new(),
        proposed: None,
        log: Vec::new(),
    };

    for &scheme in &config.schemes {
        let x_hat: Result<DVector<f64>> = match scheme {
            Scheme::Proposed => restore_observed(&meas, &setup.laplacian, psi, &eta_max, &solver, observer).map(|r| {
                out.proposed = Some(normalized_diagnostics(&r, meas.y().amax()));
                if opts.verbose {
                    out.log.push(format!(
                        "M={m} frame={index} scheme=proposed mu={:e} K={} iters={} converged={}",
                        r.mu, r.k_target, r.outer_iters, r.converged
                    ));
                    out.log.extend(r.iterations.iter().map(|it| format!("M={m} frame={index} {it}")));
                    out.log.extend(r.warnings.iter().map(|w| format!("M={m} frame={index} warning: {w}")));
                }
                r.x_hat
            }),
            Scheme::Baseline(BaselineKind::ProposedBaseline) => {
                baseline_restore(&meas, &setup.laplacian, psi, &eta_max, &solver).map(|r| r.x_hat)
            }
            Scheme::Baseline(BaselineKind::ProposedKnownPower) => {
                let mu = known_power_mu(&solver, &meas, &eta_max, &setup.laplacian);
                known_power_restore(&meas, &frame.eta_true, &setup.laplacian, mu)
            }
            Scheme::Baseline(BaselineKind::ReferenceKnownPower) => {
                cs_reference(&meas, &setup.spectrum, &frame.eta_true, &active, slack).map(|o| o.x_hat)
            }
            Scheme::Baseline(BaselineKind::ReferenceUnknownPower) => setup
                .eta_guess(config, &frame.channels)
                .and_then(|g| cs_reference_unknown(&meas, &setup.spectrum, &active, &g, slack))
                .map(|o| o.x_hat),
        };
        match x_hat.and_then(|x| compute_mse(&frame.x_true, &x)) {
            Ok(v) => out.mse.push(Some(v)),
            Err(e) => {
                out.errors.push(format!("M={m} frame={index} {scheme}: {e}"));
                out.mse.push(None);
            }
        }
    }
    out
}

/// Smoothness weight of the known-power scheme: the same rule as the
/// alternating solvers, evaluated on the raw measurement.
pub fn known_power_mu(solver: &SolverConfig, meas: &Measurement, eta_max: &DVector<f64>, laplacian: &DMatrix<f64>) -> f64 {
    match solver.mu {
        MuPolicy::Absolute(mu) => mu,
        p => resolve_mu(p, meas, eta_max, laplacian),
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut s = Kahan::default();
    values.iter().for_each(|&v| s.add(v));
    let mean = s.sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut q = Kahan::default();
    values.iter().for_each(|&v| q.add((v - mean) * (v - mean)));
    let var = q.sum / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<MseTable> {
    Ok(run_experiment_detailed(config, RunOptions::default())?.table)
}

pub fn run_experiment_detailed(config: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentReport> {
    let setup = Setup::new(config)?;
    let mut table = MseTable::default();
    let mut cells = Vec::with_capacity(config.m_values.len());
    for &m in &config.m_values {
        let setup = setup.for_slots(config, m)?;
        let phi = setup.signatures(config, m);
        let frames: Vec<FrameOutcome> = (0..config.n_frames)
            .into_par_iter()
            .map(|i| match setup.frame(config, m, i, &phi) {
                Ok(frame) => run_frame(config, &setup, m, &frame, i, opts, &mut crate::lp::NoTrace),
                Err(e) => FrameOutcome {
                    index: i,
                    mse: vec![None; config.schemes.len()],
                    errors: vec![format!("M={m} frame={i}: {e}")],
                    proposed: None,
                    log: Vec::new(),
                },
            })
            .collect();
        for (s, &scheme) in config.schemes.iter().enumerate() {
            let values: Vec<f64> = frames.iter().filter_map(|f| f.mse[s]).collect();
            let (mean, stderr) = mean_stderr(&values);
            table.rows.push(MseRow {
                scheme,
                m,
                sigma2: config.sigma2,
                mse_mean: mean,
                mse_stderr: stderr,
                frames_used: values.len(),
                seed: config.seed,
            });
        }
        cells.push(CellReport { m, frames });
    }
    Ok(ExperimentReport { table, cells })
}

/// Writes the pivot trace of the proposed scheme on frame 0 of every cell.
pub fn write_lp_trace<W: Write>(config: &ExperimentConfig, out: W) -> Result<W> {
    let setup = Setup::new(config)?;
    let mut trace = TextTrace::new(out);
    for &m in &config.m_values {
        let setup = setup.for_slots(config, m)?;
        let phi = setup.signatures(config, m);
        let frame = setup.frame(config, m, 0, &phi)?;
        let eta_max = setup.eta_bound(config, &frame.channels);
        restore_observed(
            &frame.measurement(),
            &setup.laplacian,
            setup.field.psi(),
            &eta_max,
            &solver_config(config, m),
            &mut trace,
        )
        .map_err(|e| Error::Config(format!("trace at M={m}: {e}")))?;
    }
    Ok(trace.into_inner())
}
